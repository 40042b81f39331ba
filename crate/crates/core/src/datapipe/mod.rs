//! Channel-independent preprocessing: decomposition into univariate series,
//! sliding-window segmentation, sample-wise normalization and patching.
//!
//! Nothing in this module reads more than one channel at a time.

mod channels;
mod normalize;
mod patch;
mod window;

pub use channels::{decompose_channels, reassemble_channels, ChannelId, ChannelKind, ChannelSeries};
pub use normalize::{denormalize, normalize, normalize_input, window_stats, SIGMA_FLOOR};
pub use patch::{patch_count, patch_rows_into, patchify, PatchConfig, PatchedSample};
pub use window::{extract_window, segment, window_count, window_origins, WindowOrigin, WindowSample};
