//! Surrogate pre-training, teacher-forcing fine-tuning with hard-case
//! mining, and scheduled-sampling fine-tuning.

mod fit;
mod log;
mod loss;
mod optim;
mod schedule;
mod schs;
mod surrogate;
mod teaf;

pub use fit::{fit_teacher_forced, window_loss, FitOptions, FitSummary, SeriesWindows};
pub use log::{EpochRecord, TrainLog};
pub use loss::teaf_loss;
pub use optim::{
    adam_step, clip_global_norm, cosine_lr, AdamState, EarlyStopping, StopDecision, ADAM_EPS, BETA1, BETA2, CLIP_NORM,
    MIN_DELTA, PATIENCE,
};
pub use schedule::{build_next_input, mix_segment, sampling_rate};
pub use schs::{rollout_loss, schs_steps, schs_trace, schs_train, val_rollout_mse, SchSConfig, SchSOutcome, SchsTrace};
pub use surrogate::{surrogate_pretrain, synth_corpus, synth_series, SeriesFamily, SurrogateConfig, SurrogateReport};
pub use teaf::{mine_hard_cases, rollout_mse, teaf_train, HardCase, HardCaseSet, TeaFConfig, TeaFOutcome};

#[cfg(test)]
mod tests;
