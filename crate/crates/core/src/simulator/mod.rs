//! Classical multi-machine swing model: equilibrium, fault integration,
//! stability labelling and dataset generation.

pub mod builtin;
mod dataset;
mod dynamics;
mod equilibrium;
mod integrate;
mod network;
mod stability;
mod system;
mod trajectory;

pub use dataset::{generate_dataset, sample_scenario, scenario_rng, DatasetConfig, MAX_RESAMPLES};
pub use dynamics::{electrical_power, swing_derivatives, transient_energy};
pub use equilibrium::{solve_equilibrium, Equilibrium};
pub use integrate::{integrate, integrate_from, FaultScenario, SimConfig, MAX_CLEARING_DURATION};
pub use network::{Branch, GeneratorBus, Load, Network};
pub use stability::{classify_stability, StabilityLabel, StabilityVerdict};
pub use system::{Admittance, PowerSystemSpec};
pub use trajectory::{
    decode_dataset, encode_dataset, read_dataset, write_dataset, write_dataset_csv, Trajectory, DATASET_MAGIC,
};
