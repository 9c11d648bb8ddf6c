//! Grid-based two-channel quantum dynamics and Krotov optimal control for
//! vibrational state transfer.
//!
//! The crate builds mapped sine-basis grids for diatomic potentials, computes
//! vibrational eigenstates and Franck-Condon maps, propagates two-channel
//! wavepackets with a Chebychev expansion of the short-time propagator, and
//! iterates the Krotov field update with monotonic-convergence diagnostics.
//! On top of the core loop sit the two search strategies that make hard
//! transfers tractable: restarting from a down-scaled optimal field, and
//! compressing the optimization window by spectral decimation.
//!
//! Most capabilities have a runnable example:
//!
//! ```text
//! cargo run --release --example eigenspectrum     # mapped grid + Morse levels
//! cargo run --release --example franck_condon     # FC map and guess windows
//! cargo run --release --example wavepacket        # Chebychev propagation
//! cargo run --release --example rabi_flip         # two-level Krotov run
//! cargo run --release --example ladder_transfer   # v=8 -> v=0 desk-scale run
//! cargo run --release --example intensity_restart # divide-and-reoptimize
//! cargo run --release --example time_compression  # spectral decimation restart
//! cargo run --release --example pulse_analysis    # spectrum, energy, populations
//! ```
//!
//! The `vibcontrol` binary drives the same machinery from a TOML config:
//! `vibcontrol run <config>`, `vibcontrol validate <config>`,
//! `vibcontrol resume <checkpoint>`.

pub mod analysis;
pub mod config;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod krotov;
mod linalg;
pub mod potential;
pub mod presets;
pub mod propagator;
pub mod runner;
pub mod strategies;
pub mod units;

pub use error::{Result, VibError};
pub use grid::{build_mapped_grid, kinetic_matrix, KineticOperator, SpatialGrid};
pub use hamiltonian::{
    build_system, eigenstates, franck_condon_map, spectral_bounds, Channel, ChannelSystem,
    EigenBasis, FranckCondonMap,
};
pub use krotov::{
    krotov_coefficient, krotov_iterate, monotonicity_diagnostics, objective, optimize,
    penalty_quadratic, penalty_restricted, ControlField, ControlProblem, IterationRecord,
    KrotovOptions, KrotovRun, PenaltyKind, StopCriteria, StopReason,
};
pub use potential::{morse_level, morse_level_count, PotentialCurve, TailKind};
pub use propagator::{
    chebychev_step, propagate, propagate_adjoint, ChebychevPropagator, DiskTrajectory,
    MemoryTrajectory, StateVector, TimeGrid, Trajectory, TrajectorySink,
};
pub use strategies::{
    compress_time, make_guess, minimal_time_hint, reduce_intensity_restart, CompressOptions,
    EnvelopeKind, GuessSpec, SpectralDeletion, TimeHint,
};
