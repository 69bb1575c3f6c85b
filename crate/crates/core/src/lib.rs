//! Bragg-grating soliton propagation and quantum noise analysis.
//!
//! The crate integrates the nonlinear coupled-mode equations for the
//! forward/backward envelopes in a finite uniform fiber Bragg grating,
//! evolves linearized quantum fluctuations and their adjoint equations
//! around the stored classical background, and computes photon-number
//! squeezing ratios of the transmitted pulse by back-propagating the
//! measurement projection to the input, where the coherent-state statistics
//! are known.
//!
//! Modules:
//! - [`config`], [`grid`], [`field`]: unit conventions, configuration, the
//!   characteristics-aligned grid, and the complex field pair.
//! - [`stepper`], [`trajectory`], [`classify`]: the classical solver, its
//!   checkpointed trajectory store, and pulse-trace classification.
//! - [`linearized`]: linearized fluctuation and adjoint steps plus the
//!   backward adjoint solve.
//! - [`measurement`]: projection functions, vacuum variances, squeezing
//!   ratios.
//! - [`experiments`]: calibration, threshold search, sweeps, convergence.
//! - [`container`]: binary persistence of fields and trajectories.

pub mod classify;
pub mod config;
pub mod container;
pub mod error;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod linearized;
pub mod measurement;
pub mod stepper;
pub mod trajectory;

pub use classify::{classify_peak_trace, Classification, ClassifierParams, PulseClass};
pub use config::{GratingConfig, PulseConfig, DEFAULT_GROUP_VELOCITY};
pub use error::{Result, SimError};
pub use field::{photon_content, sech_pulse, FieldPair};
pub use grid::{build_grid, build_grid_with_dz, dz_bound, Grid, Region, RegionSel};
pub use linearized::{
    adjoint_step, back_propagate, back_propagate_from, evolve_perturbation, inner_product,
    linearized_step, Direction, PerturbationField, PerturbationKind, QuantumStepper,
};
pub use measurement::{
    measure_squeezing, photon_number_projection, squeezing_ratio, vacuum_variance, Provenance,
    SqueezeResult, SqueezingMeasurement,
};
pub use stepper::{ClassicalStepper, RegionCoeffs, StepMonitor};
pub use trajectory::{
    evolve, evolve_with_coeffs, BackgroundCursor, CollectorMode, EvolveOptions, StopRule,
    TrajectoryStore, Transmission,
};
