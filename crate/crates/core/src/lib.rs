//! Particle simulation of McKean–Vlasov SDEs with state-dependent Markovian
//! regime switching, optimal-transport distances between empirical laws, and
//! sampled audits of Lyapunov drift and contraction conditions.
//!
//! Regimes are 0-based in this API and 1-based in every file format.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod builtin;
pub mod error;
pub mod fit;
pub mod lyapunov;
pub mod measures;
pub mod model;
pub mod particle;
pub mod rng;
pub mod switching;

pub use error::{Error, Result};
pub use lyapunov::{
    apply_coupled_generator, apply_generator, check_contraction, check_drift_h2,
    moment_bound_check, ContractionTarget, DriftReport, PairedSample,
};
pub use measures::{
    ot_cost, wasserstein_1d, weighted_tv_binned, EmpiricalMeasure, GroundCost, OtOptions,
};
pub use model::{
    evaluate_drift_diffusion, validate_q_property, CoefficientField, Functional, Functionals,
    Generator, LyapunovSpec, MeasureStats, ModelSpec, RateMatrix, RegimeField, RegimeSet,
};
pub use particle::{
    picard_law_iteration, simulate, synchronous_pair_simulate, InitLaw, ParticleEnsemble,
    SimConfig, TimeSeries,
};
pub use switching::{basic_coupling, SwitchMode};
