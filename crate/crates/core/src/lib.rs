//! Simulation and nonparametric estimation for supercritical age-dependent
//! (Bellman-Harris) branching processes.
//!
//! * [`rate`], [`offspring`], [`malthus`], [`regime`]: the analytic layer
//!   (division rates, Malthus parameter, biased rate, limit measures).
//! * [`tree`]: simulation of the genealogy up to a horizon and the
//!   interior/boundary observation scheme.
//! * [`particle`], [`manytoone`]: the tagged age process, coupling, and
//!   Monte-Carlo checks of the many-to-one identities.
//! * [`kernel`], [`estimate`]: the de-biased kernel estimator of `B`.
//! * [`experiment`], [`config`]: replicated studies, error tables and rate
//!   regression, with serializable model and study settings.
//! * [`rng`], [`stats`], [`quadrature`]: seeded streams, summary statistics
//!   and numerical integration.

pub mod config;
pub mod error;
pub mod experiment;
pub mod estimate;
pub mod kernel;
pub mod malthus;
pub mod manytoone;
pub mod offspring;
pub mod particle;
pub mod quadrature;
pub mod rate;
pub mod regime;
pub mod rng;
pub mod stats;
pub mod testfn;
pub mod tree;

pub use error::{Error, Result};
pub use malthus::{solve_malthus, BiasedRate, InvariantLaw, MalthusData};
pub use offspring::OffspringLaw;
pub use rate::{Derivative, ExpTerm, Hazard, RateFunction, Segment};
pub use regime::{classify_regime, Membership, RateDiagnostics, Regime};
pub use testfn::TestFunction;
pub use tree::{extract_sample, simulate_tree, ObservedSample, PopulationTree};
pub use particle::{coupling_tv, semigroup_mc, simulate_chain, AgeChain};
pub use manytoone::{verify_mto_boundary, verify_mto_interior, verify_mto_pairs, MtoConfig, MtoReport};
pub use kernel::Kernel;
pub use estimate::{estimate_all, estimate_b, estimate_lambda, estimate_m, AgeGrid, Bandwidth, EstimationResult};
pub use config::{ModelSpec, RateSpec};
pub use experiment::{rate_regression, run_table, ExperimentConfig, ExperimentReport};
