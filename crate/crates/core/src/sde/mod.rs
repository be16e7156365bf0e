//! Stochastic equations of motion and their ensemble integration.

pub mod accumulator;
pub mod engine;
pub mod rules;

pub use accumulator::{feature, EnsembleAccumulator, FeatureLayout, MomentSlice, Welford};
pub use engine::{evolve_ensemble, ClampPolicy, Diagnostics, EnsembleRun, IntegratorConfig, TimeGrid};
pub use rules::{
    assemble, rule_decay, rule_dephasing, rule_gain, rule_heisenberg_bond, rule_longitudinal_field,
    rule_one_axis_twist, rule_transverse_drive, RuleKind, RuleOptions, TermRule,
};
