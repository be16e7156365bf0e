//! Run configuration read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinwig::oracle::{SteadyOptions, Tolerances};
use spinwig::{
    DissipatorTerm, DistributionKind, HamiltonianTerm, InitialState, IntegratorConfig, Obs, RuleOptions, SpinModel,
};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: SpinModel,
    #[serde(default = "default_distribution")]
    pub distribution: DistributionKind,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub initial_state: InitialState,
    /// Output directory.
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub observables: ObservableSelection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
    #[serde(default)]
    pub benchmark: BenchmarkSettings,
    /// Equation-of-motion switches.
    #[serde(default)]
    pub engine: RuleOptions,
}

fn default_distribution() -> DistributionKind {
    DistributionKind::Wigner
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSelection {
    #[serde(default = "yes")]
    pub moments: bool,
    #[serde(default = "yes")]
    pub squeezing: bool,
    /// Spin-spin correlations `C(s)`; needs a translation-invariant chain.
    #[serde(default)]
    pub correlations: bool,
    /// Also write one row per site and save time.
    #[serde(default)]
    pub per_site: bool,
}

fn yes() -> bool {
    true
}

impl Default for ObservableSelection {
    fn default() -> Self {
        ObservableSelection { moments: true, squeezing: true, correlations: false, per_site: false }
    }
}

/// Model parameter scanned by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// One of [`SWEEP_PARAMETERS`].
    pub name: String,
    pub values: Vec<f64>,
    /// Steady-state estimates average each trajectory over
    /// `[window_start, window_start + window_length]`.
    #[serde(default = "default_window_start")]
    pub window_start: f64,
    #[serde(default = "default_window_length")]
    pub window_length: f64,
    /// Also compute the exact steady state at every point (single site).
    #[serde(default)]
    pub exact: bool,
    #[serde(default)]
    pub steady: SteadyOptions,
}

fn default_window_start() -> f64 {
    40.0
}

fn default_window_length() -> f64 {
    10.0
}

impl SweepAxis {
    pub fn window(&self) -> [f64; 2] {
        [self.window_start, self.window_start + self.window_length]
    }
}

pub const SWEEP_PARAMETERS: [&str; 9] =
    ["omega", "delta", "g", "jx", "jy", "jz", "gamma_decay", "gamma_gain", "gamma_dephasing"];

/// Sets `name` to `value` on every term carrying that parameter.
pub fn set_parameter(model: &mut SpinModel, name: &str, value: f64) -> Result<(), CliError> {
    let mut hits = 0;
    for term in &mut model.hamiltonian {
        let slot = match (name, term) {
            ("omega", HamiltonianTerm::TransverseDrive { omega, .. }) => Some(omega),
            ("delta", HamiltonianTerm::LongitudinalField { delta, .. }) => Some(delta),
            ("g", HamiltonianTerm::OneAxisTwist { g, .. }) => Some(g),
            ("jx", HamiltonianTerm::HeisenbergBond { jx, .. }) => Some(jx),
            ("jy", HamiltonianTerm::HeisenbergBond { jy, .. }) => Some(jy),
            ("jz", HamiltonianTerm::HeisenbergBond { jz, .. }) => Some(jz),
            _ => None,
        };
        if let Some(slot) = slot {
            *slot = value;
            hits += 1;
        }
    }
    for term in &mut model.dissipators {
        let slot = match (name, term) {
            ("gamma_decay", DissipatorTerm::Decay { gamma, .. })
            | ("gamma_gain", DissipatorTerm::Gain { gamma, .. })
            | ("gamma_dephasing", DissipatorTerm::Dephasing { gamma, .. }) => Some(gamma),
            _ => None,
        };
        if let Some(slot) = slot {
            *slot = value;
            hits += 1;
        }
    }
    if hits == 0 {
        let hint = if SWEEP_PARAMETERS.contains(&name) {
            "the model has no term with this parameter".to_string()
        } else {
            format!("expected one of {}", SWEEP_PARAMETERS.join(", "))
        };
        return Err(CliError::Config(format!("sweep parameter `{name}`: {hint}")));
    }
    Ok(())
}

/// What `benchmark` compares and when it passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSettings {
    #[serde(default = "default_checks")]
    pub checks: Vec<Check>,
    /// Compare only save times `t ≤ t_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub oracle: Tolerances,
}

fn default_checks() -> Vec<Check> {
    vec![Check { quantity: "sz".into(), max_scaled: Some(0.05), max_sigma: None }]
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        BenchmarkSettings { checks: default_checks(), t_max: None, oracle: Tolerances::default() }
    }
}

/// Bounds on the deviation of one quantity from the exact solution. A check
/// passes when every bound given holds at every compared time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    /// An observable column name (`sz`, `var_x`, ...) or `xi2`.
    pub quantity: String,
    /// Spin observables: `|Δ| ≤ max_scaled · S^degree`; `xi2`: `|Δ| ≤ max_scaled · ξ²_exact`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_scaled: Option<f64>,
    /// `|Δ| ≤ max_sigma · stderr`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sigma: Option<f64>,
}

/// A benchmarked quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Spin(Obs),
    Squeezing,
}

impl Quantity {
    pub fn parse(name: &str) -> Option<Quantity> {
        if name == "xi2" {
            Some(Quantity::Squeezing)
        } else {
            Obs::from_name(name).map(Quantity::Spin)
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig { path: path.to_owned(), source })?;
        RunConfig::from_json(&text)
    }

    pub fn apply(mut self, o: &Overrides) -> RunConfig {
        if let Some(seed) = o.seed {
            self.integrator.master_seed = seed;
        }
        if let Some(w) = o.workers {
            self.integrator.n_workers = w;
        }
        if let Some(out) = &o.out {
            self.outputs = out.clone();
        }
        self
    }

    /// Checks that do not need a run: model, grid, initial state, checks and sweep axis.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.integrator.grid(&self.model)?;
        self.initial_state.check(self.model.n_sites)?;
        spinwig::sde::assemble(&self.model.validate()?, self.distribution, &self.engine)?;
        for check in &self.benchmark.checks {
            if Quantity::parse(&check.quantity).is_none() {
                return Err(CliError::Config(format!("unknown benchmark quantity `{}`", check.quantity)));
            }
            if check.max_scaled.is_none() && check.max_sigma.is_none() {
                return Err(CliError::Config(format!("check on `{}` sets no bound", check.quantity)));
            }
        }
        if self.observables.correlations && self.model.n_sites < 4 {
            return Err(CliError::Config("correlations need at least 4 sites".into()));
        }
        if let Some(axis) = &self.sweep {
            if axis.values.is_empty() {
                return Err(CliError::Config("sweep has no values".into()));
            }
            let mut probe = self.model.clone();
            set_parameter(&mut probe, &axis.name, axis.values[0])?;
            let [a, b] = axis.window();
            if !(a >= 0.0 && b >= a && b <= self.integrator.t_final) {
                return Err(CliError::Config(format!(
                    "steady-state window [{a}, {b}] must lie inside [0, t_final = {}]",
                    self.integrator.t_final
                )));
            }
            if axis.exact && self.model.n_sites != 1 {
                return Err(CliError::Config("exact steady states are computed for single-site models".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"n_sites": 1, "spin_s": 10, "dissipators": [{"kind": "decay", "gamma": 1.0}]},
        "integrator": {"t_final": 1.0, "n_traj": 10}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.distribution, DistributionKind::Wigner);
        assert_eq!(c.initial_state, InitialState::down());
        assert!(c.observables.moments && !c.observables.correlations);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replacen("\"integrator\"", "\"integrater\": 1, \"integrator\"", 1);
        assert!(matches!(RunConfig::from_json(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.initial_state = InitialState::angles(0.1 + 0.2, std::f64::consts::PI / 3.0);
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sweep_parameter_must_exist() {
        let mut m = RunConfig::from_json(MINIMAL).unwrap().model;
        set_parameter(&mut m, "gamma_decay", 2.0).unwrap();
        assert!(matches!(&m.dissipators[0], DissipatorTerm::Decay { gamma, .. } if *gamma == 2.0));
        assert!(set_parameter(&mut m, "omega", 1.0).is_err());
        assert!(set_parameter(&mut m, "frequency", 1.0).is_err());
    }

    #[test]
    fn empty_sweep_is_a_config_error() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.sweep = serde_json::from_str(r#"{"name": "gamma_decay", "values": []}"#).unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }
}
