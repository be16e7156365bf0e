//! The `simulate`, `benchmark` and `sweep` commands.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use spinwig::observables::{correlations, moments, squeezing_parameter, Group};
use spinwig::oracle::{exact_series, steady_state, Liouvillian, SpinOperators};
use spinwig::{
    evolve_ensemble, CorrelationProfile, Diagnostics, EnsembleRun, Obs, ObservableSeries, SpinMoments, Squeezing,
};

use crate::config::{set_parameter, Check, Quantity, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, fmt, write_csv_with, write_json};

pub const OBSERVABLES_CSV: &str = "observables.csv";
pub const SITES_CSV: &str = "sites.csv";
pub const CORRELATIONS_CSV: &str = "correlations.csv";
pub const ORACLE_CSV: &str = "oracle.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_EXACT_CSV: &str = "sweep_exact.csv";
pub const DIAGNOSTICS_JSON: &str = "diagnostics.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const REPORT_JSON: &str = "report.json";

/// Smallest reliable `ξ²` of a series and when it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqueezingOptimum {
    pub time: f64,
    pub value: f64,
    pub stderr: f64,
}

impl SqueezingOptimum {
    pub fn of(series: &ObservableSeries, t_max: f64) -> Option<SqueezingOptimum> {
        series
            .times
            .iter()
            .zip(&series.squeezing)
            .filter(|(t, q)| **t <= t_max && q.reliable && q.value.is_finite())
            .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
            .map(|(&time, q)| SqueezingOptimum { time, value: q.value, stderr: q.stderr })
    }
}

/// Contents of `diagnostics.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsSummary {
    pub command: &'static str,
    pub version: &'static str,
    pub n_traj: u64,
    pub dt: f64,
    pub n_steps: usize,
    pub clamp_events: u64,
    pub diverged_trajectories: u64,
    pub diverged_fraction: f64,
    pub divergence_warning: bool,
    /// Largest `|⟨(|α|² + |β|²)/2⟩(t) - ⟨…⟩(0)|` over time and sites.
    pub max_spin_length_drift: f64,
    /// Per site, at the last save time.
    pub final_spin_length_drift: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub squeezing_optimum: Option<SqueezingOptimum>,
}

impl DiagnosticsSummary {
    fn new(command: &'static str, d: &Diagnostics, squeezing_optimum: Option<SqueezingOptimum>) -> Self {
        DiagnosticsSummary {
            command,
            version: env!("CARGO_PKG_VERSION"),
            n_traj: d.n_traj,
            dt: d.dt,
            n_steps: d.n_steps,
            clamp_events: d.clamp_events,
            diverged_trajectories: d.diverged_trajectories,
            diverged_fraction: d.diverged_fraction(),
            divergence_warning: d.divergence_warning(),
            max_spin_length_drift: d.max_spin_length_drift(),
            final_spin_length_drift: d.spin_length_drift.last().cloned().unwrap_or_default(),
            squeezing_optimum,
        }
    }

    fn verdict(&self) -> Result<(), CliError> {
        if self.divergence_warning {
            Err(CliError::Diverged { diverged: self.diverged_trajectories, n_traj: self.n_traj })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub series: ObservableSeries,
    pub correlations: Option<CorrelationProfile>,
    pub diagnostics: DiagnosticsSummary,
}

impl SimulateOutcome {
    /// `Err` when too many trajectories diverged.
    pub fn verdict(&self) -> Result<(), CliError> {
        self.diagnostics.verdict()
    }
}

fn run_ensemble(config: &RunConfig) -> Result<EnsembleRun, CliError> {
    let mut integrator = config.integrator.clone();
    integrator.correlations |= config.observables.correlations;
    Ok(evolve_ensemble(&config.model, config.distribution, &integrator, &config.initial_state, &config.engine)?)
}

/// Correlation profile over the averaging window if one is set, else at the
/// last save time.
fn final_correlations(run: &EnsembleRun) -> Option<CorrelationProfile> {
    let acc = &run.accumulator;
    match acc.window_slice() {
        Some(slice) => correlations(&slice),
        None => acc.times.len().checked_sub(1).and_then(|t| correlations(&acc.at(t))),
    }
}

fn write_series(dir: &Path, name: &str, series: &ObservableSeries) -> Result<(), CliError> {
    write_csv_with(&dir.join(name), |w| series.write_csv(w))
}

fn write_common(config: &RunConfig, diagnostics: &DiagnosticsSummary) -> Result<(), CliError> {
    write_json(&config.outputs.join(DIAGNOSTICS_JSON), diagnostics)?;
    write_json(&config.outputs.join(MANIFEST_JSON), config)
}

pub fn simulate(config: &RunConfig) -> Result<SimulateOutcome, CliError> {
    config.validate()?;
    ensure_dir(&config.outputs)?;
    let run = run_ensemble(config)?;
    let series = ObservableSeries::from_ensemble(&run.accumulator);
    let dir = &config.outputs;
    if config.observables.moments {
        write_series(dir, OBSERVABLES_CSV, &series)?;
    }
    if config.observables.per_site {
        write_csv_with(&dir.join(SITES_CSV), |w| series.write_site_csv(w))?;
    }
    let correlations = if config.observables.correlations { final_correlations(&run) } else { None };
    if let Some(profile) = &correlations {
        write_csv_with(&dir.join(CORRELATIONS_CSV), |w| profile.write_csv(w))?;
    }
    let optimum = config.observables.squeezing.then(|| SqueezingOptimum::of(&series, f64::INFINITY)).flatten();
    let diagnostics = DiagnosticsSummary::new("simulate", &run.diagnostics, optimum);
    write_common(config, &diagnostics)?;
    Ok(SimulateOutcome { series, correlations, diagnostics })
}

/// Result of one benchmark check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub quantity: String,
    pub max_scaled: Option<f64>,
    pub max_sigma: Option<f64>,
    pub max_abs_deviation: f64,
    /// `max |Δ| / S^degree` for spin observables, `max |Δ| / ξ²_exact` for `xi2`.
    pub max_scaled_deviation: f64,
    pub max_sigma_deviation: f64,
    pub compared_points: usize,
    pub pass: bool,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub pass: bool,
    pub t_max: f64,
    pub checks: Vec<CheckResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub squeezing_optimum: Option<OptimumComparison>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimumComparison {
    pub simulated: Option<SqueezingOptimum>,
    pub exact: Option<SqueezingOptimum>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub simulated: ObservableSeries,
    pub exact: ObservableSeries,
    pub report: BenchmarkReport,
    pub diagnostics: DiagnosticsSummary,
}

impl BenchmarkOutcome {
    pub fn verdict(&self) -> Result<(), CliError> {
        self.diagnostics.verdict()?;
        if self.report.pass {
            return Ok(());
        }
        let failed: Vec<&str> = self.report.checks.iter().filter(|c| !c.pass).map(|c| c.quantity.as_str()).collect();
        Err(CliError::BenchmarkFailed(format!("checks outside tolerance: {}", failed.join(", "))))
    }
}

fn evaluate_check(check: &Check, sim: &ObservableSeries, exact: &ObservableSeries, t_max: f64) -> CheckResult {
    let quantity = Quantity::parse(&check.quantity).expect("validated");
    let s = sim.spin_s;
    let mut out = CheckResult {
        quantity: check.quantity.clone(),
        max_scaled: check.max_scaled,
        max_sigma: check.max_sigma,
        max_abs_deviation: 0.0,
        max_scaled_deviation: 0.0,
        max_sigma_deviation: 0.0,
        compared_points: 0,
        pass: true,
    };
    for (t, &time) in sim.times.iter().enumerate() {
        if time > t_max {
            continue;
        }
        let (value, stderr, reference, scale) = match quantity {
            Quantity::Spin(obs) => {
                let e = sim.mean[t].get(obs);
                (e.value, e.stderr, exact.mean[t].value(obs), s.powi(obs.degree()))
            }
            Quantity::Squeezing => {
                let (q, r) = (sim.squeezing[t], exact.squeezing[t]);
                if !(q.reliable && r.reliable && q.value.is_finite() && r.value.is_finite()) {
                    continue;
                }
                (q.value, q.stderr, r.value, r.value.abs())
            }
        };
        let dev = (value - reference).abs();
        out.compared_points += 1;
        out.max_abs_deviation = out.max_abs_deviation.max(dev);
        out.max_scaled_deviation = out.max_scaled_deviation.max(dev / scale);
        let sigma = if stderr > 0.0 {
            dev / stderr
        } else if dev > 1e-9 * scale {
            f64::INFINITY
        } else {
            0.0
        };
        out.max_sigma_deviation = out.max_sigma_deviation.max(sigma);
    }
    out.pass = out.compared_points > 0
        && check.max_scaled.is_none_or(|b| out.max_scaled_deviation <= b)
        && check.max_sigma.is_none_or(|b| out.max_sigma_deviation <= b);
    out
}

pub fn benchmark(config: &RunConfig) -> Result<BenchmarkOutcome, CliError> {
    config.validate()?;
    // Fail on the exact solver's limits before spending time on trajectories.
    Liouvillian::from_model(&config.model)?;
    ensure_dir(&config.outputs)?;
    let run = run_ensemble(config)?;
    let simulated = ObservableSeries::from_ensemble(&run.accumulator);
    let exact =
        exact_series(&config.model, &config.initial_state, &simulated.times, &config.benchmark.oracle)?.series;
    let t_max = config.benchmark.t_max.unwrap_or(f64::INFINITY);
    let checks: Vec<CheckResult> =
        config.benchmark.checks.iter().map(|c| evaluate_check(c, &simulated, &exact, t_max)).collect();
    let wants_squeezing = checks.iter().any(|c| c.quantity == "xi2");
    let squeezing_optimum = wants_squeezing.then(|| OptimumComparison {
        simulated: SqueezingOptimum::of(&simulated, t_max),
        exact: SqueezingOptimum::of(&exact, t_max),
    });
    let report = BenchmarkReport {
        pass: checks.iter().all(|c| c.pass),
        t_max: config.benchmark.t_max.unwrap_or(config.integrator.t_final),
        checks,
        squeezing_optimum,
    };
    let dir = &config.outputs;
    write_series(dir, OBSERVABLES_CSV, &simulated)?;
    write_series(dir, ORACLE_CSV, &exact)?;
    write_json(&dir.join(REPORT_JSON), &report)?;
    let diagnostics = DiagnosticsSummary::new("benchmark", &run.diagnostics, squeezing_optimum.and_then(|o| o.simulated));
    write_common(config, &diagnostics)?;
    Ok(BenchmarkOutcome { simulated, exact, report, diagnostics })
}

/// Window-averaged steady-state estimates at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub n_traj: u64,
    pub moments: SpinMoments,
    pub squeezing: Squeezing,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlations: Option<CorrelationProfile>,
    /// Exact stationary moments, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<SpinMoments>,
    pub clamp_events: u64,
    pub diverged_trajectories: u64,
    pub divergence_warning: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub parameter: String,
    pub points: Vec<SweepPoint>,
}

impl SweepOutcome {
    pub fn verdict(&self) -> Result<(), CliError> {
        match self.points.iter().find(|p| p.divergence_warning) {
            Some(p) => Err(CliError::Diverged { diverged: p.diverged_trajectories, n_traj: p.n_traj }),
            None => Ok(()),
        }
    }
}

fn sweep_point(config: &RunConfig, index: usize) -> Result<SweepPoint, CliError> {
    let axis = config.sweep.as_ref().expect("validated");
    let value = axis.values[index];
    let mut point_config = config.clone();
    set_parameter(&mut point_config.model, &axis.name, value)?;
    let [a, b] = axis.window();
    point_config.integrator.window = Some([a, b]);
    point_config.integrator.n_workers = 1;
    let run = run_ensemble(&point_config)?;
    let slice = run.accumulator.window_slice().expect("window requested");
    let exact = if axis.exact {
        let rho = steady_state(&point_config.model, &axis.steady)?;
        Some(SpinMoments::from_values(rho.moments(&SpinOperators::new(config.model.spin_s), 0)))
    } else {
        None
    };
    let d = &run.diagnostics;
    Ok(SweepPoint {
        value,
        n_traj: run.accumulator.n_traj(),
        moments: moments(&slice, Group::Mean),
        squeezing: squeezing_parameter(&slice, Group::Mean),
        correlations: if config.observables.correlations { correlations(&slice) } else { None },
        exact,
        clamp_events: d.clamp_events,
        diverged_trajectories: d.diverged_trajectories,
        divergence_warning: d.divergence_warning(),
    })
}

fn worker_count(requested: usize, jobs: usize) -> usize {
    let n = if requested == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { requested };
    n.clamp(1, jobs.max(1))
}

pub fn sweep(config: &RunConfig) -> Result<SweepOutcome, CliError> {
    let Some(axis) = &config.sweep else {
        return Err(CliError::Config("sweep needs a `sweep` section".into()));
    };
    config.validate()?;
    let points_dir = config.outputs.join("points");
    ensure_dir(&points_dir)?;
    let n = axis.values.len();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SweepPoint, CliError>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..worker_count(config.integrator.n_workers, n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = sweep_point(config, i)
                    .and_then(|p| write_json(&points_dir.join(format!("point_{i:04}.json")), &p).map(|()| p));
                results.lock().expect("no panics while holding the lock")[i] = Some(result);
            });
        }
    });
    let points = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect::<Result<Vec<_>, _>>()?;
    let outcome = SweepOutcome { parameter: axis.name.clone(), points };
    write_sweep(config, &outcome)?;
    write_json(&config.outputs.join(MANIFEST_JSON), config)?;
    Ok(outcome)
}

fn write_sweep(config: &RunConfig, outcome: &SweepOutcome) -> Result<(), CliError> {
    let dir = &config.outputs;
    let with_corr = config.observables.correlations;
    write_csv_with(&dir.join(SWEEP_CSV), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec![outcome.parameter.clone(), "n_traj".into()];
        for obs in Obs::ALL {
            header.push(obs.name().into());
            header.push(format!("{}_err", obs.name()));
        }
        header.extend(["xi2", "xi2_err", "xi2_reliable", "clamp_events", "diverged"].map(String::from));
        if with_corr {
            header.extend(["xi_corr", "xi_corr_residual"].map(String::from));
        }
        w.write_record(&header)?;
        for p in &outcome.points {
            let mut row = vec![fmt(p.value), p.n_traj.to_string()];
            for obs in Obs::ALL {
                let e = p.moments.get(obs);
                row.push(fmt(e.value));
                row.push(fmt(e.stderr));
            }
            row.extend([fmt(p.squeezing.value), fmt(p.squeezing.stderr), p.squeezing.reliable.to_string()]);
            row.extend([p.clamp_events.to_string(), p.diverged_trajectories.to_string()]);
            if with_corr {
                let fit = p.correlations.as_ref().and_then(|c| c.fit);
                row.push(fit.map_or(String::new(), |f| fmt(f.xi_corr)));
                row.push(fit.map_or(String::new(), |f| fmt(f.residual)));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })?;
    if with_corr {
        write_csv_with(&dir.join(CORRELATIONS_CSV), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record([outcome.parameter.as_str(), "s", "C", "stderr"])?;
            for p in &outcome.points {
                if let Some(c) = &p.correlations {
                    for ((s, v), e) in c.separations.iter().zip(&c.c).zip(&c.stderr) {
                        w.write_record([fmt(p.value), s.to_string(), fmt(*v), fmt(*e)])?;
                    }
                }
            }
            w.flush()?;
            Ok(())
        })?;
    }
    if outcome.points.iter().any(|p| p.exact.is_some()) {
        write_csv_with(&dir.join(SWEEP_EXACT_CSV), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            let mut header = vec![outcome.parameter.clone()];
            header.extend(Obs::ALL.iter().map(|o| o.name().to_string()));
            w.write_record(&header)?;
            for p in &outcome.points {
                if let Some(m) = &p.exact {
                    let mut row = vec![fmt(p.value)];
                    row.extend(Obs::ALL.iter().map(|&o| fmt(m.value(o))));
                    w.write_record(&row)?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}
