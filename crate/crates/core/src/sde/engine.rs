//! Euler–Maruyama integration of trajectory ensembles.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accumulator::{EnsembleAccumulator, FeatureLayout};
use super::rules::{assemble, characteristic_rate, RuleOptions, TermRule};
use crate::error::EngineError;
use crate::model::{Boundary, SpinModel};
use crate::sampler::{sample_initial_point, trajectory_rng, DistributionKind, InitialState, PhasePoint};

/// Default `max_rate · dt`.
pub const DEFAULT_RATE_DT: f64 = 1e-3;
pub const DEFAULT_BLOCKS: usize = 64;
/// Fraction of diverged trajectories above which a run is flagged.
pub const DIVERGENCE_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampPolicy {
    #[default]
    ClampToZero,
}

/// Time grid, ensemble size and execution settings of one stochastic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Step size; defaults to `1e-3 / max_rate` of the assembled equations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_final: f64,
    /// Explicit save times. Snapped to the step grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_times: Option<Vec<f64>>,
    /// Uniform save spacing, used when `save_times` is absent
    /// (default `t_final / 100`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_every: Option<f64>,
    pub n_traj: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub clamp_policy: ClampPolicy,
    /// Worker threads; 0 uses all available cores.
    #[serde(default = "default_workers")]
    pub n_workers: usize,
    /// A trajectory diverges once `|α|² + |β|²` at any site exceeds
    /// `divergence_factor · (2S + 1)` or becomes non-finite.
    #[serde(default = "default_divergence_factor")]
    pub divergence_factor: f64,
    /// Per-trajectory time average over save times in `[start, end]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Trajectory blocks used for jackknife errors.
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
    /// Accumulate cross-site correlation features.
    #[serde(default)]
    pub correlations: bool,
    /// Keep every trajectory's amplitudes at every save time.
    #[serde(default)]
    pub dump_trajectories: bool,
}

fn default_workers() -> usize {
    1
}

fn default_divergence_factor() -> f64 {
    100.0
}

fn default_blocks() -> usize {
    DEFAULT_BLOCKS
}

impl IntegratorConfig {
    pub fn new(t_final: f64, n_traj: usize) -> Self {
        IntegratorConfig {
            dt: None,
            t_final,
            save_times: None,
            save_every: None,
            n_traj,
            master_seed: 0,
            clamp_policy: ClampPolicy::ClampToZero,
            n_workers: 1,
            divergence_factor: default_divergence_factor(),
            window: None,
            n_blocks: DEFAULT_BLOCKS,
            correlations: false,
            dump_trajectories: false,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_save_every(mut self, every: f64) -> Self {
        self.save_every = Some(every);
        self.save_times = None;
        self
    }

    pub fn with_save_times(mut self, times: Vec<f64>) -> Self {
        self.save_times = Some(times);
        self
    }

    pub fn with_workers(mut self, n: usize) -> Self {
        self.n_workers = n;
        self
    }

    pub fn with_window(mut self, start: f64, end: f64) -> Self {
        self.window = Some([start, end]);
        self
    }

    pub fn with_correlations(mut self, on: bool) -> Self {
        self.correlations = on;
        self
    }

    pub fn with_blocks(mut self, n_blocks: usize) -> Self {
        self.n_blocks = n_blocks;
        self
    }

    /// Resolves the step size and the step index of each save time.
    pub fn grid(&self, model: &SpinModel) -> Result<TimeGrid, EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidIntegrator(msg));
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return bad(format!("t_final = {} must be finite and non-negative", self.t_final));
        }
        let requested = match self.dt {
            Some(dt) => dt,
            None => {
                let rate = characteristic_rate(model)?;
                if rate > 0.0 {
                    DEFAULT_RATE_DT / rate
                } else {
                    self.t_final.max(1.0) / 1000.0
                }
            }
        };
        if !(requested.is_finite() && requested > 0.0) {
            return bad(format!("dt = {requested} must be positive"));
        }
        let n_steps = if self.t_final == 0.0 { 0 } else { (self.t_final / requested).ceil() as usize };
        let dt = if n_steps == 0 { requested } else { self.t_final / n_steps as f64 };
        let times = match (&self.save_times, self.save_every) {
            (Some(ts), _) => ts.clone(),
            (None, every) => {
                // The default spacing is never finer than the step.
                let every = every.unwrap_or((self.t_final / 100.0).max(dt));
                if self.t_final == 0.0 {
                    vec![0.0]
                } else if !(every.is_finite() && every > 0.0) {
                    return bad(format!("save_every = {every} must be positive"));
                } else {
                    let n = (self.t_final / every + 1e-9).floor() as usize;
                    (0..=n).map(|i| i as f64 * every).collect()
                }
            }
        };
        if times.is_empty() {
            return bad("no save times".into());
        }
        let mut steps = Vec::with_capacity(times.len());
        for &t in &times {
            if !(t.is_finite() && (0.0..=self.t_final * (1.0 + 1e-12)).contains(&t)) {
                return bad(format!("save time {t} outside [0, {}]", self.t_final));
            }
            let s = if n_steps == 0 { 0 } else { ((t / dt).round() as usize).min(n_steps) };
            if steps.last().is_some_and(|&last| s <= last) {
                return bad("save times must be strictly increasing on the step grid".into());
            }
            steps.push(s);
        }
        if self.n_blocks == 0 {
            return bad("n_blocks must be at least 1".into());
        }
        if let Some([a, b]) = self.window {
            if !(a <= b) {
                return bad(format!("window [{a}, {b}] is empty"));
            }
            if !steps.iter().any(|&s| (a..=b).contains(&(s as f64 * dt))) {
                return bad(format!("window [{a}, {b}] contains no save time"));
            }
        }
        Ok(TimeGrid { dt, n_steps, save_steps: steps })
    }
}

/// Resolved integration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub save_steps: Vec<usize>,
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        self.save_steps.iter().map(|&s| s as f64 * self.dt).collect()
    }
}

/// Run-level health indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub clamp_events: u64,
    /// `[time][site]`: ensemble mean of `(|α|² + |β|²)/2` minus its initial value.
    pub spin_length_drift: Vec<Vec<f64>>,
    pub diverged_trajectories: u64,
    pub n_traj: u64,
    pub dt: f64,
    pub n_steps: usize,
}

impl Diagnostics {
    pub fn diverged_fraction(&self) -> f64 {
        if self.n_traj == 0 {
            0.0
        } else {
            self.diverged_trajectories as f64 / self.n_traj as f64
        }
    }

    pub fn divergence_warning(&self) -> bool {
        self.diverged_fraction() > DIVERGENCE_WARN_FRACTION
    }

    pub fn max_spin_length_drift(&self) -> f64 {
        self.spin_length_drift.iter().flatten().fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// Output of [`evolve_ensemble`].
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub accumulator: EnsembleAccumulator,
    pub diagnostics: Diagnostics,
    /// `[trajectory][time]` amplitudes when `dump_trajectories` is set;
    /// diverged trajectories are omitted.
    pub trajectories: Option<Vec<Vec<PhasePoint>>>,
}

struct Stepper<'a> {
    rules: &'a [TermRule],
    n_wieners: usize,
    sqrt_dt: f64,
    dt: f64,
    inc: Vec<Complex64>,
    dw: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(rules: &'a [TermRule], dim: usize, dt: f64) -> Self {
        let n_wieners = rules.iter().map(TermRule::n_wieners).sum();
        Stepper {
            rules,
            n_wieners,
            sqrt_dt: dt.sqrt(),
            dt,
            inc: vec![Complex64::new(0.0, 0.0); dim],
            dw: vec![0.0; n_wieners],
        }
    }

    #[inline]
    fn step<R: rand::Rng + ?Sized>(&mut self, x: &mut [Complex64], rng: &mut R, clamps: &mut u64) {
        for w in self.dw.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = z * self.sqrt_dt;
        }
        self.inc.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        let mut offset = 0;
        for rule in self.rules {
            rule.add_drift(x, self.dt, &mut self.inc);
            let nw = rule.n_wieners();
            if nw > 0 {
                rule.add_noise(x, &self.dw[offset..offset + nw], &mut self.inc, clamps);
                offset += nw;
            }
        }
        debug_assert_eq!(offset, self.n_wieners);
        for (xi, di) in x.iter_mut().zip(&self.inc) {
            *xi += di;
        }
    }
}

struct BlockResult {
    block: EnsembleAccumulator,
    clamps: u64,
    diverged: u64,
    dumps: Vec<Vec<PhasePoint>>,
}

/// Integrates `n_traj` trajectories and accumulates their moments.
///
/// Trajectory `j` draws its initial point and every Wiener increment from the
/// stream `(master_seed, j)`. Trajectories are grouped into contiguous blocks,
/// each block is processed sequentially, and blocks are merged in index order,
/// so the result does not depend on `n_workers`.
pub fn evolve_ensemble(
    model: &SpinModel,
    kind: DistributionKind,
    integrator: &IntegratorConfig,
    initial: &InitialState,
    options: &RuleOptions,
) -> Result<EnsembleRun, EngineError> {
    let model = model.validate()?;
    initial.check(model.n_sites)?;
    let rules = assemble(&model, kind, options)?;
    let grid = integrator.grid(&model)?;
    let times = grid.times();
    let n_traj = integrator.n_traj;
    let n_blocks = integrator.n_blocks.min(n_traj).max(1);
    let layout = FeatureLayout::new(
        model.n_sites,
        model.boundary == Boundary::Periodic,
        integrator.correlations,
    );
    let window = integrator.window.map(|[a, b]| {
        let n = times.iter().filter(|t| (a..=b).contains(*t)).count();
        (a, b, n)
    });
    let template = EnsembleAccumulator::new(kind, model.spin_s, layout, times.clone(), 1, window);
    let bound = integrator.divergence_factor * (model.two_s() as f64 + 1.0);

    let run_block = |b: usize| -> BlockResult {
        let lo = b * n_traj / n_blocks;
        let hi = (b + 1) * n_traj / n_blocks;
        let mut acc = template.clone();
        let mut stepper = Stepper::new(&rules, 2 * model.n_sites, grid.dt);
        let n_f = layout.len();
        let mut series = vec![0.0; n_f * times.len()];
        let mut window_avg = vec![0.0; n_f];
        let (mut clamps, mut diverged) = (0u64, 0u64);
        let mut dumps = Vec::new();
        for j in lo..hi {
            let mut rng = trajectory_rng(integrator.master_seed, j as u64);
            let mut point = sample_initial_point(&model, kind, initial, &mut rng);
            let mut traj_clamps = 0u64;
            let mut snapshots = Vec::new();
            let mut ok = true;
            let mut next_save = 0;
            for step in 0..=grid.n_steps {
                if step > 0 {
                    stepper.step(&mut point.amplitudes, &mut rng, &mut traj_clamps);
                }
                if next_save < grid.save_steps.len() && grid.save_steps[next_save] == step {
                    if diverges(&point, bound) {
                        ok = false;
                        break;
                    }
                    let out = &mut series[next_save * n_f..(next_save + 1) * n_f];
                    layout.fill(&point.amplitudes, out);
                    if integrator.dump_trajectories {
                        snapshots.push(point.clone());
                    }
                    next_save += 1;
                }
            }
            clamps += traj_clamps;
            if !ok || diverges(&point, bound) {
                diverged += 1;
                continue;
            }
            let avg = window.map(|(a, bnd, n)| {
                window_avg.fill(0.0);
                for (t, chunk) in times.iter().zip(series.chunks_exact(n_f)) {
                    if (a..=bnd).contains(t) {
                        for (w, v) in window_avg.iter_mut().zip(chunk) {
                            *w += v;
                        }
                    }
                }
                window_avg.iter_mut().for_each(|w| *w /= n as f64);
                &window_avg[..]
            });
            acc.push(0, &series, avg);
            if integrator.dump_trajectories {
                dumps.push(snapshots);
            }
        }
        BlockResult { block: acc, clamps, diverged, dumps }
    };

    let results: Vec<BlockResult> = if n_traj == 0 {
        Vec::new()
    } else {
        let workers = integrator.n_workers;
        if workers == 1 {
            (0..n_blocks).map(run_block).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| EngineError::InvalidIntegrator(format!("thread pool: {e}")))?;
            pool.install(|| (0..n_blocks).into_par_iter().map(run_block).collect())
        }
    };

    let mut accumulator = EnsembleAccumulator::new(kind, model.spin_s, layout, times.clone(), n_blocks, window);
    let (mut clamps, mut diverged) = (0, 0);
    let mut trajectories = integrator.dump_trajectories.then(Vec::new);
    for (b, r) in results.into_iter().enumerate() {
        accumulator.blocks[b] = r.block.blocks[0].clone();
        if let (Some(w), Some(rw)) = (accumulator.window.as_mut(), r.block.window.as_ref()) {
            w.blocks[b] = rw.blocks[0].clone();
        }
        clamps += r.clamps;
        diverged += r.diverged;
        if let Some(t) = trajectories.as_mut() {
            t.extend(r.dumps);
        }
    }
    accumulator.finalize();

    let spin_length_drift = spin_length_drift(&accumulator);
    let diagnostics = Diagnostics {
        clamp_events: clamps,
        spin_length_drift,
        diverged_trajectories: diverged,
        n_traj: n_traj as u64,
        dt: grid.dt,
        n_steps: grid.n_steps,
    };
    Ok(EnsembleRun { accumulator, diagnostics, trajectories })
}

fn diverges(point: &PhasePoint, bound: f64) -> bool {
    point.amplitudes.chunks_exact(2).any(|ab| {
        let n = ab[0].norm_sqr() + ab[1].norm_sqr();
        !n.is_finite() || n > bound
    })
}

fn spin_length_drift(acc: &EnsembleAccumulator) -> Vec<Vec<f64>> {
    use super::accumulator::feature::{NA, NB};
    if acc.n_traj() == 0 {
        return vec![vec![0.0; acc.layout.n_sites]; acc.times.len()];
    }
    let length = |t: usize, site: usize| {
        let s = acc.at(t);
        0.5 * (s.mean(acc.layout.site(site, NA)) + s.mean(acc.layout.site(site, NB)))
    };
    (0..acc.times.len())
        .map(|t| (0..acc.layout.n_sites).map(|n| length(t, n) - length(0, n)).collect())
        .collect()
}
