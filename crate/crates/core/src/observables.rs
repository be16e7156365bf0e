//! Spin expectation values from ensemble phase-space moments.
//!
//! Phase-space averages equal expectation values of ordered operators
//! (anti-normal for `Q`, symmetric for Wigner, normal for `P`). With the mode
//! offset `c = (1 - k)/2` the corrections used here are
//!
//! | quantity | estimator |
//! |---|---|
//! | `⟨S_i⟩` | `E[s_i]` |
//! | `⟨S_i²⟩` | `E[s_i²] + (k E[|α|² + |β|²] - (1 - k²)/2) / 4` |
//! | `⟨(S_i S_j + S_j S_i)/2⟩`, `i ≠ j` | `E[s_i s_j]` |
//! | `⟨S⁺S⁻⟩` | `E[(|α|² - c)(|β|² - c + 1)]` |
//! | `⟨S⁺_n S⁻_m⟩`, `n ≠ m` | `E[(α_n* β_n)(α_m β_m*)]` |
//!
//! with `s_x + i s_y = α*β` and `s_z = (|α|² - |β|²)/2`.

use std::io::Write;

use serde::Serialize;

use crate::sampler::DistributionKind;
use crate::sde::accumulator::{feature, EnsembleAccumulator, MomentSlice};

/// Reported spin observables of one site (or the site average).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Obs {
    Sx,
    Sy,
    Sz,
    Sxx,
    Syy,
    Szz,
    /// Symmetrized `(Sx Sy + Sy Sx)/2`.
    Sxy,
    Sxz,
    Syz,
    VarX,
    VarY,
    VarZ,
    /// `⟨S⁺S⁻⟩`
    SpSm,
}

pub const N_OBS: usize = 13;

impl Obs {
    pub const ALL: [Obs; N_OBS] = [
        Obs::Sx,
        Obs::Sy,
        Obs::Sz,
        Obs::Sxx,
        Obs::Syy,
        Obs::Szz,
        Obs::Sxy,
        Obs::Sxz,
        Obs::Syz,
        Obs::VarX,
        Obs::VarY,
        Obs::VarZ,
        Obs::SpSm,
    ];

    /// Stable CSV column name.
    pub fn name(self) -> &'static str {
        match self {
            Obs::Sx => "sx",
            Obs::Sy => "sy",
            Obs::Sz => "sz",
            Obs::Sxx => "sxx",
            Obs::Syy => "syy",
            Obs::Szz => "szz",
            Obs::Sxy => "sxy",
            Obs::Sxz => "sxz",
            Obs::Syz => "syz",
            Obs::VarX => "var_x",
            Obs::VarY => "var_y",
            Obs::VarZ => "var_z",
            Obs::SpSm => "spsm",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Inverse of [`name`](Self::name).
    pub fn from_name(name: &str) -> Option<Obs> {
        Obs::ALL.into_iter().find(|o| o.name() == name)
    }

    /// Power of `S` setting the natural scale of the observable.
    pub fn degree(self) -> i32 {
        match self {
            Obs::Sx | Obs::Sy | Obs::Sz => 1,
            _ => 2,
        }
    }
}

/// Applies the ordering corrections to the raw features of one site.
pub fn quantum_moments(raw: &[f64], kind: DistributionKind) -> [f64; N_OBS] {
    use feature::*;
    let k = kind.kf();
    let c = kind.mode_offset();
    let diag = (k * (raw[NA] + raw[NB]) - 0.5 * (1.0 - k * k)) / 4.0;
    let sx = raw[SX];
    let sy = raw[SY];
    let sz = 0.5 * (raw[NA] - raw[NB]);
    let sxx = raw[SXX] + diag;
    let syy = raw[SYY] + diag;
    let szz = raw[SZZ] + diag;
    let spsm = raw[NANB] + (1.0 - c) * raw[NA] - c * raw[NB] - c * (1.0 - c);
    [
        sx,
        sy,
        sz,
        sxx,
        syy,
        szz,
        raw[SXY],
        raw[SXZ],
        raw[SYZ],
        sxx - sx * sx,
        syy - sy * sy,
        szz - sz * sz,
        spsm,
    ]
}

/// `ξ² = 2S λ_min / ⟨Sz⟩²`, with `λ_min` the smaller eigenvalue of the
/// `(Sx, Sy)` covariance matrix.
pub fn squeezing_from_moments(m: &[f64; N_OBS], spin_s: f64) -> f64 {
    let vxx = m[Obs::VarX.index()];
    let vyy = m[Obs::VarY.index()];
    let cxy = m[Obs::Sxy.index()] - m[Obs::Sx.index()] * m[Obs::Sy.index()];
    let half_trace = 0.5 * (vxx + vyy);
    let lambda_min = half_trace - (0.25 * (vxx - vyy).powi(2) + cxy * cxy).sqrt();
    let sz = m[Obs::Sz.index()];
    2.0 * spin_s * lambda_min / (sz * sz)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }
}

/// All [`Obs`] of one site at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinMoments(pub [Estimate; N_OBS]);

impl SpinMoments {
    pub fn get(&self, obs: Obs) -> Estimate {
        self.0[obs.index()]
    }

    pub fn value(&self, obs: Obs) -> f64 {
        self.0[obs.index()].value
    }

    pub fn values(&self) -> [f64; N_OBS] {
        self.0.map(|e| e.value)
    }

    pub fn from_values(values: [f64; N_OBS]) -> Self {
        SpinMoments(values.map(Estimate::exact))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Squeezing {
    pub value: f64,
    pub stderr: f64,
    /// False when `|⟨Sz⟩| < 5 stderr(⟨Sz⟩)`, where `ξ²` is ill-defined.
    pub reliable: bool,
}

/// Feature group a moment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Site(usize),
    Mean,
}

fn group_offset(slice: &MomentSlice<'_>, group: Group) -> usize {
    match group {
        Group::Site(n) => slice.layout.site(n, 0),
        Group::Mean => slice.layout.mean(0),
    }
}

/// `(⟨Sx⟩, ⟨Sy⟩, ⟨Sz⟩)` with Welford standard errors.
pub fn first_moments(slice: &MomentSlice<'_>, group: Group) -> [Estimate; 3] {
    let o = group_offset(slice, group);
    let est = |f: usize| Estimate { value: slice.mean(o + f), stderr: slice.stderr(o + f) };
    // The error of (na - nb)/2 depends on their covariance.
    let (sz, sz_err) = slice.jackknife_in(o..o + feature::COUNT, |m| 0.5 * (m[feature::NA] - m[feature::NB]));
    [est(feature::SX), est(feature::SY), Estimate { value: sz, stderr: sz_err }]
}

/// Symmetric table of `⟨(S_i S_j + S_j S_i)/2⟩` for `i, j ∈ {x, y, z}`.
pub fn second_moments(slice: &MomentSlice<'_>, group: Group) -> [[Estimate; 3]; 3] {
    let m = moments(slice, group);
    let g = |o: Obs| m.get(o);
    [
        [g(Obs::Sxx), g(Obs::Sxy), g(Obs::Sxz)],
        [g(Obs::Sxy), g(Obs::Syy), g(Obs::Syz)],
        [g(Obs::Sxz), g(Obs::Syz), g(Obs::Szz)],
    ]
}

/// Every [`Obs`] with errors: Welford for `⟨Sx⟩`, `⟨Sy⟩`, block jackknife
/// for the rest.
pub fn moments(slice: &MomentSlice<'_>, group: Group) -> SpinMoments {
    let o = group_offset(slice, group);
    let kind = slice.kind;
    let mut out = [Estimate::default(); N_OBS];
    for obs in Obs::ALL {
        out[obs.index()] = match obs {
            Obs::Sx | Obs::Sy => {
                let f = if obs == Obs::Sx { feature::SX } else { feature::SY };
                Estimate { value: slice.mean(o + f), stderr: slice.stderr(o + f) }
            }
            _ => {
                let i = obs.index();
                let (value, stderr) =
                    slice.jackknife_in(o..o + feature::COUNT, |m| quantum_moments(m, kind)[i]);
                Estimate { value, stderr }
            }
        };
    }
    SpinMoments(out)
}

pub fn squeezing_parameter(slice: &MomentSlice<'_>, group: Group) -> Squeezing {
    let o = group_offset(slice, group);
    let (kind, s) = (slice.kind, slice.spin_s);
    let (value, stderr) =
        slice.jackknife_in(o..o + feature::COUNT, |m| squeezing_from_moments(&quantum_moments(m, kind), s));
    let sz = first_moments(slice, group)[2];
    Squeezing { value, stderr, reliable: sz.value.abs() >= 5.0 * sz.stderr && sz.value != 0.0 }
}

/// `C(s) = ⟨S⁺_n S⁻_{n+s}⟩ / ⟨S⁺_n S⁻_n⟩` averaged over `n`, with an
/// exponential fit over even `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationProfile {
    pub separations: Vec<usize>,
    pub c: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fit: Option<CorrelationFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationFit {
    /// Correlation length; infinite when `C` does not decay.
    pub xi_corr: f64,
    /// Root-mean-square residual of `ln C(s) + s/ξ`.
    pub residual: f64,
    pub n_points: usize,
}

/// Minimum number of usable even separations (including `s = 0`).
pub const MIN_FIT_POINTS: usize = 3;

/// Least-squares fit of `ln C(s) = -s/ξ` through the origin over even `s`
/// with `C(s) > 0`.
pub fn fit_correlation_length(separations: &[usize], c: &[f64]) -> Option<CorrelationFit> {
    let pts: Vec<(f64, f64)> = separations
        .iter()
        .zip(c)
        .filter(|(s, c)| *s % 2 == 0 && **c > 0.0)
        .map(|(&s, &c)| (s as f64, c.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return None;
    }
    let sxx: f64 = pts.iter().map(|(s, _)| s * s).sum();
    let sxy: f64 = pts.iter().map(|(s, l)| s * l).sum();
    let slope = sxy / sxx;
    let residual = (pts.iter().map(|(s, l)| (l - slope * s).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
    let xi_corr = if slope < 0.0 { -1.0 / slope } else { f64::INFINITY };
    Some(CorrelationFit { xi_corr, residual, n_points: pts.len() })
}

/// Requires an accumulator built with correlation features.
pub fn correlations(slice: &MomentSlice<'_>) -> Option<CorrelationProfile> {
    let layout = slice.layout;
    if layout.max_sep == 0 {
        return None;
    }
    let kind = slice.kind;
    let o = layout.mean(0);
    let spsm = |m: &[f64]| quantum_moments(&m[o..o + feature::COUNT], kind)[Obs::SpSm.index()];
    let mut separations = vec![0];
    let mut c = vec![1.0];
    let mut stderr = vec![0.0];
    for s in 1..=layout.max_sep {
        let i = layout.corr(s);
        let (v, e) = slice.jackknife(|m| m[i] / spsm(m));
        separations.push(s);
        c.push(v);
        stderr.push(e);
    }
    let fit = fit_correlation_length(&separations, &c);
    Some(CorrelationProfile { separations, c, stderr, fit })
}

/// Time series of all observables, per site and site-averaged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub n_traj: u64,
    pub spin_s: f64,
    /// `[time]`
    pub mean: Vec<SpinMoments>,
    /// `[site][time]`
    pub sites: Vec<Vec<SpinMoments>>,
    /// `[time]`, from the site-averaged moments.
    pub squeezing: Vec<Squeezing>,
}

impl ObservableSeries {
    pub fn from_ensemble(acc: &EnsembleAccumulator) -> Self {
        let n_t = acc.times.len();
        let mean = (0..n_t).map(|t| moments(&acc.at(t), Group::Mean)).collect();
        let sites = (0..acc.layout.n_sites)
            .map(|n| (0..n_t).map(|t| moments(&acc.at(t), Group::Site(n))).collect())
            .collect();
        let squeezing = (0..n_t).map(|t| squeezing_parameter(&acc.at(t), Group::Mean)).collect();
        ObservableSeries { times: acc.times.clone(), n_traj: acc.n_traj(), spin_s: acc.spin_s, mean, sites, squeezing }
    }

    /// Series of exactly known moments, `values[time][site]`.
    pub fn from_exact(times: Vec<f64>, spin_s: f64, values: &[Vec<[f64; N_OBS]>]) -> Self {
        let n_sites = values.first().map_or(0, Vec::len);
        let mean: Vec<SpinMoments> = values
            .iter()
            .map(|per_site| {
                let mut avg = [0.0; N_OBS];
                for v in per_site {
                    for (a, x) in avg.iter_mut().zip(v) {
                        *a += x / n_sites as f64;
                    }
                }
                SpinMoments::from_values(avg)
            })
            .collect();
        let sites = (0..n_sites)
            .map(|n| values.iter().map(|row| SpinMoments::from_values(row[n])).collect())
            .collect();
        let squeezing = mean
            .iter()
            .map(|m| {
                let sz = m.value(Obs::Sz);
                Squeezing { value: squeezing_from_moments(&m.values(), spin_s), stderr: 0.0, reliable: sz != 0.0 }
            })
            .collect();
        ObservableSeries { times, n_traj: 0, spin_s, mean, sites, squeezing }
    }

    /// Header of [`write_csv`](Self::write_csv).
    pub fn csv_header() -> Vec<String> {
        let mut h = vec!["time".to_string(), "n_traj".to_string()];
        for obs in Obs::ALL {
            h.push(obs.name().to_string());
            h.push(format!("{}_err", obs.name()));
        }
        h.extend(["xi2", "xi2_err", "xi2_reliable"].map(String::from));
        h
    }

    /// One row per save time with site-averaged observables.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header())?;
        for (t, time) in self.times.iter().enumerate() {
            let mut row = vec![fmt(*time), self.n_traj.to_string()];
            push_moments(&mut row, &self.mean[t]);
            let xi = self.squeezing[t];
            row.extend([fmt(xi.value), fmt(xi.stderr), xi.reliable.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long format: one row per (save time, site).
    pub fn write_site_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string(), "site".to_string()];
        for obs in Obs::ALL {
            header.push(obs.name().to_string());
            header.push(format!("{}_err", obs.name()));
        }
        w.write_record(&header)?;
        for (t, time) in self.times.iter().enumerate() {
            for (n, site) in self.sites.iter().enumerate() {
                let mut row = vec![fmt(*time), n.to_string()];
                push_moments(&mut row, &site[t]);
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Largest `|self - other|` of `obs` over common times (matched by index).
    pub fn max_deviation(&self, other: &ObservableSeries, obs: Obs) -> f64 {
        self.mean
            .iter()
            .zip(&other.mean)
            .map(|(a, b)| (a.value(obs) - b.value(obs)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|self - other| / stderr` over time for the site average; the
    /// standard errors are those of `self`. Deviations at points with zero
    /// standard error count only if they exceed `1e-9 · S`.
    pub fn max_normalized_deviation(&self, other: &ObservableSeries, obs: Obs) -> f64 {
        let floor = 1e-9 * self.spin_s.max(1.0);
        self.mean
            .iter()
            .zip(&other.mean)
            .map(|(a, b)| {
                let e = a.get(obs);
                let dev = (e.value - b.value(obs)).abs();
                if e.stderr > 0.0 {
                    dev / e.stderr
                } else if dev > floor {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

impl CorrelationProfile {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "C", "stderr"])?;
        for ((s, c), e) in self.separations.iter().zip(&self.c).zip(&self.stderr) {
            w.write_record([s.to_string(), fmt(*c), fmt(*e)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn push_moments(row: &mut Vec<String>, m: &SpinMoments) {
    for e in m.0 {
        row.push(fmt(e.value));
        row.push(fmt(e.stderr));
    }
}

/// Shortest round-trip representation.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}
