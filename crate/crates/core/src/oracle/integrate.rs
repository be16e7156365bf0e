//! Adaptive Dormand–Prince 5(4) in integrating-factor (Lawson) form.
//!
//! The diagonal generator `D` is propagated exactly, so stiff dephasing and
//! large diagonal decay rates do not limit the step size. Stage values are
//! `ρ_i = e^{D c_i h} ρ₀ + h Σ_j a_ij e^{D (c_i - c_j) h} K_j` with
//! `K_j = N ρ_j`. All exponents have non-positive real part.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::liouvillian::{mirror_upper, Liouvillian};
use super::operators::{DensityMatrix, ZERO};
use crate::error::OracleError;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step before giving up.
    #[serde(default = "default_h_min")]
    pub h_min: f64,
    /// Check trace, Hermiticity and positivity at every output time.
    #[serde(default = "default_check")]
    pub check_invariants: bool,
}

fn default_h_min() -> f64 {
    1e-12
}

fn default_check() -> bool {
    true
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-9, atol: 1e-12, h_min: default_h_min(), check_invariants: true }
    }
}

impl Tolerances {
    pub fn tight() -> Self {
        Tolerances { rtol: 1e-11, atol: 1e-14, ..Default::default() }
    }
}

/// Exponential of the diagonal generator for one step length.
struct DiagExp {
    u: Vec<Complex64>,
    /// `conj(u)`
    uc: Vec<Complex64>,
    /// Per dephasing channel: `exp(-γ τ k²)` for `k = 0..d`.
    deph: Vec<(usize, Vec<f64>)>,
}

impl DiagExp {
    fn new(l: &Liouvillian, tau: f64) -> Self {
        let u: Vec<Complex64> = l.u.iter().map(|&x| (x * tau).exp()).collect();
        let uc = u.iter().map(|z| z.conj()).collect();
        let deph = l
            .dephasing
            .iter()
            .map(|&(site, g)| (site, (0..l.site_dim).map(|k| (-g * tau * (k * k) as f64).exp()).collect()))
            .collect();
        DiagExp { u, uc, deph }
    }
}

/// `out = Σ_j w_j e^{D τ_j} x_j` for Hermitian `x_j`. Only the upper
/// triangle is computed; `e^{Dτ}` preserves Hermiticity, so the rest is mirrored.
fn combine(l: &Liouvillian, terms: &[(&DiagExp, f64, &[Complex64])], out: &mut [Complex64]) {
    let d = l.dim;
    for (m, row_o) in out.chunks_exact_mut(d).enumerate() {
        let row_o = &mut row_o[m..];
        row_o.fill(ZERO);
        for &(e, w, x) in terms {
            let um = e.u[m] * w;
            let row_x = &x[m * d + m..(m + 1) * d];
            if e.deph.is_empty() {
                for ((o, &xn), &un) in row_o.iter_mut().zip(row_x).zip(&e.uc[m..]) {
                    *o += um * un * xn;
                }
            } else {
                for (i, (o, &xn)) in row_o.iter_mut().zip(row_x).enumerate() {
                    let n = m + i;
                    let mut f = um * e.uc[n];
                    for (site, table) in &e.deph {
                        f *= table[l.site_index(m, *site).abs_diff(l.site_index(n, *site))];
                    }
                    *o += f * xn;
                }
            }
        }
    }
    mirror_upper(out, d);
}

/// Diagonal exponentials for every `τ` used by one step.
struct ExpCache {
    step: f64,
    entries: Vec<(f64, DiagExp)>,
}

impl ExpCache {
    /// Fills the cache for `step`; a no-op if the step length is unchanged.
    fn prepare(&mut self, l: &Liouvillian, step: f64) {
        if step == self.step {
            return;
        }
        self.step = step;
        self.entries.clear();
        let mut taus = vec![0.0, step];
        for i in 0..7 {
            taus.push(C[i] * step);
            taus.push((1.0 - C[i]) * step);
            for j in 0..i.min(6) {
                taus.push((C[i] - C[j]) * step);
            }
        }
        for tau in taus {
            if !self.entries.iter().any(|(t, _)| *t == tau) {
                self.entries.push((tau, DiagExp::new(l, tau)));
            }
        }
    }

    fn get(&self, tau: f64) -> &DiagExp {
        &self.entries.iter().find(|(t, _)| *t == tau).expect("prepared").1
    }
}

/// Result of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Largest `|Tr ρ - 1|` removed by renormalizing after a step.
    pub max_trace_correction: f64,
}

/// Integrates `ρ₀` and returns the state at each time in `t_grid`
/// (non-decreasing, starting at or after 0).
pub fn evolve(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    tol: &Tolerances,
) -> Result<Evolution, OracleError> {
    let d2 = l.dim * l.dim;
    assert_eq!(rho0.data.len(), d2, "state dimension does not match the generator");
    let mut y = rho0.data.clone();
    let mut t = 0.0;
    let mut states = Vec::with_capacity(t_grid.len());
    let mut k: Vec<Vec<Complex64>> = vec![vec![ZERO; d2]; 7];
    let mut stage = vec![ZERO; d2];
    let mut y_new = vec![ZERO; d2];
    let mut err_vec = vec![ZERO; d2];
    let mut cache = ExpCache { step: f64::NAN, entries: Vec::new() };
    l.apply_offdiag(&y, &mut k[0]);
    let mut h = initial_step(l, &y, &k[0], tol);
    let (mut accepted, mut rejected) = (0, 0);
    let mut max_trace_correction: f64 = 0.0;
    let wrap = |state: Vec<Complex64>| DensityMatrix { site_dim: l.site_dim, n_sites: l.n_sites, data: state };

    for &t_out in t_grid {
        while t < t_out {
            let last = t + h >= t_out;
            let step = if last { t_out - t } else { h };
            cache.prepare(l, step);
            for i in 1..6 {
                let (done, rest) = k.split_at_mut(i);
                let mut terms = vec![(cache.get(C[i] * step), 1.0, &y[..])];
                for (j, kj) in done.iter().enumerate() {
                    if A[i][j] != 0.0 {
                        terms.push((cache.get((C[i] - C[j]) * step), step * A[i][j], &kj[..]));
                    }
                }
                combine(l, &terms, &mut stage);
                l.apply_offdiag(&stage, &mut rest[0]);
            }
            let mut terms = vec![(cache.get(step), 1.0, &y[..])];
            for j in 0..6 {
                if A[6][j] != 0.0 {
                    terms.push((cache.get((1.0 - C[j]) * step), step * A[6][j], &k[j][..]));
                }
            }
            combine(l, &terms, &mut y_new);
            {
                let (done, rest) = k.split_at_mut(6);
                l.apply_offdiag(&y_new, &mut rest[0]);
                let mut terms = vec![(cache.get(0.0), step * E[6], &rest[0][..])];
                for (j, kj) in done.iter().enumerate() {
                    if E[j] != 0.0 {
                        terms.push((cache.get((1.0 - C[j]) * step), step * E[j], &kj[..]));
                    }
                }
                combine(l, &terms, &mut err_vec);
            }
            let mut err_sq = 0.0;
            for ((e, a), b) in err_vec.iter().zip(&y).zip(&y_new) {
                let sc = tol.atol + tol.rtol * a.norm().max(b.norm());
                err_sq += (e.norm() / sc).powi(2);
            }
            let err = (err_sq / d2 as f64).sqrt();
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if last { t_out } else { t + step };
                // The exponential splitting conserves the trace only to the
                // local truncation error; project it back after each step.
                let tr: Complex64 = (0..l.dim).map(|i| y_new[i * l.dim + i]).sum();
                max_trace_correction = max_trace_correction.max((tr.re - 1.0).abs());
                let inv = 1.0 / tr.re;
                y_new.iter_mut().for_each(|z| *z *= inv);
                k[6].iter_mut().for_each(|z| *z *= inv);
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                accepted += 1;
                if !last || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                rejected += 1;
                h = step * factor.min(1.0);
                if h < tol.h_min {
                    return Err(OracleError::StepSizeUnderflow { t, h });
                }
            }
        }
        let state = wrap(y.clone());
        if tol.check_invariants {
            state.check_invariants(t)?;
        }
        states.push(state);
    }
    Ok(Evolution { times: t_grid.to_vec(), states, accepted_steps: accepted, rejected_steps: rejected, max_trace_correction })
}

fn initial_step(l: &Liouvillian, y: &[Complex64], f: &[Complex64], tol: &Tolerances) -> f64 {
    let scale = |i: usize| tol.atol + tol.rtol * y[i].norm();
    let n = y.len() as f64;
    let d0 = (y.iter().enumerate().map(|(i, v)| (v.norm() / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f.iter().enumerate().map(|(i, v)| (v.norm() / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let max_rate = l.u.iter().fold(0.0f64, |m, u| m.max(u.norm()));
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-3 } else { 0.01 * d0 / d1 };
    h.min(if max_rate > 0.0 { 1.0 / max_rate } else { 1.0 }).max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DissipatorTerm, HamiltonianTerm, SiteSpec, SpinModel};
    use crate::observables::Obs;
    use crate::oracle::operators::SpinOperators;
    use std::f64::consts::PI;

    fn run(model: &SpinModel, rho0: &DensityMatrix, times: &[f64]) -> Evolution {
        let l = Liouvillian::from_model(model).unwrap();
        evolve(&l, rho0, times, &Tolerances::default()).unwrap()
    }

    #[test]
    fn closed_rabi_rotation() {
        let s = 10.0;
        let omega = 0.9;
        let m = SpinModel::new(1, s).with_term(HamiltonianTerm::TransverseDrive {
            omega,
            site: SiteSpec::All,
            rescale: None,
        });
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.7).collect();
        let ev = run(&m, &DensityMatrix::spin_coherent_product(s, &[(0.0, 0.0)]), &times);
        let ops = SpinOperators::new(s);
        for (t, rho) in times.iter().zip(&ev.states) {
            let sz = rho.moments(&ops, 0)[Obs::Sz.index()];
            assert!((sz + s * (omega * t).cos()).abs() < 1e-6, "t={t}: {sz}");
        }
    }

    #[test]
    fn dephasing_decays_coherence_exponentially() {
        let s = 10.0;
        let g = 0.6;
        let m = SpinModel::new(1, s).with_dissipator(DissipatorTerm::Dephasing {
            gamma: g,
            site: SiteSpec::All,
            rescale: None,
        });
        let times = [0.0, 0.5, 1.0, 2.5, 4.0];
        let ev = run(&m, &DensityMatrix::spin_coherent_product(s, &[(PI / 2.0, PI)]), &times);
        let ops = SpinOperators::new(s);
        for (t, rho) in times.iter().zip(&ev.states) {
            let sx = rho.moments(&ops, 0)[Obs::Sx.index()];
            assert!((sx - s * (-g * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn two_level_decay_closed_form() {
        let m = SpinModel::new(1, 0.5).with_dissipator(DissipatorTerm::Decay {
            gamma: 0.8,
            site: SiteSpec::All,
            rescale: None,
        });
        let times = [0.3, 1.0, 3.0];
        let ev = run(&m, &DensityMatrix::spin_coherent_product(0.5, &[(PI, 0.0)]), &times);
        for (t, rho) in times.iter().zip(&ev.states) {
            assert!((rho.data[3].re - (-2.0 * 0.8 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn tightening_tolerances_changes_little() {
        let s = 8.0;
        let m = SpinModel::new(1, s)
            .with_term(HamiltonianTerm::OneAxisTwist { g: 1.0, site: SiteSpec::All, rescale: None })
            .with_dissipator(DissipatorTerm::Decay { gamma: 0.25, site: SiteSpec::All, rescale: None })
            .with_dissipator(DissipatorTerm::Dephasing { gamma: 0.3, site: SiteSpec::All, rescale: None });
        let l = Liouvillian::from_model(&m).unwrap();
        let rho0 = DensityMatrix::spin_coherent_product(s, &[(0.0, 0.0)]);
        let times = [1.0, 3.0];
        let a = evolve(&l, &rho0, &times, &Tolerances::default()).unwrap();
        let b = evolve(&l, &rho0, &times, &Tolerances::tight()).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            let diff = x.data.iter().zip(&y.data).fold(0.0f64, |m, (p, q)| m.max((p - q).norm()));
            assert!(diff < 1e-6, "{diff}");
        }
    }
}
