//! Per-term drift and noise of the Ito equations
//! `dx = A(x) dt + B(x) dW` for the Schwinger amplitudes.
//!
//! Each [`TermRule`] carries the contribution of one model term after
//! truncation to second-order derivatives and removal of the non-positive
//! diffusion parts. Hamiltonian rules are noiseless; their drift is the
//! classical flow `dα/dt = -i ∂H/∂α*` of the symmetrically ordered symbol.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::model::{ResolvedTerm, SpinModel};
use crate::sampler::DistributionKind;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Switches that change how rules are built.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleOptions {
    /// Permit twist and bond terms with the `Q` or `P` distribution.
    #[serde(default)]
    pub allow_non_wigner_interactions: bool,
    /// Use `α_n` instead of `β_n` as the factor of the `Jz` term in the
    /// `dβ_n` bond equation (reproduces the printed chain equations verbatim).
    #[serde(default)]
    pub literal_chain_beta_jz: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleKind {
    /// Collective decay `Γ D[S^-]`; `swap` exchanges the two modes, giving gain.
    Loss { gamma: f64, site: usize, k: f64, swap: bool },
    Dephasing { gamma: f64, site: usize },
    Drive { omega: f64, site: usize },
    Field { delta: f64, site: usize },
    Twist { g: f64, site: usize },
    Bond { jx: f64, jy: f64, jz: f64, i: usize, j: usize, literal_beta_jz: bool },
}

/// Drift and noise of one model term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermRule {
    pub kind: RuleKind,
}

#[inline]
fn idx(site: usize, swap: bool) -> (usize, usize) {
    if swap {
        (2 * site + 1, 2 * site)
    } else {
        (2 * site, 2 * site + 1)
    }
}

#[inline]
fn clamped_sqrt(arg: f64, clamps: &mut u64) -> f64 {
    if arg < 0.0 {
        *clamps += 1;
        0.0
    } else {
        arg.sqrt()
    }
}

/// Decay rule with effective rate `gamma` (already divided by `2S` if the
/// model rescales).
pub fn rule_decay(gamma: f64, kind: DistributionKind, site: usize) -> TermRule {
    TermRule { kind: RuleKind::Loss { gamma, site, k: kind.kf(), swap: false } }
}

/// Gain `Γ D[S^+]`: the decay rule with the roles of `α` and `β` exchanged.
pub fn rule_gain(gamma: f64, kind: DistributionKind, site: usize) -> TermRule {
    TermRule { kind: RuleKind::Loss { gamma, site, k: kind.kf(), swap: true } }
}

pub fn rule_dephasing(gamma: f64, site: usize) -> TermRule {
    TermRule { kind: RuleKind::Dephasing { gamma, site } }
}

pub fn rule_transverse_drive(omega: f64, site: usize) -> TermRule {
    TermRule { kind: RuleKind::Drive { omega, site } }
}

pub fn rule_longitudinal_field(delta: f64, site: usize) -> TermRule {
    TermRule { kind: RuleKind::Field { delta, site } }
}

pub fn rule_one_axis_twist(
    g: f64,
    kind: DistributionKind,
    site: usize,
    options: &RuleOptions,
) -> Result<TermRule, EngineError> {
    check_interaction(kind, options)?;
    Ok(TermRule { kind: RuleKind::Twist { g, site } })
}

pub fn rule_heisenberg_bond(
    (jx, jy, jz): (f64, f64, f64),
    (i, j): (usize, usize),
    kind: DistributionKind,
    options: &RuleOptions,
) -> Result<TermRule, EngineError> {
    check_interaction(kind, options)?;
    Ok(TermRule {
        kind: RuleKind::Bond { jx, jy, jz, i, j, literal_beta_jz: options.literal_chain_beta_jz },
    })
}

fn check_interaction(kind: DistributionKind, options: &RuleOptions) -> Result<(), EngineError> {
    if kind != DistributionKind::Wigner && !options.allow_non_wigner_interactions {
        Err(EngineError::InteractionNeedsWigner(kind.k()))
    } else {
        Ok(())
    }
}

impl TermRule {
    /// Number of independent real Wiener increments consumed per step.
    pub fn n_wieners(&self) -> usize {
        match self.kind {
            RuleKind::Loss { .. } => 4,
            RuleKind::Dephasing { .. } => 1,
            _ => 0,
        }
    }

    pub fn is_hamiltonian(&self) -> bool {
        !matches!(self.kind, RuleKind::Loss { .. } | RuleKind::Dephasing { .. })
    }

    /// Adds `A(x)·dt` to `out`.
    #[inline]
    pub fn add_drift(&self, x: &[Complex64], dt: f64, out: &mut [Complex64]) {
        match self.kind {
            RuleKind::Loss { gamma, site, k, swap } => {
                let (ia, ib) = idx(site, swap);
                let (a, b) = (x[ia], x[ib]);
                out[ia] -= a * (gamma * (b.norm_sqr() + 0.5 * (1.0 + k)) * dt);
                out[ib] += b * (gamma * (a.norm_sqr() - 0.5 * (1.0 - k)) * dt);
            }
            RuleKind::Dephasing { gamma, site } => {
                let f = -0.25 * gamma * dt;
                out[2 * site] += x[2 * site] * f;
                out[2 * site + 1] += x[2 * site + 1] * f;
            }
            RuleKind::Drive { omega, site } => {
                let f = -I * (0.5 * omega * dt);
                let (a, b) = (x[2 * site], x[2 * site + 1]);
                out[2 * site] += b * f;
                out[2 * site + 1] += a * f;
            }
            RuleKind::Field { delta, site } => {
                let f = I * (0.5 * delta * dt);
                out[2 * site] -= x[2 * site] * f;
                out[2 * site + 1] += x[2 * site + 1] * f;
            }
            RuleKind::Twist { g, site } => {
                let (a, b) = (x[2 * site], x[2 * site + 1]);
                let f = -I * (0.5 * g * dt);
                out[2 * site] += (a.conj() * b * b + a * b.norm_sqr()) * f;
                out[2 * site + 1] += (b.conj() * a * a + a.norm_sqr() * b) * f;
            }
            RuleKind::Bond { jx, jy, jz, i, j, literal_beta_jz } => {
                let f = -I * (0.25 * dt);
                let (plus, minus) = (jx + jy, jx - jy);
                for (n, m) in [(i, j), (j, i)] {
                    let (an, bn) = (x[2 * n], x[2 * n + 1]);
                    let (am, bm) = (x[2 * m], x[2 * m + 1]);
                    let c = am * bm.conj();
                    let zm = am.norm_sqr() - bm.norm_sqr();
                    let da = (c * plus + c.conj() * minus) * bn + an * (jz * zm);
                    let jz_factor = if literal_beta_jz { an } else { bn };
                    let db = (c.conj() * plus + c * minus) * an - jz_factor * (jz * zm);
                    out[2 * n] += da * f;
                    out[2 * n + 1] += db * f;
                }
            }
        }
    }

    /// Adds `B(x)·dW` to `out`; `dw` holds this rule's Wiener increments
    /// (each `N(0, dt)`). Negative square-root arguments are clamped to zero
    /// and counted in `clamps`.
    #[inline]
    pub fn add_noise(&self, x: &[Complex64], dw: &[f64], out: &mut [Complex64], clamps: &mut u64) {
        match self.kind {
            RuleKind::Loss { gamma, site, k, swap } => {
                let (ia, ib) = idx(site, swap);
                let (a, b) = (x[ia], x[ib]);
                let ca = 0.5 * gamma * (1.0 - k);
                let cb = 0.5 * gamma * (1.0 + k);
                if ca != 0.0 {
                    let amp = clamped_sqrt(ca * (b.norm_sqr() + 0.5 * (1.0 + k)), clamps);
                    out[ia] += Complex64::new(dw[0], dw[1]) * amp;
                }
                if cb != 0.0 {
                    let amp = clamped_sqrt(cb * (a.norm_sqr() - 0.5 * (1.0 - k)), clamps);
                    out[ib] += Complex64::new(dw[2], dw[3]) * amp;
                }
            }
            RuleKind::Dephasing { gamma, site } => {
                let f = I * ((0.5 * gamma).sqrt() * dw[0]);
                out[2 * site] += x[2 * site] * f;
                out[2 * site + 1] -= x[2 * site + 1] * f;
            }
            _ => {}
        }
    }
}

/// Builds one rule per (resolved) model term.
pub fn assemble(
    model: &SpinModel,
    kind: DistributionKind,
    options: &RuleOptions,
) -> Result<Vec<TermRule>, EngineError> {
    model
        .resolve()?
        .into_iter()
        .map(|term| match term {
            ResolvedTerm::Drive { omega, site } => Ok(rule_transverse_drive(omega, site)),
            ResolvedTerm::Field { delta, site } => Ok(rule_longitudinal_field(delta, site)),
            ResolvedTerm::Twist { g, site } => rule_one_axis_twist(g, kind, site, options),
            ResolvedTerm::Bond { jx, jy, jz, i, j } => {
                rule_heisenberg_bond((jx, jy, jz), (i, j), kind, options)
            }
            ResolvedTerm::Decay { gamma, site } => Ok(rule_decay(gamma, kind, site)),
            ResolvedTerm::Gain { gamma, site } => Ok(rule_gain(gamma, kind, site)),
            ResolvedTerm::Dephasing { gamma, site } => Ok(rule_dephasing(gamma, site)),
        })
        .collect()
}

/// Largest characteristic rate of the assembled equations, used to pick a
/// default time step. Amplitudes are of order `√(2S)`.
pub fn characteristic_rate(model: &SpinModel) -> Result<f64, EngineError> {
    let two_s = 2.0 * model.validate()?.spin_s;
    let mut per_site = vec![0.0f64; model.n_sites];
    for term in model.resolve()? {
        match term {
            ResolvedTerm::Drive { omega, site } => per_site[site] += omega.abs(),
            ResolvedTerm::Field { delta, site } => per_site[site] += delta.abs(),
            ResolvedTerm::Twist { g, site } => per_site[site] += g.abs() * two_s,
            ResolvedTerm::Bond { jx, jy, jz, i, j } => {
                let r = (jx.abs() + jy.abs() + jz.abs()) * two_s;
                per_site[i] += r;
                per_site[j] += r;
            }
            ResolvedTerm::Decay { gamma, site } | ResolvedTerm::Gain { gamma, site } => {
                per_site[site] += gamma * (two_s + 1.0)
            }
            ResolvedTerm::Dephasing { gamma, site } => per_site[site] += gamma,
        }
    }
    Ok(per_site.into_iter().fold(0.0, f64::max))
}
