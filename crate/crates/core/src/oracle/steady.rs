//! Stationary states of the Lindblad generator.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::integrate::{evolve, Tolerances};
use super::liouvillian::Liouvillian;
use super::operators::{DensityMatrix, ONE, ZERO};
use crate::error::OracleError;
use crate::model::SpinModel;

/// Residual `‖L ρ‖_F` accepted as stationary.
pub const STEADY_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    /// Null space by sparse LU; long-time evolution if the factorization fails.
    #[default]
    Auto,
    NullSpace,
    Evolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyOptions {
    #[serde(default)]
    pub method: SteadyMethod,
    /// Evolution budget, in units of the model's time.
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    /// Evolution is checked for convergence after every chunk of this length.
    #[serde(default = "default_chunk")]
    pub chunk: f64,
}

fn default_max_time() -> f64 {
    1e4
}

fn default_chunk() -> f64 {
    10.0
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions { method: SteadyMethod::Auto, max_time: default_max_time(), chunk: default_chunk() }
    }
}

/// Stationary state of a single-site model.
pub fn steady_state(model: &SpinModel, options: &SteadyOptions) -> Result<DensityMatrix, OracleError> {
    if model.n_sites != 1 {
        return Err(OracleError::Unsupported("steady state is computed for single-site models".into()));
    }
    let l = Liouvillian::from_model(model)?;
    match options.method {
        SteadyMethod::NullSpace => null_space(&l),
        SteadyMethod::Evolution => by_evolution(&l, options),
        SteadyMethod::Auto => null_space(&l).or_else(|_| by_evolution(&l, options)),
    }
}

/// Solves `L ρ = 0` with the first equation replaced by `Tr ρ = 1`.
pub fn null_space(l: &Liouvillian) -> Result<DensityMatrix, OracleError> {
    let d = l.dim;
    let n = d * d;
    let mut trip = l.superoperator_triplets();
    trip.retain(|&(r, _, _)| r != 0);
    trip.extend((0..d).map(|m| (0, m * d + m, ONE)));
    trip.sort_by_key(|&(r, c, _)| (c, r));
    let mut merged: Vec<Triplet<usize, usize, Complex64>> = Vec::with_capacity(trip.len());
    for (r, c, v) in trip {
        match merged.last_mut() {
            Some(t) if t.row == r && t.col == c => t.val += v,
            _ => merged.push(Triplet::new(r, c, v)),
        }
    }
    let a = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &merged)
        .map_err(|e| OracleError::Factorization(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| OracleError::Factorization(format!("{e:?}")))?;
    let mut b = Mat::<Complex64>::zeros(n, 1);
    b[(0, 0)] = ONE;
    let x = lu.solve(&b);
    let mut data: Vec<Complex64> = (0..n).map(|i| x[(i, 0)]).collect();
    if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(OracleError::Factorization("singular generator".into()));
    }
    hermitize(&mut data, d);
    let rho = DensityMatrix { site_dim: l.site_dim, n_sites: l.n_sites, data };
    let residual = l.residual(&rho);
    if residual > STEADY_RESIDUAL * (1.0 + d as f64) {
        return Err(OracleError::NoConvergence { residual, t: 0.0 });
    }
    Ok(rho)
}

/// Evolves the maximally mixed state until `‖L ρ‖_F < STEADY_RESIDUAL`.
pub fn by_evolution(l: &Liouvillian, options: &SteadyOptions) -> Result<DensityMatrix, OracleError> {
    let tol = Tolerances { rtol: 1e-12, atol: 1e-15, check_invariants: false, ..Default::default() };
    let mut rho = DensityMatrix::maximally_mixed(l.site_dim, l.n_sites);
    let mut t = 0.0;
    loop {
        let residual = l.residual(&rho);
        if residual < STEADY_RESIDUAL {
            hermitize(&mut rho.data, l.dim);
            return Ok(rho);
        }
        if t >= options.max_time {
            return Err(OracleError::NoConvergence { residual, t });
        }
        let ev = evolve(l, &rho, &[options.chunk], &tol)?;
        rho = ev.states.into_iter().next().expect("one output time");
        t += options.chunk;
    }
}

/// `ρ ← (ρ + ρ†) / (2 Tr ρ)`
fn hermitize(data: &mut [Complex64], d: usize) {
    for i in 0..d {
        for j in i..d {
            let avg = 0.5 * (data[i * d + j] + data[j * d + i].conj());
            data[i * d + j] = avg;
            data[j * d + i] = avg.conj();
        }
    }
    let tr: Complex64 = (0..d).map(|i| data[i * d + i]).sum();
    if tr != ZERO {
        let inv = 1.0 / tr.re;
        data.iter_mut().for_each(|z| *z *= inv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DissipatorTerm, HamiltonianTerm, SiteSpec};
    use crate::observables::Obs;
    use crate::oracle::operators::SpinOperators;

    fn driven(s: f64, omega: f64) -> SpinModel {
        SpinModel::new(1, s)
            .with_term(HamiltonianTerm::TransverseDrive { omega, site: SiteSpec::All, rescale: None })
            .with_dissipator(DissipatorTerm::Decay { gamma: 1.0, site: SiteSpec::All, rescale: None })
    }

    #[test]
    fn decay_only_gives_dark_state() {
        let rho = steady_state(&driven(5.0, 0.0), &SteadyOptions::default()).unwrap();
        assert!((rho.data[0].re - 1.0).abs() < 1e-10);
        rho.check_invariants(0.0).unwrap();
    }

    #[test]
    fn null_space_and_evolution_agree() {
        let model = driven(3.0, 0.5);
        let a = steady_state(&model, &SteadyOptions { method: SteadyMethod::NullSpace, ..Default::default() }).unwrap();
        let b = steady_state(&model, &SteadyOptions { method: SteadyMethod::Evolution, ..Default::default() }).unwrap();
        let diff = a.data.iter().zip(&b.data).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn strong_drive_approaches_fully_mixed() {
        let s = 50.0;
        let mixed = s * s / 3.0;
        // Largest relative deviation of a second moment from S²/3.
        let spread = |omega: f64| {
            let rho = steady_state(&driven(s, omega), &SteadyOptions::default()).unwrap();
            let m = rho.moments(&SpinOperators::new(s), 0);
            assert!(m[Obs::Sz.index()].abs() < 0.01 * s, "{}", m[Obs::Sz.index()]);
            [Obs::Sxx, Obs::Syy, Obs::Szz].iter().fold(0.0f64, |a, o| a.max((m[o.index()] / mixed - 1.0).abs()))
        };
        // At twice the critical drive the state is still anisotropic: the
        // moment along the drive axis sits below S²/3 and the one across it
        // about a quarter above.
        let (near, far) = (spread(2.0), spread(20.0));
        assert!(near > 0.2 && near < 0.35, "{near}");
        assert!(far < 0.03, "{far}");
    }

    #[test]
    fn weak_drive_stays_in_lower_hemisphere() {
        let s = 50.0;
        let rho = steady_state(&driven(s, 0.5), &SteadyOptions::default()).unwrap();
        let m = rho.moments(&SpinOperators::new(s), 0);
        // Mean-field polar angle: sin θ = Ω/Γ.
        let want = -(1.0f64 - 0.25).sqrt() * s;
        assert!((m[Obs::Sz.index()] - want).abs() < 0.05 * s, "{}", m[Obs::Sz.index()]);
        rho.check_invariants(0.0).unwrap();
    }
}
