//! Exact Lindblad evolution for one or two sites, used as the reference for
//! the stochastic ensembles.

pub mod integrate;
pub mod liouvillian;
pub mod operators;
pub mod steady;
pub mod symbols;

pub use integrate::{evolve, Evolution, Tolerances};
pub use liouvillian::{liouvillian_rhs, Liouvillian, MAX_DIM, MAX_SITES};
pub use operators::{spin_coherent_state, DensityMatrix, SparseOp, SpinOperators};
pub use steady::{steady_state, SteadyMethod, SteadyOptions};
pub use symbols::{symbol_features, symbol_monomial};

use num_complex::Complex64;

use crate::error::{EngineError, OracleError};
use crate::model::SpinModel;
use crate::observables::ObservableSeries;
use crate::sampler::InitialState;

/// Product of the spin-coherent states named by `initial`.
pub fn initial_density(model: &SpinModel, initial: &InitialState) -> Result<DensityMatrix, OracleError> {
    initial
        .check(model.n_sites)
        .map_err(|e: EngineError| OracleError::Unsupported(e.to_string()))?;
    let angles: Vec<(f64, f64)> = (0..model.n_sites).map(|n| initial.site_angles(n)).collect();
    Ok(DensityMatrix::spin_coherent_product(model.spin_s, &angles))
}

/// Exact trajectory of a model together with the states it passed through.
#[derive(Debug, Clone)]
pub struct ExactRun {
    pub series: ObservableSeries,
    pub evolution: Evolution,
    pub ops: SpinOperators,
}

impl ExactRun {
    /// `⟨S⁺_i S⁻_j⟩` at output index `t`.
    pub fn raising_lowering(&self, t: usize, i: usize, j: usize) -> Complex64 {
        let rho = &self.evolution.states[t];
        let sp = self.ops.embed(&self.ops.sp, i, rho.n_sites);
        let sm = self.ops.embed(&self.ops.sm, j, rho.n_sites);
        rho.expectation(&sp.mul(&sm))
    }
}

/// Integrates the master equation from `initial` and records the moments of
/// every site at `times`.
pub fn exact_series(
    model: &SpinModel,
    initial: &InitialState,
    times: &[f64],
    tol: &Tolerances,
) -> Result<ExactRun, OracleError> {
    let l = Liouvillian::from_model(model)?;
    let rho0 = initial_density(model, initial)?;
    let evolution = evolve(&l, &rho0, times, tol)?;
    let ops = SpinOperators::new(model.spin_s);
    let values: Vec<Vec<_>> = evolution
        .states
        .iter()
        .map(|rho| (0..model.n_sites).map(|n| rho.moments(&ops, n)).collect())
        .collect();
    let series = ObservableSeries::from_exact(times.to_vec(), model.spin_s, &values);
    Ok(ExactRun { series, evolution, ops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DissipatorTerm, HamiltonianTerm, SiteSpec};
    use crate::observables::Obs;

    fn single(s: f64) -> SpinModel {
        SpinModel::new(1, s)
            .with_term(HamiltonianTerm::TransverseDrive { omega: 0.8, site: SiteSpec::All, rescale: None })
            .with_term(HamiltonianTerm::LongitudinalField { delta: 0.3, site: SiteSpec::All, rescale: None })
            .with_dissipator(DissipatorTerm::Decay { gamma: 0.2, site: SiteSpec::All, rescale: None })
    }

    #[test]
    fn uncoupled_pair_matches_single_site() {
        let s = 1.5;
        let one = single(s);
        let mut two = one.clone();
        two.n_sites = 2;
        let times = [0.0, 0.5, 1.0, 2.0];
        let initial = InitialState::plus_x();
        let a = exact_series(&one, &initial, &times, &Tolerances::tight()).unwrap();
        let b = exact_series(&two, &initial, &times, &Tolerances::tight()).unwrap();
        for obs in Obs::ALL {
            for site in 0..2 {
                let dev = a.series.sites[0]
                    .iter()
                    .zip(&b.series.sites[site])
                    .fold(0.0f64, |m, (x, y)| m.max((x.value(obs) - y.value(obs)).abs()));
                assert!(dev < 1e-8, "{obs:?} site {site}: {dev}");
            }
        }
        // A product state factorizes the cross-site correlator.
        let t = 3;
        let sp = b.evolution.states[t].reduced(0).expectation(&b.ops.sp);
        let got = b.raising_lowering(t, 0, 1);
        assert!((got - sp * sp.conj()).norm() < 1e-8, "{got} vs {}", sp * sp.conj());
    }

    #[test]
    fn initial_moments_match_coherent_state() {
        let s = 4.0;
        let run = exact_series(&SpinModel::new(1, s), &InitialState::down(), &[0.0], &Tolerances::default()).unwrap();
        let m = &run.series.mean[0];
        assert!((m.value(Obs::Sz) + s).abs() < 1e-12);
        assert!((m.value(Obs::VarX) - s / 2.0).abs() < 1e-12);
        assert!((m.value(Obs::SpSm)).abs() < 1e-12);
    }
}
