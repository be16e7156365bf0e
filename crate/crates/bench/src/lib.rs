//! Shared fixtures for the throughput benchmarks.

use spinwig::{Boundary, DissipatorTerm, HamiltonianTerm, SiteSpec, SpinModel};

/// Driven collective decay on one site.
pub fn driven_decay(spin_s: f64, omega: f64) -> SpinModel {
    SpinModel::new(1, spin_s)
        .with_term(HamiltonianTerm::TransverseDrive { omega, site: SiteSpec::All, rescale: None })
        .with_dissipator(DissipatorTerm::Decay { gamma: 1.0, site: SiteSpec::All, rescale: None })
}

/// Periodic XY chain with decay on every site.
pub fn xy_chain(n_sites: usize, spin_s: f64, jx: f64, jy: f64) -> SpinModel {
    SpinModel::new(n_sites, spin_s)
        .with_boundary(Boundary::Periodic)
        .with_heisenberg_chain(jx, jy, 0.0)
        .with_dissipator(DissipatorTerm::Decay { gamma: 1.0, site: SiteSpec::All, rescale: None })
}
