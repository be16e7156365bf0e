//! Initial phase-space points for the Schwinger-boson amplitudes.
//!
//! Each spin is represented by two bosonic modes `a`, `b` with
//! `S^+ = a† b` and `S^z = (a† a - b† b) / 2`. The fully polarized state
//! `|S, -S⟩` is the two-mode Fock state `|0⟩_a |2S⟩_b`; other spin-coherent
//! states are reached by the SU(2) rotation in [`rotate`].

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::model::SpinModel;

/// Phase-space representation, parameterized by the ordering index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistributionKind {
    /// Husimi `Q` function, `k = -1`, anti-normal ordering.
    #[serde(rename = "q")]
    Q,
    /// Wigner function, `k = 0`, symmetric ordering.
    #[serde(rename = "wigner")]
    Wigner,
    /// Glauber–Sudarshan `P` function, `k = +1`, normal ordering.
    #[serde(rename = "p")]
    P,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 3] =
        [DistributionKind::Q, DistributionKind::Wigner, DistributionKind::P];

    pub fn k(self) -> i8 {
        match self {
            DistributionKind::Q => -1,
            DistributionKind::Wigner => 0,
            DistributionKind::P => 1,
        }
    }

    pub fn kf(self) -> f64 {
        self.k() as f64
    }

    pub fn from_k(k: i8) -> Option<Self> {
        match k {
            -1 => Some(DistributionKind::Q),
            0 => Some(DistributionKind::Wigner),
            1 => Some(DistributionKind::P),
            _ => None,
        }
    }

    /// Per-mode offset `⟨|α|²⟩ - ⟨a†a⟩ = (1 - k) / 2`.
    pub fn mode_offset(self) -> f64 {
        (1.0 - self.kf()) / 2.0
    }
}

/// Amplitudes `(α₁, β₁, α₂, β₂, …)` of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub amplitudes: Vec<Complex64>,
}

impl PhasePoint {
    pub fn zeros(n_sites: usize) -> Self {
        PhasePoint { amplitudes: vec![Complex64::new(0.0, 0.0); 2 * n_sites] }
    }

    pub fn n_sites(&self) -> usize {
        self.amplitudes.len() / 2
    }

    pub fn alpha(&self, site: usize) -> Complex64 {
        self.amplitudes[2 * site]
    }

    pub fn beta(&self, site: usize) -> Complex64 {
        self.amplitudes[2 * site + 1]
    }

    pub fn site(&self, site: usize) -> (Complex64, Complex64) {
        (self.alpha(site), self.beta(site))
    }

    pub fn set_site(&mut self, site: usize, alpha: Complex64, beta: Complex64) {
        self.amplitudes[2 * site] = alpha;
        self.amplitudes[2 * site + 1] = beta;
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Target spin-coherent state. With the rotation convention of [`rotate`],
/// the state produced from `|S, -S⟩` has mean spin direction
/// `(-sin θ cos φ, sin θ sin φ, -cos θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
    /// Optional per-site `[θ, φ]` pairs overriding the common angles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_site: Option<Vec<[f64; 2]>>,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::down()
    }
}

impl InitialState {
    /// All spins pointing down, `|S, -S⟩` on every site.
    pub fn down() -> Self {
        InitialState { theta: 0.0, phi: 0.0, per_site: None }
    }

    pub fn angles(theta: f64, phi: f64) -> Self {
        InitialState { theta, phi, per_site: None }
    }

    /// Fully polarized along `+z`.
    pub fn up() -> Self {
        InitialState::angles(std::f64::consts::PI, 0.0)
    }

    /// Coherent state along `+x`.
    pub fn plus_x() -> Self {
        InitialState::angles(std::f64::consts::FRAC_PI_2, std::f64::consts::PI)
    }

    pub fn site_angles(&self, site: usize) -> (f64, f64) {
        match &self.per_site {
            Some(list) => (list[site][0], list[site][1]),
            None => (self.theta, self.phi),
        }
    }

    pub fn check(&self, n_sites: usize) -> Result<(), EngineError> {
        if !(self.theta.is_finite() && self.phi.is_finite()) {
            return Err(EngineError::InvalidInitialState("non-finite angle".into()));
        }
        if let Some(list) = &self.per_site {
            if list.len() != n_sites {
                return Err(EngineError::InvalidInitialState(format!(
                    "per_site has {} entries for {} sites",
                    list.len(),
                    n_sites
                )));
            }
            if list.iter().flatten().any(|a| !a.is_finite()) {
                return Err(EngineError::InvalidInitialState("non-finite angle".into()));
            }
        }
        Ok(())
    }
}

/// Independent random stream for trajectory `index`: a ChaCha8 generator keyed
/// by `master_seed` with the trajectory index as its stream id.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(sigma * re, sigma * im)
}

/// Draws `(α, β)` for the state `|0⟩_a |2S⟩_b` (spin pointing down).
///
/// * `P`: the Fock state is replaced by a coherent state, a delta at `(0, √2S)`.
/// * Wigner: same replacement, Gaussian with quadrature variance `1/4`.
/// * `Q`: exact; `α` is a vacuum Q function and `|β|²` is `Gamma(2S + 1, 1)`
///   with uniform phase.
pub fn sample_down_state<R: Rng + ?Sized>(
    kind: DistributionKind,
    two_s: u32,
    rng: &mut R,
) -> (Complex64, Complex64) {
    let amp = (two_s as f64).sqrt();
    match kind {
        DistributionKind::P => (Complex64::new(0.0, 0.0), Complex64::new(amp, 0.0)),
        DistributionKind::Wigner => {
            let alpha = complex_gaussian(rng, 0.5);
            let beta = Complex64::new(amp, 0.0) + complex_gaussian(rng, 0.5);
            (alpha, beta)
        }
        DistributionKind::Q => {
            let alpha = complex_gaussian(rng, std::f64::consts::FRAC_1_SQRT_2);
            let shape = two_s as f64 + 1.0;
            let gamma = Gamma::new(shape, 1.0).expect("shape is positive");
            let intensity: f64 = gamma.sample(rng);
            let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            (alpha, Complex64::from_polar(intensity.sqrt(), phase))
        }
    }
}

/// SU(2) rotation of the Schwinger amplitudes:
/// `α̃ = e^{iφ}(cos(θ/2) α - sin(θ/2) β)`, `β̃ = sin(θ/2) α + cos(θ/2) β`.
pub fn rotate(alpha: Complex64, beta: Complex64, theta: f64, phi: f64) -> (Complex64, Complex64) {
    let (s, c) = (theta / 2.0).sin_cos();
    let a = Complex64::from_polar(1.0, phi) * (alpha * c - beta * s);
    let b = alpha * s + beta * c;
    (a, b)
}

/// Samples one initial point for every site using `rng`.
pub fn sample_initial_point<R: Rng + ?Sized>(
    model: &SpinModel,
    kind: DistributionKind,
    initial: &InitialState,
    rng: &mut R,
) -> PhasePoint {
    let two_s = model.two_s();
    let mut point = PhasePoint::zeros(model.n_sites);
    for site in 0..model.n_sites {
        let (a, b) = sample_down_state(kind, two_s, rng);
        let (theta, phi) = initial.site_angles(site);
        let (a, b) = rotate(a, b, theta, phi);
        point.set_site(site, a, b);
    }
    point
}

/// Samples `n_traj` independent initial points; point `j` depends only on
/// `(master_seed, j)`.
pub fn sample_initial_ensemble(
    model: &SpinModel,
    kind: DistributionKind,
    initial: &InitialState,
    n_traj: usize,
    master_seed: u64,
) -> Result<Vec<PhasePoint>, EngineError> {
    let model = model.validate()?;
    initial.check(model.n_sites)?;
    Ok((0..n_traj)
        .map(|j| {
            let mut rng = trajectory_rng(master_seed, j as u64);
            sample_initial_point(&model, kind, initial, &mut rng)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mean_std(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    fn draws(kind: DistributionKind, two_s: u32, n: usize) -> Vec<(Complex64, Complex64)> {
        let mut rng = trajectory_rng(11, 0);
        (0..n).map(|_| sample_down_state(kind, two_s, &mut rng)).collect()
    }

    #[test]
    fn p_down_state_is_deterministic() {
        let (a, b) = sample_down_state(DistributionKind::P, 100, &mut trajectory_rng(0, 0));
        assert_eq!(a, Complex64::new(0.0, 0.0));
        assert_eq!(b, Complex64::new(10.0, 0.0));
    }

    #[test]
    fn wigner_down_state_moments() {
        let d = draws(DistributionKind::Wigner, 100, 100_000);
        let (mb, eb) = mean_std(&d.iter().map(|p| p.1.re).collect::<Vec<_>>());
        assert!((mb - 10.0).abs() < 3.0 * eb, "{mb} ± {eb}");
        let (na, ea) = mean_std(&d.iter().map(|p| p.0.norm_sqr()).collect::<Vec<_>>());
        assert!((na - 0.5).abs() < 3.0 * ea, "{na} ± {ea}");
        let (vr, er) = mean_std(&d.iter().map(|p| p.0.re * p.0.re).collect::<Vec<_>>());
        assert!((vr - 0.25).abs() < 3.0 * er);
    }

    #[test]
    fn q_down_state_moments() {
        let d = draws(DistributionKind::Q, 100, 100_000);
        let (nb, eb) = mean_std(&d.iter().map(|p| p.1.norm_sqr()).collect::<Vec<_>>());
        assert!((nb - 101.0).abs() < 3.0 * eb, "{nb} ± {eb}");
        let (na, ea) = mean_std(&d.iter().map(|p| p.0.norm_sqr()).collect::<Vec<_>>());
        assert!((na - 1.0).abs() < 3.0 * ea, "{na} ± {ea}");
        // Gamma(2S+1) variance is 2S+1.
        let (vb, evb) =
            mean_std(&d.iter().map(|p| (p.1.norm_sqr() - 101.0).powi(2)).collect::<Vec<_>>());
        assert!((vb - 101.0).abs() < 3.0 * evb, "{vb} ± {evb}");
    }

    #[test]
    fn sz_of_down_state_for_every_kind() {
        for kind in DistributionKind::ALL {
            let d = draws(kind, 20, 20_000);
            let sz: Vec<f64> = d.iter().map(|p| 0.5 * (p.0.norm_sqr() - p.1.norm_sqr())).collect();
            let (m, e) = mean_std(&sz);
            let tol = if kind == DistributionKind::P { 1e-12 } else { 3.0 * e };
            assert!((m + 10.0).abs() <= tol, "{kind:?}: {m} ± {e}");
        }
    }

    #[test]
    fn rotation_examples() {
        let b0 = Complex64::new(200f64.sqrt(), 0.0);
        let z = Complex64::new(0.0, 0.0);
        assert_eq!(rotate(z, b0, 0.0, 0.0), (z, b0));
        let (a, b) = rotate(z, b0, PI, 0.7);
        assert!((a + b0 * Complex64::from_polar(1.0, 0.7)).norm() < 1e-12);
        assert!(b.norm() < 1e-12);
        let (a, b) = rotate(z, b0, PI / 2.0, 0.0);
        assert!((a - Complex64::new(-10.0, 0.0)).norm() < 1e-12);
        assert!((b - Complex64::new(10.0, 0.0)).norm() < 1e-12);
        // ⟨S^x⟩ = Re(α* β) = -S for θ = π/2, φ = 0.
        assert!(((a.conj() * b).re + 100.0).abs() < 1e-9);
    }

    #[test]
    fn ensemble_is_deterministic_and_empty_when_asked() {
        let m = SpinModel::new(2, 5.0);
        let init = InitialState::angles(0.4, 1.1);
        let e = sample_initial_ensemble(&m, DistributionKind::Q, &init, 0, 3).unwrap();
        assert!(e.is_empty());
        let e1 = sample_initial_ensemble(&m, DistributionKind::Q, &init, 8, 3).unwrap();
        let e2 = sample_initial_ensemble(&m, DistributionKind::Q, &init, 8, 3).unwrap();
        assert_eq!(e1, e2);
        assert_ne!(e1[0], e1[1]);
    }

    #[test]
    fn flipped_wigner_ensemble_points_up() {
        let m = SpinModel::new(1, 100.0);
        let e = sample_initial_ensemble(&m, DistributionKind::Wigner, &InitialState::up(), 10_000, 5)
            .unwrap();
        let sz: Vec<f64> = e
            .iter()
            .map(|p| 0.5 * (p.alpha(0).norm_sqr() - p.beta(0).norm_sqr()) / 100.0)
            .collect();
        let (mean, err) = mean_std(&sz);
        assert!((mean - 1.0).abs() < 3.0 * err, "{mean} ± {err}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rotation_preserves_norm(
                ar in -20.0f64..20.0, ai in -20.0f64..20.0,
                br in -20.0f64..20.0, bi in -20.0f64..20.0,
                theta in -7.0f64..7.0, phi in -7.0f64..7.0,
            ) {
                let (a, b) = (Complex64::new(ar, ai), Complex64::new(br, bi));
                let (ra, rb) = rotate(a, b, theta, phi);
                let before = a.norm_sqr() + b.norm_sqr();
                let after = ra.norm_sqr() + rb.norm_sqr();
                prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
            }
        }
    }
}
