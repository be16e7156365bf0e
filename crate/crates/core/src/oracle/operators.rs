//! Sparse spin operators and dense density matrices in the Dicke basis.
//!
//! Basis index `i = m + S` for `m = -S..=S`; two-site states use the product
//! index `i₁ · d + i₂`. Dense matrices are row-major.

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::OracleError;
use crate::observables::{Obs, N_OBS};
use crate::sampler::rotate;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Square complex matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<Complex64>,
}

impl SparseOp {
    /// Sums duplicate entries and drops exact zeros.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, Complex64)>) -> Self {
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(trip.len());
        for (r, c, v) in trip {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(merged.len());
        let mut vals = Vec::with_capacity(merged.len());
        for (r, c, v) in merged.into_iter().filter(|t| t.2 != ZERO) {
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOp { n, row_ptr, cols, vals }
    }

    pub fn zeros(n: usize) -> Self {
        SparseOp { n, row_ptr: vec![0; n + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![ONE; n])
    }

    pub fn from_diagonal(d: &[Complex64]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |p| (r, self.cols[p], self.vals[p]))
        })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |p| (self.cols[p], self.vals[p]))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (r, c, v * s)).collect())
    }

    pub fn add(&self, other: &SparseOp) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_triplets(self.n, self.triplets().chain(other.triplets()).collect())
    }

    pub fn mul(&self, other: &SparseOp) -> Self {
        assert_eq!(self.n, other.n);
        let mut trip = Vec::new();
        for (r, k, a) in self.triplets() {
            for (c, b) in other.row(k) {
                trip.push((r, c, a * b));
            }
        }
        Self::from_triplets(self.n, trip)
    }

    /// `a ⊗ b`
    pub fn kron(a: &SparseOp, b: &SparseOp) -> Self {
        let n = a.n * b.n;
        let mut trip = Vec::with_capacity(a.nnz() * b.nnz());
        for (ra, ca, va) in a.triplets() {
            for (rb, cb, vb) in b.triplets() {
                trip.push((ra * b.n + rb, ca * b.n + cb, va * vb));
            }
        }
        Self::from_triplets(n, trip)
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.n)
            .map(|r| self.row(r).find(|&(c, _)| c == r).map_or(ZERO, |(_, v)| v))
            .collect()
    }

    /// Splits into the diagonal and the strictly off-diagonal part.
    pub fn split_diagonal(&self) -> (Vec<Complex64>, SparseOp) {
        let off = self.triplets().filter(|&(r, c, _)| r != c).collect();
        (self.diagonal(), Self::from_triplets(self.n, off))
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.n * self.n];
        for (r, c, v) in self.triplets() {
            out[r * self.n + c] += v;
        }
        out
    }

    /// `out (+)= self · rho`
    pub fn left_mul_into(&self, rho: &[Complex64], scale: Complex64, out: &mut [Complex64]) {
        let n = self.n;
        for r in 0..n {
            let dst = &mut out[r * n..(r + 1) * n];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.vals[p] * scale;
                let src = &rho[self.cols[p] * n..(self.cols[p] + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }

    /// `out (+)= rho · self`
    pub fn right_mul_into(&self, rho: &[Complex64], scale: Complex64, out: &mut [Complex64]) {
        let n = self.n;
        for r in 0..n {
            let src = &rho[r * n..(r + 1) * n];
            let dst = &mut out[r * n..(r + 1) * n];
            for (k, &x) in src.iter().enumerate() {
                if x == ZERO {
                    continue;
                }
                let xs = x * scale;
                for p in self.row_ptr[k]..self.row_ptr[k + 1] {
                    dst[self.cols[p]] += xs * self.vals[p];
                }
            }
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// `S⁺`, `S⁻`, `Sz`, `Sx`, `Sy` of a single spin `S`.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub spin_s: f64,
    pub dim: usize,
    pub sp: SparseOp,
    pub sm: SparseOp,
    pub sz: SparseOp,
    pub sx: SparseOp,
    pub sy: SparseOp,
}

impl SpinOperators {
    pub fn new(spin_s: f64) -> Self {
        let dim = (2.0 * spin_s).round() as usize + 1;
        let m_of = |i: usize| i as f64 - spin_s;
        let sp = SparseOp::from_triplets(
            dim,
            (0..dim - 1)
                .map(|i| {
                    let m = m_of(i);
                    (i + 1, i, Complex64::new((spin_s * (spin_s + 1.0) - m * (m + 1.0)).sqrt(), 0.0))
                })
                .collect(),
        );
        let sm = sp.adjoint();
        let sz = SparseOp::from_diagonal(&(0..dim).map(|i| Complex64::new(m_of(i), 0.0)).collect::<Vec<_>>());
        let sx = sp.add(&sm).scale(Complex64::new(0.5, 0.0));
        let sy = sp.add(&sm.scale(-ONE)).scale(Complex64::new(0.0, -0.5));
        SpinOperators { spin_s, dim, sp, sm, sz, sx, sy }
    }

    /// Embeds a single-site operator at `site` of a chain with local
    /// dimension `self.dim` and `n_sites` sites.
    pub fn embed(&self, op: &SparseOp, site: usize, n_sites: usize) -> SparseOp {
        let mut out = if site == 0 { op.clone() } else { SparseOp::identity(self.dim) };
        for s in 1..n_sites {
            let factor = if s == site { op.clone() } else { SparseOp::identity(self.dim) };
            out = SparseOp::kron(&out, &factor);
        }
        out
    }
}

/// Amplitudes `c_m ∝ √C(2S, S+m) u^{S+m} v^{S-m}` of the spin-coherent state
/// `(u a† + v b†)^{2S}|0⟩` with `(u, v)` the rotation of `(0, 1)`. This
/// matches the phase-space rotation applied to sampled points.
pub fn spin_coherent_state(spin_s: f64, theta: f64, phi: f64) -> Vec<Complex64> {
    let two_s = (2.0 * spin_s).round() as usize;
    let (u, v) = rotate(ZERO, ONE, theta, phi);
    let mut ln_binom = vec![0.0; two_s + 1];
    for k in 1..=two_s {
        ln_binom[k] = ln_binom[k - 1] + ((two_s - k + 1) as f64).ln() - (k as f64).ln();
    }
    (0..=two_s)
        .map(|na| {
            let nb = two_s - na;
            let mag = 0.5 * ln_binom[na];
            Complex64::new(mag.exp(), 0.0) * u.powu(na as u32) * v.powu(nb as u32)
        })
        .collect()
}

/// Dense density matrix on `n_sites` spins of local dimension `site_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub site_dim: usize,
    pub n_sites: usize,
    pub data: Vec<Complex64>,
}

/// Largest dimension for which positivity is checked by diagonalization.
pub const EIGEN_CHECK_MAX_DIM: usize = 1000;
pub const TRACE_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Integration error accumulated over many steps leaves near-pure states with
/// small negative eigenvalues, of order the tolerance times the step count.
pub const POSITIVITY_TOL: f64 = 1e-6;

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.site_dim.pow(self.n_sites as u32)
    }

    pub fn from_pure(site_dim: usize, n_sites: usize, psi: &[Complex64]) -> Self {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let n = psi.len();
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = psi[i] * psi[j].conj() / norm;
            }
        }
        DensityMatrix { site_dim, n_sites, data }
    }

    /// Product of per-site spin-coherent states at angles `angles[site]`.
    pub fn spin_coherent_product(spin_s: f64, angles: &[(f64, f64)]) -> Self {
        let mut psi = vec![ONE];
        for &(theta, phi) in angles {
            let local = spin_coherent_state(spin_s, theta, phi);
            psi = psi.iter().flat_map(|a| local.iter().map(move |b| a * b)).collect();
        }
        let d = (2.0 * spin_s).round() as usize + 1;
        Self::from_pure(d, angles.len(), &psi)
    }

    pub fn maximally_mixed(site_dim: usize, n_sites: usize) -> Self {
        let n = site_dim.pow(n_sites as u32);
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0 / n as f64, 0.0);
        }
        DensityMatrix { site_dim, n_sites, data }
    }

    pub fn trace(&self) -> Complex64 {
        let n = self.dim();
        (0..n).map(|i| self.data[i * n + i]).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                err = err.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        err
    }

    /// Whether the Hermitian part has no eigenvalue below `-tol`, decided by
    /// a Cholesky factorization of `ρ + tol·I`. Unlike an eigensolver this
    /// cannot fail to converge on nearly pure states.
    pub fn is_positive_within(&self, tol: f64) -> bool {
        let n = self.dim();
        let m = Mat::<Complex64>::from_fn(n, n, |i, j| {
            let z = 0.5 * (self.data[i * n + j] + self.data[j * n + i].conj());
            if i == j { z + tol } else { z }
        });
        m.llt(Side::Lower).is_ok()
    }

    /// Checks trace, Hermiticity and (for `dim ≤ EIGEN_CHECK_MAX_DIM`)
    /// positivity.
    pub fn check_invariants(&self, t: f64) -> Result<(), OracleError> {
        let fail = |what: String| Err(OracleError::InvariantViolated { t, what });
        let tr = self.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return fail(format!("trace {tr}"));
        }
        let h = self.hermiticity_error();
        if h > HERMITIAN_TOL {
            return fail(format!("hermiticity error {h:e}"));
        }
        if self.dim() <= EIGEN_CHECK_MAX_DIM {
            if !self.is_positive_within(POSITIVITY_TOL) {
                return fail(format!("eigenvalue below -{POSITIVITY_TOL:e}"));
            }
        }
        Ok(())
    }

    /// `Tr(ρ O)` for an operator on the full space.
    pub fn expectation(&self, op: &SparseOp) -> Complex64 {
        let n = self.dim();
        op.triplets().map(|(r, c, v)| v * self.data[c * n + r]).sum()
    }

    /// Reduced density matrix of one site.
    pub fn reduced(&self, site: usize) -> DensityMatrix {
        let d = self.site_dim;
        if self.n_sites == 1 {
            return self.clone();
        }
        assert_eq!(self.n_sites, 2, "partial trace implemented for two sites");
        let n = self.dim();
        let mut out = vec![ZERO; d * d];
        for a in 0..d {
            for b in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    let (i, j) = if site == 0 { (a * d + k, b * d + k) } else { (k * d + a, k * d + b) };
                    acc += self.data[i * n + j];
                }
                out[a * d + b] = acc;
            }
        }
        DensityMatrix { site_dim: d, n_sites: 1, data: out }
    }

    /// Exact values of every [`Obs`] at `site`.
    pub fn moments(&self, ops: &SpinOperators, site: usize) -> [f64; N_OBS] {
        let r = self.reduced(site);
        let ev = |op: &SparseOp| r.expectation(op);
        let sx = ev(&ops.sx).re;
        let sy = ev(&ops.sy).re;
        let sz = ev(&ops.sz).re;
        let sxx = ev(&ops.sx.mul(&ops.sx)).re;
        let syy = ev(&ops.sy.mul(&ops.sy)).re;
        let szz = ev(&ops.sz.mul(&ops.sz)).re;
        let sxy = ev(&ops.sx.mul(&ops.sy)).re;
        let sxz = ev(&ops.sx.mul(&ops.sz)).re;
        let syz = ev(&ops.sy.mul(&ops.sz)).re;
        let spsm = ev(&ops.sp.mul(&ops.sm)).re;
        let mut out = [0.0; N_OBS];
        for (obs, v) in [
            (Obs::Sx, sx),
            (Obs::Sy, sy),
            (Obs::Sz, sz),
            (Obs::Sxx, sxx),
            (Obs::Syy, syy),
            (Obs::Szz, szz),
            (Obs::Sxy, sxy),
            (Obs::Sxz, sxz),
            (Obs::Syz, syz),
            (Obs::VarX, sxx - sx * sx),
            (Obs::VarY, syy - sy * sy),
            (Obs::VarZ, szz - sz * sz),
            (Obs::SpSm, spsm),
        ] {
            out[obs.index()] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_diff(a: &SparseOp, b: &SparseOp) -> f64 {
        a.add(&b.scale(-ONE)).max_abs()
    }

    #[test]
    fn commutation_relations() {
        for s in [0.5, 1.0, 3.5, 10.0] {
            let o = SpinOperators::new(s);
            let comm = |a: &SparseOp, b: &SparseOp| a.mul(b).add(&b.mul(a).scale(-ONE));
            assert!(max_diff(&comm(&o.sz, &o.sp), &o.sp) < 1e-12);
            assert!(max_diff(&comm(&o.sp, &o.sm), &o.sz.scale(Complex64::new(2.0, 0.0))) < 1e-12);
            let casimir = o.sx.mul(&o.sx).add(&o.sy.mul(&o.sy)).add(&o.sz.mul(&o.sz));
            let want = SparseOp::identity(o.dim).scale(Complex64::new(s * (s + 1.0), 0.0));
            assert!(max_diff(&casimir, &want) < 1e-10);
        }
    }

    #[test]
    fn raising_matrix_elements() {
        let o = SpinOperators::new(1.5);
        // ⟨m=-1/2|S⁺|m=-3/2⟩ = √(15/4 - 3/4) = √3
        let v = o.sp.row(1).next().unwrap();
        assert_eq!(v.0, 0);
        assert!((v.1.re - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn coherent_state_mean_spin_direction() {
        let s = 10.0;
        let o = SpinOperators::new(s);
        for (theta, phi) in [(0.0, 0.0), (std::f64::consts::PI, 0.3), (std::f64::consts::FRAC_PI_2, 0.0), (1.1, 2.3)]
        {
            let rho = DensityMatrix::spin_coherent_product(s, &[(theta, phi)]);
            let m = rho.moments(&o, 0);
            let want = [-theta.sin() * phi.cos(), theta.sin() * phi.sin(), -theta.cos()];
            for (i, w) in want.iter().enumerate() {
                assert!((m[i] - s * w).abs() < 1e-10, "θ={theta} φ={phi} axis {i}: {} vs {}", m[i], s * w);
            }
            rho.check_invariants(0.0).unwrap();
        }
    }

    #[test]
    fn partial_trace_of_product_state() {
        let rho = DensityMatrix::spin_coherent_product(1.0, &[(0.4, 0.2), (2.0, -1.0)]);
        let single = DensityMatrix::spin_coherent_product(1.0, &[(2.0, -1.0)]);
        let red = rho.reduced(1);
        for (a, b) in red.data.iter().zip(&single.data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn positivity_of_pure_and_indefinite_states() {
        // A decayed coherent state: rank one with populations spanning
        // hundreds of orders of magnitude.
        let psi = spin_coherent_state(100.0, 2.9, 0.4);
        let rho = DensityMatrix::from_pure(201, 1, &psi);
        assert!(rho.is_positive_within(1e-12));
        let mut bad = DensityMatrix::maximally_mixed(3, 1);
        bad.data[0] = Complex64::new(-1e-3, 0.0);
        assert!(!bad.is_positive_within(1e-6));
        assert!(bad.is_positive_within(1e-2));
    }

    #[test]
    fn embed_and_kron() {
        let o = SpinOperators::new(1.0);
        let z1 = o.embed(&o.sz, 1, 2);
        assert_eq!(z1.n, 9);
        assert_eq!(z1.diagonal()[1].re, 0.0);
        assert_eq!(z1.diagonal()[0].re, -1.0);
        assert_eq!(z1.diagonal()[2].re, 1.0);
    }

    proptest! {
        #[test]
        fn left_and_right_products_match_dense(seed in 0u64..1000) {
            let o = SpinOperators::new(2.0);
            let n = o.dim;
            let rho: Vec<Complex64> = (0..n * n)
                .map(|i| Complex64::new(((i as u64 * 31 + seed) % 17) as f64, ((i as u64 * 7 + seed) % 5) as f64))
                .collect();
            let a = o.sx.mul(&o.sp).to_dense();
            let mut left = vec![ZERO; n * n];
            let mut right = vec![ZERO; n * n];
            o.sx.mul(&o.sp).left_mul_into(&rho, ONE, &mut left);
            o.sx.mul(&o.sp).right_mul_into(&rho, ONE, &mut right);
            for i in 0..n {
                for j in 0..n {
                    let l: Complex64 = (0..n).map(|k| a[i * n + k] * rho[k * n + j]).sum();
                    let r: Complex64 = (0..n).map(|k| rho[i * n + k] * a[k * n + j]).sum();
                    prop_assert!((l - left[i * n + j]).norm() < 1e-9);
                    prop_assert!((r - right[i * n + j]).norm() < 1e-9);
                }
            }
        }
    }
}
