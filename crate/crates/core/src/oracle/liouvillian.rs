//! Lindblad generator `L ρ = -i[H, ρ] + Σ γ (2 c ρ c† - c†c ρ - ρ c†c)`.
//!
//! The generator is split as `L = D + N`. `D` is diagonal in the
//! matrix-element basis: `D_mn = u_m + conj(u_n) - Σ_i γ_i (m_i - n_i)²`
//! with `u_m = -i H_mm - Σ γ (c†c)_mm` and the last sum over dephasing
//! channels. `N` holds the off-diagonal Hamiltonian and the jump terms.

use num_complex::Complex64;

use super::operators::{DensityMatrix, SparseOp, SpinOperators, ZERO};
use crate::error::OracleError;
use crate::model::{ResolvedTerm, SpinModel};

/// Largest total Hilbert-space dimension handled by the exact solver.
pub const MAX_DIM: usize = 10_000;
/// Largest number of sites.
pub const MAX_SITES: usize = 2;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub struct JumpChannel {
    /// Rate `γ` in `γ D[c]`.
    pub rate: f64,
    pub op: SparseOp,
}

#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub n_sites: usize,
    pub site_dim: usize,
    pub dim: usize,
    pub ops: SpinOperators,
    /// Full Hamiltonian.
    pub hamiltonian: SparseOp,
    /// Off-diagonal part of the Hamiltonian.
    pub h_off: SparseOp,
    /// `u_m` of the diagonal generator.
    pub u: Vec<Complex64>,
    /// `(site, γ)` of every dephasing channel.
    pub dephasing: Vec<(usize, f64)>,
    /// Decay and gain channels.
    pub jumps: Vec<JumpChannel>,
}

impl Liouvillian {
    pub fn from_model(model: &SpinModel) -> Result<Self, OracleError> {
        let model = model.validate()?;
        let n_sites = model.n_sites;
        let site_dim = model.site_dim();
        if n_sites > MAX_SITES {
            return Err(OracleError::Unsupported(format!(
                "exact solver handles at most {MAX_SITES} sites, model has {n_sites}"
            )));
        }
        let dim = site_dim.pow(n_sites as u32);
        if dim > MAX_DIM {
            return Err(OracleError::DimensionLimit { dim, limit: MAX_DIM });
        }
        let ops = SpinOperators::new(model.spin_s);
        let local = |op: &SparseOp, site: usize| ops.embed(op, site, n_sites);
        let real = |x: f64| Complex64::new(x, 0.0);
        let mut h = SparseOp::zeros(dim);
        let mut jumps = Vec::new();
        let mut dephasing = Vec::new();
        for term in model.resolve()? {
            match term {
                ResolvedTerm::Drive { omega, site } => h = h.add(&local(&ops.sx, site).scale(real(omega))),
                ResolvedTerm::Field { delta, site } => h = h.add(&local(&ops.sz, site).scale(real(delta))),
                ResolvedTerm::Twist { g, site } => {
                    h = h.add(&local(&ops.sx.mul(&ops.sx), site).scale(real(g)));
                }
                ResolvedTerm::Bond { jx, jy, jz, i, j } => {
                    for (op, c) in [(&ops.sx, jx), (&ops.sy, jy), (&ops.sz, jz)] {
                        h = h.add(&local(op, i).mul(&local(op, j)).scale(real(c)));
                    }
                }
                ResolvedTerm::Decay { gamma, site } | ResolvedTerm::Gain { gamma, site } => {
                    if gamma > 0.0 {
                        let c = if matches!(term, ResolvedTerm::Decay { .. }) { &ops.sm } else { &ops.sp };
                        let op = local(c, site);
                        jumps.push(JumpChannel { rate: gamma, op });
                    }
                }
                ResolvedTerm::Dephasing { gamma, site } => {
                    if gamma > 0.0 {
                        dephasing.push((site, gamma));
                    }
                }
            }
        }
        let (h_diag, h_off) = h.split_diagonal();
        let mut u: Vec<Complex64> = h_diag.iter().map(|e| -I * e.re).collect();
        for ch in &jumps {
            // c†c is diagonal for the ladder operators used here.
            let cdc = ch.op.adjoint().mul(&ch.op).diagonal();
            for (um, n) in u.iter_mut().zip(&cdc) {
                *um -= ch.rate * n.re;
            }
        }
        Ok(Liouvillian { n_sites, site_dim, dim, ops, hamiltonian: h, h_off, u, dephasing, jumps })
    }

    /// Local index of `site` inside the product index `m`.
    #[inline]
    pub fn site_index(&self, m: usize, site: usize) -> usize {
        if self.n_sites == 1 {
            m
        } else if site == 0 {
            m / self.site_dim
        } else {
            m % self.site_dim
        }
    }

    /// `D_mn`
    pub fn diag_rate(&self, m: usize, n: usize) -> Complex64 {
        let mut r = self.u[m] + self.u[n].conj();
        for &(site, g) in &self.dephasing {
            let d = self.site_index(m, site) as f64 - self.site_index(n, site) as f64;
            r -= g * d * d;
        }
        r
    }

    /// `out = N ρ` (off-diagonal Hamiltonian and jump sandwiches).
    ///
    /// `N` maps Hermitian matrices to Hermitian matrices, so only the upper
    /// triangle is computed, one output row at a time, and then mirrored.
    /// `rho` must be Hermitian.
    pub fn apply_offdiag(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        let h = &self.h_off;
        for (r, row_o) in out.chunks_exact_mut(d).enumerate() {
            let row_o = &mut row_o[r..];
            // +i ρ H, gathered: (ρH)_rn = Σ_k ρ_rk conj(H_nk) for Hermitian H.
            gather_conj_rows(h, r, &rho[r * d..(r + 1) * d], I, row_o, false);
            // -i H ρ
            for p in h.row_ptr[r]..h.row_ptr[r + 1] {
                let a = -I * h.vals[p];
                let src = &rho[h.cols[p] * d + r..(h.cols[p] + 1) * d];
                for (o, s) in row_o.iter_mut().zip(src) {
                    *o += a * s;
                }
            }
            // 2γ c ρ c†: (cρc†)_rn = Σ_a c_ra Σ_b conj(c_nb) ρ_ab
            for ch in &self.jumps {
                let c = &ch.op;
                for pa in c.row_ptr[r]..c.row_ptr[r + 1] {
                    let ca = 2.0 * ch.rate * c.vals[pa];
                    gather_conj_rows(c, r, &rho[c.cols[pa] * d..(c.cols[pa] + 1) * d], ca, row_o, true);
                }
            }
        }
        mirror_upper(out, d);
    }

    /// `out = L ρ`
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        self.apply_offdiag(rho, out);
        let d = self.dim;
        for m in 0..d {
            for n in 0..d {
                out[m * d + n] += self.diag_rate(m, n) * rho[m * d + n];
            }
        }
    }

    /// `dρ/dt` for a density matrix.
    pub fn rhs(&self, rho: &DensityMatrix) -> DensityMatrix {
        let mut out = vec![ZERO; rho.data.len()];
        self.apply(&rho.data, &mut out);
        DensityMatrix { site_dim: rho.site_dim, n_sites: rho.n_sites, data: out }
    }

    /// Triplets `(row, col, value)` of the vectorized generator acting on
    /// `vec(ρ)_{m·d + n} = ρ_mn`.
    pub fn superoperator_triplets(&self) -> Vec<(usize, usize, Complex64)> {
        let d = self.dim;
        let mut trip = Vec::new();
        for m in 0..d {
            for n in 0..d {
                trip.push((m * d + n, m * d + n, self.diag_rate(m, n)));
            }
        }
        for (r, k, h) in self.h_off.triplets() {
            for n in 0..d {
                // -i H ρ
                trip.push((r * d + n, k * d + n, -I * h));
                // +i ρ H: (ρH)_{m,k'} gains ρ_{m,r} H_{r,k'}
                trip.push((n * d + k, n * d + r, I * h));
            }
        }
        for ch in &self.jumps {
            let g2 = Complex64::new(2.0 * ch.rate, 0.0);
            for (m, k, c1) in ch.op.triplets() {
                for (n, l, c2) in ch.op.triplets() {
                    trip.push((m * d + n, k * d + l, g2 * c1 * c2.conj()));
                }
            }
        }
        trip
    }

    /// Frobenius norm of `L ρ`.
    pub fn residual(&self, rho: &DensityMatrix) -> f64 {
        self.rhs(rho).data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `out[n - first] (+)= scale · Σ_b conj(op_nb) src[b]` for rows `n ≥ first` of `op`.
#[inline]
fn gather_conj_rows(op: &SparseOp, first: usize, src: &[Complex64], scale: Complex64, out: &mut [Complex64], add: bool) {
    let (rp, cols, vals) = (&op.row_ptr[first..], &op.cols[..], &op.vals[..]);
    for (i, o) in out.iter_mut().enumerate() {
        let (lo, hi) = (rp[i], rp[i + 1]);
        let mut acc = ZERO;
        for (&b, v) in cols[lo..hi].iter().zip(&vals[lo..hi]) {
            acc += v.conj() * src[b];
        }
        if add {
            *o += scale * acc;
        } else {
            *o = scale * acc;
        }
    }
}

/// Fills the strict lower triangle with the conjugate of the upper one.
pub(crate) fn mirror_upper(a: &mut [Complex64], d: usize) {
    // Blocked so both the rows read and the columns written stay in cache.
    const B: usize = 32;
    for rb in (0..d).step_by(B) {
        for cb in (rb..d).step_by(B) {
            for r in rb..(rb + B).min(d) {
                for c in cb.max(r + 1)..(cb + B).min(d) {
                    a[c * d + r] = a[r * d + c].conj();
                }
            }
        }
    }
}

/// Returns `dρ/dt` for `model` at `rho`.
pub fn liouvillian_rhs(model: &SpinModel, rho: &DensityMatrix) -> Result<DensityMatrix, OracleError> {
    Ok(Liouvillian::from_model(model)?.rhs(rho))
}
