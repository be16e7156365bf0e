//! Exact phase-space moments of a density matrix.
//!
//! For a distribution of ordering `k`, `E[α*^p α^q β*^r β^s]` equals the
//! expectation of the correspondingly ordered operator
//! `ord(a†^p a^q) ord(b†^r b^s)`: anti-normal for Q, symmetric for Wigner,
//! normal for P. A Dicke state `|S, m⟩` is the two-mode Fock state
//! `n_a = S + m`, `n_b = S - m`, so the expectation is a sum over matrix
//! elements of ρ. Ladder operators map Fock states to Fock states, which keeps
//! the evaluation exact without truncating the modes.

use num_complex::Complex64;

use super::operators::{DensityMatrix, ZERO};
use crate::sampler::DistributionKind;
use crate::sde::accumulator::feature;

/// `⟨n + p - q| ord(a†^p a^q) |n⟩` for one mode.
fn mode_element(p: usize, q: usize, n: usize, kind: DistributionKind) -> f64 {
    // Operators are listed left to right as in the product; `true` is a†.
    let apply = |seq: &[bool]| -> f64 {
        let mut n = n as f64;
        let mut coeff = 1.0;
        for &dagger in seq.iter().rev() {
            if dagger {
                n += 1.0;
                coeff *= n.sqrt();
            } else {
                if n < 0.5 {
                    return 0.0;
                }
                coeff *= n.sqrt();
                n -= 1.0;
            }
        }
        coeff
    };
    let len = p + q;
    match kind {
        DistributionKind::P => apply(&[vec![true; p], vec![false; q]].concat()),
        DistributionKind::Q => apply(&[vec![false; q], vec![true; p]].concat()),
        DistributionKind::Wigner => {
            let (mut sum, mut count) = (0.0, 0usize);
            for mask in 0u32..(1 << len) {
                if mask.count_ones() as usize != p {
                    continue;
                }
                let seq: Vec<bool> = (0..len).map(|b| mask & (1 << b) != 0).collect();
                sum += apply(&seq);
                count += 1;
            }
            sum / count as f64
        }
    }
}

/// `E[α*^p α^q β*^r β^s]` for the single-site state `rho`.
pub fn symbol_monomial(rho: &DensityMatrix, kind: DistributionKind, (p, q, r, s): (usize, usize, usize, usize)) -> Complex64 {
    assert_eq!(rho.n_sites, 1, "reduce to one site first");
    // The total boson number is conserved by spin operators only.
    if p + r != q + s {
        return ZERO;
    }
    let d = rho.site_dim;
    let two_s = d - 1;
    let mut acc = ZERO;
    for i in 0..d {
        let j = i as isize + p as isize - q as isize;
        if !(0..d as isize).contains(&j) {
            continue;
        }
        let j = j as usize;
        let coeff = mode_element(p, q, i, kind) * mode_element(r, s, two_s - i, kind);
        // Tr(ρ O) = Σ_i ρ_{i j} O_{j i}
        acc += rho.data[i * d + j] * coeff;
    }
    acc
}

/// Exact ensemble averages of the per-site features at `site`, in the layout
/// of [`feature`].
pub fn symbol_features(rho: &DensityMatrix, site: usize, kind: DistributionKind) -> [f64; feature::COUNT] {
    let r = rho.reduced(site);
    let e = |m| symbol_monomial(&r, kind, m);
    let i = Complex64::i();
    let na = e((1, 1, 0, 0)).re;
    let nb = e((0, 0, 1, 1)).re;
    // p = α*β and its powers.
    let p1 = e((1, 0, 0, 1));
    let p2 = e((2, 0, 0, 2));
    let pp = e((1, 1, 1, 1)).re;
    let na2 = e((2, 2, 0, 0)).re;
    let nb2 = e((0, 0, 2, 2)).re;
    // E[p (na - nb)]
    let pz = e((2, 1, 0, 1)) - e((1, 0, 1, 2));
    let mut out = [0.0; feature::COUNT];
    out[feature::NA] = na;
    out[feature::NB] = nb;
    out[feature::SX] = p1.re;
    out[feature::SY] = p1.im;
    out[feature::SXX] = 0.5 * (p2.re + pp);
    out[feature::SYY] = 0.5 * (pp - p2.re);
    out[feature::SZZ] = 0.25 * (na2 - 2.0 * pp + nb2);
    out[feature::SXY] = 0.5 * p2.im;
    out[feature::SXZ] = 0.5 * pz.re;
    out[feature::SYZ] = 0.5 * (pz * -i).re;
    out[feature::NANB] = pp;
    out
}
