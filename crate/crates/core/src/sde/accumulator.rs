//! Streaming ensemble statistics of phase-space moments.
//!
//! Every trajectory contributes a feature vector per save time. Features are
//! raw phase-space symbols; ordering corrections are applied later by
//! [`crate::observables`]. Statistics are kept per block of consecutive
//! trajectories so that nonlinear estimators get block-jackknife errors.

use std::ops::Range;

use num_complex::Complex64;

use crate::sampler::DistributionKind;

/// Indices of the per-site phase-space features.
pub mod feature {
    /// `|α|²`
    pub const NA: usize = 0;
    /// `|β|²`
    pub const NB: usize = 1;
    /// `Re(α*β)`
    pub const SX: usize = 2;
    /// `Im(α*β)`
    pub const SY: usize = 3;
    pub const SXX: usize = 4;
    pub const SYY: usize = 5;
    /// `((|α|² - |β|²)/2)²`
    pub const SZZ: usize = 6;
    pub const SXY: usize = 7;
    pub const SXZ: usize = 8;
    pub const SYZ: usize = 9;
    /// `|α|²|β|²`
    pub const NANB: usize = 10;
    pub const COUNT: usize = 11;
}

/// Fills `out[..feature::COUNT]` with the symbols of one site.
#[inline]
pub fn site_features(alpha: Complex64, beta: Complex64, out: &mut [f64]) {
    let p = alpha.conj() * beta;
    let na = alpha.norm_sqr();
    let nb = beta.norm_sqr();
    let sz = 0.5 * (na - nb);
    out[feature::NA] = na;
    out[feature::NB] = nb;
    out[feature::SX] = p.re;
    out[feature::SY] = p.im;
    out[feature::SXX] = p.re * p.re;
    out[feature::SYY] = p.im * p.im;
    out[feature::SZZ] = sz * sz;
    out[feature::SXY] = p.re * p.im;
    out[feature::SXZ] = p.re * sz;
    out[feature::SYZ] = p.im * sz;
    out[feature::NANB] = na * nb;
}

/// Position of each feature group inside the flat feature vector:
/// `n_sites` per-site groups, one site-averaged group, then the
/// site-averaged cross-site products `Re(p_n p*_{n+s})` for `s = 1..=max_sep`
/// with `p = α*β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub n_sites: usize,
    pub periodic: bool,
    pub max_sep: usize,
}

impl FeatureLayout {
    pub fn new(n_sites: usize, periodic: bool, with_correlations: bool) -> Self {
        let max_sep = if with_correlations && n_sites > 1 { n_sites / 2 } else { 0 };
        FeatureLayout { n_sites, periodic, max_sep }
    }

    pub fn len(&self) -> usize {
        (self.n_sites + 1) * feature::COUNT + self.max_sep
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn site(&self, site: usize, f: usize) -> usize {
        site * feature::COUNT + f
    }

    pub fn mean(&self, f: usize) -> usize {
        self.n_sites * feature::COUNT + f
    }

    pub fn corr(&self, sep: usize) -> usize {
        debug_assert!(sep >= 1 && sep <= self.max_sep);
        (self.n_sites + 1) * feature::COUNT + sep - 1
    }

    /// Number of site pairs `(n, n + s)` averaged at separation `s`.
    pub fn pair_count(&self, sep: usize) -> usize {
        if self.periodic {
            self.n_sites
        } else {
            self.n_sites - sep
        }
    }

    /// Writes all features of `x` into `out`.
    pub fn fill(&self, x: &[Complex64], out: &mut [f64]) {
        let n = self.n_sites;
        let (sites, rest) = out.split_at_mut(n * feature::COUNT);
        for (site, chunk) in sites.chunks_exact_mut(feature::COUNT).enumerate() {
            site_features(x[2 * site], x[2 * site + 1], chunk);
        }
        let (mean, corr) = rest.split_at_mut(feature::COUNT);
        mean.fill(0.0);
        for chunk in sites.chunks_exact(feature::COUNT) {
            for (m, v) in mean.iter_mut().zip(chunk) {
                *m += v;
            }
        }
        let inv = 1.0 / n as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        for (s, c) in (1..=self.max_sep).zip(corr.iter_mut()) {
            let pairs = self.pair_count(s);
            let mut acc = 0.0;
            for i in 0..pairs {
                let j = (i + s) % n;
                let pi = x[2 * i].conj() * x[2 * i + 1];
                let pj = x[2 * j].conj() * x[2 * j + 1];
                acc += pi.re * pj.re + pi.im * pj.im;
            }
            *c = acc / pairs as f64;
        }
    }
}

/// Welford mean and centered second moment of a fixed-length vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Welford {
    pub fn new(len: usize) -> Self {
        Welford { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Sample variance of entry `i`.
    pub fn variance(&self, i: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2[i] / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean of entry `i`.
    pub fn stderr(&self, i: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance(i) / self.count as f64).sqrt()
        }
    }
}

/// Statistics of all features at every save time, split into trajectory
/// blocks. Entry `(t, f)` lives at `t * layout.len() + f`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    pub kind: DistributionKind,
    pub spin_s: f64,
    pub layout: FeatureLayout,
    pub times: Vec<f64>,
    pub blocks: Vec<Welford>,
    pub total: Welford,
    /// Per-trajectory time averages over the configured window.
    pub window: Option<WindowStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub start: f64,
    pub end: f64,
    pub n_samples: usize,
    pub blocks: Vec<Welford>,
    pub total: Welford,
}

/// Moment estimates at one save time: feature means plus the leave-one-block-out
/// means needed for jackknife errors.
#[derive(Debug, Clone, Copy)]
pub struct MomentSlice<'a> {
    pub layout: FeatureLayout,
    pub kind: DistributionKind,
    pub spin_s: f64,
    offset: usize,
    total: &'a Welford,
    blocks: &'a [Welford],
}

impl<'a> MomentSlice<'a> {
    pub fn n_traj(&self) -> u64 {
        self.total.count
    }

    pub fn means(&self) -> &'a [f64] {
        &self.total.mean[self.offset..self.offset + self.layout.len()]
    }

    pub fn mean(&self, f: usize) -> f64 {
        self.total.mean[self.offset + f]
    }

    pub fn stderr(&self, f: usize) -> f64 {
        self.total.stderr(self.offset + f)
    }

    /// Value and block-jackknife standard error of `estimator`, which maps a
    /// feature-mean vector to a scalar.
    pub fn jackknife<F>(&self, estimator: F) -> (f64, f64)
    where
        F: Fn(&[f64]) -> f64,
    {
        self.jackknife_in(0..self.layout.len(), estimator)
    }

    /// As [`jackknife`](Self::jackknife), but `estimator` sees only the
    /// features in `range`.
    pub fn jackknife_in<F>(&self, range: Range<usize>, estimator: F) -> (f64, f64)
    where
        F: Fn(&[f64]) -> f64,
    {
        let lo = self.offset + range.start;
        let hi = self.offset + range.end;
        let full = estimator(&self.total.mean[lo..hi]);
        let used: Vec<&Welford> = self.blocks.iter().filter(|b| b.count > 0).collect();
        let n_blocks = used.len();
        if n_blocks < 2 {
            return (full, 0.0);
        }
        let n = self.total.count as f64;
        let mut buf = vec![0.0; hi - lo];
        let mut thetas = Vec::with_capacity(n_blocks);
        for b in used {
            let nb = b.count as f64;
            for (slot, i) in buf.iter_mut().zip(lo..hi) {
                *slot = (n * self.total.mean[i] - nb * b.mean[i]) / (n - nb);
            }
            thetas.push(estimator(&buf));
        }
        let m = n_blocks as f64;
        let avg = thetas.iter().sum::<f64>() / m;
        let var = thetas.iter().map(|t| (t - avg).powi(2)).sum::<f64>() * (m - 1.0) / m;
        (full, var.sqrt())
    }
}

impl EnsembleAccumulator {
    pub fn new(
        kind: DistributionKind,
        spin_s: f64,
        layout: FeatureLayout,
        times: Vec<f64>,
        n_blocks: usize,
        window: Option<(f64, f64, usize)>,
    ) -> Self {
        let len = layout.len() * times.len();
        let window = window.map(|(start, end, n_samples)| WindowStats {
            start,
            end,
            n_samples,
            blocks: vec![Welford::new(layout.len()); n_blocks],
            total: Welford::new(layout.len()),
        });
        EnsembleAccumulator {
            kind,
            spin_s,
            layout,
            times,
            blocks: vec![Welford::new(len); n_blocks],
            total: Welford::new(len),
            window,
        }
    }

    pub fn n_traj(&self) -> u64 {
        self.total.count
    }

    /// Moments at save-time index `t`.
    pub fn at(&self, t: usize) -> MomentSlice<'_> {
        MomentSlice {
            layout: self.layout,
            kind: self.kind,
            spin_s: self.spin_s,
            offset: t * self.layout.len(),
            total: &self.total,
            blocks: &self.blocks,
        }
    }

    /// Moments of the per-trajectory window averages, if a window was set.
    pub fn window_slice(&self) -> Option<MomentSlice<'_>> {
        self.window.as_ref().map(|w| MomentSlice {
            layout: self.layout,
            kind: self.kind,
            spin_s: self.spin_s,
            offset: 0,
            total: &w.total,
            blocks: &w.blocks,
        })
    }

    /// Adds the whole-trajectory feature record `series` (all save times,
    /// concatenated) and its window average to block `block`.
    pub fn push(&mut self, block: usize, series: &[f64], window_avg: Option<&[f64]>) {
        self.blocks[block].push(series);
        if let (Some(w), Some(avg)) = (self.window.as_mut(), window_avg) {
            w.blocks[block].push(avg);
        }
    }

    /// Recomputes the totals by merging the blocks in index order.
    pub fn finalize(&mut self) {
        let mut total = Welford::new(self.total.mean.len());
        for b in &self.blocks {
            total.merge(b);
        }
        self.total = total;
        if let Some(w) = self.window.as_mut() {
            let mut total = Welford::new(w.total.mean.len());
            for b in &w.blocks {
                total.merge(b);
            }
            w.total = total;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn welford_matches_two_pass() {
        let data = [1.0, 4.0, -2.5, 7.25, 0.5];
        let mut w = Welford::new(1);
        for x in data {
            w.push(&[x]);
        }
        let mean = data.iter().sum::<f64>() / 5.0;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((w.mean[0] - mean).abs() < 1e-14);
        assert!((w.variance(0) - var).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn merge_equals_sequential(xs in prop::collection::vec(-1e3f64..1e3, 2..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let mut all = Welford::new(1);
            let (mut a, mut b) = (Welford::new(1), Welford::new(1));
            for (i, &x) in xs.iter().enumerate() {
                all.push(&[x]);
                if i < cut { a.push(&[x]) } else { b.push(&[x]) }
            }
            a.merge(&b);
            prop_assert_eq!(a.count, all.count);
            prop_assert!((a.mean[0] - all.mean[0]).abs() < 1e-9);
            prop_assert!((a.m2[0] - all.m2[0]).abs() < 1e-6 * (1.0 + all.m2[0]));
        }
    }

    #[test]
    fn jackknife_of_mean_matches_block_standard_error() {
        let layout = FeatureLayout::new(1, false, false);
        let mut acc = EnsembleAccumulator::new(DistributionKind::Wigner, 1.0, layout, vec![0.0], 4, None);
        let len = layout.len();
        for j in 0..40 {
            let mut v = vec![0.0; len];
            v[0] = (j as f64 * 0.37).sin();
            acc.push(j / 10, &v, None);
        }
        acc.finalize();
        let slice = acc.at(0);
        let (val, err) = slice.jackknife(|m| m[0]);
        assert!((val - slice.mean(0)).abs() < 1e-14);
        let block_means: Vec<f64> = acc.blocks.iter().map(|b| b.mean[0]).collect();
        let bm = block_means.iter().sum::<f64>() / 4.0;
        let want = (block_means.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (4.0 * 3.0)).sqrt();
        assert!((err - want).abs() < 1e-12);
    }

    #[test]
    fn layout_correlations_for_periodic_ring() {
        let layout = FeatureLayout::new(4, true, true);
        assert_eq!(layout.max_sep, 2);
        let one = Complex64::new(1.0, 0.0);
        let x = vec![one; 8];
        let mut out = vec![0.0; layout.len()];
        layout.fill(&x, &mut out);
        assert_eq!(out[layout.corr(1)], 1.0);
        assert_eq!(out[layout.corr(2)], 1.0);
        assert_eq!(out[layout.mean(feature::SX)], 1.0);
        assert_eq!(out[layout.site(3, feature::NANB)], 1.0);
    }

    #[test]
    fn site_features_of_x_polarized_point() {
        let mut out = [0.0; feature::COUNT];
        let r = 3.0f64.sqrt();
        site_features(Complex64::new(r, 0.0), Complex64::new(r, 0.0), &mut out);
        assert!((out[feature::SX] - 3.0).abs() < 1e-14);
        assert_eq!(out[feature::SZZ], 0.0);
        assert!((out[feature::NANB] - 9.0).abs() < 1e-12);
    }
}
