//! Greedy pairwise mixture reduction (Runnalls).
//!
//! Merging components `i` and `j` into their moment-matched Gaussian costs at
//! most
//!
//! ```text
//! B_ij = ½ [(w_i + w_j) ln det P_ij - w_i ln det P_i - w_j ln det P_j]
//! ```
//!
//! in Kullback-Leibler divergence. [`reduce_joint`] repeatedly merges the
//! cheapest pair until at most `max_components` remain, applying each merge to
//! the state and the input mixture alike so they keep one weight vector.
//!
//! Under [`CostSpace::JointBlockDiagonal`] the cost is evaluated on `[x; d]`
//! with component covariance `diag(Σ, Γ)`; the merged covariance then has the
//! cross block induced by the mean spread. Only the diagonal blocks survive in
//! the stored belief. Ties go to the lexicographically smallest `(i, j)` in the
//! current ordering.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, spd_cholesky, symmetrized, JITTER};
use crate::mixture::{Gaussian, MixtureBelief};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostSpace {
    StateOnly,
    #[default]
    JointBlockDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionConfig {
    pub max_components: usize,
    pub cost_space: CostSpace,
}

pub const DEFAULT_MAX_COMPONENTS: usize = 50;

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            max_components: DEFAULT_MAX_COMPONENTS,
            cost_space: CostSpace::default(),
        }
    }
}

impl ReductionConfig {
    pub fn new(max_components: usize, cost_space: CostSpace) -> Result<Self> {
        if max_components == 0 {
            return Err(Error::Argument("max_components must be at least 1".into()));
        }
        Ok(Self {
            max_components,
            cost_space,
        })
    }
}

/// Mixing fractions of a merge. Two underflowed weights split evenly.
fn fractions(wi: f64, wj: f64) -> (f64, f64) {
    let w = wi + wj;
    if w > 0.0 {
        (wi / w, wj / w)
    } else {
        (0.5, 0.5)
    }
}

/// Moment-matched merge of two weighted Gaussians.
pub fn merge_pair(wi: f64, gi: &Gaussian, wj: f64, gj: &Gaussian) -> (f64, Gaussian) {
    let w = wi + wj;
    let (a, b) = fractions(wi, wj);
    let mean = &gi.mean * a + &gj.mean * b;
    let di = &gi.mean - &mean;
    let dj = &gj.mean - &mean;
    let cov = (&gi.cov + &di * di.transpose()) * a + (&gj.cov + &dj * dj.transpose()) * b;
    (w, Gaussian::new(mean, symmetrized(cov)))
}

/// Runnalls bound for merging `(wi, Pi)` and `(wj, Pj)` into `merged`.
///
/// Singular covariances get the same one-shot diagonal jitter as
/// [`spd_cholesky`]. Roundoff below zero is clamped.
pub fn runnalls_cost(wi: f64, pi: &Matrix, wj: f64, pj: &Matrix, merged: &Matrix) -> Result<f64> {
    let ld = |m: &Matrix| spd_cholesky(m, "merge covariance").map(|c| chol_logdet(&c));
    let b = 0.5 * ((wi + wj) * ld(merged)? - wi * ld(pi)? - wj * ld(pj)?);
    Ok(b.max(0.0))
}

/// `ln det` of a row-major `dim × dim` buffer by an in-place LDL'
/// factorization of its lower triangle, or `None` on a nonpositive pivot.
fn packed_logdet(buf: &mut [f64], dim: usize) -> Option<f64> {
    let mut det = 1.0;
    let mut logdet = 0.0;
    for j in 0..dim {
        let mut d = buf[j * dim + j];
        for k in 0..j {
            let l = buf[j * dim + k];
            d -= l * l * buf[k * dim + k];
        }
        if !(d > 0.0) {
            return None;
        }
        buf[j * dim + j] = d;
        det *= d;
        // fold into the log before the running product leaves the normal range
        if !(1e-150..=1e150).contains(&det) {
            logdet += libm::log(det);
            det = 1.0;
        }
        for i in (j + 1)..dim {
            let mut s = buf[i * dim + j];
            for k in 0..j {
                s -= buf[i * dim + k] * buf[j * dim + k] * buf[k * dim + k];
            }
            buf[i * dim + j] = s / d;
        }
    }
    Some(logdet + libm::log(det))
}

fn logdet_with_jitter(buf: &mut [f64], scratch: &mut [f64], dim: usize) -> Result<f64> {
    scratch[..dim * dim].copy_from_slice(&buf[..dim * dim]);
    if let Some(v) = packed_logdet(scratch, dim) {
        return Ok(v);
    }
    let trace: f64 = (0..dim).map(|i| buf[i * dim + i]).sum();
    let bump = JITTER * (trace.abs() / dim.max(1) as f64).max(f64::MIN_POSITIVE);
    for i in 0..dim {
        buf[i * dim + i] += bump;
    }
    packed_logdet(buf, dim).ok_or(Error::Conditioning {
        what: "merge covariance",
    })
}

/// Flat `[x; d]` view of the mixture with block-diagonal covariances.
///
/// Costs are evaluated on the leading `cost_dim` coordinates: all of them
/// for the joint criterion, the state block otherwise.
struct Bank {
    n: usize,
    dim: usize,
    cost_dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    covs: Vec<f64>,
    /// `ln det` of each component's covariance in the cost space.
    logdet: Vec<f64>,
    buf: Vec<f64>,
    scratch: Vec<f64>,
    spread: Vec<f64>,
    /// Coordinate-major copies of the cost-space means and lower-triangle
    /// covariance entries, for row-wise evaluation when `cost_dim <= 3`.
    soa_means: Vec<f64>,
    soa_covs: Vec<f64>,
    dets: Vec<f64>,
    diags: Vec<f64>,
}

impl Bank {
    fn new(belief: &MixtureBelief, space: CostSpace) -> Result<Self> {
        let n = belief.states[0].mean.len();
        let m = if belief.has_inputs() {
            belief.inputs[0].mean.len()
        } else {
            0
        };
        let dim = n + m;
        let cost_dim = if space == CostSpace::JointBlockDiagonal {
            dim
        } else {
            n
        };
        let len = belief.len();
        let mut means = vec![0.0; len * dim];
        let mut covs = vec![0.0; len * dim * dim];
        for k in 0..len {
            let (mk, ck) = (&mut means[k * dim..], &mut covs[k * dim * dim..]);
            let s = &belief.states[k];
            for r in 0..n {
                mk[r] = s.mean[r];
                for c in 0..n {
                    ck[r * dim + c] = s.cov[(r, c)];
                }
            }
            if m > 0 {
                let d = &belief.inputs[k];
                for r in 0..m {
                    mk[n + r] = d.mean[r];
                    for c in 0..m {
                        ck[(n + r) * dim + n + c] = d.cov[(r, c)];
                    }
                }
            }
        }
        let mut bank = Self {
            n,
            dim,
            cost_dim,
            weights: belief.weights.clone(),
            means,
            covs,
            logdet: vec![0.0; len],
            buf: vec![0.0; cost_dim * cost_dim],
            scratch: vec![0.0; cost_dim * cost_dim],
            spread: vec![0.0; cost_dim],
            soa_means: Vec::new(),
            soa_covs: Vec::new(),
            dets: vec![0.0; len],
            diags: vec![0.0; len],
        };
        if cost_dim <= 3 {
            bank.soa_means = vec![0.0; cost_dim * len];
            bank.soa_covs = vec![0.0; cost_dim * (cost_dim + 1) / 2 * len];
        }
        for i in 0..len {
            bank.logdet[i] = bank.component_logdet(i)?;
            bank.sync_soa(i);
        }
        Ok(bank)
    }

    fn component_logdet(&mut self, i: usize) -> Result<f64> {
        let (dim, cd) = (self.dim, self.cost_dim);
        let ci = &self.covs[i * dim * dim..];
        for r in 0..cd {
            for c in 0..=r {
                self.buf[r * cd + c] = ci[r * dim + c];
            }
        }
        logdet_with_jitter(&mut self.buf, &mut self.scratch, cd)
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn sync_soa(&mut self, i: usize) {
        if self.soa_means.is_empty() {
            return;
        }
        let (len, dim, cd) = (self.len(), self.dim, self.cost_dim);
        let mut e = 0;
        for r in 0..cd {
            self.soa_means[r * len + i] = self.means[i * dim + r];
            for c in 0..=r {
                self.soa_covs[e * len + i] = self.covs[i * dim * dim + r * dim + c];
                e += 1;
            }
        }
    }

    /// `B(i, j)` for every `j` in `lo..hi` with `live[j]`, written to
    /// `out[j - lo]`; other entries are left alone.
    ///
    /// The result is symmetric in `(i, j)` bit for bit.
    fn row_costs(
        &mut self,
        i: usize,
        lo: usize,
        hi: usize,
        live: &[bool],
        out: &mut [f64],
    ) -> Result<()> {
        match self.cost_dim {
            1 => self.row_dets::<1, 1>(i, lo, hi),
            2 => self.row_dets::<2, 3>(i, lo, hi),
            3 => self.row_dets3(i, lo, hi),
            _ => {
                for j in (lo..hi).filter(|&j| live[j]) {
                    out[j - lo] = self.pair_cost(i, j)?;
                }
                return Ok(());
            }
        }
        let wi = self.weights[i];
        let wli = wi * self.logdet[i];
        for j in (lo..hi).filter(|&j| live[j]) {
            let (det, diag) = (self.dets[j], self.diags[j]);
            let wj = self.weights[j];
            // a determinant far below the diagonal product has lost digits to
            // cancellation; the factorization handles it
            let ld = if det.is_normal() && det > 1e-8 * diag {
                libm::log(det)
            } else {
                let (a, b) = fractions(wi, wj);
                self.merged_logdet(i, j, a, b, a * b)?
            };
            out[j - lo] = self.finish_cost(wi + wj, ld, wli + wj * self.logdet[j])?;
        }
        Ok(())
    }

    /// Determinants and diagonal products of the merged covariances of `i`
    /// with `lo..hi`, into `dets` and `diags`.
    fn row_dets<const D: usize, const T: usize>(&mut self, i: usize, lo: usize, hi: usize) {
        let len = self.len();
        let wi = self.weights[i];
        let mut mi = [0.0; D];
        let mut ci = [0.0; T];
        for r in 0..D {
            mi[r] = self.soa_means[r * len + i];
        }
        for e in 0..T {
            ci[e] = self.soa_covs[e * len + i];
        }
        for j in lo..hi {
            let wj = self.weights[j];
            let (a, b) = fractions(wi, wj);
            let ab = a * b;
            let mut s = [0.0; D];
            for r in 0..D {
                s[r] = mi[r] - self.soa_means[r * len + j];
            }
            let mut p = [0.0; T];
            let mut e = 0;
            for r in 0..D {
                for c in 0..=r {
                    p[e] = a * ci[e] + b * self.soa_covs[e * len + j] + ab * s[r] * s[c];
                    e += 1;
                }
            }
            let (det, diag) = match D {
                1 => (p[0], p[0]),
                2 => (p[0] * p[2] - p[1] * p[1], p[0] * p[2]),
                _ => {
                    let (p00, p10, p11, p20, p21, p22) = (p[0], p[1], p[2], p[3], p[4], p[5]);
                    (
                        p00 * (p11 * p22 - p21 * p21) - p10 * (p10 * p22 - p21 * p20)
                            + p20 * (p10 * p21 - p11 * p20),
                        p00 * p11 * p22,
                    )
                }
            };
            self.dets[j] = det;
            self.diags[j] = diag;
        }
    }

    /// [`Self::row_dets`] for the three-dimensional case, written over equal
    /// length slices so the loop vectorizes.
    fn row_dets3(&mut self, i: usize, lo: usize, hi: usize) {
        let len = self.len();
        let wi = self.weights[i];
        let col = |v: &[f64], r: usize| v[r * len + i];
        let (mi0, mi1, mi2) = (
            col(&self.soa_means, 0),
            col(&self.soa_means, 1),
            col(&self.soa_means, 2),
        );
        let ci: [f64; 6] = core::array::from_fn(|e| col(&self.soa_covs, e));
        let span = hi - lo;
        let (m0, m1, m2) = (
            segment(&self.soa_means, 0, len, lo, hi),
            segment(&self.soa_means, 1, len, lo, hi),
            segment(&self.soa_means, 2, len, lo, hi),
        );
        let c: [&[f64]; 6] = core::array::from_fn(|e| segment(&self.soa_covs, e, len, lo, hi));
        let wj = &self.weights[lo..hi];
        let dets = &mut self.dets[lo..hi];
        let diags = &mut self.diags[lo..hi];
        for k in 0..span {
            let (a, b) = fractions(wi, wj[k]);
            let ab = a * b;
            let (s0, s1, s2) = (mi0 - m0[k], mi1 - m1[k], mi2 - m2[k]);
            let p00 = a * ci[0] + b * c[0][k] + ab * s0 * s0;
            let p10 = a * ci[1] + b * c[1][k] + ab * s1 * s0;
            let p11 = a * ci[2] + b * c[2][k] + ab * s1 * s1;
            let p20 = a * ci[3] + b * c[3][k] + ab * s2 * s0;
            let p21 = a * ci[4] + b * c[4][k] + ab * s2 * s1;
            let p22 = a * ci[5] + b * c[5][k] + ab * s2 * s2;
            dets[k] = p00 * (p11 * p22 - p21 * p21) - p10 * (p10 * p22 - p21 * p20)
                + p20 * (p10 * p21 - p11 * p20);
            diags[k] = p00 * p11 * p22;
        }
    }

    fn finish_cost(&self, w: f64, merged_logdet: f64, parts: f64) -> Result<f64> {
        let cost = 0.5 * (w * merged_logdet - parts);
        if cost.is_nan() {
            return Err(Error::Conditioning { what: "merge cost" });
        }
        Ok(cost.max(0.0))
    }

    fn pair_cost(&mut self, i: usize, j: usize) -> Result<f64> {
        let (wi, wj) = (self.weights[i], self.weights[j]);
        let w = wi + wj;
        let (a, b) = fractions(wi, wj);
        let ld = self.merged_logdet(i, j, a, b, a * b)?;
        self.finish_cost(w, ld, wi * self.logdet[i] + wj * self.logdet[j])
    }

    fn merged_logdet(&mut self, i: usize, j: usize, a: f64, b: f64, ab: f64) -> Result<f64> {
        let (dim, cd) = (self.dim, self.cost_dim);
        let (mi, mj) = (&self.means[i * dim..], &self.means[j * dim..]);
        for k in 0..cd {
            self.spread[k] = mi[k] - mj[k];
        }
        let (ci, cj) = (&self.covs[i * dim * dim..], &self.covs[j * dim * dim..]);
        for r in 0..cd {
            let dr = ab * self.spread[r];
            for c in 0..=r {
                let k = r * dim + c;
                self.buf[r * cd + c] = a * ci[k] + b * cj[k] + dr * self.spread[c];
            }
        }
        logdet_with_jitter(&mut self.buf, &mut self.scratch, cd)
    }

    /// Merges `j` into `i`, keeping only the state and input blocks.
    fn merge(&mut self, i: usize, j: usize) -> Result<()> {
        let (n, dim) = (self.n, self.dim);
        let (wi, wj) = (self.weights[i], self.weights[j]);
        let w = wi + wj;
        let (a, b) = fractions(wi, wj);
        let ab = a * b;
        for r in 0..dim {
            let dr = self.means[i * dim + r] - self.means[j * dim + r];
            for c in 0..dim {
                if (r < n) != (c < n) {
                    continue;
                }
                let dc = self.means[i * dim + c] - self.means[j * dim + c];
                let k = r * dim + c;
                self.covs[i * dim * dim + k] = a * self.covs[i * dim * dim + k]
                    + b * self.covs[j * dim * dim + k]
                    + ab * dr * dc;
            }
        }
        for r in 0..dim {
            self.means[i * dim + r] = a * self.means[i * dim + r] + b * self.means[j * dim + r];
        }
        self.weights[i] = w;
        self.logdet[i] = self.component_logdet(i)?;
        self.sync_soa(i);
        Ok(())
    }

    fn unpack(&self, k: usize, offset: usize, size: usize) -> Gaussian {
        let dim = self.dim;
        let mk = &self.means[k * dim..];
        let ck = &self.covs[k * dim * dim..];
        Gaussian::new(
            crate::Vector::from_fn(size, |r, _| mk[offset + r]),
            symmetrized(Matrix::from_fn(size, size, |r, c| {
                ck[(offset + r) * dim + offset + c]
            })),
        )
    }
}

fn segment(v: &[f64], r: usize, len: usize, lo: usize, hi: usize) -> &[f64] {
    &v[r * len + lo..r * len + hi]
}

/// Reduces `belief` to at most `cfg.max_components` components.
pub fn reduce_joint(belief: &MixtureBelief, cfg: &ReductionConfig) -> Result<MixtureBelief> {
    let len = belief.len();
    if len == 0 {
        return Err(Error::Stage("cannot reduce an empty mixture"));
    }
    if cfg.max_components == 0 {
        return Err(Error::Argument("max_components must be at least 1".into()));
    }
    if len <= cfg.max_components {
        return Ok(belief.clone());
    }
    let mut bank = Bank::new(belief, cfg.cost_space)?;

    // upper triangle of the cost matrix plus each row's cheapest partner
    let mut cost = vec![f64::INFINITY; len * len];
    let mut active = vec![true; len];
    let mut best = vec![(f64::INFINITY, usize::MAX); len];
    for i in 0..len {
        bank.row_costs(
            i,
            i + 1,
            len,
            &active,
            &mut cost[i * len + i + 1..(i + 1) * len],
        )?;
        for j in (i + 1)..len {
            if cost[i * len + j] < best[i].0 {
                best[i] = (cost[i * len + j], j);
            }
        }
    }
    let mut row = vec![0.0; len];

    let rescan = |row: usize, cost: &[f64], active: &[bool]| {
        let mut b = (f64::INFINITY, usize::MAX);
        for j in (row + 1)..len {
            if active[j] && cost[row * len + j] < b.0 {
                b = (cost[row * len + j], j);
            }
        }
        b
    };

    let mut remaining = len;
    while remaining > cfg.max_components {
        let mut pick = usize::MAX;
        let mut pick_cost = f64::INFINITY;
        for i in 0..len {
            if active[i] && best[i].1 != usize::MAX && (pick == usize::MAX || best[i].0 < pick_cost)
            {
                pick = i;
                pick_cost = best[i].0;
            }
        }
        let (i, j) = (pick, best[pick].1);
        bank.merge(i, j)?;
        active[j] = false;
        remaining -= 1;

        active[i] = false;
        bank.row_costs(i, 0, len, &active, &mut row)?;
        active[i] = true;
        for k in 0..len {
            if !active[k] || k == i {
                continue;
            }
            let (lo, hi) = if k < i { (k, i) } else { (i, k) };
            cost[lo * len + hi] = row[k];
        }
        for k in 0..len {
            if !active[k] {
                continue;
            }
            if k == i || best[k].1 == i || best[k].1 == j {
                best[k] = rescan(k, &cost, &active);
            } else if k < i {
                let c = cost[k * len + i];
                if c < best[k].0 || (c == best[k].0 && i < best[k].1) {
                    best[k] = (c, i);
                }
            }
        }
    }

    let (n, m) = (bank.n, bank.dim - bank.n);
    let mut out = MixtureBelief {
        weights: Vec::with_capacity(remaining),
        states: Vec::with_capacity(remaining),
        inputs: Vec::with_capacity(if m > 0 { remaining } else { 0 }),
        time_index: belief.time_index,
        stage: belief.stage,
    };
    for k in (0..len).filter(|&k| active[k]) {
        out.weights.push(bank.weights[k]);
        out.states.push(bank.unpack(k, 0, n));
        if m > 0 {
            out.inputs.push(bank.unpack(k, n, m));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{block_diag, stack};
    use crate::mixture::{mixture_covariance, mixture_mean, Stage};
    use crate::Vector;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(mean: f64, var: f64) -> Gaussian {
        Gaussian::new(
            Vector::from_element(1, mean),
            Matrix::from_element(1, 1, var),
        )
    }

    fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
        let a = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + Matrix::identity(dim, dim) * 0.05
    }

    fn random_belief(rng: &mut ChaCha8Rng, len: usize, n: usize, m: usize) -> MixtureBelief {
        let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let states = (0..len)
            .map(|_| {
                Gaussian::new(
                    Vector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0)),
                    random_spd(rng, n),
                )
            })
            .collect();
        let inputs = (0..len)
            .map(|_| {
                Gaussian::new(
                    Vector::from_fn(m, |_, _| rng.gen_range(-5.0..5.0)),
                    random_spd(rng, m),
                )
            })
            .collect();
        MixtureBelief {
            weights: raw.iter().map(|w| w / total).collect(),
            states,
            inputs,
            time_index: 3,
            stage: Stage::Filtered,
        }
    }

    /// Recomputes every pair cost before every merge.
    fn reduce_brute_force(belief: &MixtureBelief, cfg: &ReductionConfig) -> MixtureBelief {
        let mut b = belief.clone();
        let joint = cfg.cost_space == CostSpace::JointBlockDiagonal && b.has_inputs();
        let as_joint = |b: &MixtureBelief, k: usize| {
            if joint {
                Gaussian::new(
                    stack(&b.states[k].mean, &b.inputs[k].mean),
                    block_diag(&b.states[k].cov, &b.inputs[k].cov),
                )
            } else {
                b.states[k].clone()
            }
        };
        while b.len() > cfg.max_components {
            let mut pick = (f64::INFINITY, 0, 0);
            for i in 0..b.len() {
                for j in (i + 1)..b.len() {
                    let (gi, gj) = (as_joint(&b, i), as_joint(&b, j));
                    let (_, merged) = merge_pair(b.weights[i], &gi, b.weights[j], &gj);
                    let c =
                        runnalls_cost(b.weights[i], &gi.cov, b.weights[j], &gj.cov, &merged.cov)
                            .unwrap();
                    if c < pick.0 {
                        pick = (c, i, j);
                    }
                }
            }
            let (_, i, j) = pick;
            let (w, s) = merge_pair(b.weights[i], &b.states[i], b.weights[j], &b.states[j]);
            b.states[i] = s;
            if b.has_inputs() {
                let (_, d) = merge_pair(b.weights[i], &b.inputs[i], b.weights[j], &b.inputs[j]);
                b.inputs[i] = d;
                b.inputs.remove(j);
            }
            b.weights[i] = w;
            b.weights.remove(j);
            b.states.remove(j);
        }
        b
    }

    #[test]
    fn merge_of_equals_is_identity() {
        let g = Gaussian::new(
            Vector::from_row_slice(&[1.0, -2.0]),
            Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        );
        let (w, merged) = merge_pair(0.5, &g, 0.5, &g);
        assert_eq!(w, 1.0);
        assert_relative_eq!(merged.mean, g.mean, epsilon = 1e-15);
        assert_relative_eq!(merged.cov, g.cov, epsilon = 1e-15);
        assert_eq!(
            runnalls_cost(0.5, &g.cov, 0.5, &g.cov, &merged.cov).unwrap(),
            0.0
        );
    }

    #[test]
    fn two_point_merge() {
        let (w, merged) = merge_pair(0.5, &scalar(-1.0, 0.0), 0.5, &scalar(1.0, 0.0));
        assert_eq!(w, 1.0);
        assert_eq!(merged.mean[0], 0.0);
        assert_eq!(merged.cov[(0, 0)], 1.0);
    }

    #[test]
    fn merge_matches_pair_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_belief(&mut rng, 2, 3, 1);
        let (w, merged) = merge_pair(b.weights[0], &b.states[0], b.weights[1], &b.states[1]);
        let ws = [b.weights[0] / w, b.weights[1] / w];
        assert_relative_eq!(merged.mean, mixture_mean(&ws, &b.states), epsilon = 1e-12);
        assert_relative_eq!(
            merged.cov,
            mixture_covariance(&ws, &b.states),
            epsilon = 1e-12
        );
    }

    #[test]
    fn hand_evaluated_cost() {
        let one = Matrix::from_element(1, 1, 1.0);
        let (_, merged) = merge_pair(0.5, &scalar(0.0, 1.0), 0.5, &scalar(2.0, 1.0));
        assert_relative_eq!(merged.cov[(0, 0)], 2.0, epsilon = 1e-15);
        let c = runnalls_cost(0.5, &one, 0.5, &one, &merged.cov).unwrap();
        assert_relative_eq!(c, 2.0_f64.ln() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn packed_logdet_agrees_with_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in 1..6 {
            let p = random_spd(&mut rng, dim);
            let mut buf: Vec<f64> = p.transpose().iter().copied().collect();
            let ours = packed_logdet(&mut buf, dim).unwrap();
            assert_relative_eq!(ours, p.determinant().ln(), epsilon = 1e-12);
        }
        let mut zero = vec![0.0; 4];
        assert!(packed_logdet(&mut zero, 2).is_none());
    }

    #[test]
    fn small_belief_is_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_belief(&mut rng, 4, 2, 1);
        assert_eq!(
            reduce_joint(&b, &ReductionConfig::new(4, CostSpace::default()).unwrap()).unwrap(),
            b
        );
    }

    #[test]
    fn duplicates_collapse() {
        let g = scalar(3.0, 0.7);
        let b = MixtureBelief {
            weights: vec![0.5, 0.5],
            states: vec![g.clone(), g.clone()],
            inputs: vec![g.clone(), g.clone()],
            time_index: 2,
            stage: Stage::Filtered,
        };
        let r = reduce_joint(&b, &ReductionConfig::new(1, CostSpace::default()).unwrap()).unwrap();
        assert_eq!(r.len(), 1);
        assert_relative_eq!(r.weights[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(r.states[0].cov, g.cov, epsilon = 1e-15);
        assert_relative_eq!(r.inputs[0].mean, g.mean, epsilon = 1e-15);
    }

    #[test]
    fn underflowed_weights_merge() {
        let b = MixtureBelief {
            weights: vec![1.0, 0.0, 0.0, 1e-310],
            states: vec![
                scalar(0.0, 1.0),
                scalar(4.0, 0.5),
                scalar(-6.0, 0.2),
                scalar(9.0, 0.3),
            ],
            inputs: vec![
                scalar(1.0, 2.0),
                scalar(-3.0, 1.0),
                scalar(5.0, 0.4),
                scalar(2.0, 0.1),
            ],
            time_index: 2,
            stage: Stage::Filtered,
        };
        for space in [CostSpace::JointBlockDiagonal, CostSpace::StateOnly] {
            let r = reduce_joint(&b, &ReductionConfig::new(2, space).unwrap()).unwrap();
            assert_eq!(r.len(), 2);
            assert_relative_eq!(r.state_mean(), b.state_mean(), epsilon = 1e-12);
            r.check_invariants().unwrap();
        }
    }

    #[test]
    fn twelve_to_four_preserves_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = random_belief(&mut rng, 12, 2, 1);
        let r = reduce_joint(&b, &ReductionConfig::new(4, CostSpace::default()).unwrap()).unwrap();
        assert_eq!(r.len(), 4);
        assert_relative_eq!(r.state_mean(), b.state_mean(), epsilon = 1e-10);
        assert_relative_eq!(
            r.input_mean().unwrap(),
            b.input_mean().unwrap(),
            epsilon = 1e-10
        );
        // merging never discards spread: the overall covariance is preserved too
        assert_relative_eq!(r.state_covariance(), b.state_covariance(), epsilon = 1e-9);
        r.check_invariants().unwrap();
    }

    #[test]
    fn greedy_choice_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for space in [CostSpace::StateOnly, CostSpace::JointBlockDiagonal] {
            for trial in 0..20 {
                let b = random_belief(&mut rng, 9 + trial % 7, 2, 1);
                let cfg = ReductionConfig::new(1 + trial % 5, space).unwrap();
                let fast = reduce_joint(&b, &cfg).unwrap();
                let slow = reduce_brute_force(&b, &cfg);
                assert_eq!(fast.len(), slow.len());
                for k in 0..fast.len() {
                    assert_relative_eq!(fast.weights[k], slow.weights[k], epsilon = 1e-12);
                    assert_relative_eq!(fast.states[k].mean, slow.states[k].mean, epsilon = 1e-10);
                    assert_relative_eq!(fast.inputs[k].cov, slow.inputs[k].cov, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn ties_go_to_the_first_pair() {
        // three identical components: every pair costs 0, so (0, 1) merges first
        let b = MixtureBelief {
            weights: vec![0.2, 0.3, 0.5],
            states: vec![scalar(1.0, 1.0), scalar(1.0, 1.0), scalar(1.0, 1.0)],
            inputs: Vec::new(),
            time_index: 1,
            stage: Stage::Filtered,
        };
        let r = reduce_joint(&b, &ReductionConfig::new(2, CostSpace::StateOnly).unwrap()).unwrap();
        assert_relative_eq!(r.weights[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.weights[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn singular_components_are_jittered() {
        let b = MixtureBelief {
            weights: vec![0.25; 4],
            states: (0..4).map(|k| scalar(k as f64, 0.0)).collect(),
            inputs: Vec::new(),
            time_index: 1,
            stage: Stage::Filtered,
        };
        let r = reduce_joint(&b, &ReductionConfig::new(2, CostSpace::StateOnly).unwrap()).unwrap();
        assert_eq!(r.len(), 2);
        assert_relative_eq!(r.state_mean()[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(ReductionConfig::new(0, CostSpace::StateOnly).is_err());
    }
}
