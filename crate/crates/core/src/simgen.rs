//! Seeded generation of ground-truth decompositions and sampled observation
//! stacks. Every draw comes from a counter-based ChaCha12 generator with a
//! documented stream layout, so outputs are pure functions of the spec.

use crate::error::{Error, Result};
use crate::expfam::{clamp_to_domain, DistributionKind, LinkMode};
use crate::prox::thin_svd;
use crate::stack::{GroupedStacks, MatrixStack};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, Uniform};

/// Generator recorded in run manifests; streams are selected with
/// `set_stream`, so sequences are reproducible from (seed, stream, index).
pub const RNG_ALGORITHM: &str = "chacha12";

const STREAM_LOWRANK: u64 = 1;
const STREAM_SPARSE_BASE: u64 = 0x1000;
const STREAM_OBS_BASE: u64 = 0x2000;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters for one simulated instance: a `p x p` low-rank background of
/// seeded Gaussian entries, per-group uniform spikes, and `n` observations
/// split evenly across `groups`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimSpec {
    pub p: usize,
    pub kind: DistributionKind,
    pub n: usize,
    pub groups: usize,
    pub seed: u64,
    /// Mean of the Gaussian entries the background is built from.
    pub bg_mean: f64,
    /// Standard deviation of those entries.
    pub bg_sd: f64,
    /// Singular values kept when truncating the background.
    pub target_rank: usize,
    /// Non-zero cells per group's anomaly matrix.
    pub spike_count: usize,
    pub spike_lo: f64,
    pub spike_hi: f64,
    /// When set, later groups avoid cells already used by earlier groups.
    pub disjoint_supports: bool,
}

impl SimSpec {
    /// Per-distribution presets: background mean/sd and spike range.
    pub fn preset(kind: DistributionKind, p: usize, n: usize, groups: usize, seed: u64) -> Self {
        let (bg_mean, bg_sd, spike_lo, spike_hi) = match kind {
            DistributionKind::Bernoulli => (0.5, 0.15, 0.2, 0.3),
            DistributionKind::Exponential => (1.0, 0.15, 0.2, 0.3),
            DistributionKind::Poisson => (50.0, 2.0, 2.0, 5.0),
            DistributionKind::Gaussian { .. } => (0.5, 0.15, 0.2, 0.3),
        };
        SimSpec {
            p,
            kind,
            n,
            groups,
            seed,
            bg_mean,
            bg_sd,
            target_rank: p.div_ceil(5).max(1),
            spike_count: (p * p).div_ceil(20).max(1),
            spike_lo,
            spike_hi,
            disjoint_supports: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.p == 0 {
            return Err(Error::Config("p must be positive".into()));
        }
        if self.n == 0 || self.groups == 0 {
            return Err(Error::Config("n and groups must be positive".into()));
        }
        if self.n % self.groups != 0 {
            return Err(Error::Config(format!(
                "n = {} must be divisible by groups = {}",
                self.n, self.groups
            )));
        }
        if !(self.bg_sd > 0.0) {
            return Err(Error::Config("bg_sd must be positive".into()));
        }
        if self.target_rank == 0 || self.target_rank > self.p {
            return Err(Error::Config(format!(
                "target_rank {} outside 1..={}",
                self.target_rank, self.p
            )));
        }
        if self.spike_lo > self.spike_hi {
            return Err(Error::Config("spike_lo must not exceed spike_hi".into()));
        }
        let cells = self.p * self.p;
        let needed = if self.disjoint_supports {
            self.groups * self.spike_count
        } else {
            self.spike_count
        };
        if self.spike_count == 0 || needed > cells {
            return Err(Error::Config(format!(
                "cannot place {needed} spike cells in a {0}x{0} matrix",
                self.p
            )));
        }
        Ok(())
    }

    fn n_per_group(&self) -> usize {
        self.n / self.groups
    }
}

/// The simulated truth: unrepaired background and spikes, plus the repaired
/// per-group parameter matrices the observations are drawn from.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub l_true: Array2<f64>,
    pub s_true: Vec<Array2<f64>>,
    pub theta: Vec<Array2<f64>>,
    pub spike_supports: Vec<Vec<(usize, usize)>>,
}

/// Low-rank background: `p x p` i.i.d. Gaussian entries truncated to the
///`target_rank` largest singular values.
pub fn gen_lowrank(spec: &SimSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, STREAM_LOWRANK);
    let normal = Normal::new(spec.bg_mean, spec.bg_sd)
        .map_err(|e| Error::Config(format!("bad background parameters: {e}")))?;
    let mut raw = Array2::<f64>::zeros((spec.p, spec.p));
    for v in raw.iter_mut() {
        *v = normal.sample(&mut rng);
    }
    let mut svd = thin_svd(&raw)?;
    for (i, s) in svd.singular_values.iter_mut().enumerate() {
        if i >= spec.target_rank {
            *s = 0.0;
        }
    }
    Ok(svd.reconstruct())
}

fn sparse_support_with_rng(
    spec: &SimSpec,
    group_index: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<usize>> {
    let cells = spec.p * spec.p;
    let mut excluded = vec![false; cells];
    if spec.disjoint_supports {
        // Earlier groups' supports are regenerated from their own streams.
        for g in 0..group_index {
            let mut prior = stream_rng(spec.seed, STREAM_SPARSE_BASE + g as u64);
            for cell in sparse_support_with_rng(spec, g, &mut prior)? {
                excluded[cell] = true;
            }
        }
    }
    let mut candidates: Vec<usize> = (0..cells).filter(|&c| !excluded[c]).collect();
    if spec.spike_count > candidates.len() {
        return Err(Error::Config(format!(
            "group {group_index}: {} spike cells requested, {} available",
            spec.spike_count,
            candidates.len()
        )));
    }
    // Partial Fisher-Yates over the candidate cells.
    let mut support = Vec::with_capacity(spec.spike_count);
    for i in 0..spec.spike_count {
        let j = rng.random_range(i..candidates.len());
        candidates.swap(i, j);
        support.push(candidates[i]);
    }
    Ok(support)
}

fn gen_sparse_with_support(
    spec: &SimSpec,
    group_index: usize,
) -> Result<(Array2<f64>, Vec<(usize, usize)>)> {
    let mut rng = stream_rng(spec.seed, STREAM_SPARSE_BASE + group_index as u64);
    let support = sparse_support_with_rng(spec, group_index, &mut rng)?;
    let uniform = Uniform::new_inclusive(spec.spike_lo, spec.spike_hi)
        .map_err(|e| Error::Config(format!("bad spike interval: {e}")))?;
    let mut s = Array2::<f64>::zeros((spec.p, spec.p));
    let mut cells = Vec::with_capacity(support.len());
    for cell in support {
        let (j, k) = (cell / spec.p, cell % spec.p);
        s[[j, k]] = uniform.sample(&mut rng);
        cells.push((j, k));
    }
    Ok((s, cells))
}

/// Sparse anomaly matrix for one group: `spike_count` distinct cells chosen
/// uniformly, values uniform on `[spike_lo, spike_hi]`. The stream depends on
/// the group index, so groups get independent supports.
pub fn gen_sparse(spec: &SimSpec, group_index: usize) -> Result<Array2<f64>> {
    spec.validate()?;
    if group_index >= spec.groups {
        return Err(Error::Config(format!(
            "group index {group_index} outside 0..{}",
            spec.groups
        )));
    }
    Ok(gen_sparse_with_support(spec, group_index)?.0)
}

/// Pull a combined parameter value back into the distribution's domain:
/// Bernoulli values snap to the nearest of {0, 1} before the clamp, count and
/// rate parameters floor at zero.
fn repair(kind: DistributionKind, v: f64) -> f64 {
    match kind {
        DistributionKind::Bernoulli => {
            let snapped = if v < 0.0 {
                0.0
            } else if v > 1.0 {
                1.0
            } else {
                v
            };
            clamp_to_domain(kind, LinkMode::Mean, snapped)
        }
        DistributionKind::Poisson | DistributionKind::Exponential => {
            clamp_to_domain(kind, LinkMode::Mean, v.max(0.0))
        }
        DistributionKind::Gaussian { .. } => v,
    }
}

/// Background, per-group spikes, and the repaired parameter matrices
/// `Theta_g = repair(L + S_g)`. The returned `l_true` and `s_true` are the
/// unrepaired components; error metrics compare against them.
pub fn make_ground_truth(spec: &SimSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let l_true = gen_lowrank(spec)?;
    let mut s_true = Vec::with_capacity(spec.groups);
    let mut theta = Vec::with_capacity(spec.groups);
    let mut spike_supports = Vec::with_capacity(spec.groups);
    for g in 0..spec.groups {
        let (s, support) = gen_sparse_with_support(spec, g)?;
        let t = (&l_true + &s).mapv(|v| repair(spec.kind, v));
        s_true.push(s);
        theta.push(t);
        spike_supports.push(support);
    }
    Ok(GroundTruth {
        l_true,
        s_true,
        theta,
        spike_supports,
    })
}

fn sample_entry(kind: DistributionKind, theta: f64, rng: &mut ChaCha12Rng) -> Result<f64> {
    match kind {
        DistributionKind::Bernoulli => {
            let u: f64 = rng.random();
            Ok(if u < theta { 1.0 } else { 0.0 })
        }
        DistributionKind::Poisson => {
            let d = Poisson::new(theta)
                .map_err(|e| Error::Numeric(format!("poisson rate {theta}: {e}")))?;
            Ok(d.sample(rng))
        }
        DistributionKind::Exponential => {
            let d = Exp::new(theta)
                .map_err(|e| Error::Numeric(format!("exponential rate {theta}: {e}")))?;
            Ok(d.sample(rng))
        }
        DistributionKind::Gaussian { sigma2 } => {
            let d = Normal::new(theta, sigma2.sqrt())
                .map_err(|e| Error::Numeric(format!("gaussian sigma2 {sigma2}: {e}")))?;
            Ok(d.sample(rng))
        }
    }
}

/// Draw `n / groups` observation matrices per group with independent entries
/// from the group's parameter matrix. One stream per group; entries are
/// drawn matrix by matrix in row-major order.
pub fn sample_stack(truth: &GroundTruth, spec: &SimSpec) -> Result<GroupedStacks> {
    spec.validate()?;
    if truth.theta.len() != spec.groups {
        return Err(Error::Shape(format!(
            "ground truth has {} groups, spec expects {}",
            truth.theta.len(),
            spec.groups
        )));
    }
    let per_group = spec.n_per_group();
    let mut groups = Vec::with_capacity(spec.groups);
    for (g, theta) in truth.theta.iter().enumerate() {
        let mut rng = stream_rng(spec.seed, STREAM_OBS_BASE + g as u64);
        let mut matrices = Vec::with_capacity(per_group);
        for _ in 0..per_group {
            let mut m = Array2::<f64>::zeros(theta.dim());
            for (cell, &t) in m.iter_mut().zip(theta.iter()) {
                *cell = sample_entry(spec.kind, t, &mut rng)?;
            }
            // Exponential draws of exactly zero would be invalid
            // observations; nudge them to the smallest positive double.
            if matches!(spec.kind, DistributionKind::Exponential) {
                m.mapv_inplace(|v| if v == 0.0 { f64::MIN_POSITIVE } else { v });
            }
            matrices.push(m);
        }
        groups.push(MatrixStack::new(matrices, spec.kind, LinkMode::Mean)?);
    }
    GroupedStacks::new(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{effective_rank, frobenius_norm};

    fn bern_spec() -> SimSpec {
        SimSpec::preset(DistributionKind::Bernoulli, 10, 20, 2, 7)
    }

    #[test]
    fn preset_values() {
        let s = bern_spec();
        assert_eq!((s.bg_mean, s.bg_sd), (0.5, 0.15));
        assert_eq!((s.spike_lo, s.spike_hi), (0.2, 0.3));
        assert_eq!(s.target_rank, 2);
        assert_eq!(s.spike_count, 5);
        let p = SimSpec::preset(DistributionKind::Poisson, 10, 10, 1, 0);
        assert_eq!((p.bg_mean, p.bg_sd), (50.0, 2.0));
        assert_eq!((p.spike_lo, p.spike_hi), (2.0, 5.0));
        // p = 3: ceil(9 / 20) = 1 spike cell.
        let tiny = SimSpec::preset(DistributionKind::Bernoulli, 3, 4, 1, 0);
        assert_eq!(tiny.spike_count, 1);
    }

    #[test]
    fn lowrank_has_target_rank_and_is_deterministic() {
        let spec = bern_spec();
        let a = gen_lowrank(&spec).unwrap();
        let b = gen_lowrank(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(effective_rank(&a).unwrap(), 2);
    }

    #[test]
    fn tiny_bg_sd_gives_constant_rank_one_background() {
        let mut spec = bern_spec();
        spec.bg_sd = 1e-12;
        spec.target_rank = 1;
        let l = gen_lowrank(&spec).unwrap();
        let ones = Array2::from_elem((10, 10), spec.bg_mean);
        assert!(frobenius_norm(&(&l - &ones)) <= 1e-6 * 10.0);
    }

    #[test]
    fn sparse_support_count_and_independence() {
        let spec = bern_spec();
        let s0 = gen_sparse(&spec, 0).unwrap();
        let s1 = gen_sparse(&spec, 1).unwrap();
        assert_eq!(s0.iter().filter(|&&v| v != 0.0).count(), spec.spike_count);
        assert_eq!(s1.iter().filter(|&&v| v != 0.0).count(), spec.spike_count);
        assert_ne!(s0, s1);
        for v in s0.iter().filter(|&&v| v != 0.0) {
            assert!((0.2..=0.3).contains(v));
        }
    }

    #[test]
    fn degenerate_spike_interval() {
        let mut spec = bern_spec();
        spec.spike_lo = 0.25;
        spec.spike_hi = 0.25;
        let s = gen_sparse(&spec, 0).unwrap();
        for v in s.iter().filter(|&&v| v != 0.0) {
            assert_eq!(*v, 0.25);
        }
    }

    #[test]
    fn disjoint_supports_do_not_overlap() {
        let mut spec = bern_spec();
        spec.disjoint_supports = true;
        let truth = make_ground_truth(&spec).unwrap();
        let a: std::collections::HashSet<_> = truth.spike_supports[0].iter().collect();
        assert!(truth.spike_supports[1].iter().all(|c| !a.contains(c)));
    }

    #[test]
    fn repair_rules() {
        assert_eq!(repair(DistributionKind::Bernoulli, 1.08), 1.0 - 1e-6);
        assert_eq!(repair(DistributionKind::Bernoulli, -0.2), 1e-6);
        assert_eq!(repair(DistributionKind::Poisson, -3.0), 1e-6);
        assert_eq!(repair(DistributionKind::Gaussian { sigma2: 1.0 }, -3.0), -3.0);
    }

    #[test]
    fn ground_truth_thetas_live_in_domain() {
        let spec = bern_spec();
        let truth = make_ground_truth(&spec).unwrap();
        for t in &truth.theta {
            assert!(t.iter().all(|&v| (1e-6..=1.0 - 1e-6).contains(&v)));
        }
        for s in &truth.s_true {
            assert_eq!(s.iter().filter(|&&v| v != 0.0).count(), spec.spike_count);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_split_evenly() {
        let spec = bern_spec();
        let truth = make_ground_truth(&spec).unwrap();
        let a = sample_stack(&truth, &spec).unwrap();
        let b = sample_stack(&truth, &spec).unwrap();
        assert_eq!(a.group_count(), 2);
        for (x, y) in a.groups().iter().zip(b.groups()) {
            assert_eq!(x.n(), 10);
            assert_eq!(x.matrices(), y.matrices());
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = bern_spec();
        spec.n = 7; // not divisible by 2 groups
        assert!(spec.validate().is_err());
        let mut spec = bern_spec();
        spec.spike_count = 101;
        assert!(spec.validate().is_err());
    }
}
