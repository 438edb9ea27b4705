//! Observed data: stacks of matrices sharing one parameter matrix, possibly
//! split into groups with group-specific anomalies.

use crate::error::{Error, Result};
use crate::expfam::{DistributionKind, LinkMode};
use ndarray::Array2;

/// `n` observed `p x q` matrices assumed to share a single parameter matrix.
///
/// The entrywise mean is computed once on construction; the solvers read the
/// data only through it.
#[derive(Clone, Debug)]
pub struct MatrixStack {
    matrices: Vec<Array2<f64>>,
    kind: DistributionKind,
    link: LinkMode,
    mean: Array2<f64>,
}

impl MatrixStack {
    pub fn new(
        matrices: Vec<Array2<f64>>,
        kind: DistributionKind,
        link: LinkMode,
    ) -> Result<Self> {
        kind.validate()?;
        if matrices.is_empty() {
            return Err(Error::Shape("stack must contain at least one matrix".into()));
        }
        if link == LinkMode::Canonical && !matches!(kind, DistributionKind::Bernoulli) {
            return Err(Error::Config(
                "canonical link supported for bernoulli only".into(),
            ));
        }
        let (p, q) = matrices[0].dim();
        if p == 0 || q == 0 {
            return Err(Error::Shape("matrices must be non-empty".into()));
        }
        for (i, m) in matrices.iter().enumerate() {
            if m.dim() != (p, q) {
                return Err(Error::Shape(format!(
                    "matrix {i} is {:?}, expected ({p}, {q})",
                    m.dim()
                )));
            }
            for ((j, k), &v) in m.indexed_iter() {
                if !kind.valid_observation(v) {
                    return Err(Error::Domain(format!(
                        "matrix {i} entry ({j}, {k}) = {v} is not a valid {} observation",
                        kind.name()
                    )));
                }
            }
        }
        let mut mean = Array2::<f64>::zeros((p, q));
        for m in &matrices {
            mean += m;
        }
        mean /= matrices.len() as f64;
        Ok(MatrixStack {
            matrices,
            kind,
            link,
            mean,
        })
    }

    /// Same data under a different link.
    pub fn with_link(mut self, link: LinkMode) -> Result<Self> {
        if link == LinkMode::Canonical && !matches!(self.kind, DistributionKind::Bernoulli) {
            return Err(Error::Config(
                "canonical link supported for bernoulli only".into(),
            ));
        }
        self.link = link;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.mean.nrows()
    }

    pub fn q(&self) -> usize {
        self.mean.ncols()
    }

    pub fn n(&self) -> usize {
        self.matrices.len()
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn link(&self) -> LinkMode {
        self.link
    }

    pub fn matrices(&self) -> &[Array2<f64>] {
        &self.matrices
    }

    /// Entrywise mean of the stack (the sufficient-statistic summary).
    pub fn mean(&self) -> &Array2<f64> {
        &self.mean
    }
}

/// `G` stacks sharing dimensions and noise model; one anomaly matrix each.
#[derive(Clone, Debug)]
pub struct GroupedStacks {
    groups: Vec<MatrixStack>,
}

impl GroupedStacks {
    pub fn new(groups: Vec<MatrixStack>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Shape("need at least one group".into()));
        }
        let first = &groups[0];
        for (g, stack) in groups.iter().enumerate().skip(1) {
            if stack.p() != first.p() || stack.q() != first.q() {
                return Err(Error::Shape(format!(
                    "group {g} is {}x{}, expected {}x{}",
                    stack.p(),
                    stack.q(),
                    first.p(),
                    first.q()
                )));
            }
            if stack.kind() != first.kind() || stack.link() != first.link() {
                return Err(Error::Config(format!(
                    "group {g} has a different distribution or link than group 0"
                )));
            }
        }
        Ok(GroupedStacks { groups })
    }

    pub fn groups(&self) -> &[MatrixStack] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.groups[0].p()
    }

    pub fn q(&self) -> usize {
        self.groups[0].q()
    }

    pub fn kind(&self) -> DistributionKind {
        self.groups[0].kind()
    }

    pub fn link(&self) -> LinkMode {
        self.groups[0].link()
    }

    /// Group means averaged with equal weight per group. Per-cell sums run
    /// in a canonical value order so the result does not depend on how the
    /// group list is ordered.
    pub fn pooled_mean_equal(&self) -> Array2<f64> {
        self.pooled_mean_with(|_| 1.0, self.groups.len() as f64)
    }

    /// Group means weighted by group size (plain mean of all matrices).
    pub fn pooled_mean_by_size(&self) -> Array2<f64> {
        let total: usize = self.groups.iter().map(|g| g.n()).sum();
        self.pooled_mean_with(|g| g.n() as f64, total as f64)
    }

    fn pooled_mean_with(&self, weight: impl Fn(&MatrixStack) -> f64, divisor: f64) -> Array2<f64> {
        let mut cell = vec![0.0f64; self.groups.len()];
        Array2::from_shape_fn((self.p(), self.q()), |(j, k)| {
            for (slot, g) in cell.iter_mut().zip(&self.groups) {
                *slot = weight(g) * g.mean()[[j, k]];
            }
            cell.sort_by(f64::total_cmp);
            cell.iter().sum::<f64>() / divisor
        })
    }

    /// All groups concatenated into one stack.
    pub fn pooled_stack(&self) -> Result<MatrixStack> {
        let matrices: Vec<Array2<f64>> = self
            .groups
            .iter()
            .flat_map(|g| g.matrices().iter().cloned())
            .collect();
        MatrixStack::new(matrices, self.kind(), self.link())
    }
}
