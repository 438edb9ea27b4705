//! Python bindings: the solvers, proximal operators, simulation generator,
//! and tuning loop, with matrices exchanged as NumPy arrays.
//!
//! Observation stacks enter as arrays of shape `(n, p, q)`; decomposition
//! results come back as objects holding `(p, q)` arrays.

use erpca::baseline::{BaselineConfig, SigmaMode};
use erpca::expfam::{DistributionKind, LinkMode};
use erpca::multi::{default_multi_config, fit_multi};
use erpca::simgen::{make_ground_truth, sample_stack, SimSpec, RNG_ALGORITHM};
use erpca::solver::{default_config, SolverConfig};
use erpca::stack::{GroupedStacks, MatrixStack};
use erpca::tune::TuneSpec;
use ndarray::{Array2, Array3, Axis};
use numpy::{IntoPyArray, PyArray2, PyArray3, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn to_py_err(e: erpca::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_kind(kind: &str, sigma2: Option<f64>) -> PyResult<DistributionKind> {
    let parsed = match kind {
        "poisson" => DistributionKind::Poisson,
        "bernoulli" => DistributionKind::Bernoulli,
        "exponential" => DistributionKind::Exponential,
        "gaussian" => DistributionKind::Gaussian {
            sigma2: sigma2
                .ok_or_else(|| PyValueError::new_err("kind='gaussian' requires sigma2"))?,
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown kind '{other}' (expected poisson|bernoulli|exponential|gaussian)"
            )))
        }
    };
    if sigma2.is_some() && !matches!(parsed, DistributionKind::Gaussian { .. }) {
        return Err(PyValueError::new_err("sigma2 is only valid for kind='gaussian'"));
    }
    Ok(parsed)
}

fn parse_link(link: &str) -> PyResult<LinkMode> {
    match link {
        "mean" => Ok(LinkMode::Mean),
        "canonical" => Ok(LinkMode::Canonical),
        other => Err(PyValueError::new_err(format!(
            "unknown link '{other}' (expected mean|canonical)"
        ))),
    }
}

fn stack_from_array(
    data: &PyReadonlyArray3<f64>,
    kind: DistributionKind,
    link: LinkMode,
) -> PyResult<MatrixStack> {
    let view = data.as_array();
    let matrices: Vec<Array2<f64>> = view
        .axis_iter(Axis(0))
        .map(|m| m.to_owned())
        .collect();
    MatrixStack::new(matrices, kind, link).map_err(to_py_err)
}

fn stack_to_array3(stack: &MatrixStack) -> Array3<f64> {
    let (n, p, q) = (stack.n(), stack.p(), stack.q());
    let mut out = Array3::<f64>::zeros((n, p, q));
    for (i, m) in stack.matrices().iter().enumerate() {
        out.index_axis_mut(Axis(0), i).assign(m);
    }
    out
}

fn override_config(
    mut config: SolverConfig,
    alpha: Option<f64>,
    beta: Option<f64>,
    mu: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    init_rank: Option<usize>,
) -> SolverConfig {
    if let Some(v) = alpha {
        config.alpha = v;
    }
    if let Some(v) = beta {
        config.beta = v;
    }
    if let Some(v) = mu {
        config.mu = v;
    }
    if let Some(v) = tol {
        config.tol = v;
    }
    if let Some(v) = max_iter {
        config.max_iter = v;
    }
    if init_rank.is_some() {
        config.init_rank = init_rank;
    }
    config
}

/// Recovered decomposition with solver diagnostics.
#[pyclass(name = "Decomposition")]
struct PyDecomposition {
    inner: erpca::Decomposition,
}

#[pymethods]
impl PyDecomposition {
    #[getter]
    fn l<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        self.inner.l.clone().into_pyarray(py)
    }

    #[getter]
    fn s<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        self.inner.s.clone().into_pyarray(py)
    }

    #[getter]
    fn theta<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        self.inner.theta.clone().into_pyarray(py)
    }

    /// Theta mapped to the observation scale (sigmoid under the canonical
    /// link, identity otherwise).
    fn theta_observation_scale<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        self.inner.theta_observation_scale().into_pyarray(py)
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn final_residual(&self) -> f64 {
        self.inner.final_residual
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn objective_trace(&self) -> Vec<f64> {
        self.inner.objective_trace.clone()
    }

    #[getter]
    fn residual_trace(&self) -> Vec<f64> {
        self.inner.residual_trace.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Decomposition(p={}, q={}, iterations={}, converged={})",
            self.inner.l.nrows(),
            self.inner.l.ncols(),
            self.inner.iterations,
            self.inner.converged
        )
    }
}

/// Shared background with per-group anomalies.
#[pyclass(name = "MultiDecomposition")]
struct PyMultiDecomposition {
    inner: erpca::MultiDecomposition,
}

#[pymethods]
impl PyMultiDecomposition {
    #[getter]
    fn l<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        self.inner.l.clone().into_pyarray(py)
    }

    #[getter]
    fn s<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyArray2<f64>>> {
        self.inner
            .s
            .iter()
            .map(|m| m.clone().into_pyarray(py))
            .collect()
    }

    #[getter]
    fn theta<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyArray2<f64>>> {
        self.inner
            .theta
            .iter()
            .map(|m| m.clone().into_pyarray(py))
            .collect()
    }

    #[getter]
    fn stage1<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDecomposition>> {
        Bound::new(
            py,
            PyDecomposition {
                inner: self.inner.stage1.clone(),
            },
        )
    }

    #[getter]
    fn group_iterations(&self) -> Vec<usize> {
        self.inner.groups.iter().map(|g| g.iterations).collect()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged()
    }

    #[getter]
    fn objective_stage1(&self) -> f64 {
        self.inner.objective_stage1
    }

    #[getter]
    fn objective_final(&self) -> f64 {
        self.inner.objective_final
    }

    fn __repr__(&self) -> String {
        format!(
            "MultiDecomposition(groups={}, converged={})",
            self.inner.s.len(),
            self.inner.converged()
        )
    }
}

/// Tuning outcome: accepted penalties and the fit they produced.
#[pyclass(name = "TuneOutcome")]
struct PyTuneOutcome {
    inner: erpca::TuneOutcome,
}

#[pymethods]
impl PyTuneOutcome {
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.config.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.config.beta
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds
    }

    #[getter]
    fn satisfied(&self) -> bool {
        self.inner.satisfied
    }

    #[getter]
    fn rank_l(&self) -> usize {
        self.inner.rank_l
    }

    #[getter]
    fn pct_nz_s(&self) -> f64 {
        self.inner.pct_nz_s
    }

    #[getter]
    fn decomposition<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDecomposition>> {
        Bound::new(
            py,
            PyDecomposition {
                inner: self.inner.decomposition.clone(),
            },
        )
    }
}

/// Ground truth plus sampled stacks from the seeded generator.
#[pyclass(name = "Simulation")]
struct PySimulation {
    truth: erpca::GroundTruth,
    stacks: Vec<Array3<f64>>,
}

#[pymethods]
impl PySimulation {
    #[getter]
    fn l_true<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        self.truth.l_true.clone().into_pyarray(py)
    }

    #[getter]
    fn s_true<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyArray2<f64>>> {
        self.truth
            .s_true
            .iter()
            .map(|m| m.clone().into_pyarray(py))
            .collect()
    }

    #[getter]
    fn theta<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyArray2<f64>>> {
        self.truth
            .theta
            .iter()
            .map(|m| m.clone().into_pyarray(py))
            .collect()
    }

    #[getter]
    fn spike_supports(&self) -> Vec<Vec<(usize, usize)>> {
        self.truth.spike_supports.clone()
    }

    /// Sampled observations, one `(n_g, p, q)` array per group.
    #[getter]
    fn stacks<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyArray3<f64>>> {
        self.stacks
            .iter()
            .map(|m| m.clone().into_pyarray(py))
            .collect()
    }
}

/// Entrywise soft thresholding: `sgn(x) * max(|x| - tau, 0)`.
#[pyfunction]
fn soft_threshold<'py>(
    py: Python<'py>,
    x: PyReadonlyArray2<'py, f64>,
    tau: f64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let out = erpca::soft_threshold(&x.as_array().to_owned(), tau).map_err(to_py_err)?;
    Ok(out.into_pyarray(py))
}

/// Singular value thresholding: soft thresholding of the spectrum.
#[pyfunction]
fn svt<'py>(
    py: Python<'py>,
    x: PyReadonlyArray2<'py, f64>,
    tau: f64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let out = erpca::svt(&x.as_array().to_owned(), tau).map_err(to_py_err)?;
    Ok(out.into_pyarray(py))
}

/// Thin SVD as `(u, s, v)` with `x = u @ diag(s) @ v.T`.
#[pyfunction]
fn thin_svd<'py>(
    py: Python<'py>,
    x: PyReadonlyArray2<'py, f64>,
) -> PyResult<(
    Bound<'py, PyArray2<f64>>,
    Bound<'py, numpy::PyArray1<f64>>,
    Bound<'py, PyArray2<f64>>,
)> {
    let svd = erpca::thin_svd(&x.as_array().to_owned()).map_err(to_py_err)?;
    Ok((
        svd.u.into_pyarray(py),
        svd.singular_values.into_pyarray(py),
        svd.v.into_pyarray(py),
    ))
}

/// Fit the decomposition to a stack of observations.
#[pyfunction]
#[pyo3(signature = (data, kind, sigma2=None, link="mean", alpha=None, beta=None, mu=None, tol=None, max_iter=None, init_rank=None))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    data: PyReadonlyArray3<'py, f64>,
    kind: &str,
    sigma2: Option<f64>,
    link: &str,
    alpha: Option<f64>,
    beta: Option<f64>,
    mu: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    init_rank: Option<usize>,
) -> PyResult<Bound<'py, PyDecomposition>> {
    let stack = stack_from_array(&data, parse_kind(kind, sigma2)?, parse_link(link)?)?;
    let config = override_config(
        default_config(&stack),
        alpha,
        beta,
        mu,
        tol,
        max_iter,
        init_rank,
    );
    let inner = erpca::fit(&stack, &config).map_err(to_py_err)?;
    Bound::new(py, PyDecomposition { inner })
}

/// Fit the multi-group decomposition: shared background, per-group anomalies.
#[pyfunction]
#[pyo3(signature = (groups, kind, sigma2=None, link="mean", alpha=None, betas=None, mu=None, tol=None, max_iter=None))]
#[allow(clippy::too_many_arguments)]
fn fit_multi_groups<'py>(
    py: Python<'py>,
    groups: Vec<PyReadonlyArray3<'py, f64>>,
    kind: &str,
    sigma2: Option<f64>,
    link: &str,
    alpha: Option<f64>,
    betas: Option<Vec<f64>>,
    mu: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Bound<'py, PyMultiDecomposition>> {
    let kind = parse_kind(kind, sigma2)?;
    let link = parse_link(link)?;
    let stacks: Vec<MatrixStack> = groups
        .iter()
        .map(|g| stack_from_array(g, kind, link))
        .collect::<PyResult<_>>()?;
    let data = GroupedStacks::new(stacks).map_err(to_py_err)?;
    let mut config = default_multi_config(&data);
    if let Some(v) = alpha {
        config.alpha = v;
    }
    if let Some(v) = betas {
        config.betas = v;
    }
    if let Some(v) = mu {
        config.mu = v;
    }
    if let Some(v) = tol {
        config.tol = v;
    }
    if let Some(v) = max_iter {
        config.max_iter = v;
    }
    let inner = fit_multi(&data, &config).map_err(to_py_err)?;
    Bound::new(py, PyMultiDecomposition { inner })
}

/// Fit the squared-error RPCA baseline. Returns `(decomposition, sigma_hat)`.
#[pyfunction]
#[pyo3(signature = (data, kind, sigma2=None, lam=None, mu=None, tol=None, max_iter=None, inverse_transform=false, global_sigma=false))]
#[allow(clippy::too_many_arguments)]
fn fit_rpca<'py>(
    py: Python<'py>,
    data: PyReadonlyArray3<'py, f64>,
    kind: &str,
    sigma2: Option<f64>,
    lam: Option<f64>,
    mu: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    inverse_transform: bool,
    global_sigma: bool,
) -> PyResult<(Bound<'py, PyDecomposition>, f64)> {
    let stack = stack_from_array(&data, parse_kind(kind, sigma2)?, LinkMode::Mean)?;
    let mut config = BaselineConfig {
        lambda: lam,
        mu,
        inverse_transform,
        ..Default::default()
    };
    if let Some(v) = tol {
        config.tol = v;
    }
    if let Some(v) = max_iter {
        config.max_iter = v;
    }
    if global_sigma {
        config.sigma_mode = SigmaMode::Global;
    }
    let fit = erpca::baseline::fit_rpca(&stack, &config).map_err(to_py_err)?;
    let sigma_hat = fit.sigma_hat;
    Ok((
        Bound::new(py, PyDecomposition { inner: fit.decomposition })?,
        sigma_hat,
    ))
}

/// Search penalties until the rank and sparsity caps hold.
#[pyfunction]
#[pyo3(signature = (data, kind, rank_cap, sparsity_cap, sigma2=None, eta_alpha=None, eta_beta=None, max_rounds=20))]
#[allow(clippy::too_many_arguments)]
fn tune<'py>(
    py: Python<'py>,
    data: PyReadonlyArray3<'py, f64>,
    kind: &str,
    rank_cap: usize,
    sparsity_cap: f64,
    sigma2: Option<f64>,
    eta_alpha: Option<f64>,
    eta_beta: Option<f64>,
    max_rounds: usize,
) -> PyResult<Bound<'py, PyTuneOutcome>> {
    let stack = stack_from_array(&data, parse_kind(kind, sigma2)?, LinkMode::Mean)?;
    let spec = TuneSpec {
        rank_cap,
        sparsity_cap,
        eta_alpha,
        eta_beta,
        max_rounds,
    };
    let inner = erpca::tune(&stack, &spec).map_err(to_py_err)?;
    Bound::new(py, PyTuneOutcome { inner })
}

/// Generate a seeded instance: ground truth and sampled stacks.
#[pyfunction]
#[pyo3(signature = (kind, p, n, groups=1, seed=0, sigma2=None, bg_mean=None, bg_sd=None, target_rank=None, spike_count=None, spike_lo=None, spike_hi=None, disjoint_supports=false))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    kind: &str,
    p: usize,
    n: usize,
    groups: usize,
    seed: u64,
    sigma2: Option<f64>,
    bg_mean: Option<f64>,
    bg_sd: Option<f64>,
    target_rank: Option<usize>,
    spike_count: Option<usize>,
    spike_lo: Option<f64>,
    spike_hi: Option<f64>,
    disjoint_supports: bool,
) -> PyResult<Bound<'py, PySimulation>> {
    let mut spec = SimSpec::preset(parse_kind(kind, sigma2)?, p, n, groups, seed);
    if let Some(v) = bg_mean {
        spec.bg_mean = v;
    }
    if let Some(v) = bg_sd {
        spec.bg_sd = v;
    }
    if let Some(v) = target_rank {
        spec.target_rank = v;
    }
    if let Some(v) = spike_count {
        spec.spike_count = v;
    }
    if let Some(v) = spike_lo {
        spec.spike_lo = v;
    }
    if let Some(v) = spike_hi {
        spec.spike_hi = v;
    }
    spec.disjoint_supports = disjoint_supports;

    let truth = make_ground_truth(&spec).map_err(to_py_err)?;
    let grouped = sample_stack(&truth, &spec).map_err(to_py_err)?;
    let stacks = grouped.groups().iter().map(stack_to_array3).collect();
    Bound::new(py, PySimulation { truth, stacks })
}

#[pymodule]
fn erpca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("RNG_ALGORITHM", RNG_ALGORITHM)?;
    m.add_class::<PyDecomposition>()?;
    m.add_class::<PyMultiDecomposition>()?;
    m.add_class::<PyTuneOutcome>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(svt, m)?)?;
    m.add_function(wrap_pyfunction!(thin_svd, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_multi_groups, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rpca, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
