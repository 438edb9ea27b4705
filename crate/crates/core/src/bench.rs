//! Benchmark runner: seeded instances, both methods on identical data,
//! per-trial Frobenius errors written as CSV plus a JSON manifest that
//! reproduces the run exactly.

use crate::baseline::{self, BaselineConfig};
use crate::error::{Error, Result};
use crate::expfam::DistributionKind;
use crate::multi::{default_multi_config, fit_multi};
use crate::prox::{effective_rank, frobenius_norm};
use crate::simgen::{make_ground_truth, sample_stack, SimSpec, RNG_ALGORITHM};
use crate::solver::{default_config, fit};
use crate::tune::pct_nonzero;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

pub const CSV_HEADER: &str =
    "method,p,kind,seed,trial,err_L,err_S,rank_L,pct_nz_S,iterations,wall_time_s,status";

/// Formula mapping (suite seed, p, trial) to the instance seed; recorded in
/// the manifest so rows can be regenerated individually.
pub const SEED_RULE: &str = "seed xor (p << 32) xor (trial + 1)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Erpca,
    RpcaBaseline,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Erpca => "erpca",
            Method::RpcaBaseline => "rpca_baseline",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Single,
    Multi,
}

/// A sweep: for each matrix size and trial, draw a fresh instance and run
/// both methods on the identical sampled stack.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchSuite {
    pub p_list: Vec<usize>,
    pub kind: DistributionKind,
    pub n: usize,
    pub trials: usize,
    pub mode: BenchMode,
    /// Groups per instance; 1 for single mode. Multi mode uses disjoint
    /// per-group spike supports.
    pub groups: usize,
    pub seed: u64,
    /// With timing off the wall_time_s column is written as 0, making the
    /// CSV a pure function of the suite.
    pub record_timing: bool,
}

impl BenchSuite {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.p_list.is_empty() || self.trials == 0 {
            return Err(Error::Config("empty p_list or zero trials".into()));
        }
        match self.mode {
            BenchMode::Single if self.groups != 1 => Err(Error::Config(
                "single mode requires groups = 1".into(),
            )),
            BenchMode::Multi if self.groups < 2 => Err(Error::Config(
                "multi mode requires groups >= 2".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// One method on one instance.
#[derive(Clone, Debug, Serialize)]
pub struct TrialResult {
    pub method: Method,
    pub p: usize,
    pub kind: String,
    pub seed: u64,
    pub trial: usize,
    pub err_l: f64,
    pub err_s: f64,
    pub rank_l: usize,
    pub pct_nz_s: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub status: String,
}

/// `||est - truth||_F`.
pub fn frobenius_error(est: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    if est.dim() != truth.dim() {
        return Err(Error::Shape(format!(
            "estimate is {:?}, truth is {:?}",
            est.dim(),
            truth.dim()
        )));
    }
    Ok(frobenius_norm(&(est - truth)))
}

pub fn trial_seed(base: u64, p: usize, trial: usize) -> u64 {
    base ^ ((p as u64) << 32) ^ (trial as u64 + 1)
}

struct MethodOutcome {
    err_l: f64,
    err_s: f64,
    rank_l: usize,
    pct_nz_s: f64,
    iterations: usize,
    elapsed: f64,
}

fn run_trial_pair(suite: &BenchSuite, p: usize, trial: usize) -> (TrialResult, TrialResult) {
    let seed = trial_seed(suite.seed, p, trial);
    let blank = |method: Method, status: String| TrialResult {
        method,
        p,
        kind: suite.kind.name().to_string(),
        seed,
        trial,
        err_l: 0.0,
        err_s: 0.0,
        rank_l: 0,
        pct_nz_s: 0.0,
        iterations: 0,
        wall_time_s: 0.0,
        status,
    };
    let filled = |method: Method, o: MethodOutcome| TrialResult {
        wall_time_s: if suite.record_timing { o.elapsed } else { 0.0 },
        err_l: o.err_l,
        err_s: o.err_s,
        rank_l: o.rank_l,
        pct_nz_s: o.pct_nz_s,
        iterations: o.iterations,
        ..blank(method, "ok".into())
    };

    let mut spec = SimSpec::preset(suite.kind, p, suite.n, suite.groups, seed);
    spec.disjoint_supports = suite.mode == BenchMode::Multi;
    let prepared = make_ground_truth(&spec).and_then(|truth| {
        let stacks = sample_stack(&truth, &spec)?;
        Ok((truth, stacks))
    });
    let (truth, stacks) = match prepared {
        Ok(v) => v,
        Err(e) => {
            let msg = sanitize(&format!("generation failed: {e}"));
            return (
                blank(Method::Erpca, msg.clone()),
                blank(Method::RpcaBaseline, msg),
            );
        }
    };

    let erpca = (|| -> Result<MethodOutcome> {
        let start = Instant::now();
        match suite.mode {
            BenchMode::Single => {
                let stack = &stacks.groups()[0];
                let dec = fit(stack, &default_config(stack))?;
                let elapsed = start.elapsed().as_secs_f64();
                Ok(MethodOutcome {
                    err_l: frobenius_error(&dec.l, &truth.l_true)?,
                    err_s: frobenius_error(&dec.s, &truth.s_true[0])?,
                    rank_l: effective_rank(&dec.l)?,
                    pct_nz_s: pct_nonzero(&dec.s),
                    iterations: dec.iterations,
                    elapsed,
                })
            }
            BenchMode::Multi => {
                let dec = fit_multi(&stacks, &default_multi_config(&stacks))?;
                let elapsed = start.elapsed().as_secs_f64();
                let mut err_s = 0.0;
                let mut pct = 0.0;
                for (g, s) in dec.s.iter().enumerate() {
                    err_s += frobenius_error(s, &truth.s_true[g])?;
                    pct += pct_nonzero(s);
                }
                let g = dec.s.len() as f64;
                let stage2_max = dec.groups.iter().map(|d| d.iterations).max().unwrap_or(0);
                Ok(MethodOutcome {
                    err_l: frobenius_error(&dec.l, &truth.l_true)?,
                    err_s: err_s / g,
                    rank_l: effective_rank(&dec.l)?,
                    pct_nz_s: pct / g,
                    iterations: dec.stage1.iterations + stage2_max,
                    elapsed,
                })
            }
        }
    })();

    let baseline = (|| -> Result<MethodOutcome> {
        let stack = match suite.mode {
            BenchMode::Single => stacks.groups()[0].clone(),
            // The baseline has no group structure; it sees the pooled stack.
            BenchMode::Multi => stacks.pooled_stack()?,
        };
        let cfg = BaselineConfig {
            inverse_transform: matches!(suite.kind, DistributionKind::Exponential),
            ..Default::default()
        };
        let start = Instant::now();
        let fit = baseline::fit_rpca(&stack, &cfg)?;
        let elapsed = start.elapsed().as_secs_f64();
        let dec = &fit.decomposition;
        let mut err_s = 0.0;
        for s_true in &truth.s_true {
            err_s += frobenius_error(&dec.s, s_true)?;
        }
        Ok(MethodOutcome {
            err_l: frobenius_error(&dec.l, &truth.l_true)?,
            err_s: err_s / truth.s_true.len() as f64,
            rank_l: effective_rank(&dec.l)?,
            pct_nz_s: pct_nonzero(&dec.s),
            iterations: dec.iterations,
            elapsed,
        })
    })();

    let to_row = |method: Method, outcome: Result<MethodOutcome>| match outcome {
        Ok(o) => filled(method, o),
        Err(e) => blank(method, sanitize(&format!("error: {e}"))),
    };
    (
        to_row(Method::Erpca, erpca),
        to_row(Method::RpcaBaseline, baseline),
    )
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n'], ";")
}

fn format_row(r: &TrialResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.method.name(),
        r.p,
        r.kind,
        r.seed,
        r.trial,
        r.err_l,
        r.err_s,
        r.rank_l,
        r.pct_nz_s,
        r.iterations,
        r.wall_time_s,
        r.status
    )
}

pub fn render_csv(rows: &[TrialResult]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", format_row(r));
    }
    out
}

/// Run the sweep, write `out_csv` and a `<out_csv>.manifest.json` next to it,
/// and return the rows (ordered by `(p, trial, method)`).
///
/// Trials run in parallel; each trial is deterministic, and rows are sorted
/// before writing, so the CSV does not depend on scheduling. Failed trials
/// keep their rows with the failure recorded in the status column.
pub fn run_experiment(suite: &BenchSuite, out_csv: &Path) -> Result<Vec<TrialResult>> {
    suite.validate()?;
    let cases: Vec<(usize, usize)> = suite
        .p_list
        .iter()
        .flat_map(|&p| (0..suite.trials).map(move |t| (p, t)))
        .collect();
    let mut rows: Vec<TrialResult> = cases
        .par_iter()
        .flat_map_iter(|&(p, trial)| {
            let (a, b) = run_trial_pair(suite, p, trial);
            [a, b]
        })
        .collect();
    rows.sort_by_key(|r| (r.p, r.trial, r.method.name()));

    std::fs::write(out_csv, render_csv(&rows))?;
    let manifest = serde_json::json!({
        "suite": suite,
        "rng": RNG_ALGORITHM,
        "seed_rule": SEED_RULE,
        "version": env!("CARGO_PKG_VERSION"),
        "csv_header": CSV_HEADER,
    });
    let manifest_path = manifest_path_for(out_csv);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(rows)
}

pub fn manifest_path_for(out_csv: &Path) -> std::path::PathBuf {
    let mut os = out_csv.as_os_str().to_owned();
    os.push(".manifest.json");
    std::path::PathBuf::from(os)
}
