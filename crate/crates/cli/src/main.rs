//! Command-line surface: decomposition, simulation, hyperparameter tuning,
//! and benchmarking over stacked-CSV matrix files.
//!
//! Exit codes: 0 success, 1 input error, 3 solver hit the iteration cap
//! without converging (outputs are still written), 4 tuning caps not met.

use clap::{Args, Parser, Subcommand};
use erpca::bench::{run_experiment, BenchMode, BenchSuite};
use erpca::expfam::{DistributionKind, LinkMode};
use erpca::io::{read_stack, write_matrix_csv, write_stack};
use erpca::multi::{default_multi_config, fit_multi, MultiConfig, PoolWeighting};
use erpca::simgen::{make_ground_truth, sample_stack, SimSpec, RNG_ALGORITHM};
use erpca::solver::{default_config, fit, Decomposition, SolverConfig};
use erpca::stack::{GroupedStacks, MatrixStack};
use erpca::tune::{tune, TuneSpec};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 3;
const EXIT_CAPS_NOT_MET: u8 = 4;

#[derive(Parser)]
#[command(
    name = "erpca",
    version,
    about = "Low-rank plus sparse decomposition of matrix stacks under exponential family noise"
)]
struct Cli {
    /// Override the seed of a simulation spec or bench suite.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap (default: ERPCA_THREADS, then all cores). Outputs
    /// do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a decomposition to a stack file and write L/S/Theta CSVs plus
    /// diagnostics.
    Decompose(DecomposeArgs),
    /// Generate ground truth and sampled stacks from a JSON spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search penalties until rank and sparsity caps hold; prints a JSON
    /// summary on stdout.
    Tune(TuneArgs),
    /// Run the benchmark suite described by a JSON file and write a CSV plus
    /// a replayable manifest.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DecomposeArgs {
    /// Stack file (single-group mode).
    #[arg(long, required_unless_present = "multi", conflicts_with = "multi")]
    input: Option<PathBuf>,

    /// Optional JSON solver configuration.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    out: PathBuf,

    /// Decompose on the natural-parameter scale (bernoulli only).
    #[arg(long, value_parser = ["canonical", "mean"])]
    link: Option<String>,

    /// Multi-group mode: shared background, per-group anomalies.
    #[arg(long, requires = "group_inputs")]
    multi: bool,

    /// Stack files, one per group.
    #[arg(long, num_args = 1.., value_name = "FILE")]
    group_inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    rank_cap: usize,
    #[arg(long)]
    sparsity_cap: f64,
    #[arg(long)]
    eta_alpha: Option<f64>,
    #[arg(long)]
    eta_beta: Option<f64>,
    #[arg(long, default_value_t = 20)]
    max_rounds: usize,
    #[arg(long)]
    out: PathBuf,
}

/// JSON mirror of the solver configurations; unknown keys are rejected and
/// absent keys fall back to the data-driven defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    alpha: Option<f64>,
    beta: Option<f64>,
    betas: Option<Vec<f64>>,
    mu: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    init_rank: Option<usize>,
    pool_weighting: Option<PoolWeighting>,
}

/// JSON mirror of the simulation spec; absent fields follow the
/// per-distribution presets.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSpecFile {
    p: usize,
    kind: DistributionKind,
    n: usize,
    #[serde(rename = "G", default = "one")]
    groups: usize,
    #[serde(default)]
    seed: u64,
    bg_mean: Option<f64>,
    bg_sd: Option<f64>,
    target_rank: Option<usize>,
    spike_count: Option<usize>,
    spike_lo: Option<f64>,
    spike_hi: Option<f64>,
    #[serde(default)]
    disjoint_supports: bool,
}

fn one() -> usize {
    1
}

/// JSON mirror of the bench suite.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchSuiteFile {
    p_list: Vec<usize>,
    kind: DistributionKind,
    n: usize,
    trials: usize,
    #[serde(default = "default_mode")]
    mode: BenchMode,
    groups: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_true")]
    record_timing: bool,
}

fn default_mode() -> BenchMode {
    BenchMode::Single
}

fn default_true() -> bool {
    true
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let code = match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    };
    ExitCode::from(code)
}

fn init_threads(flag: Option<usize>) {
    let from_env = std::env::var("ERPCA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        if n > 0 {
            // Ignore failure: the pool can only be configured once.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Decompose(args) => cmd_decompose(args),
        Command::Simulate { spec, out } => cmd_simulate(&spec, &out, cli.seed),
        Command::Tune(args) => cmd_tune(args),
        Command::Bench { suite, out } => cmd_bench(&suite, &out, cli.seed),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_link(link: &Option<String>) -> LinkMode {
    match link.as_deref() {
        Some("canonical") => LinkMode::Canonical,
        _ => LinkMode::Mean,
    }
}

fn load_stack(path: &Path, link: LinkMode) -> Result<MatrixStack, String> {
    let stack = read_stack(path).map_err(|e| format!("{}: {e}", path.display()))?;
    stack.with_link(link).map_err(|e| e.to_string())
}

fn apply_single_overrides(config: &mut SolverConfig, file: &RunConfigFile) -> Result<(), String> {
    if file.betas.is_some() || file.pool_weighting.is_some() {
        return Err("betas/pool_weighting are only valid with --multi".into());
    }
    if let Some(v) = file.alpha {
        config.alpha = v;
    }
    if let Some(v) = file.beta {
        config.beta = v;
    }
    if let Some(v) = file.mu {
        config.mu = v;
    }
    if let Some(v) = file.tol {
        config.tol = v;
    }
    if let Some(v) = file.max_iter {
        config.max_iter = v;
    }
    if let Some(v) = file.init_rank {
        config.init_rank = Some(v);
    }
    Ok(())
}

fn apply_multi_overrides(
    config: &mut MultiConfig,
    file: &RunConfigFile,
    groups: usize,
) -> Result<(), String> {
    if let Some(v) = file.alpha {
        config.alpha = v;
    }
    if let Some(v) = &file.betas {
        if v.len() != groups {
            return Err(format!("betas has {} entries for {} groups", v.len(), groups));
        }
        config.betas = v.clone();
    } else if let Some(v) = file.beta {
        config.betas = vec![v; groups];
    }
    if let Some(v) = file.mu {
        config.mu = v;
    }
    if let Some(v) = file.tol {
        config.tol = v;
    }
    if let Some(v) = file.max_iter {
        config.max_iter = v;
    }
    if let Some(v) = file.init_rank {
        config.init_rank = Some(v);
    }
    if let Some(v) = file.pool_weighting {
        config.pool_weighting = v;
    }
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<(), String> {
    std::fs::create_dir_all(path).map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn write_matrix(path: &Path, m: &ndarray::Array2<f64>) -> Result<(), String> {
    write_matrix_csv(path, m).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    std::fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))
}

fn solver_config_json(config: &SolverConfig) -> serde_json::Value {
    serde_json::json!({
        "alpha": config.alpha,
        "beta": config.beta,
        "mu": config.mu,
        "tol": config.tol,
        "max_iter": config.max_iter,
        "init_rank": config.init_rank,
    })
}

fn decomposition_json(dec: &Decomposition) -> serde_json::Value {
    serde_json::json!({
        "iterations": dec.iterations,
        "final_residual": dec.final_residual,
        "converged": dec.converged,
        "residual_trace": dec.residual_trace,
        "objective_trace": dec.objective_trace,
    })
}

fn cmd_decompose(args: DecomposeArgs) -> Result<u8, String> {
    let link = parse_link(&args.link);
    let file: RunConfigFile = match &args.config {
        Some(path) => read_json(path)?,
        None => RunConfigFile::default(),
    };
    ensure_dir(&args.out)?;

    if args.multi {
        if args.group_inputs.len() < 2 {
            return Err("--multi needs at least two --group-inputs files".into());
        }
        let mut groups = Vec::new();
        for path in &args.group_inputs {
            groups.push(load_stack(path, link)?);
        }
        let data = GroupedStacks::new(groups).map_err(|e| e.to_string())?;
        let mut config = default_multi_config(&data);
        apply_multi_overrides(&mut config, &file, data.group_count())?;
        let dec = fit_multi(&data, &config).map_err(|e| e.to_string())?;

        write_matrix(&args.out.join("L.csv"), &dec.l)?;
        for g in 0..data.group_count() {
            write_matrix(&args.out.join(format!("S_{}.csv", g + 1)), &dec.s[g])?;
            write_matrix(&args.out.join(format!("Theta_{}.csv", g + 1)), &dec.theta[g])?;
        }
        let diag = serde_json::json!({
            "mode": "multi",
            "kind": data.kind().name(),
            "link": data.link().name(),
            "groups": data.group_count(),
            "config": {
                "alpha": config.alpha,
                "betas": config.betas,
                "mu": config.mu,
                "tol": config.tol,
                "max_iter": config.max_iter,
                "init_rank": config.init_rank,
            },
            "stage1": decomposition_json(&dec.stage1),
            "group_diagnostics": dec.groups.iter().map(|g| serde_json::json!({
                "iterations": g.iterations,
                "final_residual": g.final_residual,
                "converged": g.converged,
                "residual_trace": g.residual_trace,
                "objective_trace": g.objective_trace,
            })).collect::<Vec<_>>(),
            "objective_stage1": dec.objective_stage1,
            "objective_final": dec.objective_final,
            "converged": dec.converged(),
        });
        write_json(&args.out.join("diagnostics.json"), &diag)?;
        Ok(if dec.converged() { EXIT_OK } else { EXIT_NO_CONVERGENCE })
    } else {
        let input = args.input.as_ref().expect("clap enforces input without --multi");
        let stack = load_stack(input, link)?;
        let mut config = default_config(&stack);
        apply_single_overrides(&mut config, &file)?;
        let dec = fit(&stack, &config).map_err(|e| e.to_string())?;

        write_matrix(&args.out.join("L.csv"), &dec.l)?;
        write_matrix(&args.out.join("S.csv"), &dec.s)?;
        write_matrix(&args.out.join("Theta.csv"), &dec.theta)?;
        if link == LinkMode::Canonical {
            write_matrix(
                &args.out.join("Theta_probability.csv"),
                &dec.theta_observation_scale(),
            )?;
        }
        let diag = serde_json::json!({
            "mode": "single",
            "kind": stack.kind().name(),
            "link": stack.link().name(),
            "p": stack.p(),
            "q": stack.q(),
            "n": stack.n(),
            "config": solver_config_json(&config),
            "iterations": dec.iterations,
            "final_residual": dec.final_residual,
            "converged": dec.converged,
            "residual_trace": dec.residual_trace,
            "objective_trace": dec.objective_trace,
        });
        write_json(&args.out.join("diagnostics.json"), &diag)?;
        Ok(if dec.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE })
    }
}

fn cmd_simulate(spec_path: &Path, out: &Path, seed_override: Option<u64>) -> Result<u8, String> {
    let file: SimSpecFile = read_json(spec_path)?;
    let mut spec = SimSpec::preset(
        file.kind,
        file.p,
        file.n,
        file.groups,
        seed_override.unwrap_or(file.seed),
    );
    if let Some(v) = file.bg_mean {
        spec.bg_mean = v;
    }
    if let Some(v) = file.bg_sd {
        spec.bg_sd = v;
    }
    if let Some(v) = file.target_rank {
        spec.target_rank = v;
    }
    if let Some(v) = file.spike_count {
        spec.spike_count = v;
    }
    if let Some(v) = file.spike_lo {
        spec.spike_lo = v;
    }
    if let Some(v) = file.spike_hi {
        spec.spike_hi = v;
    }
    spec.disjoint_supports = file.disjoint_supports;
    spec.validate().map_err(|e| e.to_string())?;

    ensure_dir(out)?;
    let truth = make_ground_truth(&spec).map_err(|e| e.to_string())?;
    let stacks = sample_stack(&truth, &spec).map_err(|e| e.to_string())?;

    write_matrix(&out.join("L_true.csv"), &truth.l_true)?;
    for g in 0..spec.groups {
        write_matrix(&out.join(format!("S_true_{}.csv", g + 1)), &truth.s_true[g])?;
        write_matrix(&out.join(format!("Theta_{}.csv", g + 1)), &truth.theta[g])?;
        write_stack(&out.join(format!("stack_{}.csv", g + 1)), &stacks.groups()[g])
            .map_err(|e| e.to_string())?;
    }
    let manifest = serde_json::json!({
        "seed": spec.seed,
        "rng": RNG_ALGORITHM,
        "version": env!("CARGO_PKG_VERSION"),
        "spec": {
            "p": spec.p,
            "kind": spec.kind,
            "n": spec.n,
            "G": spec.groups,
            "bg_mean": spec.bg_mean,
            "bg_sd": spec.bg_sd,
            "target_rank": spec.target_rank,
            "spike_count": spec.spike_count,
            "spike_lo": spec.spike_lo,
            "spike_hi": spec.spike_hi,
            "disjoint_supports": spec.disjoint_supports,
        },
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(EXIT_OK)
}

fn cmd_tune(args: TuneArgs) -> Result<u8, String> {
    let stack = load_stack(&args.input, LinkMode::Mean)?;
    let spec = TuneSpec {
        rank_cap: args.rank_cap,
        sparsity_cap: args.sparsity_cap,
        eta_alpha: args.eta_alpha,
        eta_beta: args.eta_beta,
        max_rounds: args.max_rounds,
    };
    let outcome = tune(&stack, &spec).map_err(|e| e.to_string())?;

    ensure_dir(&args.out)?;
    write_matrix(&args.out.join("L.csv"), &outcome.decomposition.l)?;
    write_matrix(&args.out.join("S.csv"), &outcome.decomposition.s)?;
    write_matrix(&args.out.join("Theta.csv"), &outcome.decomposition.theta)?;
    let diag = serde_json::json!({
        "mode": "tune",
        "config": solver_config_json(&outcome.config),
        "rounds": outcome.rounds,
        "satisfied": outcome.satisfied,
        "rank_L": outcome.rank_l,
        "pct_nz_S": outcome.pct_nz_s,
        "alpha_trace": outcome.alpha_trace,
        "beta_trace": outcome.beta_trace,
        "fit": decomposition_json(&outcome.decomposition),
    });
    write_json(&args.out.join("diagnostics.json"), &diag)?;

    let summary = serde_json::json!({
        "alpha": outcome.config.alpha,
        "beta": outcome.config.beta,
        "rank_L": outcome.rank_l,
        "pct_nz_S": outcome.pct_nz_s,
        "rounds": outcome.rounds,
        "satisfied": outcome.satisfied,
    });
    println!("{}", serde_json::to_string(&summary).map_err(|e| e.to_string())?);

    if outcome.satisfied {
        Ok(EXIT_OK)
    } else {
        eprintln!("caps not met after {} rounds", outcome.rounds);
        Ok(EXIT_CAPS_NOT_MET)
    }
}

fn cmd_bench(suite_path: &Path, out: &Path, seed_override: Option<u64>) -> Result<u8, String> {
    let file: BenchSuiteFile = read_json(suite_path)?;
    let suite = BenchSuite {
        p_list: file.p_list,
        kind: file.kind,
        n: file.n,
        trials: file.trials,
        mode: file.mode,
        groups: file.groups.unwrap_or(match file.mode {
            BenchMode::Single => 1,
            BenchMode::Multi => 2,
        }),
        seed: seed_override.unwrap_or(file.seed),
        record_timing: file.record_timing,
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    run_experiment(&suite, out).map_err(|e| e.to_string())?;
    Ok(EXIT_OK)
}
