use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use leverage_sim::embedding::{default_f_pool, verify_embedding, EmbeddingConfig, EmbeddingMode, EmbeddingReport, SearchOptions};
use leverage_sim::fitting::{accuracy_margin, fit_known_f, fit_unknown_f, FitOptions, FitReport, LabelOracle};
use leverage_sim::harness::{ExperimentConfig, GeneratorKind};
use leverage_sim::io::{format_f64, read_matrix, read_vector, write_matrix, write_vector};
use leverage_sim::leverage::{parse_plan_csv, parse_plan_meta};
use leverage_sim::net::{net_check, net_report_csv, NetCheckConfig};
use leverage_sim::{
    leverage_scores, sampling_distribution, BudgetMode, Exec, Nonlinearity, Sampler, SamplingPlan,
};

#[derive(Parser)]
#[command(name = "levsim", version, about = "Leverage score sampling for single index models")]
struct Cli {
    /// Run every trial loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Leverage scores and sampling probabilities of a design matrix.
    Scores {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a sampling plan; writes the plan CSV and a `.meta` sidecar.
    Plan {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "leverage")]
        sampler: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a single index model on the rows of a plan.
    Fit(FitArgs),
    /// Empirical embedding check over a sweep of sample counts.
    VerifyEmbedding(EmbedArgs),
    /// Covering checks of the Lipschitz net over a (mu, eta) sweep.
    NetCheck(NetArgs),
    /// Run an experiment described by a key=value config file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Omit the timestamp line.
        #[arg(long)]
        deterministic: bool,
    },
    /// Write a synthetic design and targets.
    Generate {
        #[arg(long, default_value = "gaussian")]
        generator: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value = "identity")]
        f: String,
        #[arg(long, default_value_t = 0.0)]
        corruption: f64,
        #[arg(long, default_value_t = 0.0)]
        magnitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        x_out: PathBuf,
        #[arg(long)]
        y_out: PathBuf,
        /// Optional file receiving w*.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Plan metadata; defaults to `<plan>.meta`.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Target vector, one value per line. Only sampled entries enter the fit.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "known_f")]
    mode: String,
    /// Nonlinearity for known_f mode.
    #[arg(long, default_value = "relu")]
    f: String,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    lipschitz: f64,
    #[arg(long, default_value_t = 10.0)]
    c: f64,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// OPT (or an upper bound) for the accuracy check; needs --xw-star-norm2.
    #[arg(long)]
    opt: Option<f64>,
    #[arg(long)]
    xw_star_norm2: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long, default_value = "fixed_f")]
    mode: String,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<usize>,
    #[arg(long = "R", default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0.25)]
    eps_target: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Named nonlinearity; without it a random Lipschitz pool is used.
    #[arg(long)]
    f: Option<String>,
    #[arg(long = "L", default_value_t = 1.0)]
    lipschitz: f64,
    #[arg(long, default_value_t = 50)]
    pool_size: usize,
    #[arg(long, default_value_t = 20)]
    starts: usize,
    #[arg(long, default_value_t = 40)]
    iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NetArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.25,0.1")]
    mu: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1")]
    eta: Vec<f64>,
    #[arg(long = "L", default_value_t = 1.0)]
    lipschitz: f64,
    #[arg(long = "R", default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    plans: usize,
    #[arg(long, default_value_t = 100)]
    functions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn meta_path(plan: &Path) -> PathBuf {
    let mut s = plan.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn scores(x: &Path, out: Option<&Path>) -> Result<()> {
    let x = read_matrix(x)?;
    let tau = leverage_scores(&x)?;
    let p = sampling_distribution(&tau)?;
    let mut text = String::from("index,tau,p\n");
    for (j, (t, q)) in tau.iter().zip(&p).enumerate() {
        text.push_str(&format!("{j},{},{}\n", format_f64(*t), format_f64(*q)));
    }
    emit(out, &text)
}

fn plan(x: &Path, m: usize, seed: u64, sampler: &str, out: &Path) -> Result<()> {
    let x = read_matrix(x)?;
    let sampler = Sampler::from_name(sampler)?;
    let plan = match sampler {
        Sampler::Leverage => SamplingPlan::leverage(&x, m, seed)?,
        Sampler::Uniform => SamplingPlan::uniform(x.nrows(), m, seed)?,
    };
    emit(Some(out), &plan.to_csv())?;
    emit(Some(&meta_path(out)), &plan.metadata(x.ncols(), sampler))
}

fn fit(a: &FitArgs, exec: Exec) -> Result<()> {
    let x = read_matrix(&a.x)?;
    let y = read_vector(&a.labels)?;
    if y.len() != x.nrows() {
        bail!("{} has {} labels but the design has {} rows", a.labels.display(), y.len(), x.nrows());
    }
    let meta_file = a.meta.clone().unwrap_or_else(|| meta_path(&a.plan));
    let meta_text = fs::read_to_string(&meta_file).with_context(|| format!("reading {}", meta_file.display()))?;
    let meta = parse_plan_meta(&meta_text)?;
    if meta.n != x.nrows() || meta.d != x.ncols() {
        bail!("plan was drawn for a {}x{} design, got {}x{}", meta.n, meta.d, x.nrows(), x.ncols());
    }
    let plan_text = fs::read_to_string(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    let (indices, weights) = parse_plan_csv(&plan_text)?;
    let (scores, probs) = match meta.sampler {
        Sampler::Leverage => {
            let tau = leverage_scores(&x)?;
            let p = sampling_distribution(&tau)?;
            (tau, p)
        }
        Sampler::Uniform => (vec![1.0; x.nrows()], vec![1.0 / x.nrows() as f64; x.nrows()]),
    };
    let plan = SamplingPlan::from_indices(scores, probs, indices, meta.seed)?;
    if plan.m != meta.m {
        bail!("plan file has {} samples but its metadata says {}", plan.m, meta.m);
    }
    for (i, (w, expected)) in weights.iter().zip(&plan.weights).enumerate() {
        if (w - expected).abs() > 1e-9 * expected.abs() {
            bail!("weight on plan line {} is {w}, expected {expected} for this design", i + 2);
        }
    }

    let mode = BudgetMode::from_name(&a.mode)?;
    let oracle = LabelOracle::new(y.clone());
    let opts = FitOptions { restarts: a.restarts, seed: a.seed, exec, ..FitOptions::default() };
    let mut result = match mode {
        BudgetMode::KnownF => fit_known_f(&Nonlinearity::from_name(&a.f)?, &x, &plan, &oracle, a.eps, &opts)?,
        BudgetMode::UnknownF => fit_unknown_f(&x, &plan, &oracle, a.eps, a.lipschitz, &opts)?,
    };
    let full = result.evaluate_full(&x, &y)?;
    let accuracy = match (a.opt, a.xw_star_norm2) {
        (Some(opt), Some(xw2)) => Some(accuracy_margin(full, opt, xw2, a.eps, a.c)?),
        (None, None) => None,
        _ => bail!("--opt and --xw-star-norm2 must be given together"),
    };
    let report = FitReport {
        mode: mode.name().to_string(),
        m: plan.m,
        eps: a.eps,
        lipschitz: a.lipschitz,
        c: a.c,
        seed: a.seed,
        sub_loss: result.sub_loss,
        full_loss: Some(full),
        reg_loss: result.reg_loss,
        labels_used: oracle.query_count(),
        accuracy,
    };
    emit(a.out.as_deref(), &format!("{}\n{}\n", FitReport::HEADER, report.to_csv_row()))
}

fn verify(a: &EmbedArgs, exec: Exec) -> Result<()> {
    let x = read_matrix(&a.x)?;
    let mode = EmbeddingMode::from_name(&a.mode)?;
    let pool = match &a.f {
        Some(name) => vec![Nonlinearity::from_name(name)?],
        None => default_f_pool(&x.orthonormal()?.q, a.r, a.lipschitz, a.pool_size, a.seed),
    };
    let mut text = format!("{}\n", EmbeddingReport::HEADER);
    for &m in &a.m {
        let cfg = EmbeddingConfig {
            mode,
            m,
            r: a.r,
            trials: a.trials,
            seed: a.seed,
            eps_target: a.eps_target,
            search: SearchOptions { starts: a.starts, iters: a.iters },
            exec,
            ..EmbeddingConfig::default()
        };
        let report = verify_embedding(&x, &cfg, &pool)?;
        for line in report.to_csv().lines().skip(1) {
            text.push_str(line);
            text.push('\n');
        }
    }
    emit(a.out.as_deref(), &text)
}

fn net(a: &NetArgs, exec: Exec) -> Result<()> {
    let x = read_matrix(&a.x)?;
    let cfg = NetCheckConfig {
        mus: a.mu.clone(),
        etas: a.eta.clone(),
        lipschitz: a.lipschitz,
        r: a.r,
        m: a.m,
        plans: a.plans,
        functions: a.functions,
        seed: a.seed,
        exec,
    };
    let rows = net_check(&x, &cfg)?;
    emit(a.out.as_deref(), &net_report_csv(&rows))?;
    let bad: usize = rows.iter().map(|r| r.cover_violations + r.projection_failures + r.profile_violations).sum();
    if bad > 0 {
        eprintln!("warning: {bad} covering, projection or profile violations");
    }
    Ok(())
}

fn bench(config: &Path, out: Option<&Path>, deterministic: bool, exec: Exec) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::from_key_values(&text, &config.display().to_string())?;
    if let Some(path) = out {
        cfg.output = Some(path.to_path_buf());
    }
    if deterministic {
        cfg.deterministic = true;
    }
    if exec == Exec::Sequential {
        cfg.exec = exec;
    }
    let report = leverage_sim::harness::run_experiment(&cfg)?;
    let csv = report.to_csv(cfg.deterministic);
    emit(cfg.output.as_deref(), &csv)?;
    if cfg.output.is_some() {
        eprintln!(
            "accuracy rate {} over {} trials, median labels {}",
            format_f64(report.accuracy_rate()),
            report.rows.len(),
            format_f64(report.median_labels())
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn generate(
    generator: &str,
    n: usize,
    d: usize,
    f: &str,
    corruption: f64,
    magnitude: f64,
    seed: u64,
    x_out: &Path,
    y_out: &Path,
    truth_out: Option<&Path>,
) -> Result<()> {
    let cfg = ExperimentConfig {
        generator: GeneratorKind::from_name(generator)?,
        n,
        d,
        f: Nonlinearity::from_name(f)?,
        corruption,
        magnitude,
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    let inst = cfg.instance(seed)?;
    write_matrix(x_out, &inst.x)?;
    write_vector(y_out, &inst.y)?;
    if let (Some(path), Some((_, w))) = (truth_out, &inst.truth) {
        write_vector(path, w)?;
    }
    if let (Some(opt), Some(xw2)) = (inst.opt_ub, inst.xw_star_norm2) {
        eprintln!("OPT_ub {} xw_star_norm2 {}", format_f64(opt), format_f64(xw2));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::Scores { x, out } => scores(&x, out.as_deref()),
        Command::Plan { x, m, seed, sampler, out } => plan(&x, m, seed, &sampler, &out),
        Command::Fit(a) => fit(&a, exec),
        Command::VerifyEmbedding(a) => verify(&a, exec),
        Command::NetCheck(a) => net(&a, exec),
        Command::Bench { config, out, deterministic } => bench(&config, out.as_deref(), deterministic, exec),
        Command::Generate { generator, n, d, f, corruption, magnitude, seed, x_out, y_out, truth_out } => {
            generate(&generator, n, d, &f, corruption, magnitude, seed, &x_out, &y_out, truth_out.as_deref())
        }
    }
}

/// 3 for numerical failures reported by the library, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<leverage_sim::Error>())
        .map_or(2, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
