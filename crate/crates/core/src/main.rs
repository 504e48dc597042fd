use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetvar::harness::{self, ExperimentConfig, Method, RunSummary};
use hetvar::simdata::{generate, ModelId, ModelSpec};
use hetvar::{Error, Rng};

#[derive(Parser, Debug)]
#[command(
    name = "hetvar",
    version,
    about = "Conditional variance estimation and reject-option experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// MS, C and best-single-pair variance estimation errors
    Table1(RunArgs),
    /// Reject option with the true regression and variance functions
    OracleReject(RunArgs),
    /// Reject option with estimated regression and variance functions
    PluginReject(RunArgs),
    /// Write one simulated sample per model as CSV
    GenData(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Model names, comma separated (m1a025, m1a1, m2, m3, m4, m5) or `all`
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Aggregation sample size
    #[arg(long = "N")]
    big_n: Option<usize>,
    /// Test sample size
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Falls back to HETVAR_SEED, then the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Comma separated rejection levels in [0, 1)
    #[arg(long)]
    epsilons: Option<String>,
    /// Comma separated method names
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    calib_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// TOML or JSON experiment configuration
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Parsed configuration and whether the file sets a seed.
fn load_config(path: &Path) -> Result<(ExperimentConfig, bool), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid JSON config: {e}")))?;
        let has_seed = value.get("seed").is_some();
        let cfg = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("invalid JSON config: {e}")))?;
        Ok((cfg, has_seed))
    } else {
        let table: toml::Table = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid TOML config: {e}")))?;
        let has_seed = table.contains_key("seed");
        let cfg = table
            .try_into()
            .map_err(|e| Error::Config(format!("invalid TOML config: {e}")))?;
        Ok((cfg, has_seed))
    }
}

fn parse_list<T>(raw: &str, parse: impl Fn(&str) -> Result<T, Error>) -> Result<Vec<T>, Error> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect()
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let (mut cfg, file_has_seed) = match &args.config {
        Some(path) => load_config(path)?,
        None => (ExperimentConfig::default(), false),
    };
    if let Some(models) = &args.model {
        cfg.models = if models.trim().eq_ignore_ascii_case("all") {
            ModelId::ALL.to_vec()
        } else {
            parse_list(models, |s| s.parse::<ModelId>())?
        };
    }
    if cfg.models.is_empty() {
        return Err(Error::Config(
            "no model given; use --model or the config file".into(),
        ));
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.big_n {
        cfg.n_agg = v;
    }
    if let Some(v) = args.t {
        cfg.t = v;
    }
    if let Some(v) = args.reps {
        cfg.reps = v;
    }
    if let Some(v) = args.calib_size {
        cfg.calib_size = v;
    }
    match (args.seed, std::env::var("HETVAR_SEED")) {
        (Some(seed), _) => cfg.seed = seed,
        (None, Ok(env)) if !file_has_seed => {
            cfg.seed = env.trim().parse().map_err(|_| {
                Error::Config(format!("HETVAR_SEED is not an unsigned integer: {env:?}"))
            })?;
        }
        _ => {}
    }
    if let Some(eps) = &args.epsilons {
        cfg.epsilons = parse_list(eps, |s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid epsilon {s:?}")))
        })?;
    }
    if let Some(methods) = &args.methods {
        cfg.methods = parse_list(methods, |s| s.parse::<Method>())?;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(PathBuf::from("."));
    }
    if args.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    Ok(cfg)
}

fn gen_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, Error> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for (i, &model) in cfg.models.iter().enumerate() {
        let spec = ModelSpec::new(model);
        let data = generate(&spec, cfg.n, &mut Rng::new(cfg.seed).substream(i as u64))?;
        let path = dir.join(format!("{model}_n{}.csv", cfg.n));
        data.save_csv(&path)?;
        written.push(path);
    }
    Ok(written)
}

fn report(summary: &RunSummary) {
    for f in &summary.failures {
        eprintln!("replication {} of {} failed: {}", f.rep, f.model, f.message);
    }
    eprintln!(
        "{} summary rows, {} failed replications",
        summary.rows.len(),
        summary.failures.len()
    );
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (args, command) = match &cli.command {
        Command::Table1(a) => (a, "table1"),
        Command::OracleReject(a) => (a, "oracle-reject"),
        Command::PluginReject(a) => (a, "plugin-reject"),
        Command::GenData(a) => (a, "gen-data"),
    };
    let cfg = build_config(args).map_err(Failure::Config)?;
    let job = || -> Result<(), Error> {
        match command {
            "gen-data" => {
                for p in gen_data(&cfg)? {
                    eprintln!("wrote {}", p.display());
                }
            }
            "table1" => report(&harness::run_table1(&cfg)?),
            "oracle-reject" => report(&harness::run_oracle_reject(&cfg)?),
            _ => report(&harness::run_plugin_reject(&cfg)?),
        }
        Ok(())
    };
    let result = match args.threads {
        Some(t) => harness::with_threads(t, job).map_err(Failure::Config)?,
        None => job(),
    };
    result.map_err(|e| match e {
        Error::Config(_) => Failure::Config(e),
        other => Failure::Runtime(other),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("hetvar: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("hetvar: {e}");
            ExitCode::from(2)
        }
    }
}
