use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meshcast::config::{parse_config, parse_config_str, ConfigError, ExperimentConfig};
use meshcast::harness::{
    run_scenario, run_sweep, simulate_replication, HarnessError, ResultTable, SweepParam,
    SweepSpec, RESULT_HEADER,
};

const SEED_ENV: &str = "MESHCAST_SEED";
const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(
    name = "meshcast",
    version,
    about = "Probabilistic local broadcast in multi-channel mesh networks"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, applied after the file
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Base seed; takes precedence over the config and MESHCAST_SEED
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
    /// Maximum worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario
    Run,
    /// Sweep one parameter over a list of values
    Sweep {
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Write the four standard sweep tables
    Figures,
    /// Write nodes, links, schedules and plans of one replication
    DumpTopology {
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            ConfigError::Invalid { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_err(&path))?;
    Ok((path, BufWriter::new(file)))
}

fn load_config(common: &Common, required: bool) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(path, &common.overrides)?,
        None if required => {
            return Err(CliError::Config(
                "--config is required for this command".into(),
            ))
        }
        None => parse_config_str("", &common.overrides)?,
    };
    if let Some(seed) = common.seed {
        cfg.scenario.base_seed = seed;
    } else if !cfg.seed_given {
        cfg.scenario.base_seed = match std::env::var(SEED_ENV) {
            Ok(raw) => raw.trim().parse().map_err(|_| {
                CliError::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer"))
            })?,
            Err(_) => DEFAULT_SEED,
        };
    }
    Ok(cfg)
}

fn write_table(table: &ResultTable, dir: &Path, name: &str) -> Result<(), CliError> {
    let (path, w) = create(dir, name)?;
    table.write_csv(w).map_err(csv_err(&path))?;
    for (row, msg) in table.failures() {
        eprintln!(
            "warning: {}={} {}: {msg}",
            table.param,
            table.param.format_value(row.value),
            row.strategy
        );
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let (path, w) = create(out, "run.csv")?;
    let mut csv_out = csv::Writer::from_writer(w);
    csv_out
        .write_record(&RESULT_HEADER[1..])
        .map_err(csv_err(&path))?;
    let s = cfg.scenario.strategy;
    let r = run_scenario(&cfg.scenario)?;
    println!(
        "{s}: overhead {:.4} ± {:.4}, jain {:.4} ± {:.4} ({} replications)",
        r.overhead.mean,
        r.overhead.ci_half_width,
        r.jain.mean,
        r.jain.ci_half_width,
        r.replications()
    );
    for (rep, msg) in &r.failures {
        eprintln!("warning: {s} replication {rep}: {msg}");
    }
    csv_out
        .write_record([
            s.to_string(),
            r.overhead.mean.to_string(),
            r.overhead.ci_half_width.to_string(),
            r.jain.mean.to_string(),
            r.jain.ci_half_width.to_string(),
            r.replications().to_string(),
        ])
        .map_err(csv_err(&path))?;
    csv_out.flush().map_err(io_err(&path))?;
    Ok(())
}

fn cmd_sweep(
    cfg: &ExperimentConfig,
    out: &Path,
    param: &str,
    values: Vec<f64>,
) -> Result<(), CliError> {
    let param: SweepParam = param.parse()?;
    let spec = SweepSpec {
        param,
        values,
        strategies: cfg.strategies.clone(),
    };
    let table = run_sweep(&spec, &cfg.scenario)?;
    write_table(&table, out, &format!("sweep_{param}.csv"))
}

const FIGURE_FILES: [(SweepParam, &str); 4] = [
    (SweepParam::Nodes, "fig_nodes.csv"),
    (SweepParam::Density, "fig_density.csv"),
    (SweepParam::Interfaces, "fig_interfaces.csv"),
    (SweepParam::PCoverMin, "fig_pcover.csv"),
];

fn cmd_figures(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    for (param, name) in FIGURE_FILES {
        let table = run_sweep(&cfg.sweep(param), &cfg.scenario)?;
        write_table(&table, out, name)?;
    }
    Ok(())
}

fn cmd_dump(cfg: &ExperimentConfig, out: &Path, rep: usize) -> Result<(), CliError> {
    let run = simulate_replication(&cfg.scenario, rep)?;
    let (path, w) = create(out, "nodes.csv")?;
    run.topology.write_nodes_csv(w).map_err(csv_err(&path))?;
    let (path, w) = create(out, "links.csv")?;
    run.topology.write_links_csv(w).map_err(csv_err(&path))?;
    let (path, w) = create(out, "schedule.csv")?;
    run.assignment
        .write_schedule_csv(w)
        .map_err(csv_err(&path))?;
    let (path, w) = create(out, "plans.csv")?;
    run.write_plans_csv(w).map_err(csv_err(&path))?;
    eprintln!(
        "wrote nodes.csv, links.csv, schedule.csv, plans.csv to {}",
        out.display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let required = !matches!(cli.command, Command::DumpTopology { .. });
    let cfg = load_config(&cli.common, required)?;
    let out = &cli.common.out;
    std::fs::create_dir_all(out).map_err(io_err(out))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;

    pool.install(|| match cli.command {
        Command::Run => cmd_run(&cfg, out),
        Command::Sweep { param, values } => cmd_sweep(&cfg, out, &param, values),
        Command::Figures => cmd_figures(&cfg, out),
        Command::DumpTopology { rep } => cmd_dump(&cfg, out, rep),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
