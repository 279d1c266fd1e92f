use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relaxctl::experiments::{
    emit_plots, reduce_setup, run_cell_validation, run_occupational, run_trajectory_sweep, run_value_sweep, simulate_setup,
    ExperimentConfig, ExperimentError, RunOptions, Table,
};
use relaxctl::zoo::registry::{describe, MODEL_NAMES};

#[derive(Parser)]
#[command(name = "relaxctl", version, about = "Controlled stiff relaxation systems: reduction, HJB and cell-problem experiments")]
struct Cli {
    /// Output directory; defaults to the config's `output` or the current directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweep points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Largest grid (in nodes) a run may allocate.
    #[arg(long = "budget-nodes", global = true)]
    budget_nodes: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Registered zoo models.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
    /// Stiff integration of the configured scenario.
    Simulate { config: PathBuf },
    /// Integration of the reduced system.
    Reduce { config: PathBuf },
    /// Stiff versus reduced trajectories over the epsilon list.
    SweepTrajectory { config: PathBuf },
    /// Full versus effective value functions over the epsilon list.
    SweepValue { config: PathBuf },
    /// Discounted cell problems against the closed form.
    Cell { config: PathBuf },
    /// Occupational measure of the frozen fast flow.
    Occmeasure { config: PathBuf },
    /// SVG plots for existing CSV tables.
    Plot {
        #[arg(required = true)]
        tables: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ModelsAction {
    List,
}

struct Ctx {
    cfg: ExperimentConfig,
    opts: RunOptions,
    out: PathBuf,
}

impl Ctx {
    fn load(cli: &Cli, path: &Path) -> Result<Self, ExperimentError> {
        let cfg = ExperimentConfig::load(path)?;
        let opts = RunOptions::from_config(&cfg, cli.seed, cli.budget_nodes);
        let out = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out)?;
        Ok(Self { cfg, opts, out })
    }

    fn file(&self, suffix: &str) -> PathBuf {
        self.out.join(format!("{}_{suffix}.csv", self.cfg.name))
    }

    fn save(&self, table: &Table, suffix: &str) -> Result<(), ExperimentError> {
        let path = self.file(suffix);
        table.save(&path)?;
        log::info!("wrote {}", path.display());
        emit_plots(table, &format!("{}_{suffix}", self.cfg.name), &self.out)?;
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<(), ExperimentError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| ExperimentError::Config(format!("--jobs: {e}")))?;
    }
    match &cli.command {
        Command::Models { action: ModelsAction::List } => {
            for name in MODEL_NAMES {
                println!("{name}\t{}", describe(name).unwrap_or_default());
            }
        }
        Command::Simulate { config } => {
            let ctx = Ctx::load(cli, config)?;
            let setup = ctx.cfg.setup()?;
            let tr = simulate_setup(&setup, &setup.system, ctx.cfg.integration_steps(setup.horizon()))?;
            for w in &tr.warnings {
                log::warn!("{w}");
            }
            tr.write_csv(std::io::BufWriter::new(std::fs::File::create(ctx.file("stiff"))?))?;
        }
        Command::Reduce { config } => {
            let ctx = Ctx::load(cli, config)?;
            let setup = ctx.cfg.setup()?;
            let tr = reduce_setup(&setup, ctx.cfg.integration_steps(setup.horizon()))?;
            tr.write_csv(std::io::BufWriter::new(std::fs::File::create(ctx.file("reduced"))?))?;
        }
        Command::SweepTrajectory { config } => {
            let ctx = Ctx::load(cli, config)?;
            ctx.save(&run_trajectory_sweep(&ctx.cfg, &ctx.opts)?, "trajectory")?;
        }
        Command::SweepValue { config } => {
            let ctx = Ctx::load(cli, config)?;
            ctx.save(&run_value_sweep(&ctx.cfg, &ctx.opts)?, "value")?;
        }
        Command::Cell { config } => {
            let ctx = Ctx::load(cli, config)?;
            ctx.save(&run_cell_validation(&ctx.cfg, &ctx.opts)?, "cell")?;
        }
        Command::Occmeasure { config } => {
            let ctx = Ctx::load(cli, config)?;
            let (hist, summary) = run_occupational(&ctx.cfg, &ctx.opts)?;
            ctx.save(&hist.to_table(), "histogram")?;
            ctx.save(&summary, "occupation")?;
        }
        Command::Plot { tables } => {
            for path in tables {
                let table = Table::load(path)?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
                let dir = cli.out.clone().unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
                for f in emit_plots(&table, stem, &dir)? {
                    println!("{}", f.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
