use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use opfscreen::commands;
use opfscreen::config::{Overrides, RunConfig};
use opfscreen::{Error, Result};
use opfscreen_core::pipeline::{FallbackMode, FeatureMode};

#[derive(Parser)]
#[command(name = "opfscreen", version, about = "Screen inactive AC OPF constraints with trained networks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Case file (MATPOWER .m or .json).
    #[arg(long, global = true)]
    case: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, or output file for `solve` and `report`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    feature_mode: Option<FeatureArg>,
    #[arg(long, global = true, value_enum)]
    fallback: Option<FallbackArg>,
    /// Comma-separated hidden-layer counts; several entries run a sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    hidden_layers: Option<Vec<usize>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    NetInjection,
    DemandOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum FallbackArg {
    IterativeInclusion,
    WarmStartFull,
    None,
}

#[derive(Subcommand)]
enum Command {
    /// Solve scenarios and write dataset1, dataset2 and test.
    GenData,
    /// Train the regressor and both classifiers.
    Train {
        /// Directory holding dataset1 and dataset2.
        #[arg(long)]
        data: PathBuf,
    },
    /// Screen and solve the test set, writing a run directory.
    Eval {
        #[arg(long)]
        models: PathBuf,
        /// Test dataset, or a directory holding `test`.
        #[arg(long)]
        data: PathBuf,
        /// Further model directories for the comparison table.
        #[arg(long)]
        compare: Vec<PathBuf>,
    },
    /// Solve one demand, screened when models are given.
    Solve {
        /// JSON with `pd` and `qd` in MW and MVAr over the demand buses;
        /// base demand when absent.
        #[arg(long)]
        demand: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Print the text report of a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn resolve(c: Common) -> Result<RunConfig> {
    RunConfig::resolve(
        c.config.as_deref(),
        Overrides {
            case: c.case,
            seed: c.seed,
            out: c.out,
            workers: c.workers,
            threshold: c.threshold,
            feature_mode: c.feature_mode.map(|m| match m {
                FeatureArg::NetInjection => FeatureMode::NetInjection,
                FeatureArg::DemandOnly => FeatureMode::DemandOnly,
            }),
            fallback: c.fallback.map(|f| match f {
                FallbackArg::IterativeInclusion => FallbackMode::IterativeInclusion,
                FallbackArg::WarmStartFull => FallbackMode::WarmStartFull,
                FallbackArg::None => FallbackMode::None,
            }),
            hidden_layers: c.hidden_layers,
        },
    )
}

fn run(cli: Cli) -> Result<()> {
    let report_out = cli.common.out.clone();
    let cfg = resolve(cli.common)?;
    match cli.command {
        Command::GenData => {
            let sets = commands::gen_data(&cfg)?;
            for (name, ds) in commands::DATASET_DIRS.iter().zip(&sets) {
                println!("{name}: {} kept, {} dropped", ds.len(), ds.dropped.len());
            }
        }
        Command::Train { data } => {
            let rows = commands::train(&cfg, &data)?;
            if rows.len() > 1 {
                print!("{}", commands::sweep_table(&rows));
            } else {
                println!("regressor validation RMSE {:.6} p.u.", rows[0].regressor_val_rmse);
            }
        }
        Command::Eval { models, data, compare } => {
            let s = commands::eval(&cfg, &models, &data, &compare)?;
            print!("{}", opfscreen::report::render_report(&s));
        }
        Command::Solve { demand, models } => {
            let sol = commands::solve(&cfg, demand.as_deref(), models.as_deref())?;
            if cfg.out.is_none() {
                println!("{}", serde_json::to_string_pretty(&sol).expect("solution serializes"));
            } else {
                println!("objective {:.6} $/h, {} iterations", sol.objective, sol.iterations);
            }
        }
        Command::Report { run } => {
            let text = commands::report(&run)?;
            match report_out {
                Some(p) => opfscreen::files::write_text(&p, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::kind(&e).exit_code() as u8)
        }
    }
}
