use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use greybox_core::estimation::DisturbanceKind;
use greybox_core::pipeline::{Pipeline, PredictSelection, RunConfig};
use greybox_core::sysid::Method;

#[derive(Parser, Debug)]
#[command(name = "greybox", version, about = "Gray-box building thermal models with learned disturbance forecasts")]
struct Cli {
    /// Run configuration (JSON). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum IdentMethod {
    Conv,
    Id,
    Od,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Id,
    Od,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Predictor {
    Conventional,
    Hybrid,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the identification and operation datasets.
    Generate,
    /// Identify model parameters from the identification dataset.
    Identify {
        #[arg(long, value_enum)]
        method: IdentMethod,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Estimate the disturbance trace over the operation dataset.
    Estimate {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
    /// Train the disturbance forecaster.
    Train {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Day-ahead zone temperature and required heating over the test period.
    Predict {
        #[arg(long, value_enum, default_value = "all")]
        method: Predictor,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
    /// Score the predictions against the measurements.
    Evaluate,
    /// Train candidate forecasters and rank them.
    Select,
    /// Bode magnitude and step responses of the model.
    Analyze,
    /// Every step from generate to analyze.
    Run,
    /// Print the effective configuration as JSON.
    Config,
}

fn to_kind(k: Kind) -> DisturbanceKind {
    match k {
        Kind::Id => DisturbanceKind::Id,
        Kind::Od => DisturbanceKind::Od,
    }
}

fn load_config(cli: &Cli) -> greybox_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.output_dir = o.clone();
    }
    match &cli.command {
        Command::Identify { restarts: Some(r), .. } => cfg.identify.restarts = *r,
        Command::Estimate { kind: Some(k) } | Command::Predict { kind: Some(k), .. } => cfg.disturbance = to_kind(*k),
        Command::Train { kind, epochs } => {
            if let Some(k) = kind {
                cfg.disturbance = to_kind(*k);
            }
            if let Some(e) = epochs {
                cfg.train.max_epochs = *e;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> greybox_core::Result<()> {
    let cfg = load_config(cli)?;
    if let Command::Config = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let p = Pipeline::new(cfg)?;
    std::fs::create_dir_all(p.output_dir())?;
    match &cli.command {
        Command::Generate => {
            let (ident, op) = p.generate()?;
            println!("dataset: {} samples, operation: {} samples", ident.len(), op.len());
        }
        Command::Identify { method, .. } => {
            let m = match method {
                IdentMethod::Conv => Method::Conv,
                IdentMethod::Id => Method::Id,
                IdentMethod::Od => Method::Od,
            };
            let r = p.identify(m)?;
            log::info!("{} objective {:.6e} (restart {})", m.name(), r.objective, r.best_restart);
            print!("{}", std::fs::read_to_string(p.path("comparison.txt"))?);
        }
        Command::Estimate { .. } => {
            let t = p.estimate()?;
            println!("{} trace: {} samples", t.kind.as_str(), t.len());
        }
        Command::Train { .. } => {
            let path = p.train()?;
            println!("model written to {}", path.display());
        }
        Command::Predict { method, .. } => {
            let which = match method {
                Predictor::Conventional => PredictSelection::Conventional,
                Predictor::Hybrid => PredictSelection::Hybrid,
                Predictor::All => PredictSelection::All,
            };
            let out = p.predict(which)?;
            println!("{} prediction runs", out.runs.len());
        }
        Command::Evaluate => print_report(&p.evaluate()?),
        Command::Select => {
            let s = p.select()?;
            println!("{:<28} {:>10} {:>10} {:>10}", "case", "median", "q05", "q95");
            for c in &s.ranking.cases {
                let mark = if c.indistinguishable { " ~" } else { "" };
                println!("{:<28} {:>10.4} {:>10.4} {:>10.4}{mark}", c.case_id, c.median, c.q05, c.q95);
            }
            if !s.effects.is_empty() {
                println!();
                println!("{:<10} {:>10} {:>10} {:>10}", "effect", "mean", "q025", "q975");
                for e in &s.effects {
                    println!("{:<10} {:>10.4} {:>10.4} {:>10.4}", e.name, e.mean, e.q025, e.q975);
                }
            }
        }
        Command::Analyze => {
            p.analyze()?;
            println!("bode and step responses written to {}", p.output_dir().display());
        }
        Command::Run => print_report(&p.run_all()?),
        Command::Config => unreachable!(),
    }
    Ok(())
}

fn print_report(r: &greybox_core::hybrid::EvaluationReport) {
    println!("{:<14} {:>6} {:>10} {:>10}", "method", "runs", "rmse", "mae");
    for s in &r.summary {
        println!("{:<14} {:>6} {:>10.4} {:>10.4}", s.method.name(), s.runs, s.mean_rmse, s.mean_mae);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GREYBOX_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.code(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
