//! Command-line front end of the `nodebias` binary.
//!
//! Exit statuses: 0 success, 1 usage or config error, 2 data error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::perturb::Polarity;
use crate::report::{
    cmd_analyze, cmd_export_dtmc, cmd_plot, cmd_prepare, cmd_train, parse_seeds, DtmcRequest,
    ExperimentConfig, Regime,
};

#[derive(Debug, Parser)]
#[command(name = "nodebias", version, about = "Class-wise and per-node robustness bias of small ReLU classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select features, split, truncate and normalize the dataset.
    Prepare(Common),
    /// Train one network per (regime, seed).
    Train(Common),
    /// Sweep noise levels and write curves, scores and the regime comparison.
    Analyze(Common),
    /// Render SVG charts from an analyzed output directory.
    Plot(PlotArgs),
    /// Write a PRISM model and property for one (network, test row, node, level).
    ExportDtmc(ExportArgs),
    /// prepare, train, analyze and plot in one go.
    Run(Common),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeArg {
    Full,
    Truncated,
    Both,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Network seeds, e.g. `0..9` (inclusive) or `1,4,7`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    /// Seed of the network to export.
    #[arg(long)]
    network: u64,
    /// Id of the test row anchoring the noise.
    #[arg(long)]
    seed_id: String,
    /// 1-based input node, or `all` for joint noise on every node.
    #[arg(long, default_value = "all")]
    node: String,
    #[arg(long, default_value = "symmetric")]
    polarity: String,
    #[arg(long)]
    level: u32,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(s) = &c.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    match c.regime {
        Some(RegimeArg::Full) => cfg.regimes = vec![Regime::Full],
        Some(RegimeArg::Truncated) => cfg.regimes = vec![Regime::Truncated],
        Some(RegimeArg::Both) => cfg.regimes = vec![Regime::Full, Regime::Truncated],
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_node(s: &str) -> Result<Option<usize>> {
    if s == "all" {
        return Ok(None);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(Some(k - 1)),
        _ => Err(Error::Config(format!("--node takes a 1-based index or `all`, got {s:?}"))),
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<()> {
    let p = cmd_prepare(cfg)?;
    println!(
        "prepared {} training rows ({} after truncation) and {} test rows with features [{}] in {}",
        p.train.len(),
        p.truncated.len(),
        p.test.len(),
        p.train.feature_names().join(", "),
        cfg.output_dir.display()
    );
    Ok(())
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    cmd_train(cfg)?;
    println!(
        "trained {} networks into {}",
        cfg.regimes.len() * cfg.seeds.len(),
        cfg.output_dir.join("models").display()
    );
    Ok(())
}

fn analyze(cfg: &ExperimentConfig) -> Result<()> {
    let out = cmd_analyze(cfg)?;
    for r in &out.reports {
        if let Some(s) = r.scores.first() {
            println!(
                "{}: class robustness bias score {:.4} (level {})",
                r.regime,
                s.score,
                s.arg_level.map_or("-".into(), |l| l.to_string())
            );
        }
    }
    println!("wrote analysis tables to {}", cfg.output_dir.display());
    Ok(())
}

fn plot(dir: &std::path::Path) -> Result<()> {
    for p in cmd_plot(dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Prepare(c) => prepare(&load_config(&c)?),
        Command::Train(c) => train(&load_config(&c)?),
        Command::Analyze(c) => analyze(&load_config(&c)?),
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            prepare(&cfg)?;
            train(&cfg)?;
            analyze(&cfg)?;
            plot(&cfg.output_dir)
        }
        Command::Plot(p) => {
            let dir = match (&p.out, &p.config) {
                (Some(out), _) => out.clone(),
                (None, Some(c)) => ExperimentConfig::load(c)?.output_dir,
                (None, None) => return Err(Error::Config("plot needs --out or --config".into())),
            };
            plot(&dir)
        }
        Command::ExportDtmc(a) => {
            let cfg = load_config(&a.common)?;
            let regime = match a.common.regime {
                None | Some(RegimeArg::Full) => Regime::Full,
                Some(RegimeArg::Truncated) => Regime::Truncated,
                Some(RegimeArg::Both) => {
                    return Err(Error::Config("export-dtmc takes a single regime".into()))
                }
            };
            let req = DtmcRequest {
                regime,
                network_seed: a.network,
                seed_id: a.seed_id,
                node: parse_node(&a.node)?,
                polarity: Polarity::parse(&a.polarity)?,
                level: a.level,
            };
            let (path, count) = cmd_export_dtmc(&cfg, &req)?;
            println!(
                "wrote {} (preserved {} of {}, probability {})",
                path.display(),
                count.preserved,
                count.total,
                count.probability()
            );
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command;
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nodebias: {e}");
            e.exit_code()
        }
    }
}
