//! `refocus`: drives the comment-improvement pipeline over a run directory.

mod config;
mod ctx;
mod layout;
mod meta;
mod runlog;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use refocus_core::{AxisKey, Clock};
use refocus_survey::SurveyKind;

use config::RunConfig;
use ctx::Ctx;
use stages::{Outcome, PipelinePlan};

#[derive(Parser)]
#[command(name = "refocus", version, about = "Best-of-n comment selection, human surveys and SFT data assembly")]
struct Cli {
    /// Run configuration (TOML). The run directory defaults to its parent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Use deterministic mock backends and a fixed clock.
    #[arg(long, global = true)]
    mock: bool,
    /// Stamp records with this Unix time instead of the system clock.
    /// `SOURCE_DATE_EPOCH` has the same effect.
    #[arg(long, global = true, value_name = "SECS")]
    fixed_time: Option<i64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract methods from Java sources or corpus JSONL into corpus/units.jsonl.
    Ingest { inputs: Vec<PathBuf> },
    /// Partition units into AI-judged and survey-pool sets.
    Split {
        #[arg(long)]
        test_count: Option<usize>,
    },
    /// Generate n candidate comments per unit.
    GenCandidates {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Best-of-n AI selection per quality axis.
    Judge {
        #[arg(long)]
        axes: Option<String>,
        /// Files of unit ids (one per line, or JSONL with `unit_id`) that must not be judged.
        #[arg(long)]
        reserved: Vec<PathBuf>,
    },
    #[command(subcommand)]
    Survey(SurveyCommand),
    /// Build per-axis curriculum SFT files and verify them.
    AssembleSft {
        #[arg(long)]
        axes: Option<String>,
        #[arg(long)]
        test_count: Option<usize>,
        /// Run `sft.trainer_command` on each manifest.
        #[arg(long)]
        train: bool,
    },
    /// Score base and tuned predictions against references.
    Evaluate {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        tuned: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge evaluation reports into one table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ingest, split, gen-candidates, judge, synthetic human selections, assemble-sft.
    Pipeline {
        /// Synthetic units for AI judging.
        #[arg(long)]
        units: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        axes: Option<String>,
        /// Synthetic human selections per axis, drawn from an equally sized pool.
        #[arg(long)]
        synthetic_human: Option<usize>,
        /// Human units held out as test; defaults to a fifth of the human units.
        #[arg(long)]
        human_test: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Rationale,
    Axis,
}

#[derive(Subcommand)]
enum SurveyCommand {
    /// Write survey definitions for the pool partition.
    Prepare {
        #[arg(long, value_enum, default_value = "axis")]
        kind: KindArg,
        #[arg(long)]
        axes: Option<String>,
        /// Post the definitions to a running service at this base URL.
        #[arg(long, value_name = "URL")]
        post: Option<String>,
    },
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Export selections to survey/exports.
    Export {
        /// Service base URL; reads the local data directory when omitted.
        #[arg(long)]
        url: Option<String>,
        /// Survey ids; defaults to one per configured axis.
        #[arg(long, value_delimiter = ',')]
        surveys: Vec<String>,
        #[arg(long)]
        include_flagged: bool,
    },
    /// Mock runs: deterministic human selections for the first `count` pool units.
    Synthesize {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        axes: Option<String>,
    },
}

fn axes_arg(spec: Option<&str>, cfg: &RunConfig) -> anyhow::Result<Vec<AxisKey>> {
    match spec {
        Some(s) => Ok(AxisKey::parse_list(s)?),
        None => Ok(cfg.axes()),
    }
}

fn clock(cli: &Cli) -> anyhow::Result<Clock> {
    let secs = match cli.fixed_time {
        Some(s) => Some(s),
        None => match std::env::var("SOURCE_DATE_EPOCH") {
            Ok(v) => Some(v.trim().parse().context("SOURCE_DATE_EPOCH is not an integer")?),
            Err(_) => cli.mock.then_some(0),
        },
    };
    match secs {
        Some(s) => Clock::from_epoch_secs(s).context("fixed time out of range"),
        None => Ok(Clock::System),
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.run_dir {
        cfg.run_dir = Some(dir.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(c) = cli.concurrency {
        cfg.concurrency = c;
    }
    if cli.mock {
        cfg.force_mock();
    }
    match &cli.command {
        Command::GenCandidates { n: Some(n) } => cfg.candidates.n = *n,
        Command::Pipeline { units, n, axes, synthetic_human, human_test } => {
            if let Some(units) = units {
                let pool = synthetic_human.unwrap_or(0);
                cfg.corpus.paths.clear();
                cfg.corpus.synthetic_units = Some(units + pool);
                cfg.corpus.survey_pool = pool;
            }
            if let Some(h) = synthetic_human {
                cfg.sft.synthetic_human = *h;
            }
            if let Some(n) = n {
                cfg.candidates.n = *n;
            }
            if let Some(axes) = axes {
                cfg.judge.axes = config::AxesSpec::Text(axes.clone());
            }
            cfg.sft.test_count = human_test.unwrap_or(cfg.sft.synthetic_human / 5);
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    if let Command::Report { inputs, out } = &cli.command {
        return stages::report(inputs, out.as_deref());
    }
    let cfg = load_config(cli)?;
    let ctx = Ctx::new(cfg, clock(cli)?, cli.mock)?;
    match &cli.command {
        Command::Ingest { inputs } => stages::ingest(&ctx, inputs),
        Command::Split { test_count } => stages::split(&ctx, *test_count),
        Command::GenCandidates { .. } => stages::gen_candidates(&ctx),
        Command::Judge { axes, reserved } => stages::judge(&ctx, &axes_arg(axes.as_deref(), &ctx.cfg)?, reserved),
        Command::Survey(cmd) => match cmd {
            SurveyCommand::Prepare { kind, axes, post } => {
                let kind = match kind {
                    KindArg::Rationale => SurveyKind::Rationale,
                    KindArg::Axis => SurveyKind::Axis,
                };
                stages::survey_prepare(&ctx, kind, &axes_arg(axes.as_deref(), &ctx.cfg)?, post.as_deref())
            }
            SurveyCommand::Serve { bind } => stages::survey_serve(&ctx, bind.as_deref()),
            SurveyCommand::Export { url, surveys, include_flagged } => {
                let surveys = if surveys.is_empty() {
                    ctx.cfg.axes().iter().map(|a| a.to_string()).collect()
                } else {
                    surveys.clone()
                };
                stages::survey_export(&ctx, url.as_deref(), &surveys, *include_flagged)
            }
            SurveyCommand::Synthesize { count, axes } => {
                stages::survey_synthesize(&ctx, &axes_arg(axes.as_deref(), &ctx.cfg)?, *count)
            }
        },
        Command::AssembleSft { axes, test_count, train } => {
            stages::assemble_sft(&ctx, &axes_arg(axes.as_deref(), &ctx.cfg)?, *test_count, *train)
        }
        Command::Evaluate { base, tuned, out } => stages::evaluate(&ctx, base, tuned, out.as_deref()),
        Command::Report { .. } => unreachable!("handled above"),
        Command::Pipeline { .. } => {
            stages::pipeline(&ctx, &PipelinePlan { axes: ctx.cfg.axes(), synthetic_human: ctx.cfg.sft.synthetic_human })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(Outcome { skipped: 0 }) => ExitCode::SUCCESS,
        Ok(Outcome { skipped }) => {
            eprintln!("completed with {skipped} skipped unit(s); see the *.skipped.jsonl files");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
