use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use odfuse::pipeline::{read_report, summarize_report};
use odfuse::synthetic::{write_to_dir, TicketMix};
use odfuse::{
    generate_scenario, run_pipeline, run_stage, PipelineConfig, Stage, SyntheticScenario,
};

#[derive(Parser)]
#[command(
    name = "odfuse",
    version,
    about = "Weekly OD matrix estimation from tickets, counters and timetables"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Path to the `key = value` config file.
    #[arg(short, long)]
    config: PathBuf,

    /// Override a config key, e.g. `--set rng_seed=7`. Paths resolve against the working directory.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::from_file(&self.config)?;
        let cwd = std::env::current_dir().context("reading working directory")?;
        for o in &self.overrides {
            cfg.apply_override(o, &cwd)?;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioKind {
    /// Ten stations, three lines, eight weeks.
    Standard,
    /// Two stations, one line, one week.
    Tiny,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order.
    Run(ConfigArgs),
    /// Run one stage from the checkpoints of earlier stages.
    Stage {
        #[arg(value_parser = parse_stage)]
        name: Stage,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic scenario with ground truth and a config file.
    Generate {
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "standard")]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Fraction of rides whose counters go missing.
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        /// Sell a mix of weekly, ordinary and carnet tickets instead of weekly only.
        #[arg(long)]
        mixed_tickets: bool,
        /// Mark a station as interregional so its cells are gravity-filled.
        #[arg(long, value_name = "NAME")]
        interregional: Option<String>,
    },
    /// Summarize the run report of an output directory.
    Report {
        /// Output directory holding `run_report.json`.
        #[arg(conflicts_with = "config", required_unless_present = "config")]
        output_dir: Option<PathBuf>,
        /// Read the output directory from a config file instead.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Print the raw JSON report.
        #[arg(long)]
        json: bool,
    },
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse().map_err(|e: odfuse::Error| e.to_string())
}

fn generate(
    out: &Path,
    kind: ScenarioKind,
    seed: u64,
    dropout: f64,
    mixed: bool,
    interregional: Option<&str>,
) -> Result<()> {
    let mut s = match kind {
        ScenarioKind::Standard => SyntheticScenario::standard(seed),
        ScenarioKind::Tiny => SyntheticScenario::tiny(seed),
    };
    s.dropout = dropout;
    if mixed {
        s.ticket_mix = TicketMix::MIXED;
    }
    if let Some(name) = interregional {
        let st = s
            .stations
            .iter_mut()
            .find(|st| st.name == name)
            .with_context(|| format!("no station named `{name}` in the scenario"))?;
        st.interregional = true;
    }
    let data = generate_scenario(&s)?;
    write_to_dir(&data, seed, out)?;
    println!(
        "wrote {} stations, {} tickets, {} counter records, {} timetable stops to {}",
        data.registry.len(),
        data.tickets.len(),
        data.counters.len(),
        data.timetable.len(),
        out.display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let report = run_pipeline(&cfg)?;
            print!("{}", summarize_report(&report));
        }
        Command::Stage { name, config } => {
            let cfg = config.load()?;
            run_stage(&cfg, name)?;
            let report = read_report(&cfg.output_dir)?;
            print!("{}", summarize_report(&report));
        }
        Command::Generate {
            out,
            scenario,
            seed,
            dropout,
            mixed_tickets,
            interregional,
        } => generate(
            &out,
            scenario,
            seed,
            dropout,
            mixed_tickets,
            interregional.as_deref(),
        )?,
        Command::Report {
            output_dir,
            config,
            json,
        } => {
            let dir = match (output_dir, config) {
                (Some(d), _) => d,
                (None, Some(c)) => PipelineConfig::from_file(&c)?.output_dir,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let report = read_report(&dir)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", summarize_report(&report));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
