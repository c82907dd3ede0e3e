use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use esgym::baselines::{self, Controller, EpisodeError, EpisodeReport, StepRow};
use esgym::protocol;
use esgym::scenario::build_default_scenario;
use esgym::ScenarioConfig;

#[derive(Parser)]
#[command(name = "esgym", version, about = "Cell on/off energy-saving simulator and controller runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its per-step and summary CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        /// all_on, random, threshold or external:<host:port>
        #[arg(long, default_value = "threshold")]
        controller: Controller,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every controller against every seed and write a summary table.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "all_on,random,threshold")]
        controllers: Vec<Controller>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
    },
    /// Serve the wire protocol until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 5555)]
        port: u16,
    },
    /// Check a scenario file and list every problem found.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Write the per-step energy and throughput series of one episode.
    ExportPlots {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "threshold")]
        controller: Controller,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the default scenario as JSON, as a starting point for edits.
    DefaultScenario {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; the built-in default is used when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the episode length.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Config(String),
    Aborted(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<EpisodeError> for Failure {
    fn from(e: EpisodeError) -> Self {
        match e {
            EpisodeError::Aborted { .. } => Failure::Aborted(e.to_string()),
            EpisodeError::Controller(_) | EpisodeError::Sim(esgym::Error::Config(_)) => Failure::Config(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut config = match &common.scenario {
        Some(path) => ScenarioConfig::from_json_file(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => build_default_scenario(42),
    };
    if let Some(steps) = common.steps {
        config.episode_steps = steps;
    }
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Failure::Config(problems.join("; ")));
    }
    Ok(config)
}

fn create_out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn steps_file(dir: &Path, report: &EpisodeReport) -> PathBuf {
    dir.join(format!("steps_{}_{}.csv", report.summary.controller, report.summary.seed))
}

fn print_summary(reports: &[EpisodeReport]) {
    println!(
        "{:<10} {:>6} {:>14} {:>14} {:>9} {:>12}",
        "controller", "seed", "energy_j", "mean_tput", "switches", "reward_sum"
    );
    for r in reports {
        let s = &r.summary;
        println!(
            "{:<10} {:>6} {:>14.1} {:>14.3} {:>9} {:>12.3}",
            s.controller, s.seed, s.energy_j, s.mean_tput_mbps, s.switches, s.reward_sum
        );
    }
}

/// Runs one episode, writing whatever steps completed even when it aborts.
fn episode(config: &ScenarioConfig, controller: &Controller, seed: u64, out: &Path) -> Result<EpisodeReport, Failure> {
    create_out_dir(out)?;
    match baselines::run_episode(config, controller, seed) {
        Ok(report) => Ok(report),
        Err(EpisodeError::Aborted { reason, report }) => {
            report.write_steps_csv(steps_file(out, &report)).context("writing partial steps")?;
            Err(Failure::Aborted(format!("episode aborted after {} steps: {reason}", report.steps.len())))
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, controller, seed } => {
            let config = load_config(&common)?;
            let seed = seed.unwrap_or(config.seed);
            let report = episode(&config, &controller, seed, &common.out)?;
            report.write_steps_csv(steps_file(&common.out, &report)).context("writing steps")?;
            baselines::write_summary_csv([&report.summary], common.out.join("summary.csv")).context("writing summary")?;
            print_summary(std::slice::from_ref(&report));
        }
        Command::Compare { common, controllers, seeds } => {
            let config = load_config(&common)?;
            create_out_dir(&common.out)?;
            let reports = baselines::compare(&config, &controllers, &seeds)?;
            for r in &reports {
                r.write_steps_csv(steps_file(&common.out, r)).context("writing steps")?;
            }
            baselines::write_summary_csv(reports.iter().map(|r| &r.summary), common.out.join("summary.csv"))
                .context("writing summary")?;
            print_summary(&reports);
        }
        Command::Serve { bind, port } => {
            let server = protocol::Server::bind((bind.as_str(), port)).context("binding")?;
            eprintln!("listening on {}", server.local_addr().context("local address")?);
            server.run().context("serving")?;
        }
        Command::Validate { scenario } => {
            let config = ScenarioConfig::from_json_file(&scenario)
                .map_err(|e| Failure::Config(format!("{}: {e}", scenario.display())))?;
            let problems = config.validate();
            if !problems.is_empty() {
                for p in &problems {
                    eprintln!("{p}");
                }
                return Err(Failure::Config(format!("{} problem(s) in {}", problems.len(), scenario.display())));
            }
            println!("{}: ok ({} gNBs, {} UEs)", scenario.display(), config.n_gnbs, config.n_ues);
        }
        Command::ExportPlots { common, controller, seed } => {
            let config = load_config(&common)?;
            let seed = seed.unwrap_or(config.seed);
            let report = episode(&config, &controller, seed, &common.out)?;
            let path = common.out.join(format!("plot_{}_{}.csv", controller.label(), seed));
            write_plot_series(&report.steps, config.control_period_s(), &path).context("writing plot series")?;
            println!("{}", path.display());
        }
        Command::DefaultScenario { out, seed } => {
            build_default_scenario(seed)
                .to_json_file(&out)
                .with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn write_plot_series(steps: &[StepRow], period_s: f64, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", "throughput_mbps", "power_w", "energy_j", "cumulative_energy_j", "active_gnbs"])?;
    let mut cumulative = 0.0;
    for row in steps {
        cumulative += row.energy_j;
        w.write_record([
            (row.step as f64 * period_s).to_string(),
            row.throughput_mbps.to_string(),
            row.power_w.to_string(),
            row.energy_j.to_string(),
            cumulative.to_string(),
            row.active_gnbs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Aborted(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
