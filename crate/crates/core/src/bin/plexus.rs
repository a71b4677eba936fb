use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plexus::experiments::{
    report, run_experiment, sweep, ExperimentConfig, ExperimentError, ExperimentOutput,
};
use plexus::membership::RoundNumber;
use plexus::sampler::sample_with_aggregator;
use plexus::simnet::{save_profiles, synthesize_profiles, LatencyMatrix, ProfileSpread};

#[derive(Parser)]
#[command(
    name = "plexus",
    version,
    about = "Trace-driven serverless federated learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        /// Only validate the config.
        #[arg(long)]
        validate: bool,
        /// Output root (default: $PLEXUS_OUT or ./plexus-out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the sample and aggregator of one round.
    Sample {
        config: PathBuf,
        #[arg(long)]
        round: u64,
    },
    /// Run a config once per value of one parameter, e.g. `s=10,20,40`.
    Sweep {
        config: PathBuf,
        spec: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic latency and device-profile traces.
    TracesGen {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 227)]
        cities: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ProfileSpread::default().median_uplink_bps)]
        uplink: f64,
        #[arg(long, default_value_t = ProfileSpread::default().median_downlink_bps)]
        downlink: f64,
        #[arg(long, default_value_t = ProfileSpread::default().median_sec_per_step)]
        sec_per_step: f64,
        #[arg(long, default_value_t = ProfileSpread::default().sigma)]
        sigma: f64,
        #[arg(long, default_value = "traces")]
        out: PathBuf,
    },
    /// Aggregate results into TTA/CTA/RTA tables and curve CSVs.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn print_run(out: &ExperimentOutput) {
    let s = &out.summary;
    println!(
        "{} ({}): final accuracy {:.4}, {:.3} GB, {:.2} device-hours -> {}",
        s.name,
        s.algorithm,
        s.mean.final_accuracy,
        s.mean.bytes_total / 1e9,
        s.mean.train_seconds_total / 3600.0,
        out.dir.display()
    );
    for note in &s.notes {
        println!("  note: {note}");
    }
}

fn exec(cli: Cli) -> Result<(), ExperimentError> {
    let root = |out: Option<PathBuf>| out.unwrap_or_else(plexus::experiments::output_root);
    match cli.command {
        Command::Run {
            config,
            validate,
            out,
        } => {
            let config = ExperimentConfig::load(&config)?;
            config.validate()?;
            if validate {
                println!("{}: ok ({})", config.name, config.hash());
                return Ok(());
            }
            print_run(&run_experiment(&config, &root(out))?);
        }
        Command::Sample { config, round } => {
            let config = ExperimentConfig::load(&config)?;
            config.validate()?;
            let (membership, _) = config.network()?;
            let s = sample_with_aggregator(RoundNumber::new(round)?, config.s, &membership)?;
            let ids: Vec<&str> = s.participants.iter().map(|n| n.as_str()).collect();
            println!("round {round}: {}", ids.join(" "));
            println!(
                "aggregator: {}",
                s.aggregator.as_ref().map_or("-", |a| a.as_str())
            );
        }
        Command::Sweep { config, spec, out } => {
            let config = ExperimentConfig::load(&config)?;
            for o in sweep(&config, &spec, &root(out))? {
                print_run(&o);
            }
        }
        Command::TracesGen {
            nodes,
            cities,
            seed,
            uplink,
            downlink,
            sec_per_step,
            sigma,
            out,
        } => {
            let spread = ProfileSpread {
                median_uplink_bps: uplink,
                median_downlink_bps: downlink,
                median_sec_per_step: sec_per_step,
                sigma,
            };
            std::fs::create_dir_all(&out)
                .map_err(|e| ExperimentError::Output(format!("{}: {e}", out.display())))?;
            let latency = out.join("latency.csv");
            let profiles = out.join("profiles.csv");
            LatencyMatrix::synthetic(cities, seed).save(&latency)?;
            save_profiles(&synthesize_profiles(nodes, &spread, seed), &profiles)?;
            println!("wrote {} and {}", latency.display(), profiles.display());
        }
        Command::Report { dirs, out } => {
            let (_, table) = report(&dirs, &out)?;
            print!("{table}");
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match exec(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
