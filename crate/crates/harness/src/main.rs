use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use secnoma_core::ModelKind;
use secnoma_harness::config::{AxisValue, ExperimentConfig, Preset, SweepAxis};
use secnoma_harness::experiment::{self, write_sweep, Verdict};
use secnoma_harness::HarnessError;
use secnoma_learn::AgentKind;

#[derive(Parser)]
#[command(
    name = "secnoma",
    version,
    about = "Train and evaluate secrecy-aware power allocation agents"
)]
struct Cli {
    /// Base parameter set that the config file is merged over.
    #[arg(long, global = true, default_value = "desk", value_parser = parse_preset)]
    preset: Preset,
    /// Run a single seed instead of the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the learner.
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<AgentKind>,
    /// Override the uncertainty model: exact, worst-case, stochastic or bernstein.
    #[arg(long, global = true, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of one configuration.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train across values of one axis and aggregate final-window metrics.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// uncertainty, eve-position or battery-max.
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        /// Comma-separated values such as `0,10%,20%`, `A,B,C` or `10,15,20`.
        #[arg(long)]
        values: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train several methods on one configuration and compare them.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated methods, e.g. `masrddpg,ddpg`.
        #[arg(long)]
        methods: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<AgentKind, String> {
    s.parse()
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse()
}

fn load_config(cli: &Cli, path: Option<&Path>) -> Result<ExperimentConfig, HarnessError> {
    let base = cli.preset.config();
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::from_json_over(&base, &text)?
        }
        None => base,
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(m) = cli.method {
        cfg.method = m;
    }
    if let Some(k) = cli.model {
        cfg.env.uncertainty.kind = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(cli, config.as_deref())?;
            let summary = experiment::run(&cfg, out)?;
            println!("run_id\tsecrecy\tenergy_J\tpfee");
            for r in &summary.runs {
                let w = &r.final_window;
                println!(
                    "{}\t{:.4}\t{:.6}\t{:.3}",
                    r.run_id, w.avg_secrecy_rate, w.energy_consumption, w.pfee
                );
            }
            let a = &summary.aggregate;
            println!(
                "mean\t{:.4} ± {:.4}\t{:.6} ± {:.6}\t{:.3} ± {:.3}",
                a.avg_secrecy_rate.mean,
                a.avg_secrecy_rate.std,
                a.energy_consumption.mean,
                a.energy_consumption.std,
                a.pfee.mean,
                a.pfee.std
            );
            println!("wrote {}", out.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = load_config(cli, config.as_deref())?;
            let values = AxisValue::parse_list(*axis, values).map_err(HarnessError::Config)?;
            let table = experiment::sweep(&cfg, *axis, &values)?;
            write_sweep(&table, out)?;
            println!("{}\tsecrecy\tenergy_J\tpfee", axis);
            for p in &table.points {
                let a = &p.aggregate;
                println!(
                    "{}\t{:.4} ± {:.4}\t{:.6} ± {:.6}\t{:.3} ± {:.3}",
                    p.value,
                    a.avg_secrecy_rate.mean,
                    a.avg_secrecy_rate.std,
                    a.energy_consumption.mean,
                    a.energy_consumption.std,
                    a.pfee.mean,
                    a.pfee.std
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Compare { config, methods, out } => {
            let cfg = load_config(cli, config.as_deref())?;
            let methods: Vec<AgentKind> = methods
                .split(',')
                .filter(|m| !m.trim().is_empty())
                .map(|m| m.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(HarnessError::Config)?;
            let report = experiment::compare(&cfg, &methods)?;
            println!("a\tb\tmetric\tmean_a\tmean_b\tdiff_%\tpooled_se\tverdict");
            for r in &report.rows {
                let verdict = match (r.verdict, r.significant) {
                    (Verdict::Tied, _) => "tied",
                    (Verdict::Better, true) => "better",
                    (Verdict::Worse, true) => "worse",
                    (_, false) => "within noise",
                };
                println!(
                    "{}\t{}\t{}\t{:.4}\t{:.4}\t{:+.1}\t{:.4}\t{}",
                    r.a, r.b, r.metric, r.mean_a, r.mean_b, r.relative_percent, r.pooled_std_err, verdict
                );
            }
            if let Some(out) = out {
                std::fs::create_dir_all(out)?;
                std::fs::write(out.join("compare.json"), serde_json::to_string_pretty(&report)?)?;
                println!("wrote {}", out.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
