use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pmbm_slam::harness::{plot_dir, run_monte_carlo, run_oracle_suite, write_outputs, OracleConfig, RunConfig};
use pmbm_slam::models::Preset;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "slam", version, about = "Batch radio SLAM with sampled data association")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo runs on a simulated scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_preset)]
        preset: Option<Preset>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the sampler with the enumerated posterior on small fixtures.
    EnumerateCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Per-step RMSE and GOSPA curves from a run directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { config, runs, seed, preset, out } => {
            let mut cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(n) = runs {
                cfg.runs = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = preset {
                cfg.preset = p;
            }
            cfg.validate()?;
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let mc = run_monte_carlo(&cfg);
            write_outputs(&dir, &mc)?;
            let a = &mc.aggregate;
            for (i, r) in mc.runs.iter().enumerate() {
                match r {
                    Ok(r) => println!(
                        "run {i:>3}  nmi {:.4}  gospa {:.3} m  rmse {:.3} m  {:.1} s",
                        r.nmi_final, r.gospa.total, r.rmse_position, r.wall_clock_s
                    ),
                    Err(e) => println!("run {i:>3}  failed: {e}"),
                }
            }
            println!(
                "{} ok, {} failed | nmi {:.4} (tail {:.4}) | gospa {:.3} m | rmse position {:.3} m, heading {:.4} rad, bias {:.3} m",
                a.successes, a.failures, a.mean_nmi_final, a.mean_nmi_tail, a.mean_gospa,
                a.rmse_position, a.rmse_heading, a.rmse_bias
            );
            println!("outputs in {}", dir.display());
            if a.successes == 0 {
                bail!("every run failed");
            }
        }
        Cmd::EnumerateCheck { config } => {
            let cfg = OracleConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let results = run_oracle_suite(&cfg)?;
            for r in &results {
                println!(
                    "{:<24} {} meas {:>4} partitions  top {:.3}  tv {:.4}  {:.1} s  {}",
                    r.fixture, r.measurements, r.partitions, r.top_probability, r.tv, r.seconds,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            if results.iter().any(|r| !r.pass) {
                bail!("total variation above {}", cfg.tv_max);
            }
        }
        Cmd::Plot { input } => {
            for f in plot_dir(&input)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}
