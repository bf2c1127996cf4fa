use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use stemgrow::scenario::{
    audit_frames, load_scenario, oracle_check, run_scenario, to_exact_json, twin_run, Perturbation, EXIT_INTEGRITY,
    EXIT_USAGE,
};

#[derive(Parser)]
#[command(name = "stemgrow", version, about = "Growing stems among rigid obstacles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Keep every n-th frame (overrides `output.stride`).
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Reserved; runs are deterministic and ignore it.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (TOML config or a previous run's manifest.json).
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario and a perturbed twin, and report their distance.
    Twin {
        config: PathBuf,
        /// Perturbation, e.g. `tilt:1e-3` or `tilt:1e-3@0,1,0`.
        #[arg(long)]
        perturb: Perturbation,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-check state invariants of a stored trajectory.
    Audit { frames: PathBuf },
    /// Re-solve stored reactions with the enumeration oracle.
    OracleCheck { frames: PathBuf },
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STEMGROW_LOG", "warn")).init();
    let cli = Cli::parse();
    if cli.seed.is_some() {
        info!("--seed is ignored: simulations are deterministic");
    }
    let result = match &cli.command {
        Command::Run { config, out } => load_scenario(config)
            .and_then(|c| run_scenario(&c, out, cli.stride))
            .map(|r| {
                println!(
                    "steps {} frames {} terminal {:?} exit {}",
                    r.steps, r.frames, r.terminal, r.exit_code
                );
                r.exit_code
            }),
        Command::Twin { config, perturb, out } => load_scenario(config)
            .and_then(|c| twin_run(&c, perturb, Some(out), cli.stride))
            .map(|r| {
                println!("{}", to_exact_json(&r.summary));
                0
            }),
        Command::Audit { frames } => audit_frames(frames).map(|r| {
            for f in &r.failures {
                println!("FAIL {f}");
            }
            println!(
                "frames {} max_unit_defect {:e} min_distance {:e} {}",
                r.frames,
                r.max_unit_defect,
                r.min_distance,
                if r.passed() { "ok" } else { "failed" }
            );
            if r.passed() { 0 } else { EXIT_INTEGRITY }
        }),
        Command::OracleCheck { frames } => oracle_check(frames).map(|r| {
            for m in &r.mismatches {
                println!("MISMATCH {m}");
            }
            println!(
                "checked {} skipped {} max_relative_error {:e} {}",
                r.checked,
                r.skipped,
                r.max_relative_error,
                if r.passed() { "ok" } else { "failed" }
            );
            if r.passed() { 0 } else { EXIT_INTEGRITY }
        }),
    };
    match result {
        Ok(code) => exit(code),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit(EXIT_USAGE)
        }
    }
}
