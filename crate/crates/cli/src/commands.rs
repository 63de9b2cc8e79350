//! Subcommand dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pfsi_core::checkpoint;
use pfsi_core::config::RunConfig;
use pfsi_core::forcing::NoForcing;
use pfsi_core::par::with_threads;
use pfsi_core::presets::initial_state;
use pfsi_core::timeloop::{existence_horizon, run, z_functional, Z_TERM_NAMES};
use pfsi_core::Error;
use pfsi_verify::mms::{spatial_study, temporal_study, MmsCase, MmsOptions};

use crate::output::DirectoryObserver;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "pfsi", version, about = "Phase-field fluid-structure interaction solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration; defaults are used for absent keys or files.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Override one configuration key, e.g. `--set grid.nx=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the coupled model and write diagnostics, snapshots and checkpoints.
    Run(Common),
    /// Manufactured-solution refinement studies in space and time.
    Mms(Common),
    /// Galerkin convergence study against the grid solver.
    Galerkin(Common),
    /// Invariant suite; exits with 1 when any check fails.
    Verify(Common),
    /// Per-phase throughput on the configured grid sizes.
    Bench(Common),
    /// Print the resolved configuration and the existence horizon of the initial data.
    Describe(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Run(c) | Command::Mms(c) | Command::Galerkin(c) | Command::Verify(c) | Command::Bench(c) | Command::Describe(c) => c,
        }
    }
}

/// Reads the configuration file (if any) and applies the overrides.
pub fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
        None => String::new(),
    };
    Ok(RunConfig::from_toml_with_overrides(&text, &common.overrides)?)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    prepare_out(out)?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    let p = cfg.model_params();
    let state = initial_state(cfg)?;
    let mut obs = DirectoryObserver::create(out, &p)?;
    let result = run(state, &p, &cfg.run_settings(), &NoForcing, &mut obs);
    obs.finish()?;
    let done = result?;
    let final_path = out.join("final.pfsc");
    checkpoint::save(&final_path, &done.state, &p)?;
    println!("{} steps to t = {:.6e}; final state in {}", done.steps, done.state.t, final_path.display());
    Ok(())
}

fn cmd_mms(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let m = &cfg.mms;
    let case = MmsCase::by_name(&m.case)
        .ok_or_else(|| CliError::Usage(format!("mms.case `{}` is not one of {:?}", m.case, MmsCase::names())))?;
    let opts = MmsOptions {
        tol: cfg.solver.ch_tol.min(cfg.solver.visc_tol).min(cfg.solver.proj_tol),
        ..MmsOptions::default()
    };
    let n_list: Vec<usize> = m.n_list.iter().map(|&n| n as usize).collect();
    prepare_out(out)?;
    let space = spatial_study(&case, &n_list, m.dt_scale, m.t_end, &opts)?;
    write(&out.join("mms_space.csv"), &space.to_csv())?;
    print!("{}", space.summary());
    let time = temporal_study(&case, m.temporal_n as usize, &m.dt_list, m.t_end, &opts)?;
    write(&out.join("mms_time.csv"), &time.to_csv())?;
    print!("{}", time.summary());
    Ok(())
}

fn cmd_galerkin(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    prepare_out(out)?;
    let study = pfsi_galerkin::convergence_study(cfg)?;
    write(&out.join("galerkin.csv"), &study.to_csv())?;
    print!("{}", study.summary());
    Ok(())
}

fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    prepare_out(out)?;
    let report = pfsi_verify::invariants::invariant_suite(cfg)?;
    write(&out.join("invariants.csv"), &report.to_csv())?;
    print!("{}", report.summary());
    match report.failures().count() {
        0 => Ok(()),
        failed => Err(CliError::Invariants { failed }),
    }
}

fn cmd_bench(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    prepare_out(out)?;
    let report = pfsi_verify::bench::bench(cfg, &[cfg.solver.threads as usize])?;
    write(&out.join("bench.csv"), &report.to_csv())?;
    print!("{}", report.summary());
    Ok(())
}

fn cmd_describe(cfg: &RunConfig) -> Result<(), CliError> {
    print!("{}", cfg.to_toml());
    let s = initial_state(cfg)?;
    let z = z_functional(&s, &cfg.model_params());
    println!("\n# initial data");
    println!("# Z(0) = {:.6e}", z.z);
    for (name, v) in Z_TERM_NAMES.iter().zip(z.z_terms) {
        println!("#   {name} = {v:.6e}");
    }
    println!("# existence horizon T0 = {:.6e} (C1 = {})", existence_horizon(z.z, cfg.diagnostics.c1), cfg.diagnostics.c1);
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    let cfg = load_config(common)?;
    let out = common.out.as_path();
    with_threads(cfg.solver.threads as usize, || match &cli.command {
        Command::Run(_) => cmd_run(&cfg, out),
        Command::Mms(_) => cmd_mms(&cfg, out),
        Command::Galerkin(_) => cmd_galerkin(&cfg, out),
        Command::Verify(_) => cmd_verify(&cfg, out),
        Command::Bench(_) => cmd_bench(&cfg, out),
        Command::Describe(_) => cmd_describe(&cfg),
    })
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
