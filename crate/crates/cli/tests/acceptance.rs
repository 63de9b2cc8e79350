//! Acceptance criteria, run in sequence with one PASS/FAIL line each.
//! Timing criteria run single-threaded and alone, so this target has its own
//! `main` instead of the parallel test harness.

use std::path::Path;
use std::time::Instant;

use pfsi_core::config::{DtKind, Preset, RunConfig};
use pfsi_core::forcing::NoForcing;
use pfsi_core::grid::ops::Advection;
use pfsi_core::grid::{BcMode, GridSpec, MacVelocity, TensorField};
use pfsi_core::par::with_threads;
use pfsi_core::phasefield::{cahn_hilliard_step, ch_energy, ChOptions};
use pfsi_core::presets::{initial_state, spinodal_phi};
use pfsi_core::timeloop::{run, DiagnosticsRow, RunObserver};
use pfsi_core::Result as CoreResult;
use pfsi_verify::dependence::continuous_dependence;
use pfsi_verify::invariants::det_drift_study;
use pfsi_verify::mms::{spatial_study, temporal_study, MmsCase, MmsErrors, MmsOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn failed(e: impl std::fmt::Display) -> Outcome {
    outcome(false, format!("error: {e}"))
}

/// Keeps the worst mass drift and divergence over the run.
struct Worst {
    mass0: Option<f64>,
    mass: f64,
    div: f64,
    steps: u64,
}

impl RunObserver for Worst {
    fn diagnostics(&mut self, row: &DiagnosticsRow) -> CoreResult<()> {
        let m0 = *self.mass0.get_or_insert(row.mass);
        self.mass = self.mass.max((row.mass - m0).abs());
        if row.dt > 0.0 {
            self.div = self.div.max(row.div_max);
            self.steps += 1;
        }
        Ok(())
    }
}

fn criteria_1_2() -> (Outcome, Outcome) {
    let mut cfg = RunConfig::default();
    cfg.grid.nx = 64;
    cfg.grid.ny = 64;
    cfg.initial.preset = Preset::Spinodal;
    cfg.time.dt_policy = DtKind::Cfl;
    cfg.time.t_end = 1e9;
    cfg.time.max_steps = Some(1000);
    let mut obs = Worst {
        mass0: None,
        mass: 0.0,
        div: 0.0,
        steps: 0,
    };
    let start = Instant::now();
    let res = initial_state(&cfg).and_then(|s| run(s, &cfg.model_params(), &cfg.run_settings(), &NoForcing, &mut obs));
    let wall = start.elapsed().as_secs_f64();
    match res {
        Err(e) => (failed(&e), failed(&e)),
        Ok(out) => {
            let ok_steps = out.steps == 1000 && obs.steps == 1000;
            (
                outcome(
                    ok_steps && obs.mass <= 1e-8 && wall <= 120.0,
                    format!("max |<phi^n> - <phi^0>| = {:.3e} over {} steps (<= 1e-8), t = {:.4e}, wall {wall:.1} s (<= 120 s)", obs.mass, out.steps, out.state.t),
                ),
                outcome(ok_steps && obs.div <= 1e-8, format!("max cell |div u| = {:.3e} over {} projections (<= 1e-8)", obs.div, obs.steps)),
            )
        }
    }
}

fn criterion_3() -> Outcome {
    let g = match GridSpec::unit_square(64, BcMode::Physical) {
        Ok(g) => g,
        Err(e) => return failed(e),
    };
    let cfg = RunConfig::default();
    let p = cfg.model_params();
    let opts = ChOptions {
        tol: cfg.solver.ch_tol,
        max_iter: cfg.solver.max_iter as usize,
        advection: Advection::Upwind,
    };
    let u = MacVelocity::zeros(&g);
    let f = TensorField::identity(&g);
    let mut phi = spinodal_phi(&g, 0.5, 0.05, 1);
    let e0 = ch_energy(&phi, &p);
    let mut rise = f64::NEG_INFINITY;
    for _ in 0..500 {
        match cahn_hilliard_step(&phi, &u, &f, cfg.time.dt, &p, &opts, None) {
            Ok(out) => {
                rise = rise.max(ch_energy(&out.phi, &p) - ch_energy(&phi, &p));
                phi = out.phi;
            }
            Err(e) => return failed(e),
        }
    }
    let e1 = ch_energy(&phi, &p);
    outcome(rise <= 1e-10, format!("largest per-step change of E_ch = {rise:.3e} (<= 1e-10); E_ch {e0:.6e} -> {e1:.6e}"))
}

fn orders(study: &pfsi_verify::mms::MmsStudy, fields: &[&str]) -> Result<Vec<(String, f64)>, String> {
    fields
        .iter()
        .map(|f| study.order(f).map(|o| (f.to_string(), o.order)).map_err(|e| e.to_string()))
        .collect()
}

fn render(orders: &[(String, f64)]) -> String {
    orders.iter().map(|(f, o)| format!("{f} {o:.3}")).collect::<Vec<_>>().join(", ")
}

fn criterion_4() -> Outcome {
    let case = MmsCase::coupled();
    let opts = MmsOptions {
        tol: 1e-11,
        ..MmsOptions::default()
    };
    match spatial_study(&case, &[32, 64, 128], 0.5, 0.004, &opts) {
        Err(e) => failed(e),
        Ok(s) => match orders(&s, &["u", "phi"]) {
            Err(e) => failed(e),
            Ok(o) => outcome(o.iter().all(|(_, v)| *v >= 1.8), format!("L2 orders {} (>= 1.8) on 32/64/128, dt = 0.5 h^2", render(&o))),
        },
    }
}

fn criteria_5_6() -> (Outcome, Outcome) {
    let case = MmsCase::coupled();
    let opts = MmsOptions {
        tol: 1e-10,
        ..MmsOptions::default()
    };
    match temporal_study(&case, 128, &[4e-3, 2e-3, 1e-3], 0.04, &opts) {
        Err(e) => (failed(&e), failed(&e)),
        Ok(s) => {
            let five = match orders(&s, &MmsErrors::FIELDS) {
                Err(e) => failed(e),
                Ok(o) => outcome(o.iter().all(|(_, v)| *v >= 0.9), format!("L2 orders {} (>= 0.9) on 128^2, dt 4e-3/2e-3/1e-3", render(&o))),
            };
            let six = match s.energy_order() {
                Some(Ok(fit)) => {
                    let r: Vec<String> = s.levels.iter().map(|l| format!("{:.3e}", l.energy_residual.unwrap_or(f64::NAN))).collect();
                    outcome(fit.order >= 0.9, format!("energy-identity residual order {:.3} (>= 0.9); max residuals {}", fit.order, r.join(", ")))
                }
                Some(Err(e)) => failed(e),
                None => outcome(false, "energy residual not tracked".into()),
            };
            (five, six)
        }
    }
}

fn criterion_7() -> Outcome {
    match det_drift_study(&[32, 64, 128], 0.1, 0.25) {
        Err(e) => failed(e),
        Ok((levels, fit)) => {
            let d: Vec<String> = levels.iter().map(|l| format!("{}:{:.3e}", l.n, l.drift)).collect();
            outcome(fit.order >= 0.9, format!("det drift order {:.3} (>= 0.9) under joint refinement; drift {}", fit.order, d.join(" ")))
        }
    }
}

fn criterion_8() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.initial.preset = Preset::Smooth;
    cfg.galerkin.grid_n = 16;
    cfg.galerkin.n_list = vec![4, 16, 64, 0];
    cfg.galerkin.dt = 1e-4;
    match pfsi_galerkin::convergence_study(&cfg) {
        Err(e) => failed(e),
        Ok(s) => {
            let d: Vec<String> = s.rows.iter().map(|r| format!("{:.3e}", r.distance)).collect();
            let ratio = s.full_ratio().unwrap_or(f64::INFINITY);
            outcome(
                s.non_increasing(0.0) && ratio <= 5.0,
                format!("distances {} (non-increasing); full / splitting estimate = {ratio:.3} (<= 5)", d.join(" > ")),
            )
        }
    }
}

fn criterion_9() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.grid.nx = 32;
    cfg.grid.ny = 32;
    cfg.initial.preset = Preset::Spinodal;
    cfg.time.dt = 1e-3;
    match continuous_dependence(&cfg, &[1e-3, 1e-4, 1e-5], 0.1) {
        Err(e) => failed(e),
        Ok(recs) => {
            let ratios: Vec<f64> = recs.iter().map(|r| r.ratio()).collect();
            let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
            let spread = hi / lo;
            let c = recs[0].fit_constant();
            let excess = recs.iter().map(|r| r.envelope_excess(c)).fold(0.0, f64::max);
            outcome(
                spread <= 2.0 && excess <= 1.0 + 1e-6,
                format!(
                    "D(T)/delta = {} (spread {spread:.4} <= 2); Gronwall C = {c:.3e} fitted on delta = 1e-3, worst D/envelope over all delta {excess:.6} (<= 1)",
                    ratios.iter().map(|r| format!("{r:.5}")).collect::<Vec<_>>().join(", ")
                ),
            )
        }
    }
}

fn cli(args: &[&str]) -> i32 {
    pfsi::main_with_args(std::iter::once("pfsi").chain(args.iter().copied()))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

fn criterion_10() -> Outcome {
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return failed(e),
    };
    let dir = |name: &str| tmp.path().join(name);
    let base = ["--set", "grid.nx=32", "--set", "grid.ny=32", "--set", "initial.preset=\"spinodal\"", "--set", "solver.threads=1", "--set", "time.t_end=0.04"];
    let mut codes = Vec::new();
    for name in ["a", "b"] {
        let out = dir(name);
        let mut args = vec!["run", "--out", out.to_str().unwrap_or_default()];
        args.extend(base);
        args.extend(["--set", "output.checkpoint_every=20"]);
        codes.push(cli(&args));
    }
    let csv_same = !read(&dir("a").join("diagnostics.csv")).is_empty() && read(&dir("a").join("diagnostics.csv")) == read(&dir("b").join("diagnostics.csv"));

    let ck = dir("a").join("checkpoint_000020.pfsc");
    let ck_set = format!("initial.checkpoint=\"{}\"", ck.display());
    let out_c = dir("c");
    let mut args = vec!["run", "--out", out_c.to_str().unwrap_or_default()];
    args.extend(base);
    args.extend(["--set", "initial.preset=\"checkpoint\"", "--set", &ck_set]);
    codes.push(cli(&args));
    let fa = read(&dir("a").join("final.pfsc"));
    let restart_same = !fa.is_empty() && fa == read(&out_c.join("final.pfsc"));
    outcome(
        codes.iter().all(|&c| c == 0) && csv_same && restart_same,
        format!("exit codes {codes:?}; single-thread reruns byte-identical CSV: {csv_same}; restart from step 20 bit-exact final state: {restart_same}"),
    )
}

fn criterion_11() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.initial.preset = Preset::Spinodal;
    cfg.bench.sizes = vec![64, 128];
    cfg.bench.steps = 10;
    cfg.bench.warmup = 2;
    match pfsi_verify::bench::bench(&cfg, &[1]) {
        Err(e) => failed(e),
        Ok(r) => {
            let per_step = r.rows.iter().find(|row| row.n == 128).map(|row| row.seconds_per_step()).unwrap_or(f64::INFINITY);
            let phases_ok = r.rows.len() == 2 && r.rows.iter().all(|row| row.throughput().iter().all(|t| t.is_finite() && *t > 0.0));
            print!("{}", r.summary().lines().map(|l| format!("      {l}\n")).collect::<String>());
            outcome(phases_ok && per_step <= 1.0, format!("per-phase throughput on 64^2 and 128^2 reported: {phases_ok}; 128^2 coupled step {per_step:.4} s (<= 1 s)"))
        }
    }
}

fn main() {
    let results = with_threads(1, || {
        let mut out: Vec<(u32, &str, Outcome)> = Vec::new();
        let mut report = |n: u32, name: &'static str, o: Outcome| {
            println!("criterion {n:>2} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            out.push((n, name, o));
        };
        let (c1, c2) = criteria_1_2();
        report(1, "mass conservation", c1);
        report(2, "incompressibility", c2);
        report(3, "decoupled CH energy monotonicity", criterion_3());
        report(4, "MMS spatial order", criterion_4());
        let (c5, c6) = criteria_5_6();
        report(5, "MMS temporal order", c5);
        report(6, "energy-identity residual order", c6);
        report(7, "det F fidelity", criterion_7());
        report(8, "Galerkin convergence", criterion_8());
        report(9, "continuous dependence", criterion_9());
        report(10, "determinism and restart", criterion_10());
        report(11, "bench surface", criterion_11());
        out
    });
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
