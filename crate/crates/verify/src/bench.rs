//! Wall-clock throughput of the three sub-steps of the coupled solver.

use std::fmt::Write as _;
use std::time::Instant;

use pfsi_core::config::RunConfig;
use pfsi_core::forcing::NoForcing;
use pfsi_core::par::with_threads;
use pfsi_core::presets::initial_state;
use pfsi_core::timeloop::{step_timed, PhaseTimes};

use crate::VerifyError;

/// Timings of `steps` measured steps on an `n × n` grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub threads: usize,
    pub steps: u64,
    /// `n² · steps`, counted exactly.
    pub cell_steps: u64,
    pub times: PhaseTimes,
    /// Wall-clock seconds of the measured steps.
    pub wall: f64,
}

impl BenchRow {
    /// Cells·steps per second of each phase (`cahn_hilliard`, `transport`,
    /// `momentum`) and of the whole step.
    pub fn throughput(&self) -> [f64; 4] {
        let c = self.cell_steps as f64;
        let t = &self.times;
        [c / t.cahn_hilliard, c / t.transport, c / t.momentum, c / self.wall]
    }

    pub fn seconds_per_step(&self) -> f64 {
        self.wall / self.steps as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Ratio of seconds per step between the largest and the smallest grid
    /// at the given thread count.
    pub fn scaling(&self, threads: usize) -> Option<f64> {
        let rows: Vec<&BenchRow> = self.rows.iter().filter(|r| r.threads == threads).collect();
        let lo = rows.iter().min_by_key(|r| r.n)?;
        let hi = rows.iter().max_by_key(|r| r.n)?;
        (hi.n > lo.n).then(|| hi.seconds_per_step() / lo.seconds_per_step())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "n,threads,steps,cell_steps,t_cahn_hilliard,t_transport,t_momentum,t_total,tp_cahn_hilliard,tp_transport,tp_momentum,tp_total\n",
        );
        for r in &self.rows {
            let tp = r.throughput();
            let _ = writeln!(
                s,
                "{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.n, r.threads, r.steps, r.cell_steps, r.times.cahn_hilliard, r.times.transport, r.times.momentum, r.wall, tp[0], tp[1], tp[2], tp[3]
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let tp = r.throughput();
            let _ = writeln!(
                s,
                "{:>4}² x{:<2} {:.4} s/step  cells·steps/s: CH {:.3e}  transport {:.3e}  momentum {:.3e}  total {:.3e}",
                r.n,
                r.threads,
                r.seconds_per_step(),
                tp[0],
                tp[1],
                tp[2],
                tp[3]
            );
        }
        let mut threads: Vec<usize> = self.rows.iter().map(|r| r.threads).collect();
        threads.dedup();
        for t in threads {
            if let Some(f) = self.scaling(t) {
                let _ = writeln!(s, "x{t}: largest/smallest grid time-per-step ratio {f:.2}");
            }
        }
        s
    }
}

/// Times `cfg.bench.steps` steps after `cfg.bench.warmup` untimed ones for
/// every size in `cfg.bench.sizes` (square grids on the configured domain)
/// and every entry of `threads`.
pub fn bench(cfg: &RunConfig, threads: &[usize]) -> Result<BenchReport, VerifyError> {
    if cfg.bench.steps == 0 {
        return Err(VerifyError::Input("bench.steps must be positive".into()));
    }
    let p = cfg.model_params();
    let ctrl = cfg.step_control();
    let mut report = BenchReport::default();
    for &t in threads {
        for &n in &cfg.bench.sizes {
            let mut c = cfg.clone();
            c.grid.nx = n as usize;
            c.grid.ny = n as usize;
            let row = with_threads(t, || -> Result<BenchRow, VerifyError> {
                let mut s = initial_state(&c)?;
                let mut discard = PhaseTimes::default();
                for _ in 0..cfg.bench.warmup {
                    s = step_timed(&s, &p, &ctrl, &NoForcing, &mut discard)?.0;
                }
                let mut times = PhaseTimes::default();
                let start = Instant::now();
                for _ in 0..cfg.bench.steps {
                    s = step_timed(&s, &p, &ctrl, &NoForcing, &mut times)?.0;
                }
                Ok(BenchRow {
                    n: n as usize,
                    threads: t,
                    steps: cfg.bench.steps,
                    cell_steps: n * n * cfg.bench.steps,
                    times,
                    wall: start.elapsed().as_secs_f64(),
                })
            })?;
            report.rows.push(row);
        }
    }
    Ok(report)
}
