//! Field snapshots (legacy VTK) and the diagnostics time series (CSV).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pfsi_core::checkpoint;
use pfsi_core::elasticity::trace_elastic;
use pfsi_core::grid::ops::face_to_cell;
use pfsi_core::momentum::physical_pressure;
use pfsi_core::timeloop::{DiagnosticsRow, RunObserver, SimState, Z_TERM_NAMES};
use pfsi_core::{Error, ModelParams, Result};

/// Column names of the diagnostics CSV, in order.
pub fn csv_columns() -> Vec<&'static str> {
    let mut cols = vec!["t", "dt", "mass", "E_total", "D_visc", "D_chem", "D_drag", "residual", "Z"];
    cols.extend(Z_TERM_NAMES);
    cols.extend(["det_drift", "div_max"]);
    cols
}

pub fn csv_header() -> String {
    csv_columns().join(",")
}

/// One CSV line (without newline); floats use the shortest round-trip form.
pub fn csv_row(r: &DiagnosticsRow) -> String {
    let e = &r.energy;
    let mut vals = vec![r.t, r.dt, r.mass, e.e_total, e.d_visc, e.d_chem, e.d_drag, e.residual, r.z.z];
    vals.extend(r.z.z_terms);
    vals.extend([r.det_drift, r.div_max]);
    vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
}

/// Writes a whole diagnostics series to `path`.
pub fn write_csv_series(rows: &[DiagnosticsRow], path: &Path) -> Result<()> {
    let mut s = csv_header();
    s.push('\n');
    for r in rows {
        s.push_str(&csv_row(r));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn scalars(out: &mut String, name: &str, vals: &[f64]) {
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in vals {
        let _ = writeln!(out, "{v:e}");
    }
}

/// Legacy ASCII structured-points rendering of `state`. Points are the cell
/// centres; `p` is the physical pressure.
pub fn vtk_string(state: &SimState, params: &ModelParams) -> Result<String> {
    let g = *state.grid();
    let (uc, vc) = face_to_cell(&state.u);
    let speed: Vec<f64> = uc.values().iter().zip(vc.values()).map(|(a, b)| a.hypot(*b)).collect();
    let pressure = physical_pressure(&state.p, &state.phi, params)?;
    let c = state.f.components();
    let det: Vec<f64> = (0..g.n_cells()).map(|k| c[0][k] * c[3][k] - c[1][k] * c[2][k]).collect();
    let tr = trace_elastic(&state.f);

    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "pfsi step {} t {:e}", state.n, state.t);
    let _ = writeln!(s, "ASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", g.nx, g.ny);
    let _ = writeln!(s, "ORIGIN {:e} {:e} 0", 0.5 * g.hx(), 0.5 * g.hy());
    let _ = writeln!(s, "SPACING {:e} {:e} 1", g.hx(), g.hy());
    let _ = writeln!(s, "POINT_DATA {}", g.n_cells());
    let fields: [(&str, &[f64]); 8] = [
        ("phi", state.phi.values()),
        ("p", pressure.values()),
        ("mu", state.mu.values()),
        ("u_mag", &speed),
        ("u_x", uc.values()),
        ("u_y", vc.values()),
        ("tr_FFt_minus_I", tr.values()),
        ("det_F", &det),
    ];
    for (name, vals) in fields {
        scalars(&mut s, name, vals);
    }
    let _ = writeln!(s, "VECTORS velocity double");
    for (a, b) in uc.values().iter().zip(vc.values()) {
        let _ = writeln!(s, "{a:e} {b:e} 0");
    }
    Ok(s)
}

pub fn write_vtk(state: &SimState, params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, vtk_string(state, params)?).map_err(|e| Error::io(path, e))
}

/// Reads the `SCALARS name` block of a legacy VTK file written by
/// [`vtk_string`].
pub fn read_vtk_scalars(text: &str, name: &str) -> Option<Vec<f64>> {
    let n: usize = text.lines().find_map(|l| l.strip_prefix("POINT_DATA "))?.trim().parse().ok()?;
    let mut lines = text.lines().skip_while(|l| l.split_whitespace().nth(1) != Some(name) || !l.starts_with("SCALARS"));
    lines.next()?;
    lines.next()?;
    lines.take(n).map(|l| l.trim().parse().ok()).collect()
}

/// Streams run products into a directory: `diagnostics.csv`, numbered
/// `state_NNNNNN.vtk` snapshots and `checkpoint_NNNNNN.pfsc` checkpoints.
pub struct DirectoryObserver {
    dir: PathBuf,
    params: ModelParams,
    csv: BufWriter<File>,
    csv_path: PathBuf,
}

impl DirectoryObserver {
    pub fn create(dir: &Path, params: &ModelParams) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("diagnostics.csv");
        let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut csv = BufWriter::new(file);
        writeln!(csv, "{}", csv_header()).map_err(|e| Error::io(&csv_path, e))?;
        Ok(DirectoryObserver {
            dir: dir.to_path_buf(),
            params: *params,
            csv,
            csv_path,
        })
    }

    pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
        dir.join(format!("checkpoint_{step:06}.pfsc"))
    }

    pub fn finish(mut self) -> Result<()> {
        self.csv.flush().map_err(|e| Error::io(&self.csv_path, e))
    }
}

impl RunObserver for DirectoryObserver {
    fn diagnostics(&mut self, row: &DiagnosticsRow) -> Result<()> {
        writeln!(self.csv, "{}", csv_row(row)).map_err(|e| Error::io(&self.csv_path, e))
    }

    fn snapshot(&mut self, state: &SimState) -> Result<()> {
        write_vtk(state, &self.params, &self.dir.join(format!("state_{:06}.vtk", state.n)))
    }

    fn checkpoint(&mut self, state: &SimState) -> Result<()> {
        checkpoint::save(&Self::checkpoint_path(&self.dir, state.n), state, &self.params)
    }
}
