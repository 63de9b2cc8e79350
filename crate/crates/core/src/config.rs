//! Run configuration: a strict TOML schema with defaults.
//!
//! Parsing walks the spanned document produced by the `toml` parser so that
//! every problem (unknown key, type mismatch, constraint violation) is
//! reported together with its dotted key path and line. All problems are
//! collected before failing. [`RunConfig::to_toml`] writes the fully
//! resolved configuration; parsing that text yields the same value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::grid::ops::Advection;
use crate::grid::{BcMode, GridSpec};
use crate::params::{Coefficient, Fault, ModelParams, Profile};
use crate::timeloop::{DtPolicy, RunSettings, StepControl};

/// Initial-condition selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Small random perturbation of a uniform mixture, `u = 0`, `F = I`.
    Spinodal,
    /// Circular thrombus (`φ = 1`) in fluid, `u = 0`, `F = I`.
    Bubble,
    /// Wall-attached thrombus in a recirculating channel flow.
    ChannelThrombus,
    /// Uniform `φ`, `u = 0`, `F = I`.
    Rest,
    /// Smooth single-mode `φ` in a smooth vortex, `F = I`.
    Smooth,
    /// State read from `initial.checkpoint`.
    Checkpoint,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Spinodal,
        Preset::Bubble,
        Preset::ChannelThrombus,
        Preset::Rest,
        Preset::Smooth,
        Preset::Checkpoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Spinodal => "spinodal",
            Preset::Bubble => "bubble",
            Preset::ChannelThrombus => "channel-thrombus",
            Preset::Rest => "rest",
            Preset::Smooth => "smooth",
            Preset::Checkpoint => "checkpoint",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub preset: Preset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Seed of the random perturbation (spinodal).
    pub seed: u64,
    /// Mean of `φ` (spinodal, rest, smooth).
    pub phi_mean: f64,
    /// Amplitude of the random perturbation (spinodal) or of the cosine
    /// mode (smooth).
    pub noise: f64,
    /// Thrombus radius as a fraction of the shorter box side.
    pub radius: f64,
    /// Thrombus centre as fractions of the box extents.
    pub center: [f64; 2],
    /// Peak speed scale of the initial flow (channel-thrombus, smooth).
    pub flow_speed: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            preset: Preset::Rest,
            checkpoint: None,
            seed: 1,
            phi_mean: 0.5,
            noise: 0.05,
            radius: 0.2,
            center: [0.5, 0.5],
            flow_speed: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtKind {
    Fixed,
    Cfl,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt_policy: DtKind,
    /// Step for `fixed`, upper bound for `cfl`.
    pub dt: f64,
    pub cfl_safety: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            t_end: 0.1,
            dt_policy: DtKind::Fixed,
            dt: 1e-3,
            cfl_safety: 0.5,
            max_steps: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub ch_tol: f64,
    pub visc_tol: f64,
    pub proj_tol: f64,
    pub max_iter: u64,
    pub advection: Advection,
    /// Worker threads for data-parallel kernels.
    pub threads: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            ch_tol: 1e-10,
            visc_tol: 1e-10,
            proj_tol: 1e-10,
            max_iter: 10_000,
            advection: Advection::Upwind,
            threads: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub diagnostics_every: u64,
    pub vtk_every: u64,
    pub checkpoint_every: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            diagnostics_every: 1,
            vtk_every: 0,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Constant `C₁` of the existence horizon (relative comparisons only).
    pub c1: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { c1: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Cells per axis of the invariant scenarios.
    pub n: u64,
    pub fault: Fault,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { n: 32, fault: Fault::None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsConfig {
    /// `taylor-green`, `spinodal`, `swirl` or `coupled`.
    pub case: String,
    /// Grids of the spatial study.
    pub n_list: Vec<u64>,
    /// Spatial study step `dt = dt_scale · h²`.
    pub dt_scale: f64,
    /// Steps of the temporal study.
    pub dt_list: Vec<f64>,
    /// Grid of the temporal study.
    pub temporal_n: u64,
    pub t_end: f64,
}

impl Default for MmsConfig {
    fn default() -> Self {
        MmsConfig {
            case: "coupled".into(),
            n_list: vec![16, 32, 64],
            dt_scale: 0.25,
            dt_list: vec![4e-3, 2e-3, 1e-3],
            temporal_n: 64,
            t_end: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalerkinConfig {
    /// Cells per axis of the reference grid.
    pub grid_n: u64,
    /// Truncation levels; `0` stands for the full dimension.
    pub n_list: Vec<u64>,
    pub dt: f64,
    pub t_end: f64,
}

impl Default for GalerkinConfig {
    fn default() -> Self {
        GalerkinConfig {
            grid_n: 16,
            n_list: vec![4, 16, 64, 0],
            dt: 1e-4,
            t_end: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub steps: u64,
    pub warmup: u64,
    pub sizes: Vec<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            steps: 100,
            warmup: 10,
            sizes: vec![64, 128],
        }
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub model: ModelParams,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub diagnostics: DiagnosticsConfig,
    pub verify: VerifyConfig,
    pub mms: MmsConfig,
    pub galerkin: GalerkinConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSpec {
                lx: 1.0,
                ly: 1.0,
                nx: 32,
                ny: 32,
                bc: BcMode::Physical,
            },
            model: ModelParams::default(),
            initial: InitialConfig::default(),
            time: TimeConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            verify: VerifyConfig::default(),
            mms: MmsConfig::default(),
            galerkin: GalerkinConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

/// One problem found while parsing a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted key path, empty for document-level syntax errors.
    pub path: String,
    /// 1-based line, 0 when the key is absent from the text.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.path.is_empty()) {
            (0, _) => write!(f, "{}: {}", self.path, self.message),
            (l, true) => write!(f, "line {l}: {}", self.message),
            (l, false) => write!(f, "line {l}: {}: {}", self.path, self.message),
        }
    }
}

fn issues_to_error(issues: &[ConfigIssue]) -> Error {
    Error::Config(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"))
}

struct Ctx<'s> {
    text: &'s str,
    issues: Vec<ConfigIssue>,
    lines: BTreeMap<String, usize>,
}

impl Ctx<'_> {
    fn line_of(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn push(&mut self, path: &str, line: usize, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            path: path.to_string(),
            line,
            message: message.into(),
        });
    }

    /// Constraint error at a key, using the line the key was read from.
    fn constraint(&mut self, path: &str, message: impl Into<String>) {
        let line = self.lines.get(path).copied().unwrap_or(0);
        self.push(path, line, message);
    }
}

struct Section<'t, 'i> {
    path: String,
    entries: Vec<(&'t Spanned<std::borrow::Cow<'i, str>>, &'t Spanned<DeValue<'i>>)>,
    used: BTreeSet<String>,
}

fn type_name(v: &DeValue) -> &'static str {
    match v {
        DeValue::String(_) => "string",
        DeValue::Integer(_) => "integer",
        DeValue::Float(_) => "float",
        DeValue::Boolean(_) => "boolean",
        DeValue::Datetime(_) => "datetime",
        DeValue::Array(_) => "array",
        DeValue::Table(_) => "table",
    }
}

fn as_f64(v: &DeValue) -> Option<f64> {
    match v {
        DeValue::Float(f) => f.as_str().parse().ok(),
        DeValue::Integer(i) => i64::from_str_radix(i.as_str(), i.radix()).ok().map(|x| x as f64),
        _ => None,
    }
}

fn as_u64(v: &DeValue) -> Option<u64> {
    match v {
        DeValue::Integer(i) => u64::from_str_radix(i.as_str(), i.radix()).ok(),
        _ => None,
    }
}

impl<'t, 'i> Section<'t, 'i> {
    fn new(path: &str, table: Option<&'t DeTable<'i>>) -> Self {
        Section {
            path: path.to_string(),
            entries: table.map(|t| t.iter().collect()).unwrap_or_default(),
            used: BTreeSet::new(),
        }
    }

    fn key_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn take(&mut self, ctx: &mut Ctx, key: &str) -> Option<&'t Spanned<DeValue<'i>>> {
        self.used.insert(key.to_string());
        let (k, v) = self.entries.iter().find(|(k, _)| k.get_ref().as_ref() == key).copied()?;
        let line = ctx.line_of(&k.span());
        ctx.lines.insert(self.key_path(key), line);
        Some(v)
    }

    fn typed<T>(&mut self, ctx: &mut Ctx, key: &str, default: T, want: &str, conv: impl Fn(&DeValue) -> Option<T>) -> T {
        let Some(v) = self.take(ctx, key) else {
            return default;
        };
        match conv(v.get_ref()) {
            Some(x) => x,
            None => {
                let line = ctx.line_of(&v.span());
                let path = self.key_path(key);
                ctx.push(&path, line, format!("expected {want}, found {}", type_name(v.get_ref())));
                default
            }
        }
    }

    fn f64(&mut self, ctx: &mut Ctx, key: &str, default: f64) -> f64 {
        self.typed(ctx, key, default, "a number", as_f64)
    }

    fn opt_f64(&mut self, ctx: &mut Ctx, key: &str) -> Option<f64> {
        self.typed(ctx, key, None, "a number", |v| as_f64(v).map(Some))
    }

    fn u64(&mut self, ctx: &mut Ctx, key: &str, default: u64) -> u64 {
        self.typed(ctx, key, default, "a non-negative integer", as_u64)
    }

    fn opt_u64(&mut self, ctx: &mut Ctx, key: &str) -> Option<u64> {
        self.typed(ctx, key, None, "a non-negative integer", |v| as_u64(v).map(Some))
    }

    fn string(&mut self, ctx: &mut Ctx, key: &str, default: &str) -> String {
        self.typed(ctx, key, default.to_string(), "a string", |v| v.as_str().map(str::to_string))
    }

    fn opt_string(&mut self, ctx: &mut Ctx, key: &str) -> Option<String> {
        self.typed(ctx, key, None, "a string", |v| v.as_str().map(|s| Some(s.to_string())))
    }

    fn choice<T: Copy>(&mut self, ctx: &mut Ctx, key: &str, default: T, options: &[(&str, T)]) -> T {
        let Some(v) = self.take(ctx, key) else {
            return default;
        };
        let names: Vec<_> = options.iter().map(|(n, _)| format!("\"{n}\"")).collect();
        let line = ctx.line_of(&v.span());
        let path = self.key_path(key);
        match v.get_ref().as_str() {
            Some(s) => match options.iter().find(|(n, _)| *n == s) {
                Some((_, x)) => *x,
                None => {
                    ctx.push(&path, line, format!("unknown value \"{s}\", expected one of {}", names.join(", ")));
                    default
                }
            },
            None => {
                ctx.push(&path, line, format!("expected one of {}, found {}", names.join(", "), type_name(v.get_ref())));
                default
            }
        }
    }

    fn list<T: Clone>(&mut self, ctx: &mut Ctx, key: &str, default: &[T], want: &str, conv: impl Fn(&DeValue) -> Option<T>) -> Vec<T> {
        let Some(v) = self.take(ctx, key) else {
            return default.to_vec();
        };
        let line = ctx.line_of(&v.span());
        let path = self.key_path(key);
        let Some(arr) = v.get_ref().as_array() else {
            ctx.push(&path, line, format!("expected an array of {want}, found {}", type_name(v.get_ref())));
            return default.to_vec();
        };
        let mut out = Vec::new();
        for (k, item) in arr.iter().enumerate() {
            match conv(item.get_ref()) {
                Some(x) => out.push(x),
                None => {
                    let line = ctx.line_of(&item.span());
                    ctx.push(&format!("{path}[{k}]"), line, format!("expected {want}, found {}", type_name(item.get_ref())));
                    return default.to_vec();
                }
            }
        }
        out
    }

    fn table(&mut self, ctx: &mut Ctx, key: &str) -> Section<'t, 'i> {
        let path = self.key_path(key);
        match self.take(ctx, key) {
            None => Section::new(&path, None),
            Some(v) => match v.get_ref().as_table() {
                Some(t) => Section::new(&path, Some(t)),
                None => {
                    let line = ctx.line_of(&v.span());
                    ctx.push(&path, line, format!("expected a table, found {}", type_name(v.get_ref())));
                    Section::new(&path, None)
                }
            },
        }
    }

    /// Reports every key that was never requested.
    fn finish(self, ctx: &mut Ctx) {
        for (k, _) in &self.entries {
            let name = k.get_ref().as_ref();
            if !self.used.contains(name) {
                let line = ctx.line_of(&k.span());
                let path = self.key_path(name);
                ctx.push(&path, line, "unknown key");
            }
        }
    }
}

const PROFILES: [(&str, Profile); 3] = [
    ("constant", Profile::Constant),
    ("linear", Profile::Linear),
    ("smoothstep", Profile::Smoothstep),
];

fn read_coefficient(ctx: &mut Ctx, parent: &mut Section, key: &str, default: Coefficient) -> Coefficient {
    let mut s = parent.table(ctx, key);
    let c = Coefficient {
        profile: s.choice(ctx, "profile", default.profile, &PROFILES),
        min: s.f64(ctx, "min", default.min),
        max: s.f64(ctx, "max", default.max),
    };
    s.finish(ctx);
    c
}

fn read(ctx: &mut Ctx, root: &DeTable) -> RunConfig {
    let d = RunConfig::default();
    let mut top = Section::new("", Some(root));

    let mut s = top.table(ctx, "grid");
    let grid = GridSpec {
        lx: s.f64(ctx, "lx", d.grid.lx),
        ly: s.f64(ctx, "ly", d.grid.ly),
        nx: s.u64(ctx, "nx", d.grid.nx as u64) as usize,
        ny: s.u64(ctx, "ny", d.grid.ny as u64) as usize,
        bc: s.choice(ctx, "bc", d.grid.bc, &[("physical", BcMode::Physical), ("periodic", BcMode::Periodic)]),
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "model");
    let m = &d.model;
    let model = ModelParams {
        rho: s.f64(ctx, "rho", m.rho),
        lambda: s.f64(ctx, "lambda", m.lambda),
        gamma: s.f64(ctx, "gamma", m.gamma),
        tau: s.f64(ctx, "tau", m.tau),
        lambda_e: s.f64(ctx, "lambda_e", m.lambda_e),
        h: s.f64(ctx, "h", m.h),
        alpha: s.f64(ctx, "alpha", m.alpha),
        beta: s.f64(ctx, "beta", m.beta),
        eta: read_coefficient(ctx, &mut s, "eta", m.eta),
        kappa: read_coefficient(ctx, &mut s, "kappa", m.kappa),
        stabilization: s.opt_f64(ctx, "stabilization"),
        fault: Fault::None,
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "initial");
    let di = &d.initial;
    let presets: Vec<(&str, Preset)> = Preset::ALL.iter().map(|p| (p.as_str(), *p)).collect();
    let center = s.list(ctx, "center", &di.center, "a number", as_f64);
    let initial = InitialConfig {
        preset: s.choice(ctx, "preset", di.preset, &presets),
        checkpoint: s.opt_string(ctx, "checkpoint").map(PathBuf::from),
        seed: s.u64(ctx, "seed", di.seed),
        phi_mean: s.f64(ctx, "phi_mean", di.phi_mean),
        noise: s.f64(ctx, "noise", di.noise),
        radius: s.f64(ctx, "radius", di.radius),
        center: match center.as_slice() {
            [x, y] => [*x, *y],
            _ => {
                ctx.constraint("initial.center", "expected two numbers");
                di.center
            }
        },
        flow_speed: s.f64(ctx, "flow_speed", di.flow_speed),
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "time");
    let time = TimeConfig {
        t_end: s.f64(ctx, "t_end", d.time.t_end),
        dt_policy: s.choice(ctx, "dt_policy", d.time.dt_policy, &[("fixed", DtKind::Fixed), ("cfl", DtKind::Cfl)]),
        dt: s.f64(ctx, "dt", d.time.dt),
        cfl_safety: s.f64(ctx, "cfl_safety", d.time.cfl_safety),
        max_steps: s.opt_u64(ctx, "max_steps"),
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "solver");
    let solver = SolverConfig {
        ch_tol: s.f64(ctx, "ch_tol", d.solver.ch_tol),
        visc_tol: s.f64(ctx, "visc_tol", d.solver.visc_tol),
        proj_tol: s.f64(ctx, "proj_tol", d.solver.proj_tol),
        max_iter: s.u64(ctx, "max_iter", d.solver.max_iter),
        advection: s.choice(
            ctx,
            "advection",
            d.solver.advection,
            &[("upwind", Advection::Upwind), ("centered", Advection::Centered)],
        ),
        threads: s.u64(ctx, "threads", d.solver.threads),
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "output");
    let output = OutputConfig {
        diagnostics_every: s.u64(ctx, "diagnostics_every", d.output.diagnostics_every),
        vtk_every: s.u64(ctx, "vtk_every", d.output.vtk_every),
        checkpoint_every: s.u64(ctx, "checkpoint_every", d.output.checkpoint_every),
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "diagnostics");
    let diagnostics = DiagnosticsConfig {
        c1: s.f64(ctx, "c1", d.diagnostics.c1),
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "verify");
    let verify = VerifyConfig {
        n: s.u64(ctx, "n", d.verify.n),
        fault: s.choice(
            ctx,
            "fault",
            d.verify.fault,
            &[("none", Fault::None), ("flip_drag_sign", Fault::FlipDragSign)],
        ),
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "mms");
    let mms = MmsConfig {
        case: s.string(ctx, "case", &d.mms.case),
        n_list: s.list(ctx, "n_list", &d.mms.n_list, "a non-negative integer", as_u64),
        dt_scale: s.f64(ctx, "dt_scale", d.mms.dt_scale),
        dt_list: s.list(ctx, "dt_list", &d.mms.dt_list, "a number", as_f64),
        temporal_n: s.u64(ctx, "temporal_n", d.mms.temporal_n),
        t_end: s.f64(ctx, "t_end", d.mms.t_end),
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "galerkin");
    let galerkin = GalerkinConfig {
        grid_n: s.u64(ctx, "grid_n", d.galerkin.grid_n),
        n_list: s.list(ctx, "n_list", &d.galerkin.n_list, "a non-negative integer", as_u64),
        dt: s.f64(ctx, "dt", d.galerkin.dt),
        t_end: s.f64(ctx, "t_end", d.galerkin.t_end),
    };
    s.finish(ctx);

    let mut s = top.table(ctx, "bench");
    let bench = BenchConfig {
        steps: s.u64(ctx, "steps", d.bench.steps),
        warmup: s.u64(ctx, "warmup", d.bench.warmup),
        sizes: s.list(ctx, "sizes", &d.bench.sizes, "a non-negative integer", as_u64),
    };
    s.finish(ctx);
    top.finish(ctx);

    RunConfig {
        grid,
        model,
        initial,
        time,
        solver,
        output,
        diagnostics,
        verify,
        mms,
        galerkin,
        bench,
    }
}

fn check(ctx: &mut Ctx, c: &RunConfig) {
    let g = &c.grid;
    for (k, v) in [("grid.lx", g.lx), ("grid.ly", g.ly)] {
        if !(v.is_finite() && v > 0.0) {
            ctx.constraint(k, format!("must be a positive number, got {v}"));
        }
    }
    for (k, v) in [("grid.nx", g.nx), ("grid.ny", g.ny)] {
        if v < crate::grid::MIN_CELLS {
            ctx.constraint(k, format!("must be at least {}, got {v}", crate::grid::MIN_CELLS));
        }
    }
    for (k, msg) in c.model.violations() {
        ctx.constraint(&format!("model.{k}"), msg);
    }
    let positive = [
        ("time.dt", c.time.dt),
        ("time.cfl_safety", c.time.cfl_safety),
        ("diagnostics.c1", c.diagnostics.c1),
        ("mms.dt_scale", c.mms.dt_scale),
        ("mms.t_end", c.mms.t_end),
        ("galerkin.dt", c.galerkin.dt),
    ];
    for (k, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            ctx.constraint(k, format!("must be a positive number, got {v}"));
        }
    }
    for (k, v) in [("time.t_end", c.time.t_end), ("galerkin.t_end", c.galerkin.t_end)] {
        if !(v.is_finite() && v >= 0.0) {
            ctx.constraint(k, format!("must be a non-negative number, got {v}"));
        }
    }
    if c.time.cfl_safety > 0.9 {
        ctx.constraint("time.cfl_safety", format!("must not exceed the transport limit 0.9, got {}", c.time.cfl_safety));
    }
    for (k, v) in [
        ("solver.ch_tol", c.solver.ch_tol),
        ("solver.visc_tol", c.solver.visc_tol),
        ("solver.proj_tol", c.solver.proj_tol),
    ] {
        if !(v > 0.0 && v < 1.0) {
            ctx.constraint(k, format!("must lie in (0, 1), got {v}"));
        }
    }
    if c.solver.max_iter == 0 {
        ctx.constraint("solver.max_iter", "must be positive");
    }
    if c.initial.preset == Preset::Checkpoint && c.initial.checkpoint.is_none() {
        ctx.constraint("initial.checkpoint", "required when preset = \"checkpoint\"");
    }
    if !(c.initial.radius > 0.0 && c.initial.radius < 0.5) {
        ctx.constraint("initial.radius", format!("must lie in (0, 0.5), got {}", c.initial.radius));
    }
    if !(c.initial.noise >= 0.0 && c.initial.noise.is_finite()) {
        ctx.constraint("initial.noise", format!("must be non-negative, got {}", c.initial.noise));
    }
    for (k, v) in c.initial.center.iter().enumerate() {
        if !(0.0..=1.0).contains(v) {
            ctx.constraint("initial.center", format!("entry {k} must lie in [0, 1], got {v}"));
        }
    }
    if !c.initial.phi_mean.is_finite() || !c.initial.flow_speed.is_finite() {
        ctx.constraint("initial", "phi_mean and flow_speed must be finite");
    }
    if !["taylor-green", "spinodal", "swirl", "coupled"].contains(&c.mms.case.as_str()) {
        ctx.constraint(
            "mms.case",
            format!("unknown case \"{}\", expected taylor-green, spinodal, swirl or coupled", c.mms.case),
        );
    }
    if c.mms.n_list.len() < 2 || c.mms.n_list.iter().any(|&n| n < 4) {
        ctx.constraint("mms.n_list", "needs at least two grids of 4 or more cells");
    }
    if c.mms.dt_list.len() < 2 || c.mms.dt_list.iter().any(|&v| !(v > 0.0)) {
        ctx.constraint("mms.dt_list", "needs at least two positive steps");
    }
    if c.mms.temporal_n < 4 {
        ctx.constraint("mms.temporal_n", "must be at least 4");
    }
    if c.verify.n < 8 {
        ctx.constraint("verify.n", "must be at least 8");
    }
    if c.galerkin.grid_n < 4 {
        ctx.constraint("galerkin.grid_n", "must be at least 4");
    }
    if c.galerkin.n_list.is_empty() {
        ctx.constraint("galerkin.n_list", "must not be empty");
    }
    if c.bench.steps == 0 {
        ctx.constraint("bench.steps", "must be positive");
    }
    if c.bench.sizes.is_empty() || c.bench.sizes.iter().any(|&n| n < 4) {
        ctx.constraint("bench.sizes", "needs grids of 4 or more cells");
    }
}

/// Parses and validates a configuration, returning every problem found.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, Vec<ConfigIssue>> {
    let doc = match DeTable::parse(text) {
        Ok(doc) => doc,
        Err(e) => {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1)
                .unwrap_or(0);
            return Err(vec![ConfigIssue {
                path: String::new(),
                line,
                message: e.message().to_string(),
            }]);
        }
    };
    let mut ctx = Ctx {
        text,
        issues: Vec::new(),
        lines: BTreeMap::new(),
    };
    let cfg = read(&mut ctx, doc.get_ref());
    check(&mut ctx, &cfg);
    if ctx.issues.is_empty() {
        Ok(cfg)
    } else {
        ctx.issues.sort_by_key(|i| i.line);
        Err(ctx.issues)
    }
}

/// Splits `key=value` and parses the value as a TOML literal, falling back
/// to a bare string.
fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{spec}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

impl RunConfig {
    /// Strict parse; all problems are joined into one [`Error::Config`].
    pub fn from_toml(text: &str) -> Result<Self> {
        parse_config(text).map_err(|i| issues_to_error(&i))
    }

    /// Parses `text` after applying `key=value` overrides.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Self::from_toml(text);
        }
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for spec in overrides {
            let (path, value) = parse_override(spec)?;
            let mut table = &mut doc;
            for seg in &path[..path.len() - 1] {
                let entry = table
                    .entry(seg.clone())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                table = entry
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override `{spec}`: `{seg}` is not a table")))?;
            }
            table.insert(path[path.len() - 1].clone(), value);
        }
        let merged = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml(&merged)
    }

    /// Fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Model parameters with the configured fault fixture applied.
    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            fault: self.verify.fault,
            ..self.model
        }
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            dt: self.time.dt,
            ch_tol: self.solver.ch_tol,
            visc_tol: self.solver.visc_tol,
            proj_tol: self.solver.proj_tol,
            max_iter: self.solver.max_iter as usize,
            advection: self.solver.advection,
            cfl_limit: crate::elasticity::TRANSPORT_CFL,
            cfl_safety: self.time.cfl_safety,
            retry: true,
        }
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            t_end: self.time.t_end,
            max_steps: self.time.max_steps,
            policy: match self.time.dt_policy {
                DtKind::Fixed => DtPolicy::Fixed(self.time.dt),
                DtKind::Cfl => DtPolicy::Cfl {
                    safety: self.time.cfl_safety,
                    dt_max: self.time.dt,
                },
            },
            control: self.step_control(),
            diag_every: self.output.diagnostics_every,
            output_every: self.output.vtk_every,
            checkpoint_every: self.output.checkpoint_every,
        }
    }
}
