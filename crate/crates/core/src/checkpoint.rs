//! Binary checkpoints of a [`SimState`] together with its grid and
//! parameters.
//!
//! Layout (all little-endian):
//!
//! | field | encoding |
//! |---|---|
//! | magic | the 4 bytes `PFSI` |
//! | version | `u32` (currently 1) |
//! | grid | `lx, ly: f64`, `nx, ny: u64`, `bc: u32` (0 physical, 1 periodic) |
//! | params | `rho, lambda, gamma, tau, lambda_e, h, alpha, beta: f64`; `eta` and `kappa` each as `profile: u32` (0 constant, 1 linear, 2 smoothstep), `min, max: f64`; `stabilization` as `present: u32`, `value: f64` |
//! | time | `t: f64`, `n: u64`, `dt_prev: f64` |
//! | fields | `u, v, p, phi, mu, F11, F12, F21, F22, u_prev, v_prev, phi_prev, F11_prev, F12_prev, F21_prev, F22_prev`, each as `len: u64` followed by `len` `f64` values |
//!
//! Floats are stored bit-exactly, so save → load → save reproduces the file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BcMode, GridSpec, MacVelocity, ScalarField, TensorField};
use crate::params::{Coefficient, ModelParams, Profile};
use crate::timeloop::SimState;

pub const MAGIC: &[u8; 4] = b"PFSI";
pub const VERSION: u32 = 1;

/// Little-endian byte sink.
#[derive(Clone, Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed array.
    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }

    pub fn grid(&mut self, g: &GridSpec) {
        self.f64(g.lx);
        self.f64(g.ly);
        self.u64(g.nx as u64);
        self.u64(g.ny as u64);
        self.u32(match g.bc {
            BcMode::Physical => 0,
            BcMode::Periodic => 1,
        });
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Little-endian byte source that reports truncation and bad values as
/// [`Error::Format`] against `path`.
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8], path: &'a Path) -> Self {
        Decoder { data, pos: 0, path }
    }

    pub fn error(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        match end {
            Some(end) => {
                let s = &self.data[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error(format!("truncated at byte {}", self.pos))),
        }
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    /// Length-prefixed array whose length must equal `expected`.
    pub fn f64s(&mut self, expected: usize, what: &str) -> Result<Vec<f64>> {
        let len = self.u64()?;
        if len != expected as u64 {
            return Err(self.error(format!("{what}: expected {expected} values, found {len}")));
        }
        (0..expected).map(|_| self.f64()).collect()
    }

    pub fn grid(&mut self) -> Result<GridSpec> {
        let lx = self.f64()?;
        let ly = self.f64()?;
        let nx = self.u64()? as usize;
        let ny = self.u64()? as usize;
        let bc = match self.u32()? {
            0 => BcMode::Physical,
            1 => BcMode::Periodic,
            k => return Err(self.error(format!("unknown boundary mode {k}"))),
        };
        GridSpec::new(lx, ly, nx, ny, bc).map_err(|e| self.error(e.to_string()))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(self.error(format!("{} trailing bytes", self.data.len() - self.pos)))
        }
    }
}

/// Checks the magic bytes and version of a file written with [`Encoder`].
pub fn read_header(d: &mut Decoder, magic: &[u8; 4], version: u32) -> Result<()> {
    let m = d.bytes(4)?;
    if m != magic {
        return Err(d.error(format!("bad magic {m:?}")));
    }
    let v = d.u32()?;
    if v != version {
        return Err(d.error(format!("unsupported version {v}")));
    }
    Ok(())
}

fn put_coefficient(e: &mut Encoder, c: &Coefficient) {
    e.u32(match c.profile {
        Profile::Constant => 0,
        Profile::Linear => 1,
        Profile::Smoothstep => 2,
    });
    e.f64(c.min);
    e.f64(c.max);
}

fn get_coefficient(d: &mut Decoder) -> Result<Coefficient> {
    let profile = match d.u32()? {
        0 => Profile::Constant,
        1 => Profile::Linear,
        2 => Profile::Smoothstep,
        k => return Err(d.error(format!("unknown coefficient profile {k}"))),
    };
    Ok(Coefficient {
        profile,
        min: d.f64()?,
        max: d.f64()?,
    })
}

/// Serializes a state and its parameters.
pub fn encode(state: &SimState, p: &ModelParams) -> Vec<u8> {
    let mut e = Encoder::new();
    e.bytes(MAGIC);
    e.u32(VERSION);
    e.grid(state.grid());
    for v in [p.rho, p.lambda, p.gamma, p.tau, p.lambda_e, p.h, p.alpha, p.beta] {
        e.f64(v);
    }
    put_coefficient(&mut e, &p.eta);
    put_coefficient(&mut e, &p.kappa);
    e.u32(p.stabilization.is_some() as u32);
    e.f64(p.stabilization.unwrap_or(0.0));
    e.f64(state.t);
    e.u64(state.n);
    e.f64(state.dt_prev);
    e.f64s(state.u.u());
    e.f64s(state.u.v());
    e.f64s(state.p.values());
    e.f64s(state.phi.values());
    e.f64s(state.mu.values());
    state.f.components().iter().for_each(|c| e.f64s(c));
    e.f64s(state.u_prev.u());
    e.f64s(state.u_prev.v());
    e.f64s(state.phi_prev.values());
    state.f_prev.components().iter().for_each(|c| e.f64s(c));
    e.finish()
}

/// Parses bytes produced by [`encode`]; `path` is used in error messages.
pub fn decode(data: &[u8], path: &Path) -> Result<(SimState, ModelParams)> {
    let mut d = Decoder::new(data, path);
    read_header(&mut d, MAGIC, VERSION)?;
    let g = d.grid()?;
    let mut vals = [0.0; 8];
    for v in vals.iter_mut() {
        *v = d.f64()?;
    }
    let eta = get_coefficient(&mut d)?;
    let kappa = get_coefficient(&mut d)?;
    let has_s = d.u32()?;
    let s = d.f64()?;
    let p = ModelParams {
        rho: vals[0],
        lambda: vals[1],
        gamma: vals[2],
        tau: vals[3],
        lambda_e: vals[4],
        h: vals[5],
        alpha: vals[6],
        beta: vals[7],
        eta,
        kappa,
        stabilization: match has_s {
            0 => None,
            1 => Some(s),
            k => return Err(d.error(format!("bad stabilization flag {k}"))),
        },
        fault: Default::default(),
    };
    let t = d.f64()?;
    let n = d.u64()?;
    let dt_prev = d.f64()?;
    let (nc, nu, nv) = (g.n_cells(), g.n_xfaces(), g.n_yfaces());
    let bad = |d: &Decoder, e: Error| d.error(e.to_string());

    let vel = |d: &mut Decoder, what: &str| -> Result<MacVelocity> {
        let u = d.f64s(nu, what)?;
        let v = d.f64s(nv, what)?;
        MacVelocity::from_components(&g, u, v).map_err(|e| bad(d, e))
    };
    let u = vel(&mut d, "u")?;
    let scalar = |d: &mut Decoder, what: &str| -> Result<ScalarField> {
        let v = d.f64s(nc, what)?;
        ScalarField::from_values(&g, v).map_err(|e| bad(d, e))
    };
    let pr = scalar(&mut d, "p")?;
    let phi = scalar(&mut d, "phi")?;
    let mu = scalar(&mut d, "mu")?;
    let tensor = |d: &mut Decoder, what: &str| -> Result<TensorField> {
        let c = [d.f64s(nc, what)?, d.f64s(nc, what)?, d.f64s(nc, what)?, d.f64s(nc, what)?];
        TensorField::from_components(&g, c).map_err(|e| bad(d, e))
    };
    let f = tensor(&mut d, "F")?;
    let u_prev = vel(&mut d, "u_prev")?;
    let phi_prev = scalar(&mut d, "phi_prev")?;
    let f_prev = tensor(&mut d, "F_prev")?;
    d.finish()?;
    let state = SimState {
        t,
        n,
        u,
        p: pr,
        phi,
        mu,
        f,
        u_prev,
        phi_prev,
        f_prev,
        dt_prev,
    };
    Ok((state, p))
}

pub fn save(path: &Path, state: &SimState, p: &ModelParams) -> Result<()> {
    std::fs::write(path, encode(state, p)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(SimState, ModelParams)> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&data, path)
}
