//! Physical coefficients and the phase-dependent viscosity and permeability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a phase-dependent coefficient between its two end values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `min` everywhere.
    Constant,
    /// `min + (max − min)·φ`.
    Linear,
    /// `min + (max − min)·(3φ² − 2φ³)`.
    Smoothstep,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Constant => "constant",
            Profile::Linear => "linear",
            Profile::Smoothstep => "smoothstep",
        }
    }
}

/// A coefficient function of the phase field, evaluated on `clamp(φ, 0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub profile: Profile,
    /// Value in the pure `φ = 0` phase.
    pub min: f64,
    /// Value in the pure `φ = 1` phase.
    pub max: f64,
}

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Coefficient {
            profile: Profile::Constant,
            min: value,
            max: value,
        }
    }

    #[inline]
    pub fn eval(&self, phi: f64) -> f64 {
        let s = phi.clamp(0.0, 1.0);
        let w = match self.profile {
            Profile::Constant => return self.min,
            Profile::Linear => s,
            Profile::Smoothstep => s * s * (3.0 - 2.0 * s),
        };
        self.min + (self.max - self.min) * w
    }

    /// Derivative with respect to `φ` (zero outside `[0, 1]`).
    #[inline]
    pub fn derivative(&self, phi: f64) -> f64 {
        if !(0.0..=1.0).contains(&phi) {
            return 0.0;
        }
        let dw = match self.profile {
            Profile::Constant => return 0.0,
            Profile::Linear => 1.0,
            Profile::Smoothstep => 6.0 * phi * (1.0 - phi),
        };
        (self.max - self.min) * dw
    }

    fn bounds(&self) -> (f64, f64) {
        match self.profile {
            Profile::Constant => (self.min, self.min),
            _ => (self.min.min(self.max), self.min.max(self.max)),
        }
    }
}

/// Deliberate defects used to check that the invariant suite catches bugs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    #[default]
    None,
    /// Reverses the sign of the Darcy drag force.
    FlipDragSign,
}

/// Physical parameters of the coupled model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Density `ρ`.
    pub rho: f64,
    /// Mixing energy density `λ`.
    pub lambda: f64,
    /// Interfacial mobility `γ`.
    pub gamma: f64,
    /// Relaxation parameter `τ`.
    pub tau: f64,
    /// Visco-elastic modulus `λₑ`.
    pub lambda_e: f64,
    /// Interfacial thickness `h`.
    pub h: f64,
    /// Lower coefficient bound `α`.
    pub alpha: f64,
    /// Upper coefficient bound `β`.
    pub beta: f64,
    /// Viscosity `η(φ)`.
    pub eta: Coefficient,
    /// Permeability `κ(φ)`.
    pub kappa: Coefficient,
    /// Stabilization constant `S`; `None` selects `1/(2h²)`.
    pub stabilization: Option<f64>,
    #[serde(skip)]
    pub fault: Fault,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            rho: 1.0,
            lambda: 0.01,
            gamma: 1.0,
            tau: 0.01,
            lambda_e: 0.1,
            h: 0.05,
            alpha: 0.01,
            beta: 1.0,
            eta: Coefficient {
                profile: Profile::Smoothstep,
                min: 0.02,
                max: 0.05,
            },
            kappa: Coefficient {
                profile: Profile::Smoothstep,
                min: 0.05,
                max: 1.0,
            },
            stabilization: None,
            fault: Fault::None,
        }
    }
}

impl ModelParams {
    /// Stabilization constant actually used by the Cahn–Hilliard step.
    pub fn stabilization(&self) -> f64 {
        self.stabilization.unwrap_or(1.0 / (2.0 * self.h * self.h))
    }

    /// Smallest admissible stabilization, `max_{[0,1]} f″ / 2 = 1/(4h²)`.
    pub fn min_stabilization(&self) -> f64 {
        1.0 / (4.0 * self.h * self.h)
    }

    #[inline]
    pub fn eta(&self, phi: f64) -> f64 {
        self.eta.eval(phi)
    }

    #[inline]
    pub fn kappa(&self, phi: f64) -> f64 {
        self.kappa.eval(phi)
    }

    /// Darcy coefficient `c` in the drag force `−c·u`, i.e.
    /// `η(φ)(1 − φ)/κ(φ)` with the clamp applied only inside `η` and `κ`.
    #[inline]
    pub fn drag_coefficient(&self, phi: f64) -> f64 {
        let c = self.eta(phi) * (1.0 - phi) / self.kappa(phi);
        match self.fault {
            Fault::None => c,
            Fault::FlipDragSign => -c,
        }
    }

    /// Collects every violated constraint as `(key, message)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let positive = [
            ("rho", self.rho),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("lambda_e", self.lambda_e),
            ("h", self.h),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                out.push((key, format!("must be a positive number, got {v}")));
            }
        }
        if self.alpha > self.beta {
            out.push(("alpha", format!("must not exceed beta ({} > {})", self.alpha, self.beta)));
        }
        for (key, c) in [("eta", &self.eta), ("kappa", &self.kappa)] {
            let (lo, hi) = c.bounds();
            if !(lo.is_finite() && hi.is_finite()) || lo < self.alpha || hi > self.beta {
                out.push((
                    key,
                    format!(
                        "values [{lo}, {hi}] must lie within [alpha, beta] = [{}, {}]",
                        self.alpha, self.beta
                    ),
                ));
            }
        }
        if let Some(s) = self.stabilization {
            if self.h > 0.0 && !(s.is_finite() && s >= self.min_stabilization()) {
                out.push((
                    "stabilization",
                    format!("must be at least 1/(4h²) = {}, got {s}", self.min_stabilization()),
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(
                v.into_iter()
                    .map(|(k, m)| format!("model.{k}: {m}"))
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelParams::default().validate().unwrap();
        let p = ModelParams::default();
        assert!(p.stabilization() >= p.min_stabilization());
    }

    #[test]
    fn coefficient_bounds_hold_on_extended_range() {
        let p = ModelParams::default();
        for k in 0..=200 {
            let phi = -0.5 + 2.0 * k as f64 / 200.0;
            for v in [p.eta(phi), p.kappa(phi)] {
                assert!(v >= p.alpha && v <= p.beta);
            }
        }
        assert_eq!(p.eta(-3.0), p.eta.min);
        assert_eq!(p.eta(7.0), p.eta.max);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for profile in [Profile::Constant, Profile::Linear, Profile::Smoothstep] {
            let c = Coefficient { profile, min: 0.1, max: 0.7 };
            for &x in &[0.1, 0.37, 0.8] {
                let fd = (c.eval(x + 1e-6) - c.eval(x - 1e-6)) / 2e-6;
                assert!((fd - c.derivative(x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn drag_coefficient_and_fault() {
        let mut p = ModelParams {
            eta: Coefficient::constant(0.2),
            kappa: Coefficient::constant(0.5),
            ..ModelParams::default()
        };
        assert_eq!(p.drag_coefficient(1.0), 0.0);
        assert!((p.drag_coefficient(0.0) - 0.4).abs() < 1e-15);
        // unclamped (1 − φ) factor
        assert!(p.drag_coefficient(1.2) < 0.0);
        p.fault = Fault::FlipDragSign;
        assert!((p.drag_coefficient(0.0) + 0.4).abs() < 1e-15);
    }

    #[test]
    fn violations_name_keys() {
        let p = ModelParams {
            lambda: -1.0,
            stabilization: Some(1.0),
            ..ModelParams::default()
        };
        let keys: Vec<_> = p.violations().into_iter().map(|(k, _)| k).collect();
        assert!(keys.contains(&"lambda"));
        assert!(keys.contains(&"stabilization"));
        let p = ModelParams {
            eta: Coefficient::constant(2.0),
            ..ModelParams::default()
        };
        assert_eq!(p.violations()[0].0, "eta");
    }
}
