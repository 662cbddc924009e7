//! Built-in vector fields.
//!
//! New systems implement [`VectorField`] and are registered in
//! [`builtin`] so that config files can select them by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::VectorField;
use crate::error::{Error, Result};

/// Damped Duffing oscillator `ẍ + δẋ + U'(x) = 0`, `U(x) = x⁴/4 − x²/2`,
/// written as `u̇ = (u₂, −δu₂ + u₁ − u₁³)`. Stable equilibria at `(±1, 0)`,
/// saddle at the origin.
#[derive(Debug, Clone, Copy)]
pub struct Duffing {
    pub friction: f64,
}

impl VectorField for Duffing {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        out[0] = u[1];
        out[1] = -self.friction * u[1] + u[0] - u[0] * u[0] * u[0];
    }

    fn name(&self) -> String {
        format!("duffing(delta={})", self.friction)
    }
}

/// Two-variable substrate/product model with product recycling
/// (birhythmic for `v ≈ 0.255`).
#[derive(Debug, Clone, Copy)]
pub struct Goldbeter {
    /// Substrate input rate `v`.
    pub input: f64,
    /// Half-saturation constant of the recycling term feeding the substrate.
    pub k_recycle: f64,
}

impl Goldbeter {
    pub fn new(input: f64) -> Self {
        Self {
            input,
            k_recycle: 10.0,
        }
    }

    fn phi(u1: f64, u2: f64) -> f64 {
        let a = (1.0 + u1) * (1.0 + u2);
        u1 * (1.0 + u1) * (1.0 + u2) * (1.0 + u2) / (5.0e6 + a * a)
    }
}

impl VectorField for Goldbeter {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        let (u1, u2) = (u[0], u[1]);
        let p = Self::phi(u1, u2);
        let u2_4 = u2 * u2 * u2 * u2;
        let k4 = self.k_recycle.powi(4);
        out[0] = self.input + 1.3 * u2_4 / (k4 + u2_4) - 10.0 * p;
        out[1] = 10.0 * p - 0.06 * u2 - 1.3 * u2_4 / (1.0e4 + u2_4);
    }

    fn name(&self) -> String {
        format!("goldbeter(v={})", self.input)
    }
}

/// `f(u) = −u`.
#[derive(Debug, Clone, Copy)]
pub struct LinearDecay {
    pub dim: usize,
}

impl VectorField for LinearDecay {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(u) {
            *o = -x;
        }
    }

    fn name(&self) -> String {
        "linear".to_string()
    }
}

/// Planar field with the unit circle as a stable limit cycle traversed at
/// angular speed 1: `ṙ = r(1 − r²)`, `θ̇ = 1`.
#[derive(Debug, Clone, Copy)]
pub struct CircleCycle;

impl VectorField for CircleCycle {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        let r2 = u[0] * u[0] + u[1] * u[1];
        out[0] = u[0] * (1.0 - r2) - u[1];
        out[1] = u[1] * (1.0 - r2) + u[0];
    }

    fn name(&self) -> String {
        "circle".to_string()
    }
}

/// Gradient field of a symmetric planar double well `V = (x²−1)²/4 + y²/2`:
/// a rotation-free two-attractor test system with straight separatrix `x = 0`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell;

impl VectorField for DoubleWell {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        out[0] = u[0] - u[0] * u[0] * u[0];
        out[1] = -u[1];
    }

    fn name(&self) -> String {
        "double-well".to_string()
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Look up a built-in field by name.
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Arc<dyn VectorField>> {
    let allowed: &[&str] = match name {
        "duffing" => &["delta"],
        "goldbeter" => &["v", "k"],
        "linear" => &["dim"],
        "circle" | "double-well" => &[],
        _ => {
            return Err(Error::Config {
                key: "system.name".into(),
                msg: format!("unknown system `{name}`"),
            })
        }
    };
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::Config {
            key: format!("system.params.{k}"),
            msg: format!("not a parameter of `{name}`"),
        });
    }
    Ok(match name {
        "duffing" => Arc::new(Duffing {
            friction: param(params, "delta", 0.5),
        }),
        "goldbeter" => Arc::new(Goldbeter {
            input: param(params, "v", 0.255),
            k_recycle: param(params, "k", 10.0),
        }),
        "linear" => Arc::new(LinearDecay {
            dim: param(params, "dim", 2.0) as usize,
        }),
        "circle" => Arc::new(CircleCycle),
        _ => Arc::new(DoubleWell),
    })
}
