//! Deterministic flow machinery: integration, attractors, basins and
//! flow-adapted reduced domains of attraction.

mod attractors;
mod basin;
mod geometry;
mod integrate;
pub mod systems;

pub use attractors::{
    detect_cycle, ergodic_measure, find_attractors, newton_refine, Attractor, AttractorCatalog,
    CycleFit, EmpiricalMeasure,
};
pub use basin::{
    estimate_boundary_bisection, estimate_boundary_repelling_cycles, separatrix_lambda, separatrix_stable_direction,
    trace_separatrix_duffing, BasinBoundary, BisectionGrid, Landscape, Probe,
};
pub use geometry::{norm, dist, SegmentIndex};
pub use integrate::{integrate, Flow, Trajectory};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Autonomous vector field `f: R^d → R^d`.
///
/// Custom systems implement this trait; built-ins live in [`systems`].
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
    fn name(&self) -> String {
        "custom".to_string()
    }
}

/// Euclidean ball used as the working region `I_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, x: &[f64]) -> bool {
        dist(x, &self.center) <= self.radius
    }
}

/// A deterministic system together with its working box and numerical settings.
#[derive(Clone)]
pub struct SystemSpec {
    pub field: Arc<dyn VectorField>,
    pub dim: usize,
    pub ball: Ball,
    /// Attractor-capture radius; `None` means `δ₀/4` once `δ₀` is known.
    pub gamma: Option<f64>,
    /// Classification horizon.
    pub t_max: f64,
    pub dt: f64,
    /// Largest displacement allowed in one RK4 substep; steps are subdivided
    /// deterministically when `‖f‖·dt` exceeds it.
    pub max_move: f64,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("field", &self.field.name())
            .field("dim", &self.dim)
            .field("ball", &self.ball)
            .field("gamma", &self.gamma)
            .field("t_max", &self.t_max)
            .field("dt", &self.dt)
            .finish()
    }
}

impl SystemSpec {
    pub fn new(field: Arc<dyn VectorField>, radius: f64, t_max: f64, dt: f64) -> Result<Self> {
        let dim = field.dim();
        let spec = Self {
            field,
            dim,
            ball: Ball {
                center: vec![0.0; dim],
                radius,
            },
            gamma: None,
            t_max,
            dt,
            max_move: f64::INFINITY,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        self.ball.center = center;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_max_move(mut self, max_move: f64) -> Self {
        self.max_move = max_move;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::domain("system dimension must be positive"));
        }
        if self.ball.center.len() != self.dim {
            return Err(Error::domain("box center dimension mismatch"));
        }
        if !(self.ball.radius > 0.0) {
            return Err(Error::domain("box radius must be positive"));
        }
        if !(self.dt > 0.0) || !(self.t_max > 0.0) {
            return Err(Error::domain("dt and t_max must be positive"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::domain("gamma must be positive"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.field.eval(x, &mut out);
        out
    }

    /// Fraction of sampled sphere points where `f` points into the ball.
    pub fn inward_fraction(&self, samples: usize) -> f64 {
        let mut inward = 0usize;
        let mut f = vec![0.0; self.dim];
        for k in 0..samples {
            let n = sphere_point(self.dim, k, samples);
            let x: Vec<f64> = n
                .iter()
                .zip(&self.ball.center)
                .map(|(d, c)| c + self.ball.radius * d)
                .collect();
            self.field.eval(&x, &mut f);
            let dot: f64 = f.iter().zip(&n).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                inward += 1;
            }
        }
        inward as f64 / samples as f64
    }
}

/// Deterministic quasi-uniform unit vectors: a circle in 2-D, a Fibonacci-type
/// spiral lifted coordinate-wise otherwise.
fn sphere_point(dim: usize, k: usize, n: usize) -> Vec<f64> {
    match dim {
        1 => vec![if k.is_multiple_of(2) { 1.0 } else { -1.0 }],
        2 => {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            vec![th.cos(), th.sin()]
        }
        _ => {
            let golden = 0.618_033_988_749_894_9;
            let mut v: Vec<f64> = (0..dim)
                .map(|j| {
                    let u = ((k as f64 + 0.5) * golden * (j as f64 + 1.0)).fract();
                    2.0 * u - 1.0
                })
                .collect();
            let nrm = norm(&v).max(1e-12);
            v.iter_mut().for_each(|x| *x /= nrm);
            v
        }
    }
}
