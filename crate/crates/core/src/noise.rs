//! Regularly varying jump measures.
//!
//! A [`HeavyTailSpec`] describes the Lévy measure `ν` of the driving noise:
//! a pure power tail `h(r) = c · r^{-α}` (constant slowly varying factor) on
//! the support `‖z‖ ≥ 1`, or a user-supplied radial density for which only the
//! tail quadrature and the sampler change. The self-similar limit measure `μ`
//! is the same for every shape of a given index: `μ({‖z‖ ≥ r}) = c · r^{-α}`,
//! one-sided for `pareto-1d`, rotation invariant otherwise.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Radial density `ρ(r)` (mass per unit radius) on `r ≥ 1`.
#[derive(Clone)]
pub struct RadialDensity(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for RadialDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RadialDensity(..)")
    }
}

#[derive(Debug, Clone)]
pub enum TailShape {
    /// Density `α z^{-1-α}` on `z ≥ 1`, one dimension.
    Pareto1d,
    /// Density `c‖z‖^{-m-α}` on `‖z‖ ≥ 1`, normalized so `h(1/ε) = ε^α`.
    Isotropic,
    /// Rotation invariant measure with the given radial density.
    CustomRadial(RadialDensity),
}

impl TailShape {
    pub fn name(&self) -> &'static str {
        match self {
            TailShape::Pareto1d => "pareto-1d",
            TailShape::Isotropic => "isotropic",
            TailShape::CustomRadial(_) => "custom-radial",
        }
    }
}

/// Lévy measure of the noise driver.
#[derive(Debug, Clone)]
pub struct HeavyTailSpec {
    pub alpha: f64,
    pub dim: usize,
    pub shape: TailShape,
    /// Inner truncation radius `r₀` (z-units).
    pub cutoff: f64,
    /// Multiplier `c` of the reference tail `r^{-α}`; 1 is the standard normalization.
    pub normalization: f64,
}

/// One large jump of the driver, in z-units (before the `ε` scaling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub z: Vec<f64>,
}

impl HeavyTailSpec {
    pub fn new(alpha: f64, dim: usize, shape: TailShape, cutoff: f64) -> Result<Self> {
        let spec = Self {
            alpha,
            dim,
            shape,
            cutoff,
            normalization: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn pareto_1d(alpha: f64, cutoff: f64) -> Result<Self> {
        Self::new(alpha, 1, TailShape::Pareto1d, cutoff)
    }

    pub fn isotropic(alpha: f64, dim: usize, cutoff: f64) -> Result<Self> {
        Self::new(alpha, dim, TailShape::Isotropic, cutoff)
    }

    pub fn with_normalization(mut self, c: f64) -> Result<Self> {
        self.normalization = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_cutoff(&self, cutoff: f64) -> Result<Self> {
        let mut s = self.clone();
        s.cutoff = cutoff;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::domain(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.dim == 0 {
            return Err(Error::domain("noise dimension must be at least 1"));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(Error::domain(format!("cutoff must be positive, got {}", self.cutoff)));
        }
        if !(self.normalization > 0.0 && self.normalization.is_finite()) {
            return Err(Error::domain("normalization must be positive"));
        }
        if matches!(self.shape, TailShape::Pareto1d) && self.dim != 1 {
            return Err(Error::domain("pareto-1d noise requires dim = 1"));
        }
        Ok(())
    }

    /// Metastable time-scale rate `h_ε = ε^α` of the reference tail.
    pub fn time_scale(&self, epsilon: f64) -> f64 {
        epsilon.powf(self.alpha)
    }

    /// `μ({‖z‖ ≥ r})`.
    pub fn limit_tail(&self, r: f64) -> f64 {
        self.normalization * r.powf(-self.alpha)
    }

    fn radius_above(&self, r0: f64, rng: &mut SimRng) -> f64 {
        // Pareto(α) radius from r0 by inversion.
        let u: f64 = 1.0 - rng.random::<f64>();
        r0 * u.powf(-1.0 / self.alpha)
    }

    fn direction(&self, rng: &mut SimRng) -> Vec<f64> {
        if matches!(self.shape, TailShape::Pareto1d) {
            return vec![1.0];
        }
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-300 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Draw from the normalized restriction of `μ` to `‖z‖ ≥ r0`.
    pub fn sample_limit(&self, r0: f64, rng: &mut SimRng) -> Vec<f64> {
        let r = self.radius_above(r0, rng);
        self.direction(rng).into_iter().map(|d| d * r).collect()
    }
}

/// `h(r) = ν({‖y‖ ≥ r})`.
pub fn tail_mass(spec: &HeavyTailSpec, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("tail_mass needs r > 0, got {r}")));
    }
    let c = spec.normalization;
    Ok(match &spec.shape {
        TailShape::Pareto1d | TailShape::Isotropic => c * r.max(1.0).powf(-spec.alpha),
        TailShape::CustomRadial(rho) => c * radial_tail(rho, r.max(1.0), spec.alpha),
    })
}

/// `∫_r^∞ ρ(s) ds` by the substitution `s = r e^t` and composite Simpson,
/// with the remainder past the grid closed by the asymptotic power law.
fn radial_tail(rho: &RadialDensity, r: f64, alpha: f64) -> f64 {
    let t_end = 40.0 / alpha.min(40.0);
    let n = 8000;
    let h = t_end / n as f64;
    let g = |t: f64| {
        let s = r * t.exp();
        (rho.0)(s) * s
    };
    let mut acc = g(0.0) + g(t_end);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(i as f64 * h);
    }
    let body = acc * h / 3.0;
    let tail = g(t_end) / alpha;
    body + tail
}

/// Estimate `μ(region)` by importance sampling from `μ` restricted to `‖z‖ ≥ r₀`.
///
/// The region must not meet the ball `B_{r₀}(0)`; mass inside it is silently
/// missed. Returns `(estimate, standard error)`.
pub fn limit_measure_mass<F>(
    spec: &HeavyTailSpec,
    region: F,
    budget: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> bool,
{
    if budget == 0 {
        return Err(Error::arg("limit_measure_mass needs a positive budget"));
    }
    let mut rng = rng::stream(seed, rng::tag::LIMIT_MEASURE, 0);
    let total = spec.limit_tail(spec.cutoff);
    let hits = (0..budget)
        .filter(|_| region(&spec.sample_limit(spec.cutoff, &mut rng)))
        .count();
    let p = hits as f64 / budget as f64;
    let se = (p * (1.0 - p) / budget as f64).sqrt();
    Ok((total * p, total * se))
}

/// Lazy Poisson stream of jumps with `‖z‖ ≥ cutoff`.
pub struct JumpSampler {
    spec: HeavyTailSpec,
    rate: f64,
    r_min: f64,
    inverse: Option<InverseTail>,
    clock: f64,
    waiting: Exp<f64>,
    rng: SimRng,
}

impl JumpSampler {
    pub fn new(spec: &HeavyTailSpec, rng: SimRng) -> Result<Self> {
        spec.validate()?;
        let r_min = spec.cutoff.max(1.0);
        let rate = tail_mass(spec, r_min)?;
        let inverse = match &spec.shape {
            TailShape::CustomRadial(rho) => Some(InverseTail::build(rho, r_min, spec.alpha)),
            _ => None,
        };
        let waiting = Exp::new(rate).map_err(|e| Error::domain(e.to_string()))?;
        Ok(Self {
            spec: spec.clone(),
            rate,
            r_min,
            inverse,
            clock: 0.0,
            waiting,
            rng,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Iterator for JumpSampler {
    type Item = JumpEvent;

    fn next(&mut self) -> Option<JumpEvent> {
        self.clock += self.waiting.sample(&mut self.rng);
        let r = match &self.inverse {
            Some(inv) => inv.sample(&mut self.rng),
            None => self.spec.radius_above(self.r_min, &mut self.rng),
        };
        let z = self
            .spec
            .direction(&mut self.rng)
            .into_iter()
            .map(|d| d * r)
            .collect();
        Some(JumpEvent { time: self.clock, z })
    }
}

/// All jumps with `‖z‖ ≥ cutoff` on `[0, horizon)`, deterministic in `seed`.
pub fn sample_jump_stream(spec: &HeavyTailSpec, horizon: f64, seed: u64) -> Result<Vec<JumpEvent>> {
    if !(horizon > 0.0) {
        return Err(Error::arg("horizon must be positive"));
    }
    let sampler = JumpSampler::new(spec, rng::stream(seed, rng::tag::JUMPS, 0))?;
    Ok(sampler.take_while(|e| e.time < horizon).collect())
}

/// Tabulated inverse of the normalized radial tail for custom densities.
struct InverseTail {
    // (log survival, log radius), survival decreasing from 0.
    table: Vec<(f64, f64)>,
    alpha: f64,
}

impl InverseTail {
    fn build(rho: &RadialDensity, r_min: f64, alpha: f64) -> Self {
        let h0 = radial_tail(rho, r_min, alpha);
        let table = (0..=400)
            .map(|i| {
                let r = r_min * (i as f64 * 0.05).exp();
                let s = (radial_tail(rho, r, alpha) / h0).max(1e-300);
                (s.ln(), r.ln())
            })
            .collect();
        Self { table, alpha }
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        let ls = u.ln();
        let last = self.table[self.table.len() - 1];
        if ls <= last.0 {
            // beyond the table: continue the power law
            return (last.1 + (last.0 - ls) / self.alpha).exp();
        }
        let k = self.table.partition_point(|&(s, _)| s > ls).max(1);
        let (s0, r0) = self.table[k - 1];
        let (s1, r1) = self.table[k];
        let w = if (s1 - s0).abs() > 0.0 { (ls - s0) / (s1 - s0) } else { 0.0 };
        (r0 + w * (r1 - r0)).exp()
    }
}
