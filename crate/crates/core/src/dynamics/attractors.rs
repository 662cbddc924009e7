use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dist, integrate::Flow, norm, SegmentIndex, SystemSpec};
use crate::error::{Error, Result};

/// One local attractor `K^ι`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attractor {
    Point { state: Vec<f64> },
    /// Equal-time samples over one period, starting at the section base point.
    Cycle { samples: Vec<Vec<f64>>, period: f64 },
}

impl Attractor {
    pub fn base_point(&self) -> &[f64] {
        match self {
            Attractor::Point { state } => state,
            Attractor::Cycle { samples, .. } => &samples[0],
        }
    }

    /// Polyline representation (closed for cycles).
    pub fn polyline(&self) -> Vec<Vec<f64>> {
        match self {
            Attractor::Point { state } => vec![state.clone()],
            Attractor::Cycle { samples, .. } => {
                let mut pl = samples.clone();
                pl.push(samples[0].clone());
                pl
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Attractor::Point { .. } => 0.0,
            Attractor::Cycle { samples, .. } => {
                let mut best: f64 = 0.0;
                let step = (samples.len() / 200).max(1);
                for a in samples.iter().step_by(step) {
                    for b in samples.iter().step_by(step) {
                        best = best.max(dist(a, b));
                    }
                }
                best
            }
        }
    }
}

/// Attractors found for a system plus the seeds that could not be classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorCatalog {
    pub entries: Vec<Attractor>,
    pub unclassified: Vec<Vec<f64>>,
}

impl AttractorCatalog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Weighted sample approximation of an ergodic measure `P^ι`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn point_mass(x: Vec<f64>) -> Self {
        Self {
            points: vec![x],
            weights: vec![1.0],
        }
    }

    pub fn integrate(&self, psi: impl Fn(&[f64]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * psi(p))
            .sum()
    }
}

fn jacobian(spec: &SystemSpec, x: &[f64]) -> DMatrix<f64> {
    let d = spec.dim;
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    for j in 0..d {
        let h = 1e-6 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        spec.field.eval(&xp, &mut fp);
        xp[j] = x[j] - h;
        spec.field.eval(&xp, &mut fm);
        xp[j] = x[j];
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Newton iteration for a root of `f` started at `x`.
pub fn newton_refine(spec: &SystemSpec, x: &[f64]) -> Result<Vec<f64>> {
    let mut cur = x.to_vec();
    for _ in 0..60 {
        let f = spec.eval(&cur);
        if norm(&f) < 1e-13 {
            return Ok(cur);
        }
        let jac = jacobian(spec, &cur);
        let rhs = DVector::from_vec(f.iter().map(|v| -v).collect());
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::domain("singular Jacobian in Newton refinement"))?;
        for (c, s) in cur.iter_mut().zip(step.iter()) {
            *c += s;
        }
        if step.norm() < 1e-15 * (1.0 + norm(&cur)) {
            break;
        }
    }
    let r = norm(&spec.eval(&cur));
    if r <= 1e-8 {
        Ok(cur)
    } else {
        Err(Error::domain(format!("Newton refinement stalled with residual {r:e}")))
    }
}

fn is_stable_equilibrium(spec: &SystemSpec, x: &[f64]) -> bool {
    jacobian(spec, x)
        .complex_eigenvalues()
        .iter()
        .all(|ev| ev.re < 0.0)
}

/// Period and equal-time samples of a limit cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleFit {
    pub period: f64,
    pub samples: Vec<Vec<f64>>,
    /// `‖φ_T(x₀) − x₀‖` for the base point.
    pub closure: f64,
}

/// First return of the orbit of `p` to the hyperplane through `p` with normal
/// `f(p)`. Returns (return time, return point).
fn first_return(spec: &SystemSpec, p: &[f64], t_limit: f64) -> Result<(f64, Vec<f64>)> {
    let mut flow = Flow::new(spec);
    let n = spec.eval(p);
    let g = |y: &[f64]| -> f64 { y.iter().zip(p).zip(&n).map(|((a, b), c)| (a - b) * c).sum() };
    let dt = spec.dt;
    let mut t = 0.0;
    let mut y = p.to_vec();
    let mut g_prev = 0.0;
    let mut far: f64 = 0.0;
    while t < t_limit {
        let prev = y.clone();
        if !flow.step(&mut y, dt) {
            return Err(Error::Blowup { time: t });
        }
        t += dt;
        let gy = g(&y);
        let dp = dist(&y, p);
        far = far.max(dp);
        if g_prev < 0.0 && gy >= 0.0 && far > 0.0 && dp < 0.5 * far {
            // bisection on the partial step
            let (mut lo, mut hi) = (0.0, dt);
            let mut z = prev.clone();
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                z.copy_from_slice(&prev);
                flow.step(&mut z, mid);
                if g(&z) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let h = 0.5 * (lo + hi);
            z.copy_from_slice(&prev);
            flow.step(&mut z, h);
            return Ok((t - dt + h, z));
        }
        if spec.dim > 0 && flow.speed(&y) < 1e-12 {
            break;
        }
        g_prev = gy;
    }
    Err(Error::NoCycle { t_max: t_limit })
}

fn closure_at(spec: &SystemSpec, p: &[f64], period: f64) -> f64 {
    let mut flow = Flow::new(spec);
    let mut y = p.to_vec();
    flow.advance(&mut y, period, spec.dt);
    dist(&y, p)
}

/// Detect the limit cycle on which the orbit of `x` has settled.
///
/// The section passes through the point of maximal speed on one revolution;
/// the return map is iterated until the base point stops moving, and the
/// period is then polished by minimizing the closure defect.
pub fn detect_cycle(spec: &SystemSpec, x: &[f64]) -> Result<CycleFit> {
    let (t1, _) = first_return(spec, x, spec.t_max)?;

    // fastest point over one revolution
    let mut flow = Flow::new(spec);
    let steps = (t1 / spec.dt).ceil() as usize;
    let h = t1 / steps as f64;
    let mut y = x.to_vec();
    let mut best = (flow.speed(&y), y.clone());
    for _ in 0..steps {
        flow.step(&mut y, h);
        let s = flow.speed(&y);
        if s > best.0 {
            best = (s, y.clone());
        }
    }
    let mut p = best.1;
    let mut period = t1;
    for _ in 0..200 {
        let (t, q) = first_return(spec, &p, 2.0 * t1 + 10.0 * spec.dt)?;
        let moved = dist(&q, &p);
        period = t;
        p = q;
        if moved < 1e-10 * (1.0 + norm(&p)) {
            break;
        }
    }

    // golden-section polish of the period
    let (mut a, mut b) = (period - spec.dt, period + spec.dt);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (closure_at(spec, &p, c), closure_at(spec, &p, d));
    for _ in 0..40 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = closure_at(spec, &p, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = closure_at(spec, &p, d);
        }
    }
    let polished = 0.5 * (a + b);
    if closure_at(spec, &p, polished) <= closure_at(spec, &p, period) {
        period = polished;
    }

    let n = ((period / spec.dt).ceil() as usize).clamp(1000, 20_000);
    let samples = sample_orbit(spec, &p, period, n);
    let closure = closure_at(spec, &p, period);
    Ok(CycleFit {
        period,
        samples,
        closure,
    })
}

fn sample_orbit(spec: &SystemSpec, p: &[f64], period: f64, n: usize) -> Vec<Vec<f64>> {
    let mut flow = Flow::new(spec);
    let h = period / n as f64;
    let mut y = p.to_vec();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(y.clone());
        flow.advance(&mut y, h, spec.dt);
    }
    out
}

enum SeedOutcome {
    Point(Vec<f64>),
    Cycle(CycleFit),
    Unclassified(Vec<f64>),
}

fn settle_seed(spec: &SystemSpec, seed: &[f64]) -> SeedOutcome {
    if !spec.ball.contains(seed) {
        return SeedOutcome::Unclassified(seed.to_vec());
    }
    let mut flow = Flow::new(spec);
    let mut y = seed.to_vec();
    let mut t = 0.0;
    while t < spec.t_max {
        if !flow.step(&mut y, spec.dt) || !spec.ball.contains(&y) {
            return SeedOutcome::Unclassified(seed.to_vec());
        }
        t += spec.dt;
        if flow.speed(&y) < 1e-6 {
            break;
        }
    }
    if flow.speed(&y) < 1e-3 {
        if let Ok(root) = newton_refine(spec, &y) {
            if is_stable_equilibrium(spec, &root) {
                return SeedOutcome::Point(root);
            }
        }
    }
    match detect_cycle(spec, &y) {
        Ok(fit) => SeedOutcome::Cycle(fit),
        Err(_) => SeedOutcome::Unclassified(seed.to_vec()),
    }
}

/// Long-time integration from every seed, clustering terminal behaviour into
/// stable equilibria and limit cycles. Points come first (lexicographic),
/// then cycles by increasing diameter.
pub fn find_attractors(spec: &SystemSpec, seeds: &[Vec<f64>]) -> Result<AttractorCatalog> {
    let merge_tol = 1e-4 * spec.ball.radius;
    let outcomes: Vec<SeedOutcome> = seeds.par_iter().map(|s| settle_seed(spec, s)).collect();

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut cycles: Vec<CycleFit> = Vec::new();
    let mut unclassified = Vec::new();
    for o in outcomes {
        match o {
            SeedOutcome::Point(p) => {
                if points.iter().all(|q| dist(q, &p) > merge_tol) {
                    points.push(p);
                }
            }
            SeedOutcome::Cycle(c) => {
                let dup = cycles.iter().any(|k| {
                    let mut closed = k.samples.clone();
                    closed.push(k.samples[0].clone());
                    SegmentIndex::new(&[closed], 1.0).nearest(&c.samples[0])
                        < merge_tol.max(1e-3 * (1.0 + norm(&c.samples[0])))
                });
                if !dup {
                    cycles.push(c);
                }
            }
            SeedOutcome::Unclassified(s) => unclassified.push(s),
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite equilibria"));
    let mut entries: Vec<Attractor> = points
        .into_iter()
        .map(|state| Attractor::Point { state })
        .collect();
    let mut cyc: Vec<Attractor> = cycles
        .into_iter()
        .map(|c| Attractor::Cycle {
            samples: c.samples,
            period: c.period,
        })
        .collect();
    cyc.sort_by(|a, b| a.diameter().partial_cmp(&b.diameter()).expect("finite diameters"));
    entries.extend(cyc);
    Ok(AttractorCatalog {
        entries,
        unclassified,
    })
}

/// Ergodic measure of a catalog entry: unit point mass, or `n` equal-time
/// samples over one period with weights `1/n`.
pub fn ergodic_measure(spec: &SystemSpec, entry: &Attractor, n: usize) -> EmpiricalMeasure {
    match entry {
        Attractor::Point { state } => EmpiricalMeasure::point_mass(state.clone()),
        Attractor::Cycle { samples, period } => {
            let n = n.max(1);
            EmpiricalMeasure {
                points: sample_orbit(spec, &samples[0], *period, n),
                weights: vec![1.0 / n as f64; n],
            }
        }
    }
}
