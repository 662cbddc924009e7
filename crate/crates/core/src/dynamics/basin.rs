use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::sync::Arc;

use super::{
    detect_cycle, dist, geometry::simplify, integrate::Flow, norm, Attractor, AttractorCatalog, SegmentIndex, SystemSpec,
    VectorField,
};
use crate::error::{Error, Result};

/// Numerical approximation of `⋃ ∂D^ι` as a set of polylines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BasinBoundary {
    pub polylines: Vec<Vec<Vec<f64>>>,
}

impl BasinBoundary {
    pub fn is_empty(&self) -> bool {
        self.polylines.iter().all(|p| p.is_empty())
    }

    pub fn point_count(&self) -> usize {
        self.polylines.iter().map(Vec::len).sum()
    }
}

/// Outcome of following the deterministic orbit of a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    /// Basin whose attractor captured the orbit, or `None` (left the box,
    /// ran past `t_max`, or blew up).
    pub basin: Option<usize>,
    /// Smallest distance of the orbit to the basin boundary, capped at the
    /// landscape's tube cap (`δ₀` unless lowered).
    pub min_boundary_dist: f64,
    /// Time until capture.
    pub time: f64,
    /// Cap applied to `min_boundary_dist`.
    pub cap: f64,
}

impl Probe {
    /// Basin label under the reduced domains of width `w`.
    pub fn reduced(&self, w: f64) -> Option<usize> {
        debug_assert!(w <= self.cap, "width {w} exceeds the tube cap {}", self.cap);
        self.basin.filter(|_| self.min_boundary_dist >= w)
    }
}

enum Capture {
    Point(Vec<f64>),
    Cycle(SegmentIndex),
}

/// A system with its attractors and basin boundary: answers basin and
/// reduced-domain membership queries by forward-orbit probing.
pub struct Landscape {
    pub system: SystemSpec,
    pub catalog: AttractorCatalog,
    pub boundary: BasinBoundary,
    /// Half the smallest attractor-to-boundary distance.
    pub delta0: f64,
    pub gamma: f64,
    /// Boundary distances along probed orbits are tracked up to this value.
    tube_cap: f64,
    boundary_index: Option<SegmentIndex>,
    capture: Vec<Capture>,
}

impl std::fmt::Debug for Landscape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Landscape")
            .field("system", &self.system)
            .field("attractors", &self.catalog.len())
            .field("boundary_points", &self.boundary.point_count())
            .field("delta0", &self.delta0)
            .field("gamma", &self.gamma)
            .finish()
    }
}

fn capture_for(entry: &Attractor, gamma: f64) -> Capture {
    match entry {
        Attractor::Point { state } => Capture::Point(state.clone()),
        Attractor::Cycle { .. } => Capture::Cycle(SegmentIndex::new(&[entry.polyline()], gamma)),
    }
}

fn attractor_boundary_distance(entry: &Attractor, boundary: &SegmentIndex) -> f64 {
    let pl = entry.polyline();
    let step = (pl.len() / 2000).max(1);
    pl.iter()
        .step_by(step)
        .map(|p| boundary.nearest(p))
        .fold(f64::INFINITY, f64::min)
}

impl Landscape {
    pub fn new(system: SystemSpec, catalog: AttractorCatalog, boundary: BasinBoundary) -> Result<Self> {
        if catalog.is_empty() {
            return Err(Error::domain("attractor catalog is empty"));
        }
        let probe_index = SegmentIndex::new(&boundary.polylines, 1.0);
        let delta0 = if boundary.is_empty() {
            // single basin: distance to the edge of the working box
            let r0 = catalog
                .entries
                .iter()
                .flat_map(|e| e.polyline())
                .map(|p| dist(&p, &system.ball.center))
                .fold(0.0, f64::max);
            0.5 * (system.ball.radius - r0)
        } else {
            0.5 * catalog
                .entries
                .iter()
                .map(|e| attractor_boundary_distance(e, &probe_index))
                .fold(f64::INFINITY, f64::min)
        };
        if !(delta0 > 0.0) {
            return Err(Error::domain(format!("non-positive delta0 = {delta0}")));
        }
        let gamma = system.gamma.unwrap_or(delta0 / 4.0);
        if gamma >= delta0 {
            return Err(Error::domain(format!("gamma = {gamma} must be below delta0 = {delta0}")));
        }
        let capture = catalog.entries.iter().map(|e| capture_for(e, gamma)).collect();
        let mut l = Self {
            system,
            catalog,
            boundary,
            delta0,
            gamma,
            tube_cap: delta0,
            boundary_index: None,
            capture,
        };
        l.set_tube_cap(delta0)?;
        Ok(l)
    }

    /// Track boundary distances only up to `cap ≤ δ₀`: probes then answer
    /// reduced-domain queries for widths up to `cap`, at lower cost.
    pub fn set_tube_cap(&mut self, cap: f64) -> Result<()> {
        if !(cap > 0.0 && cap <= self.delta0) {
            return Err(Error::domain(format!("tube cap {cap} must lie in (0, delta0 = {}]", self.delta0)));
        }
        self.tube_cap = cap;
        self.boundary_index = if self.boundary.is_empty() {
            None
        } else {
            let tol = (1e-3 * cap).min(1e-5);
            let simplified: Vec<Vec<Vec<f64>>> = self.boundary.polylines.iter().map(|p| simplify(p, tol)).collect();
            Some(SegmentIndex::new(&simplified, cap))
        };
        Ok(())
    }

    pub fn tube_cap(&self) -> f64 {
        self.tube_cap
    }

    /// Classifier without boundary knowledge (used to estimate the boundary).
    pub fn classifier(system: SystemSpec, catalog: AttractorCatalog) -> Result<Self> {
        if catalog.is_empty() {
            return Err(Error::domain("attractor catalog is empty"));
        }
        let sep = pairwise_separation(&catalog);
        let gamma = system.gamma.unwrap_or(0.1 * sep.min(system.ball.radius));
        let capture = catalog.entries.iter().map(|e| capture_for(e, gamma)).collect();
        Ok(Self {
            system,
            catalog,
            boundary: BasinBoundary::default(),
            delta0: f64::INFINITY,
            gamma,
            tube_cap: f64::INFINITY,
            boundary_index: None,
            capture,
        })
    }

    pub fn kappa(&self) -> usize {
        self.catalog.len()
    }

    /// Largest radius of the attractors around the box center (`R₀`).
    pub fn r0(&self) -> f64 {
        self.catalog
            .entries
            .iter()
            .flat_map(|e| e.polyline())
            .map(|p| dist(&p, &self.system.ball.center))
            .fold(0.0, f64::max)
    }

    fn captured(&self, y: &[f64]) -> Option<usize> {
        self.capture.iter().position(|c| match c {
            Capture::Point(s) => dist(y, s) < self.gamma,
            Capture::Cycle(idx) => idx.nearest_capped(y, self.gamma) < self.gamma,
        })
    }

    /// Distance to the basin boundary, capped at the tube cap.
    pub fn boundary_distance(&self, y: &[f64]) -> f64 {
        match &self.boundary_index {
            Some(idx) => idx.nearest_capped(y, self.tube_cap),
            None => self.tube_cap,
        }
    }

    /// Follow the orbit of `x` until an attractor captures it.
    pub fn probe(&self, x: &[f64]) -> Probe {
        let cap = self.tube_cap;
        let none = |t: f64, md: f64| Probe {
            basin: None,
            min_boundary_dist: md,
            time: t,
            cap,
        };
        if !self.system.ball.contains(x) || x.iter().any(|v| !v.is_finite()) {
            return none(0.0, 0.0);
        }
        let mut flow = Flow::with_field(self.system.field.as_ref(), f64::INFINITY);
        let mut y = x.to_vec();
        let mut t = 0.0;
        let mut md = self.boundary_distance(&y);
        loop {
            if let Some(k) = self.captured(&y) {
                return Probe {
                    basin: Some(k),
                    min_boundary_dist: md,
                    time: t,
                    cap,
                };
            }
            if t >= self.system.t_max {
                return none(t, md);
            }
            let v = flow.speed(&y);
            let h = if v * self.system.dt > self.system.max_move {
                self.system.max_move / v
            } else {
                self.system.dt
            };
            if !flow.step(&mut y, h) || !self.system.ball.contains(&y) {
                return none(t, md);
            }
            t += h;
            if md > 0.0 {
                md = md.min(self.boundary_distance(&y));
            }
        }
    }

    pub fn classify_basin(&self, x: &[f64]) -> Option<usize> {
        self.probe(x).basin
    }

    /// Membership in the flow-adapted reduced domain `D^{ι,R}_δ`: the orbit is
    /// captured by `K^ι` without ever entering the `δ`-tube of the boundary.
    pub fn in_reduced_domain(&self, x: &[f64], iota: usize, delta: f64) -> bool {
        self.probe(x).reduced(delta) == Some(iota)
    }

    pub fn reduced_label(&self, x: &[f64], width: f64) -> Option<usize> {
        self.probe(x).reduced(width)
    }
}

fn pairwise_separation(catalog: &AttractorCatalog) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in catalog.entries.iter().enumerate() {
        for b in catalog.entries.iter().skip(i + 1) {
            let pa = a.polyline();
            let idx = SegmentIndex::new(&[b.polyline()], 1.0);
            let step = (pa.len() / 500).max(1);
            for p in pa.iter().step_by(step) {
                best = best.min(idx.nearest(p));
            }
        }
    }
    if best.is_finite() {
        best
    } else {
        1.0
    }
}

/// `λ = (δ − √(δ² + 4)) / 2`.
pub fn separatrix_lambda(friction: f64) -> f64 {
    (friction - (friction * friction + 4.0).sqrt()) / 2.0
}

/// Stable eigen-direction `(1, μ_s)` of the Duffing saddle, `μ_s = −(δ + √(δ²+4))/2`.
pub fn separatrix_stable_direction(friction: f64) -> [f64; 2] {
    [1.0, -(friction + (friction * friction + 4.0).sqrt()) / 2.0]
}

/// Backward orbit from `start`, recorded at spacing ≤ `spacing`, until it
/// leaves the box, stalls, or runs for `t_limit`.
fn trace_backward(system: &SystemSpec, start: &[f64], spacing: f64, t_limit: f64) -> Vec<Vec<f64>> {
    let mut flow = Flow::with_field(system.field.as_ref(), f64::INFINITY);
    let mut y = start.to_vec();
    let mut out = vec![y.clone()];
    let mut t = 0.0;
    while t < t_limit {
        let v = flow.speed(&y);
        if v < 1e-14 {
            break;
        }
        let h = system.dt.min(spacing / v);
        let mut z = y.clone();
        flow.step(&mut z, -h);
        if !z.iter().all(|c| c.is_finite()) || !system.ball.contains(&z) {
            break;
        }
        y = z;
        t += h;
        out.push(y.clone());
    }
    out
}

/// The two branches of the Duffing separatrix joined through the saddle,
/// clipped to the working box of `system`.
pub fn trace_separatrix_duffing(friction: f64, system: &SystemSpec) -> Result<Vec<Vec<f64>>> {
    if !(friction >= 0.0) {
        return Err(Error::domain("friction must be non-negative"));
    }
    let v = separatrix_stable_direction(friction);
    let n = norm(&v);
    let eta = 1e-7;
    let spacing = 0.002;
    let t_limit = 50.0 * system.t_max;
    let plus = trace_backward(system, &[eta * v[0] / n, eta * v[1] / n], spacing, t_limit);
    let minus = trace_backward(system, &[-eta * v[0] / n, -eta * v[1] / n], spacing, t_limit);
    let mut pl: Vec<Vec<f64>> = minus.into_iter().rev().collect();
    pl.push(vec![0.0, 0.0]);
    pl.extend(plus);
    Ok(pl)
}

/// Probe grid for boundary estimation by bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Nodes per axis.
    pub nodes: usize,
    pub iterations: usize,
    /// Backward-flow tracing from bisection points densifies the estimate;
    /// 0 disables it.
    pub trace_time: f64,
    pub max_traces: usize,
    pub trace_spacing: f64,
}

/// Locate basin-boundary points by bisection on every grid edge whose end
/// points are captured by different attractors, then densify by tracing the
/// boundary with the reversed flow.
pub fn estimate_boundary_bisection(
    system: &SystemSpec,
    catalog: &AttractorCatalog,
    grid: &BisectionGrid,
) -> Result<BasinBoundary> {
    let d = system.dim;
    if grid.lo.len() != d || grid.hi.len() != d || grid.nodes < 2 {
        return Err(Error::arg("bisection grid does not match the system dimension"));
    }
    let classifier = Landscape::classifier(system.clone(), catalog.clone())?;
    let n = grid.nodes;
    let total = n.pow(d as u32);
    let node = |mut k: usize| -> Vec<f64> {
        (0..d)
            .map(|j| {
                let i = k % n;
                k /= n;
                grid.lo[j] + (grid.hi[j] - grid.lo[j]) * i as f64 / (n - 1) as f64
            })
            .collect()
    };
    let labels: Vec<Option<usize>> = (0..total)
        .into_par_iter()
        .map(|k| classifier.classify_basin(&node(k)))
        .collect();

    let mut edges = Vec::new();
    for k in 0..total {
        let mut stride = 1;
        for _ in 0..d {
            let i = (k / stride) % n;
            if i + 1 < n {
                let k2 = k + stride;
                if let (Some(a), Some(b)) = (labels[k], labels[k2]) {
                    if a != b {
                        edges.push((k, k2, a));
                    }
                }
            }
            stride *= n;
        }
    }
    let points: Vec<Vec<f64>> = edges
        .par_iter()
        .map(|&(k1, k2, a)| {
            let (mut p, mut q) = (node(k1), node(k2));
            for _ in 0..grid.iterations {
                let m: Vec<f64> = p.iter().zip(&q).map(|(x, y)| 0.5 * (x + y)).collect();
                if classifier.classify_basin(&m) == Some(a) {
                    p = m;
                } else {
                    q = m;
                }
            }
            p.iter().zip(&q).map(|(x, y)| 0.5 * (x + y)).collect()
        })
        .collect();

    let mut polylines: Vec<Vec<Vec<f64>>> = points.iter().map(|p| vec![p.clone()]).collect();
    if grid.trace_time > 0.0 && grid.max_traces > 0 && !points.is_empty() {
        let stride = (points.len() / grid.max_traces).max(1);
        let traces: Vec<Vec<Vec<f64>>> = points
            .par_iter()
            .step_by(stride)
            .map(|p| trace_backward(system, p, grid.trace_spacing, grid.trace_time))
            .collect();
        polylines.extend(traces);
    }
    Ok(BasinBoundary { polylines })
}

struct Reversed(Arc<dyn VectorField>);

impl VectorField for Reversed {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.0.eval(x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
    fn name(&self) -> String {
        format!("reversed {}", self.0.name())
    }
}

/// Boundary made of repelling limit cycles (planar basins separated by
/// unstable cycles). Bisection points seed cycle detection in reversed time;
/// points that do not settle on a cycle are kept as isolated samples.
pub fn estimate_boundary_repelling_cycles(
    system: &SystemSpec,
    catalog: &AttractorCatalog,
    grid: &BisectionGrid,
) -> Result<BasinBoundary> {
    let plain = BisectionGrid {
        trace_time: 0.0,
        ..grid.clone()
    };
    let points = estimate_boundary_bisection(system, catalog, &plain)?;
    let mut reversed = system.clone();
    reversed.field = Arc::new(Reversed(system.field.clone()));
    let mut cycles: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut loose = Vec::new();
    for pl in points.polylines {
        let p = &pl[0];
        let tol = 1e-2 * (1.0 + norm(p));
        if cycles
            .iter()
            .any(|c| SegmentIndex::new(std::slice::from_ref(c), 1.0).nearest(p) < tol)
        {
            continue;
        }
        match detect_cycle(&reversed, p) {
            Ok(fit) => {
                let mut closed = fit.samples;
                closed.push(closed[0].clone());
                cycles.push(closed);
            }
            Err(_) => loose.push(pl),
        }
    }
    cycles.extend(loose);
    Ok(BasinBoundary { polylines: cycles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::find_attractors;
    use crate::dynamics::systems::{DoubleWell, Duffing};

    fn duffing_system() -> SystemSpec {
        SystemSpec::new(Arc::new(Duffing { friction: 0.5 }), 6.0, 400.0, 0.01)
            .unwrap()
            .with_max_move(0.01)
    }

    fn duffing_landscape() -> Landscape {
        let sys = duffing_system();
        let catalog = AttractorCatalog {
            entries: vec![
                Attractor::Point { state: vec![-1.0, 0.0] },
                Attractor::Point { state: vec![1.0, 0.0] },
            ],
            unclassified: vec![],
        };
        let sep = trace_separatrix_duffing(0.5, &sys).unwrap();
        Landscape::new(sys, catalog, BasinBoundary { polylines: vec![sep] }).unwrap()
    }

    #[test]
    fn lambda_closed_forms() {
        assert_eq!(separatrix_lambda(0.0), -1.0);
        assert_eq!(separatrix_lambda(1.5), -0.5);
        // at zero friction the stable direction and the closed form agree
        assert_eq!(separatrix_stable_direction(0.0), [1.0, -1.0]);
    }

    #[test]
    fn duffing_classification_examples() {
        let l = duffing_landscape();
        assert_eq!(l.classify_basin(&[1.2, 0.0]), Some(1));
        assert_eq!(l.classify_basin(&[-1.0, 0.0]), Some(0));
        assert_eq!(l.classify_basin(&[7.0, 0.0]), None);
        assert!(l.delta0 > 0.2 && l.delta0 < 0.6, "delta0 = {}", l.delta0);
    }

    #[test]
    fn separatrix_points_straddle_basins() {
        // Points pushed off the separatrix along its local normal land in
        // different basins; points on it approach the saddle and are not
        // captured within a tight horizon.
        let l = duffing_landscape();
        let pl = &l.boundary.polylines[0];
        let mut checked = 0;
        for w in pl.windows(2).step_by(97) {
            let (a, b) = (&w[0], &w[1]);
            let t = [b[0] - a[0], b[1] - a[1]];
            let tn = norm(&t);
            if tn == 0.0 || norm(a) < 0.05 || norm(a) > 5.0 {
                continue;
            }
            let nrm = [-t[1] / tn, t[0] / tn];
            let h = 1e-3;
            let p = [a[0] + h * nrm[0], a[1] + h * nrm[1]];
            let q = [a[0] - h * nrm[0], a[1] - h * nrm[1]];
            let (lp, lq) = (l.classify_basin(&p), l.classify_basin(&q));
            assert!(lp.is_some() && lq.is_some() && lp != lq, "at {a:?}: {lp:?} vs {lq:?}");
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn reduced_domain_examples() {
        let l = duffing_landscape();
        for &delta in &[0.01, 0.1, 0.9 * l.delta0] {
            assert!(l.in_reduced_domain(&[1.0, 0.0], 1, delta));
            assert!(l.in_reduced_domain(&[-1.0, 0.0], 0, delta));
        }
        // inside the tube: a point close to the separatrix
        let pl = &l.boundary.polylines[0];
        let on = &pl[pl.len() / 2 + 300];
        let delta = 0.05;
        let x = [on[0] + 0.4 * delta, on[1]];
        assert!(!l.in_reduced_domain(&x, 0, delta) && !l.in_reduced_domain(&x, 1, delta));
    }

    #[test]
    fn reduced_domains_nested_and_forward_invariant() {
        let l = duffing_landscape();
        let deltas = [0.02, 0.05, 0.1, 0.2];
        let mut flow = Flow::new(&l.system);
        for i in 0..15 {
            for j in 0..15 {
                let x = [-2.0 + 4.0 * i as f64 / 14.0 + 0.003, -2.0 + 4.0 * j as f64 / 14.0];
                let pr = l.probe(&x);
                for w in deltas.windows(2) {
                    let (small, large) = (w[0], w[1]);
                    if let Some(k) = pr.reduced(large) {
                        assert_eq!(pr.reduced(small), Some(k));
                    }
                }
                if let Some(k) = pr.reduced(0.05) {
                    let mut y = x.to_vec();
                    for _ in 0..3 {
                        flow.advance(&mut y, 1.5, l.system.dt);
                        assert!(l.in_reduced_domain(&y, k, 0.05), "x={x:?} y={y:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn bisection_finds_straight_separatrix() {
        let sys = SystemSpec::new(Arc::new(DoubleWell), 5.0, 200.0, 0.01).unwrap();
        let seeds: Vec<Vec<f64>> = (0..5).map(|i| vec![-1.5 + 0.75 * i as f64 + 0.1, 0.3]).collect();
        let cat = find_attractors(&sys, &seeds).unwrap();
        assert_eq!(cat.len(), 2);
        let grid = BisectionGrid {
            lo: vec![-2.0, -2.0],
            hi: vec![2.0, 1.5],
            nodes: 8,
            iterations: 30,
            trace_time: 0.0,
            max_traces: 0,
            trace_spacing: 0.01,
        };
        let b = estimate_boundary_bisection(&sys, &cat, &grid).unwrap();
        assert_eq!(b.polylines.len(), 8);
        for pl in &b.polylines {
            assert!(pl[0][0].abs() < 1e-6);
        }
        let l = Landscape::new(sys, cat, b).unwrap();
        assert!((l.delta0 - 0.5).abs() < 1e-6, "delta0 = {}", l.delta0);
    }

    /// Nested cycles at r = 1 and r = 3 separated by a repelling one at r = 2.
    struct Nested;

    impl VectorField for Nested {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64], out: &mut [f64]) {
            let r = norm(x);
            let g = -(r - 1.0) * (r - 2.0) * (r - 3.0);
            out[0] = g * x[0] - x[1];
            out[1] = g * x[1] + x[0];
        }
    }

    #[test]
    fn repelling_cycle_between_nested_cycles() {
        let sys = SystemSpec::new(Arc::new(Nested), 6.0, 400.0, 0.01).unwrap();
        let seeds = vec![vec![0.5, 0.0], vec![1.5, 0.0], vec![2.5, 0.0], vec![4.0, 0.0]];
        let cat = find_attractors(&sys, &seeds).unwrap();
        assert_eq!(cat.len(), 2);
        let grid = BisectionGrid {
            lo: vec![-3.5, -3.5],
            hi: vec![3.5, 3.0],
            nodes: 6,
            iterations: 30,
            trace_time: 0.0,
            max_traces: 0,
            trace_spacing: 0.01,
        };
        let b = estimate_boundary_repelling_cycles(&sys, &cat, &grid).unwrap();
        assert_eq!(b.polylines.len(), 1);
        assert!(b.polylines[0].iter().all(|p| (norm(p) - 2.0).abs() < 1e-6));
        let l = Landscape::new(sys, cat, b).unwrap();
        assert!((l.delta0 - 0.5).abs() < 1e-3, "delta0 = {}", l.delta0);
        assert_eq!(l.classify_basin(&[0.0, 1.9]), Some(0));
        assert_eq!(l.classify_basin(&[0.0, -2.1]), Some(1));
    }
}
