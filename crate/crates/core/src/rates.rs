//! Limiting transition rates: event sets, the rate measures `Q^ι`, and the
//! generator matrix with its cemetery column.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ergodic_measure, Attractor, EmpiricalMeasure, Landscape, Probe};
use crate::error::{Error, Result};
use crate::jumpmaps::{post_jump, CouplingSpec};
use crate::noise::{tail_mass, HeavyTailSpec, JumpSampler, TailShape};
use crate::rng::{self, SimRng};
use crate::stats::Moments;

/// Region tested against the post-jump state.
#[derive(Clone)]
pub enum Target {
    /// Basin `D^j`.
    Basin(usize),
    /// Reduced domain `D^{j,R}_w`.
    Reduced { basin: usize, width: f64 },
    /// Complement of `D^{ι,R}_w`.
    Outside { basin: usize, width: f64 },
    /// No attractor captures the orbit.
    Cemetery,
    Region(Arc<dyn Fn(&[f64]) -> bool + Send + Sync>),
}

impl Target {
    fn needs_probe(&self) -> bool {
        !matches!(self, Target::Region(_))
    }

    fn accepts(&self, x: &[f64], probe: Option<&Probe>) -> bool {
        match (self, probe) {
            (Target::Region(f), _) => f(x),
            (Target::Basin(j), Some(p)) => p.basin == Some(*j),
            (Target::Reduced { basin, width }, Some(p)) => p.reduced(*width) == Some(*basin),
            (Target::Outside { basin, width }, Some(p)) => p.reduced(*width) != Some(*basin),
            (Target::Cemetery, Some(p)) => p.basin.is_none(),
            _ => unreachable!("probe computed for probing targets"),
        }
    }
}

/// Whether the jump `z` from `y` lands in `target`. A failing jump map counts
/// as leaving every basin.
pub fn event_set_member(landscape: &Landscape, coupling: &CouplingSpec, y: &[f64], z: &[f64], target: &Target) -> bool {
    match post_jump(coupling, y, z) {
        Ok(x) => {
            let probe = target.needs_probe().then(|| landscape.probe(&x));
            target.accepts(&x, probe.as_ref())
        }
        Err(_) => matches!(target, Target::Outside { .. } | Target::Cemetery),
    }
}

/// Monte Carlo budgets for the two-level estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    /// Outer samples `y ~ P^ι`.
    pub y_samples: usize,
    /// Inner samples `z ~ μ` per outer sample.
    pub z_samples: usize,
}

impl Budgets {
    fn validate(&self) -> Result<()> {
        if self.y_samples < 2 || self.z_samples == 0 {
            return Err(Error::arg("budgets need at least 2 outer and 1 inner sample"));
        }
        Ok(())
    }
}

fn pick(measure: &EmpiricalMeasure, rng: &mut SimRng) -> usize {
    if measure.points.len() == 1 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in measure.weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    measure.points.len() - 1
}

/// `Q^ι(target) = ∫ μ(E^{target}(y)) P^ι(dy)` by two-level Monte Carlo.
/// The standard error comes from the spread of the per-`y` estimates.
pub fn q_measure(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    measure: &EmpiricalMeasure,
    noise: &HeavyTailSpec,
    target: &Target,
    budgets: Budgets,
    seed: u64,
) -> Result<(f64, f64)> {
    budgets.validate()?;
    let mass = noise.limit_tail(noise.cutoff);
    let m: Moments = (0..budgets.y_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, rng::tag::RATES, k);
            let y = &measure.points[pick(measure, &mut rng)];
            let hits = (0..budgets.z_samples)
                .filter(|_| {
                    let z = noise.sample_limit(noise.cutoff, &mut rng);
                    event_set_member(landscape, coupling, y, &z, target)
                })
                .count();
            mass * hits as f64 / budgets.z_samples as f64
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .collect();
    Ok((m.mean, m.std_error()))
}

/// Reduced-domain widths `δ` (exit) and `δ + δ′` (entry).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Widths {
    pub delta: f64,
    pub delta_prime: f64,
}

impl Widths {
    /// Zero widths: the plain basins.
    pub const PLAIN: Widths = Widths { delta: 0.0, delta_prime: 0.0 };

    pub fn entry(&self) -> f64 {
        self.delta + self.delta_prime
    }

    /// Check against `δ₀` and the landscape's tube cap.
    pub fn validate_for(&self, landscape: &Landscape) -> Result<()> {
        self.validate(landscape.delta0)?;
        if self.entry() > landscape.tube_cap() {
            return Err(Error::domain(format!(
                "delta + delta_prime = {} exceeds the probe tube cap {}",
                self.entry(),
                landscape.tube_cap()
            )));
        }
        Ok(())
    }

    pub fn validate(&self, delta0: f64) -> Result<()> {
        if !(self.delta > 0.0 && self.delta_prime > 0.0) {
            return Err(Error::domain("delta and delta_prime must be positive"));
        }
        if self.entry() >= delta0 {
            return Err(Error::domain(format!(
                "delta + delta_prime = {} must stay below delta0 = {delta0}",
                self.entry()
            )));
        }
        Ok(())
    }
}

/// Where a jump from `K^ι` lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Landing {
    /// Still in `D̂^ι`.
    Stay,
    /// In `D̃^j` for some `j ≠ ι`.
    Enter(usize),
    /// Neither: cemetery.
    Lost,
}

pub fn categorize(probe: &Probe, iota: usize, widths: Widths) -> Landing {
    if probe.reduced(widths.delta) == Some(iota) {
        return Landing::Stay;
    }
    match probe.reduced(widths.entry()) {
        Some(j) if j != iota => Landing::Enter(j),
        _ => Landing::Lost,
    }
}

fn landing(landscape: &Landscape, coupling: &CouplingSpec, y: &[f64], z: &[f64], iota: usize, widths: Widths) -> Landing {
    match post_jump(coupling, y, z) {
        Ok(x) => categorize(&landscape.probe(&x), iota, widths),
        Err(_) => Landing::Lost,
    }
}

/// One rung of the pre-limit ladder: `λ_ε^ι / h_ε` at finite `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrelimitRate {
    pub basin: usize,
    pub epsilon: f64,
    pub ratio: f64,
    pub se: f64,
    pub samples: usize,
}

/// Limiting generator `Q^{δ*}`: `κ×κ` rates plus the cemetery column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMatrix {
    pub kappa: usize,
    pub rates: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub cemetery: Vec<f64>,
    pub cemetery_se: Vec<f64>,
    pub widths: Widths,
    pub budgets: Budgets,
    pub seed: u64,
    pub alpha: f64,
    pub cutoff: f64,
    pub normalization: f64,
    #[serde(default)]
    pub prelimit: Vec<PrelimitRate>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl GeneratorMatrix {
    /// Generator from explicit rates (diagonal filled in).
    pub fn from_rates(off_diagonal: Vec<Vec<f64>>, cemetery: Vec<f64>) -> Result<Self> {
        let kappa = off_diagonal.len();
        if kappa == 0 || off_diagonal.iter().any(|r| r.len() != kappa) || cemetery.len() != kappa {
            return Err(Error::arg("rate matrix must be square with one cemetery entry per row"));
        }
        let mut rates = off_diagonal;
        for (i, row) in rates.iter_mut().enumerate() {
            if row.iter().enumerate().any(|(j, &q)| j != i && !(q >= 0.0)) || !(cemetery[i] >= 0.0) {
                return Err(Error::arg("off-diagonal and cemetery rates must be non-negative"));
            }
            row[i] = 0.0;
            row[i] = -(row.iter().sum::<f64>() + cemetery[i]);
        }
        Ok(Self {
            kappa,
            rates,
            se: vec![vec![0.0; kappa]; kappa],
            cemetery,
            cemetery_se: vec![0.0; kappa],
            widths: Widths {
                delta: f64::NAN,
                delta_prime: f64::NAN,
            },
            budgets: Budgets {
                y_samples: 0,
                z_samples: 0,
            },
            seed: 0,
            alpha: f64::NAN,
            cutoff: f64::NAN,
            normalization: 1.0,
            prelimit: vec![],
            warnings: vec![],
        })
    }

    /// Total exit rate `−Q(ι,ι)`.
    pub fn exit_rate(&self, iota: usize) -> f64 {
        -self.rates[iota][iota]
    }

    /// `(κ+1)×(κ+1)` generator with the absorbing cemetery as last state.
    pub fn augmented(&self) -> Vec<Vec<f64>> {
        let k = self.kappa;
        let mut m = vec![vec![0.0; k + 1]; k + 1];
        for i in 0..k {
            m[i][..k].copy_from_slice(&self.rates[i]);
            m[i][k] = self.cemetery[i];
        }
        m
    }

    /// `from,to,rate,se` rows; `to` is a basin index or `cemetery`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("from,to,rate,se\n");
        for i in 0..self.kappa {
            for j in 0..self.kappa {
                let _ = writeln!(s, "{i},{j},{},{}", self.rates[i][j], self.se[i][j]);
            }
            let _ = writeln!(s, "{i},cemetery,{},{}", self.cemetery[i], self.cemetery_se[i]);
        }
        s
    }

    /// Rows whose only outflow is zero.
    pub fn degenerate_rows(&self) -> Vec<usize> {
        (0..self.kappa).filter(|&i| self.rates[i][i] == 0.0).collect()
    }
}

/// Ergodic measures of every catalog entry with `n` samples per cycle.
pub fn ergodic_measures(landscape: &Landscape, n: usize) -> Vec<EmpiricalMeasure> {
    landscape
        .catalog
        .entries
        .iter()
        .map(|e| ergodic_measure(&landscape.system, e, n))
        .collect()
}

fn probe_directions(noise: &HeavyTailSpec) -> Vec<Vec<f64>> {
    match noise.shape {
        TailShape::Pareto1d => vec![vec![1.0]],
        _ if noise.dim == 1 => vec![vec![1.0], vec![-1.0]],
        _ if noise.dim == 2 => (0..16)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 8.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => (0..noise.dim)
            .flat_map(|i| {
                [1.0, -1.0].map(|s| {
                    let mut v = vec![0.0; noise.dim];
                    v[i] = s;
                    v
                })
            })
            .collect(),
    }
}

/// Reject a cutoff `r₀` for which some jump shorter than `r₀` already leaves
/// `D̂^ι`: such jumps are not sampled, so the rates would be biased.
pub fn validate_cutoff(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    measures: &[EmpiricalMeasure],
    noise: &HeavyTailSpec,
    delta: f64,
) -> Result<()> {
    let dirs = probe_directions(noise);
    for (iota, m) in measures.iter().enumerate() {
        let stride = (m.points.len() / 24).max(1);
        for y in m.points.iter().step_by(stride) {
            for d in &dirs {
                for frac in [0.5, 1.0] {
                    let z: Vec<f64> = d.iter().map(|v| v * frac * noise.cutoff).collect();
                    let stays = post_jump(coupling, y, &z)
                        .map(|x| landscape.probe(&x).reduced(delta) == Some(iota))
                        .unwrap_or(false);
                    if !stays {
                        return Err(Error::Config {
                            key: "noise.cutoff".into(),
                            msg: format!(
                                "a jump of size {} from {:?} already leaves the reduced domain of basin {iota}; lower the cutoff",
                                frac * noise.cutoff,
                                y
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Fill the generator: entry `(ι, j) = Q^ι(D̃^j)`, cemetery
/// `Q^ι((D̂^ι ∪ ⋃ D̃^j)^c)`, diagonal `−Q^ι((D̂^ι)^c)`. One probe per jump
/// sample decides its category, so every row sums to zero exactly.
pub fn build_generator(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    measures: &[EmpiricalMeasure],
    widths: Widths,
    budgets: Budgets,
    seed: u64,
) -> Result<GeneratorMatrix> {
    let mut g = build_generators(landscape, coupling, noise, measures, &[widths], budgets, seed)?;
    Ok(g.remove(0))
}

/// Generator of the limiting chain with entries `Q^ι(D^j)` on the plain
/// basins; the cemetery column keeps landings whose orbit leaves the box.
pub fn build_limit_generator(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    measures: &[EmpiricalMeasure],
    budgets: Budgets,
    seed: u64,
) -> Result<GeneratorMatrix> {
    let mut g = build_generators(landscape, coupling, noise, measures, &[Widths::PLAIN], budgets, seed)?;
    Ok(g.remove(0))
}

/// Generators for several width pairs from one set of samples; the pair
/// [`Widths::PLAIN`] selects the unreduced basins.
pub fn build_generators(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    measures: &[EmpiricalMeasure],
    widths: &[Widths],
    budgets: Budgets,
    seed: u64,
) -> Result<Vec<GeneratorMatrix>> {
    budgets.validate()?;
    for w in widths.iter().filter(|w| **w != Widths::PLAIN) {
        w.validate_for(landscape)?;
    }
    let kappa = landscape.kappa();
    if measures.len() != kappa {
        return Err(Error::arg("one ergodic measure per attractor is required"));
    }
    let nw = widths.len();
    let mass = noise.limit_tail(noise.cutoff);
    let mut out: Vec<GeneratorMatrix> = widths
        .iter()
        .map(|&w| GeneratorMatrix {
            kappa,
            rates: vec![vec![0.0; kappa]; kappa],
            se: vec![vec![0.0; kappa]; kappa],
            cemetery: vec![0.0; kappa],
            cemetery_se: vec![0.0; kappa],
            widths: w,
            budgets,
            seed,
            alpha: noise.alpha,
            cutoff: noise.cutoff,
            normalization: noise.normalization,
            prelimit: vec![],
            warnings: vec![],
        })
        .collect();
    for iota in 0..kappa {
        let measure = &measures[iota];
        // per outer sample and width: counts per target basin, cemetery, total exits
        let per_y: Vec<Vec<Vec<f64>>> = (0..budgets.y_samples as u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng::stream(seed, rng::tag::RATES, (iota as u64) << 40 | k);
                let y = &measure.points[pick(measure, &mut rng)];
                let mut counts = vec![vec![0usize; kappa + 1]; nw];
                for _ in 0..budgets.z_samples {
                    let z = noise.sample_limit(noise.cutoff, &mut rng);
                    let probe = post_jump(coupling, y, &z).ok().map(|x| landscape.probe(&x));
                    for (c, &w) in counts.iter_mut().zip(widths) {
                        match probe.as_ref().map_or(Landing::Lost, |p| categorize(p, iota, w)) {
                            Landing::Stay => {}
                            Landing::Enter(j) => c[j] += 1,
                            Landing::Lost => c[kappa] += 1,
                        }
                    }
                }
                counts
                    .iter()
                    .map(|c| {
                        let exits: usize = c.iter().sum();
                        let mut v: Vec<f64> = c.iter().map(|&n| mass * n as f64 / budgets.z_samples as f64).collect();
                        v.push(mass * exits as f64 / budgets.z_samples as f64);
                        v
                    })
                    .collect()
            })
            .collect();
        for (wi, g) in out.iter_mut().enumerate() {
            let col = |c: usize| -> Moments { per_y.iter().map(|v| v[wi][c]).collect() };
            for j in (0..kappa).filter(|&j| j != iota) {
                let m = col(j);
                g.rates[iota][j] = m.mean;
                g.se[iota][j] = m.std_error();
            }
            let m = col(kappa);
            g.cemetery[iota] = m.mean;
            g.cemetery_se[iota] = m.std_error();
            // exact zero row sum: the diagonal is the sum of the same samples
            let off: f64 = (0..kappa).filter(|&j| j != iota).map(|j| g.rates[iota][j]).sum();
            g.rates[iota][iota] = -(off + g.cemetery[iota]);
            g.se[iota][iota] = col(kappa + 1).std_error();
        }
    }
    for g in &mut out {
        for i in g.degenerate_rows() {
            g.warnings.push(format!("row {i} has no outflow: degenerate generator"));
        }
    }
    Ok(out)
}

/// `λ_ε^ι / h_ε`: exit rate at finite `ε` from jumps of the actual Lévy
/// measure `ν` (restricted to `‖εz‖ ≥ r₀`), divided by `h_ε = h(1/ε)`.
#[allow(clippy::too_many_arguments)]
pub fn prelimit_exit_ratio(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    measure: &EmpiricalMeasure,
    iota: usize,
    widths: Widths,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<PrelimitRate> {
    if samples < 2 || !(epsilon > 0.0) {
        return Err(Error::arg("prelimit ratio needs epsilon > 0 and at least 2 samples"));
    }
    let scaled = noise.with_cutoff(noise.cutoff / epsilon)?;
    let rate = tail_mass(&scaled, scaled.cutoff.max(1.0))?;
    let h = tail_mass(noise, 1.0 / epsilon)?;
    let chunks = 32usize;
    let per = samples.div_ceil(chunks);
    let parts: Vec<(usize, usize)> = (0..chunks as u64)
        .into_par_iter()
        .map(|k| -> Result<(usize, usize)> {
            let mut rng = rng::stream(seed, rng::tag::PRELIMIT, (iota as u64) << 40 | k);
            let mut sampler = JumpSampler::new(&scaled, rng::stream(seed, rng::tag::PRELIMIT, (1 << 60) | (iota as u64) << 40 | k))?;
            let mut hits = 0;
            for _ in 0..per {
                let y = &measure.points[pick(measure, &mut rng)];
                let z: Vec<f64> = sampler.next().expect("infinite stream").z.iter().map(|v| v * epsilon).collect();
                if landing(landscape, coupling, y, &z, iota, widths) != Landing::Stay {
                    hits += 1;
                }
            }
            Ok((hits, per))
        })
        .collect::<Result<Vec<_>>>()?;
    let (hits, n) = parts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let p = hits as f64 / n as f64;
    Ok(PrelimitRate {
        basin: iota,
        epsilon,
        ratio: rate * p / h,
        se: rate / h * (p * (1.0 - p) / n as f64).sqrt(),
        samples: n,
    })
}

/// Interval `[a, b)` of jump sizes along a ray with its landing basin.
#[derive(Debug, Clone, PartialEq)]
pub struct RayInterval {
    pub a: f64,
    pub b: f64,
    pub basin: Option<usize>,
}

fn ray_segment_hit(y: &[f64], dir: &[f64], p: &[f64], q: &[f64]) -> Option<f64> {
    // y + t·dir = p + s·(q − p), t > 0, s ∈ [0, 1)
    let e = [q[0] - p[0], q[1] - p[1]];
    let det = dir[0] * (-e[1]) + e[0] * dir[1];
    if det.abs() < 1e-300 {
        return None;
    }
    let w = [p[0] - y[0], p[1] - y[1]];
    let t = (w[0] * (-e[1]) + e[0] * w[1]) / det;
    let s = (dir[0] * w[1] - dir[1] * w[0]) / det;
    (t > 0.0 && (0.0..1.0).contains(&s)).then_some(t)
}

/// Split the planar ray `{y + t·dir : t > 0}` at its crossings with the basin
/// boundary and the edge of the working box, labelling each piece by probing
/// its midpoint.
pub fn ray_intervals(landscape: &Landscape, y: &[f64], dir: &[f64]) -> Result<Vec<RayInterval>> {
    if y.len() != 2 || dir.len() != 2 {
        return Err(Error::arg("ray intervals are planar"));
    }
    let ball = &landscape.system.ball;
    let w = [y[0] - ball.center[0], y[1] - ball.center[1]];
    let b = w[0] * dir[0] + w[1] * dir[1];
    let dd = dir[0] * dir[0] + dir[1] * dir[1];
    let c = w[0] * w[0] + w[1] * w[1] - ball.radius * ball.radius;
    let t_exit = (-b + (b * b - dd * c).max(0.0).sqrt()) / dd;
    let mut cuts = vec![0.0];
    for pl in &landscape.boundary.polylines {
        for seg in pl.windows(2) {
            if let Some(t) = ray_segment_hit(y, dir, &seg[0], &seg[1]) {
                if t < t_exit {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.push(t_exit);
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut out: Vec<RayInterval> = cuts
        .windows(2)
        .map(|c| {
            let t = 0.5 * (c[0] + c[1]);
            let x = [y[0] + t * dir[0], y[1] + t * dir[1]];
            RayInterval {
                a: c[0],
                b: c[1],
                basin: landscape.classify_basin(&x),
            }
        })
        .collect();
    out.push(RayInterval {
        a: t_exit,
        b: f64::INFINITY,
        basin: None,
    });
    Ok(out)
}

/// Deterministic rates for a planar system pushed along the first coordinate
/// by one-sided Pareto jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayQuadrature {
    pub alpha: f64,
    pub z_min: f64,
    /// `rates[ι][j]`: rate of landing in basin `j` (`j = κ` is the cemetery).
    pub rates: Vec<Vec<f64>>,
    pub samples: usize,
}

/// `Q^ι(D^j) = (1/𝒯) ∫₀^𝒯 ∫_{z_min}^∞ α z^{−1−α} 1{φ^ι(s) + z e₁ ∈ D^j} dz ds`,
/// with the post-jump point `(φ¹(s) + z, φ²(s))`. The inner integral is exact
/// on the ray pieces; the outer one is the periodic rectangle rule, checked
/// against its half-resolution value.
pub fn goldbeter_rates_quadrature(landscape: &Landscape, alpha: f64, z_min: f64, samples: usize) -> Result<RayQuadrature> {
    if !(alpha > 0.0) || !(z_min > 0.0) || samples < 8 {
        return Err(Error::arg("quadrature needs alpha > 0, z_min > 0 and at least 8 samples"));
    }
    let rays = cycle_rays(landscape, samples)?;
    let rates = quadrature_from_rays(&rays, landscape.kappa(), alpha, z_min, 1)?;
    let coarse = quadrature_from_rays(&rays, landscape.kappa(), alpha, z_min, 2)?;
    for (r, c) in rates.iter().flatten().zip(coarse.iter().flatten()) {
        if (r - c).abs() > 0.05 * r.abs().max(1e-6) {
            return Err(Error::Quadrature(format!(
                "outer rule not converged: {r} at full resolution vs {c} at half"
            )));
        }
    }
    Ok(RayQuadrature {
        alpha,
        z_min,
        rates,
        samples,
    })
}

/// Ray decompositions from equal-time samples of every attractor.
pub fn cycle_rays(landscape: &Landscape, samples: usize) -> Result<Vec<Vec<Vec<RayInterval>>>> {
    landscape
        .catalog
        .entries
        .iter()
        .map(|e| {
            let pts = match e {
                Attractor::Point { state } => vec![state.clone()],
                Attractor::Cycle { .. } => ergodic_measure(&landscape.system, e, samples).points,
            };
            pts.par_iter()
                .map(|y| ray_intervals(landscape, y, &[1.0, 0.0]))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Evaluate the ray quadrature for one `α`, using every `stride`-th sample.
pub fn quadrature_from_rays(
    rays: &[Vec<Vec<RayInterval>>],
    kappa: usize,
    alpha: f64,
    z_min: f64,
    stride: usize,
) -> Result<Vec<Vec<f64>>> {
    let tail = |t: f64| if t.is_infinite() { 0.0 } else { t.max(z_min).powf(-alpha) };
    let mut out = vec![vec![0.0; kappa + 1]; kappa];
    for (iota, per_s) in rays.iter().enumerate() {
        let used: Vec<_> = per_s.iter().step_by(stride).collect();
        for ivs in &used {
            for iv in ivs.iter() {
                if iv.basin == Some(iota) {
                    continue;
                }
                let j = iv.basin.unwrap_or(kappa);
                out[iota][j] += (tail(iv.a) - tail(iv.b)) / used.len() as f64;
            }
        }
    }
    Ok(out)
}

/// Shifted-kernel variant `∫_E μ(dz − c)`: the jump set `E` of `y` weighted by
/// the limit measure centred at `center` instead of the origin. Mass within
/// `r₀` of the centre is not sampled.
#[allow(clippy::too_many_arguments)]
pub fn shifted_kernel_rate(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    y: &[f64],
    center: &[f64],
    target: &Target,
    budget: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let region = |w: &[f64]| {
        let z: Vec<f64> = w.iter().zip(center).map(|(a, b)| a + b).collect();
        event_set_member(landscape, coupling, y, &z, target)
    };
    let chunks = 16u64;
    let per = budget.div_ceil(chunks as usize).max(1);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| crate::noise::limit_measure_mass(noise, region, per, seed.wrapping_add(k)))
        .collect::<Result<Vec<_>>>()?;
    let n = chunks as f64;
    let mean = parts.iter().map(|p| p.0).sum::<f64>() / n;
    let se = parts.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt() / n;
    Ok((mean, se))
}
