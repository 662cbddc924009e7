//! The limiting continuous-time Markov chain on basin indices and the
//! Monte Carlo harnesses comparing it with the perturbed system.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{EmpiricalMeasure, Landscape};
use crate::error::{Error, Result};
use crate::jumpmaps::CouplingSpec;
use crate::noise::HeavyTailSpec;
use crate::rates::GeneratorMatrix;
use crate::rng;
use crate::sde::{blur, ExitRecord, PathEngine, SimConfig, SwitchingPath};
use crate::stats::{binomial_se, kolmogorov_sf, Moments};

/// Chain on `0..κ` plus an absorbing cemetery (index `κ`).
#[derive(Debug, Clone)]
pub struct Ctmc {
    pub generator: GeneratorMatrix,
    q: DMatrix<f64>,
}

impl Ctmc {
    pub fn new(generator: GeneratorMatrix) -> Result<Self> {
        let aug = generator.augmented();
        let n = aug.len();
        for (i, row) in aug.iter().enumerate() {
            if row.iter().enumerate().any(|(j, &v)| j != i && (v < 0.0 || !v.is_finite())) {
                return Err(Error::domain(format!("row {i} has a negative or non-finite off-diagonal rate")));
            }
        }
        let q = DMatrix::from_fn(n, n, |i, j| aug[i][j]);
        Ok(Self { generator, q })
    }

    pub fn kappa(&self) -> usize {
        self.generator.kappa
    }

    pub fn cemetery(&self) -> usize {
        self.generator.kappa
    }

    /// `exp(tQ)` on the augmented state space.
    pub fn transition(&self, t: f64) -> DMatrix<f64> {
        (&self.q * t).exp()
    }

    /// Same chain with the rate `(i, j)` shifted by `d` (diagonal adjusted);
    /// `j = κ` addresses the cemetery column.
    fn perturbed(&self, i: usize, j: usize, d: f64) -> Ctmc {
        let mut q = self.q.clone();
        q[(i, j)] += d;
        q[(i, i)] -= d;
        Ctmc { generator: self.generator.clone(), q }
    }

    /// First-order standard error of `f(chain)` from the rate standard errors.
    pub fn propagated_se(&self, f: impl Fn(&Ctmc) -> f64) -> f64 {
        let k = self.kappa();
        let mut var = 0.0;
        for i in 0..k {
            for j in 0..=k {
                if i == j {
                    continue;
                }
                let se = if j == k { self.generator.cemetery_se[i] } else { self.generator.se[i][j] };
                if se <= 0.0 {
                    continue;
                }
                let rate = self.q[(i, j)];
                let d = se.min(rate.max(se * 1e-3));
                let hi = f(&self.perturbed(i, j, d));
                let lo = if rate >= d { f(&self.perturbed(i, j, -d)) } else { f(self) };
                let span = if rate >= d { 2.0 * d } else { d };
                let g = (hi - lo) / span;
                var += (g * se).powi(2);
            }
        }
        var.sqrt()
    }
}

/// One trajectory of the chain up to `horizon`.
pub fn simulate_chain(chain: &Ctmc, start: usize, horizon: f64, seed: u64, replica: u64) -> Result<SwitchingPath> {
    let k = chain.kappa();
    if start >= k {
        return Err(Error::arg(format!("start state {start} outside 0..{k}")));
    }
    let mut rng = rng::stream(seed, rng::tag::CHAIN, replica);
    let mut path = SwitchingPath {
        replica,
        times: vec![0.0],
        states: vec![Some(start)],
        horizon,
    };
    let mut cur = start;
    let mut t = 0.0;
    loop {
        let out = -chain.q[(cur, cur)];
        if out <= 0.0 {
            return Ok(path);
        }
        t += Exp::new(out).expect("positive rate").sample(&mut rng);
        if t >= horizon {
            return Ok(path);
        }
        let mut u = rng.random::<f64>() * out;
        let mut next = k;
        for j in (0..=k).filter(|&j| j != cur) {
            let r = chain.q[(cur, j)];
            if u < r {
                next = j;
                break;
            }
            u -= r;
        }
        path.times.push(t);
        if next == k {
            path.states.push(None);
            return Ok(path);
        }
        path.states.push(Some(next));
        cur = next;
    }
}

/// `P_{ι₀}(m_{s₁} = ι₁, …, m_{s_N} = ι_N)`; state `κ` is the cemetery.
pub fn fdd_probability(chain: &Ctmc, start: usize, times: &[f64], states: &[usize]) -> Result<f64> {
    if times.len() != states.len() || times.is_empty() {
        return Err(Error::arg("times and states must be non-empty and of equal length"));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("times must be non-negative and strictly increasing"));
    }
    let n = chain.kappa() + 1;
    if start >= n || states.iter().any(|&s| s >= n) {
        return Err(Error::arg("state index out of range"));
    }
    let mut p = 1.0;
    let mut prev = (0.0, start);
    for (&t, &s) in times.iter().zip(states) {
        p *= chain.transition(t - prev.0)[(prev.1, s)];
        prev = (t, s);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against the unit exponential law.
pub fn ks_exp1(samples: &[f64]) -> Result<KsResult> {
    if samples.len() < 50 {
        return Err(Error::InsufficientSamples { got: samples.len(), need: 50 });
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = if x > 0.0 { -(-x).exp_m1() } else { 0.0 };
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        n: v.len(),
        statistic: d,
        p_value: kolmogorov_sf(d * n.sqrt()),
    })
}

/// Observed against expected value with combined standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub observed: f64,
    pub observed_se: f64,
    pub expected: f64,
    pub expected_se: f64,
    pub z: f64,
    pub pass: bool,
}

impl Comparison {
    pub fn new(label: impl Into<String>, observed: f64, observed_se: f64, expected: f64, expected_se: f64, sigmas: f64) -> Self {
        let s = (observed_se * observed_se + expected_se * expected_se).sqrt();
        let diff = observed - expected;
        let z = if s > 0.0 {
            diff / s
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self {
            label: label.into(),
            observed,
            observed_se,
            expected,
            expected_se,
            z,
            pass: z.abs() <= sigmas,
        }
    }
}

/// Rescaled first exits `h_ε Q̂ 𝕋` against `EXP(1)` and the exit-target law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitLawReport {
    pub source: usize,
    pub epsilon: f64,
    pub replicas: usize,
    pub censored: usize,
    pub q_hat: f64,
    pub mean_exit_time: f64,
    pub mean_exit_time_se: f64,
    pub rescaled_mean: f64,
    pub rescaled_mean_se: f64,
    pub ks: KsResult,
    pub targets: Vec<Comparison>,
    pub pass: bool,
}

/// Exit-law checks: KS at level 0.01, rescaled mean in `[0.9, 1.1]`, and
/// target frequencies within 3 binomial standard errors of `Q(ι,·)/Q̂`.
pub fn exit_law_report(exits: &[ExitRecord], noise: &HeavyTailSpec, epsilon: f64, generator: &GeneratorMatrix) -> Result<ExitLawReport> {
    let source = exits.first().map(|e| e.source).ok_or(Error::InsufficientSamples { got: 0, need: 50 })?;
    if exits.iter().any(|e| e.source != source) {
        return Err(Error::arg("exit records from different source basins"));
    }
    let q_hat = generator.exit_rate(source);
    let h = noise.time_scale(epsilon);
    let done: Vec<&ExitRecord> = exits.iter().filter(|e| !e.censored).collect();
    let raw: Moments = done.iter().map(|e| e.time).collect();
    let scaled: Vec<f64> = done.iter().map(|e| e.time * h * q_hat).collect();
    let ks = ks_exp1(&scaled)?;
    let m: Moments = scaled.iter().copied().collect();
    let n = done.len();
    let mut targets = vec![];
    for j in 0..=generator.kappa {
        if j == source {
            continue;
        }
        let (label, rate, key) = if j == generator.kappa {
            ("cemetery".to_string(), generator.cemetery[source], None)
        } else {
            (format!("basin {j}"), generator.rates[source][j], Some(j))
        };
        let p = rate / q_hat;
        let obs = done.iter().filter(|e| e.target == key).count() as f64 / n as f64;
        targets.push(Comparison::new(label, obs, binomial_se(p, n), p, 0.0, 3.0));
    }
    let pass = ks.p_value >= 0.01 && (0.9..=1.1).contains(&m.mean) && targets.iter().all(|c| c.pass);
    Ok(ExitLawReport {
        source,
        epsilon,
        replicas: exits.len(),
        censored: exits.len() - n,
        q_hat,
        mean_exit_time: raw.mean,
        mean_exit_time_se: raw.std_error(),
        rescaled_mean: m.mean,
        rescaled_mean_se: m.std_error(),
        ks,
        targets,
        pass,
    })
}

/// Mean exit time ratio between `ε` and `ε/2` against `2^α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub source: usize,
    pub epsilon: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub expected: f64,
    pub relative_error: f64,
    pub pass: bool,
}

pub fn eps_scaling_report(coarse: &ExitLawReport, fine: &ExitLawReport, alpha: f64) -> Result<ScalingReport> {
    if (fine.epsilon * 2.0 - coarse.epsilon).abs() > 1e-12 * coarse.epsilon {
        return Err(Error::arg("the fine run must use half the coarse noise scale"));
    }
    let ratio = fine.mean_exit_time / coarse.mean_exit_time;
    let rel = |m: f64, s: f64| s / m;
    let ratio_se = ratio * rel(fine.mean_exit_time, fine.mean_exit_time_se).hypot(rel(coarse.mean_exit_time, coarse.mean_exit_time_se));
    let expected = 2f64.powf(alpha);
    let relative_error = ratio / expected - 1.0;
    if fine.source != coarse.source {
        return Err(Error::arg("scaling compares exits from the same basin"));
    }
    Ok(ScalingReport {
        source: fine.source,
        epsilon: fine.epsilon,
        ratio,
        ratio_se,
        expected,
        relative_error,
        pass: relative_error.abs() <= 0.15,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement1Report {
    pub epsilon: f64,
    pub start: Vec<f64>,
    pub start_basin: usize,
    pub times: Vec<f64>,
    pub replicas: usize,
    /// Paths that left the box before the last time point.
    pub lost: usize,
    pub rows: Vec<Comparison>,
    pub pass: bool,
}

/// All state sequences of length `n` over `0..k`.
fn sequences(k: usize, n: usize) -> Vec<Vec<usize>> {
    (0..k.pow(n as u32))
        .map(|mut c| {
            let mut s = vec![0; n];
            for v in s.iter_mut().rev() {
                *v = c % k;
                c /= k;
            }
            s
        })
        .collect()
}

/// Empirical `P_x(X_{s₁/h_ε} ∈ D̃^{ι₁}, …)` against the chain fdd for every
/// basin sequence. The empirical standard error uses the predicted
/// probability; the chain's error comes from the rate standard errors.
#[allow(clippy::too_many_arguments)]
pub fn verify_statement_1(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    cfg: &SimConfig,
    chain: &Ctmc,
    start: &[f64],
    times: &[f64],
    replicas: usize,
) -> Result<Statement1Report> {
    cfg.validate(landscape)?;
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("times must be positive and strictly increasing"));
    }
    let w = cfg.widths.entry();
    let iota0 = landscape
        .probe(start)
        .reduced(w)
        .ok_or_else(|| Error::domain("start is not in a doubly reduced domain"))?;
    let h = noise.time_scale(cfg.epsilon);
    let phys: Vec<f64> = times.iter().map(|s| s / h).collect();
    let labels: Vec<Option<Vec<Option<usize>>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let mut eng = PathEngine::new(landscape, coupling, noise, cfg, start, r)?;
            let obs = eng.observe(&phys)?;
            if obs.last().is_some_and(|o| o.is_none()) {
                return Ok(None);
            }
            Ok(Some(obs.iter().map(|o| landscape.probe(o.as_ref().expect("not lost")).reduced(w)).collect()))
        })
        .collect::<Result<_>>()?;
    let lost = labels.iter().filter(|l| l.is_none()).count();
    let k = chain.kappa();
    let rows = sequences(k, times.len())
        .into_iter()
        .map(|seq| -> Result<Comparison> {
            let hits = labels
                .iter()
                .flatten()
                .filter(|l| l.iter().zip(&seq).all(|(a, b)| *a == Some(*b)))
                .count();
            let p = fdd_probability(chain, iota0, times, &seq)?;
            let pse = chain.propagated_se(|c| fdd_probability(c, iota0, times, &seq).unwrap_or(f64::NAN));
            let obs = hits as f64 / replicas as f64;
            Ok(Comparison::new(format!("{seq:?}"), obs, binomial_se(p, replicas), p, pse, 3.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Statement1Report {
        epsilon: cfg.epsilon,
        start: start.to_vec(),
        start_basin: iota0,
        times: times.to_vec(),
        replicas,
        lost,
        pass: rows.iter().all(|c| c.pass),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement2Report {
    pub epsilon: f64,
    pub s: f64,
    pub t: f64,
    pub blur: f64,
    pub basin: usize,
    pub replicas: usize,
    pub accepted: usize,
    pub comparison: Comparison,
}

/// Number of blur nodes used to average the chain prediction over `σ`.
const BLUR_NODES: usize = 64;

/// `E[ψ(X_{(t+σr_ε)/h_ε}) | X_{s/h_ε} ∈ D̃^ι]` by rejection against
/// `E[∫ψ dP^{m_{t+σr_ε}} | m_s = ι]` averaged over `σ`. Lost paths and the
/// cemetery contribute 0.
#[allow(clippy::too_many_arguments)]
pub fn verify_statement_2<F>(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    cfg: &SimConfig,
    chain: &Ctmc,
    measures: &[EmpiricalMeasure],
    start: &[f64],
    psi: F,
    s: f64,
    t: f64,
    iota: usize,
    r_eps: f64,
    replicas: usize,
) -> Result<Statement2Report>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate(landscape)?;
    if !(0.0 < s && s < t - r_eps && r_eps >= 0.0) {
        return Err(Error::arg("need 0 < s < t − r_eps"));
    }
    let k = chain.kappa();
    if measures.len() != k || iota >= k {
        return Err(Error::arg("one ergodic measure per basin and a valid basin index are required"));
    }
    let w = cfg.widths.entry();
    let h = noise.time_scale(cfg.epsilon);
    let vals: Vec<Option<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Option<f64>> {
            let tt = t + blur(cfg.seed, r) * r_eps;
            let mut eng = PathEngine::new(landscape, coupling, noise, cfg, start, r)?;
            let obs = eng.observe(&[s / h, tt / h])?;
            match &obs[0] {
                Some(x) if landscape.probe(x).reduced(w) == Some(iota) => Ok(Some(obs[1].as_deref().map(&psi).unwrap_or(0.0))),
                _ => Ok(None),
            }
        })
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = vals.into_iter().flatten().collect();
    if acc.len() < 50 {
        return Err(Error::InsufficientSamples { got: acc.len(), need: 50 });
    }
    let m: Moments = acc.iter().copied().collect();
    let means: Vec<f64> = measures.iter().map(|mu| mu.integrate(&psi)).collect();
    let predict = |c: &Ctmc| -> f64 {
        (0..BLUR_NODES)
            .map(|n| {
                let sigma = -1.0 + (2 * n + 1) as f64 / BLUR_NODES as f64;
                let p = c.transition(t + sigma * r_eps - s);
                (0..k).map(|j| p[(iota, j)] * means[j]).sum::<f64>()
            })
            .sum::<f64>()
            / BLUR_NODES as f64
    };
    let expected = predict(chain);
    let expected_se = chain.propagated_se(predict);
    Ok(Statement2Report {
        epsilon: cfg.epsilon,
        s,
        t,
        blur: r_eps,
        basin: iota,
        replicas,
        accepted: acc.len(),
        comparison: Comparison::new("conditional blurred observable", m.mean, m.std_error(), expected, expected_se, 3.0),
    })
}
