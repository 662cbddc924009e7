//! Simulation of the perturbed system at noise scale `ε`: deterministic flow
//! between large jumps, post-jump maps at jump times, first exits from
//! reduced domains and the induced switching process.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Flow, Landscape, Probe};
use crate::error::{Error, Result};
use crate::jumpmaps::{post_jump, CouplingSpec};
use crate::noise::{HeavyTailSpec, JumpEvent, JumpSampler};
use crate::rates::{categorize, Landing, Widths};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub epsilon: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Constant coefficient of the additive Brownian part (0 disables it).
    pub brownian: f64,
    /// Drift `b` of the driving noise, in jump coordinates (empty means 0).
    pub drift: Vec<f64>,
    pub seed: u64,
    pub widths: Widths,
    /// Reduced-domain checks between jumps every this many steps (Brownian part only).
    pub n_check: usize,
    /// Exit searches stop after `cap_factor / (h_ε Q̂)`.
    pub cap_factor: f64,
    /// Sampling interval of recorded paths.
    pub sample_dt: f64,
}

impl SimConfig {
    pub fn new(epsilon: f64, horizon: f64, dt: f64, seed: u64, widths: Widths) -> Self {
        Self {
            epsilon,
            horizon,
            dt,
            brownian: 0.0,
            drift: vec![],
            seed,
            widths,
            n_check: 10,
            cap_factor: 50.0,
            sample_dt: 1.0,
        }
    }

    pub fn validate(&self, landscape: &Landscape) -> Result<()> {
        if !(self.epsilon > 0.0 && self.horizon > 0.0 && self.dt > 0.0 && self.sample_dt > 0.0) {
            return Err(Error::arg("epsilon, horizon, dt and sample_dt must be positive"));
        }
        if !(self.brownian >= 0.0) || self.n_check == 0 || !(self.cap_factor > 0.0) {
            return Err(Error::arg("brownian must be non-negative, n_check and cap_factor positive"));
        }
        self.widths.validate_for(landscape)
    }

    fn deterministic_between_jumps(&self) -> bool {
        self.brownian == 0.0 && self.drift.iter().all(|&b| b == 0.0)
    }
}

/// One applied jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    /// Increment in z-units, before scaling by `ε`.
    pub z: Vec<f64>,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub jumps: Vec<JumpRecord>,
    /// The path left the working box.
    pub truncated: bool,
    /// Time of a numerical blowup; the record stops there.
    pub blowup: Option<f64>,
}

/// First exit from `D̂^ι`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub replica: u64,
    pub source: usize,
    pub time: f64,
    pub state: Vec<f64>,
    /// `Some(j)` if the exit state lies in `D̃^j`, `None` for the cemetery.
    pub target: Option<usize>,
    /// Plain basin of the exit state.
    pub basin: Option<usize>,
    pub censored: bool,
    pub jumps: usize,
}

/// Arrival times and states of the switching process; `None` is the cemetery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingPath {
    pub replica: u64,
    pub times: Vec<f64>,
    pub states: Vec<Option<usize>>,
    pub horizon: f64,
}

impl SwitchingPath {
    /// State at time `t`.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s <= t);
        self.states[k.saturating_sub(1)]
    }

    /// Time spent in each basin up to the horizon.
    pub fn occupation(&self, kappa: usize) -> Vec<f64> {
        let mut occ = vec![0.0; kappa];
        for (k, s) in self.states.iter().enumerate() {
            let end = self.times.get(k + 1).copied().unwrap_or(self.horizon);
            if let Some(i) = s {
                occ[*i] += end - self.times[k];
            }
        }
        occ
    }

    pub fn holding_times(&self) -> Vec<(usize, f64)> {
        self.states
            .iter()
            .zip(self.times.windows(2))
            .filter_map(|(s, w)| s.map(|i| (i, w[1] - w[0])))
            .collect()
    }
}

/// Why `advance_to` stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    Reached,
    Jump,
    Check,
    Left,
}

/// Piecewise-deterministic integrator of one replica.
pub struct PathEngine<'a> {
    landscape: &'a Landscape,
    coupling: &'a CouplingSpec,
    cfg: &'a SimConfig,
    flow: Flow<'a>,
    sampler: JumpSampler,
    next: JumpEvent,
    brownian_rng: SimRng,
    drift_vel: Vec<f64>,
    scratch: Vec<f64>,
    steps: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub jumps: usize,
}

/// Noise spec whose cutoff (in z-units) keeps scaled jumps with `‖εz‖ ≥ r₀`.
pub fn scaled_noise(noise: &HeavyTailSpec, epsilon: f64) -> Result<HeavyTailSpec> {
    noise.with_cutoff(noise.cutoff / epsilon)
}

impl<'a> PathEngine<'a> {
    pub fn new(
        landscape: &'a Landscape,
        coupling: &'a CouplingSpec,
        noise: &HeavyTailSpec,
        cfg: &'a SimConfig,
        x: &[f64],
        replica: u64,
    ) -> Result<Self> {
        if x.len() != landscape.system.dim || coupling.dim() != x.len() || coupling.noise_dim() != noise.dim {
            return Err(Error::arg("state, coupling and noise dimensions disagree"));
        }
        let mut sampler = JumpSampler::new(&scaled_noise(noise, cfg.epsilon)?, rng::stream(cfg.seed, rng::tag::JUMPS, replica))?;
        let next = sampler.next().expect("infinite jump stream");
        let mut drift_vel = vec![0.0; x.len()];
        if !cfg.drift.is_empty() {
            if cfg.drift.len() != noise.dim || !coupling.phi.is_constant() {
                return Err(Error::arg("noise drift needs the jump dimension and a constant coupling matrix"));
            }
            let scaled: Vec<f64> = cfg.drift.iter().map(|b| cfg.epsilon * b).collect();
            let moved = post_jump(coupling, &vec![0.0; x.len()], &scaled)?;
            drift_vel = moved;
        }
        Ok(Self {
            landscape,
            coupling,
            cfg,
            flow: Flow::new(&landscape.system),
            sampler,
            next,
            brownian_rng: rng::stream(cfg.seed, rng::tag::BROWNIAN, replica),
            drift_vel,
            scratch: vec![0.0; x.len()],
            steps: 0,
            t: 0.0,
            x: x.to_vec(),
            jumps: 0,
        })
    }

    pub fn next_jump_time(&self) -> f64 {
        self.next.time
    }

    /// Integrate until `target`, the next jump, a periodic check or leaving the box.
    pub fn advance_to(&mut self, target: f64) -> Result<Stop> {
        let plain = self.cfg.deterministic_between_jumps();
        loop {
            let jump_first = self.next.time <= target;
            let stop_t = if jump_first { self.next.time } else { target };
            if self.t >= stop_t {
                self.t = self.t.max(stop_t);
                return Ok(if jump_first { Stop::Jump } else { Stop::Reached });
            }
            if plain && self.flow.speed(&self.x) < 1e-13 {
                self.t = stop_t;
                continue;
            }
            let remaining = stop_t - self.t;
            let h = if remaining <= self.cfg.dt * (1.0 + 1e-9) { remaining } else { self.cfg.dt };
            if !self.flow.step(&mut self.x, h) {
                return Err(Error::Blowup { time: self.t });
            }
            if !plain {
                let amp = self.cfg.epsilon * self.cfg.brownian * h.sqrt();
                for (i, v) in self.x.iter_mut().enumerate() {
                    *v += h * self.drift_vel[i];
                    if amp > 0.0 {
                        let g: f64 = self.brownian_rng.sample(StandardNormal);
                        *v += amp * g;
                    }
                }
            }
            self.t = if h == remaining { stop_t } else { self.t + h };
            if !self.landscape.system.ball.contains(&self.x) {
                return Ok(Stop::Left);
            }
            if self.cfg.brownian > 0.0 {
                self.steps += 1;
                if self.steps.is_multiple_of(self.cfg.n_check) {
                    return Ok(Stop::Check);
                }
            }
        }
    }

    /// Apply the pending jump (the engine must stand at its time).
    pub fn apply_jump(&mut self) -> Result<JumpRecord> {
        debug_assert!(self.t >= self.next.time);
        let z = std::mem::replace(&mut self.next, self.sampler.next().expect("infinite jump stream"));
        self.scratch.clear();
        self.scratch.extend(z.z.iter().map(|v| v * self.cfg.epsilon));
        let pre = self.x.clone();
        let post = post_jump(self.coupling, &pre, &self.scratch).map_err(|_| Error::Blowup { time: self.t })?;
        self.x.clone_from(&post);
        self.jumps += 1;
        Ok(JumpRecord {
            time: self.t,
            z: z.z,
            pre,
            post,
        })
    }

    pub fn probe(&self) -> Probe {
        self.landscape.probe(&self.x)
    }

    /// Deterministic states at increasing `times` (`None` once the path is lost).
    pub fn observe(&mut self, times: &[f64]) -> Result<Vec<Option<Vec<f64>>>> {
        let mut out = Vec::with_capacity(times.len());
        let mut lost = false;
        for &t in times {
            while !lost {
                match self.advance_to(t)? {
                    Stop::Reached => break,
                    Stop::Jump => {
                        self.apply_jump()?;
                        if !self.landscape.system.ball.contains(&self.x) {
                            lost = true;
                        }
                    }
                    Stop::Check => {}
                    Stop::Left => lost = true,
                }
            }
            out.push((!lost).then(|| self.x.clone()));
        }
        Ok(out)
    }
}

/// One path sampled every `sample_dt` up to the horizon, with every jump.
pub fn simulate_path(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    cfg: &SimConfig,
    x: &[f64],
    replica: u64,
) -> Result<PathRecord> {
    cfg.validate(landscape)?;
    if !landscape.system.ball.contains(x) {
        return Err(Error::domain("initial state outside the working box"));
    }
    let mut eng = PathEngine::new(landscape, coupling, noise, cfg, x, replica)?;
    let mut rec = PathRecord {
        times: vec![0.0],
        states: vec![x.to_vec()],
        jumps: vec![],
        truncated: false,
        blowup: None,
    };
    let n = (cfg.horizon / cfg.sample_dt).floor() as usize;
    'outer: for k in 1..=n {
        let t = k as f64 * cfg.sample_dt;
        loop {
            let stop = match eng.advance_to(t) {
                Ok(s) => s,
                Err(_) => {
                    rec.blowup = Some(eng.t);
                    break 'outer;
                }
            };
            match stop {
                Stop::Reached => break,
                Stop::Jump => match eng.apply_jump() {
                    Ok(j) => {
                        rec.jumps.push(j);
                        if !landscape.system.ball.contains(&eng.x) {
                            rec.truncated = true;
                            break 'outer;
                        }
                    }
                    Err(_) => {
                        rec.blowup = Some(eng.t);
                        break 'outer;
                    }
                },
                Stop::Check => {}
                Stop::Left => {
                    rec.truncated = true;
                    break 'outer;
                }
            }
        }
        rec.times.push(t);
        rec.states.push(eng.x.clone());
    }
    Ok(rec)
}

/// Run until the state leaves `D̂^ι = D^{ι,R}_δ`, checked after every jump
/// and every `n_check` steps when a Brownian part is present. Paths still
/// inside at `cap` are censored.
#[allow(clippy::too_many_arguments)]
pub fn first_exit(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    cfg: &SimConfig,
    x: &[f64],
    iota: usize,
    cap: f64,
    replica: u64,
) -> Result<ExitRecord> {
    let p = landscape.probe(x);
    if p.reduced(cfg.widths.entry()) != Some(iota) {
        return Err(Error::domain(format!("start {x:?} is not in the doubly reduced domain of basin {iota}")));
    }
    let mut eng = PathEngine::new(landscape, coupling, noise, cfg, x, replica)?;
    let exit = |eng: &PathEngine, probe: Option<Probe>| {
        let (target, basin) = match probe {
            Some(p) => (
                match categorize(&p, iota, cfg.widths) {
                    Landing::Enter(j) => Some(j),
                    _ => None,
                },
                p.basin,
            ),
            None => (None, None),
        };
        ExitRecord {
            replica,
            source: iota,
            time: eng.t,
            state: eng.x.clone(),
            target,
            basin,
            censored: false,
            jumps: eng.jumps,
        }
    };
    loop {
        match eng.advance_to(cap)? {
            Stop::Reached => {
                let mut r = exit(&eng, None);
                r.censored = true;
                r.basin = Some(iota);
                return Ok(r);
            }
            Stop::Jump => {
                eng.apply_jump()?;
                let p = eng.probe();
                if p.reduced(cfg.widths.delta) != Some(iota) {
                    return Ok(exit(&eng, Some(p)));
                }
            }
            Stop::Check => {
                let p = eng.probe();
                if p.reduced(cfg.widths.delta) != Some(iota) {
                    return Ok(exit(&eng, Some(p)));
                }
            }
            Stop::Left => return Ok(exit(&eng, None)),
        }
    }
}

/// Censoring time `cap_factor / (h_ε Q̂)`.
pub fn exit_cap(noise: &HeavyTailSpec, cfg: &SimConfig, q_hat: f64) -> f64 {
    cfg.cap_factor / (noise.time_scale(cfg.epsilon) * q_hat)
}

/// Independent first exits for replicas `0..n`, ordered by replica.
#[allow(clippy::too_many_arguments)]
pub fn exit_times(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    cfg: &SimConfig,
    x: &[f64],
    iota: usize,
    q_hat: f64,
    n: u64,
) -> Result<Vec<ExitRecord>> {
    cfg.validate(landscape)?;
    let cap = exit_cap(noise, cfg, q_hat);
    (0..n)
        .into_par_iter()
        .map(|r| first_exit(landscape, coupling, noise, cfg, x, iota, cap, r))
        .collect()
}

/// The switching process of one long path: a new arrival whenever a jump (or
/// a periodic check) lands in a reduced domain other than the current one.
/// A landing inside the tube is attributed to the basin its orbit relaxes
/// into; leaving the box or an uncaptured orbit sends the path to the cemetery.
pub fn metastability_run(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    cfg: &SimConfig,
    x: &[f64],
    horizon: f64,
    replica: u64,
) -> Result<SwitchingPath> {
    cfg.validate(landscape)?;
    let s0 = landscape
        .classify_basin(x)
        .ok_or_else(|| Error::domain(format!("start {x:?} is not in any basin")))?;
    let mut eng = PathEngine::new(landscape, coupling, noise, cfg, x, replica)?;
    let mut path = SwitchingPath {
        replica,
        times: vec![0.0],
        states: vec![Some(s0)],
        horizon,
    };
    let mut cur = s0;
    loop {
        let stop = eng.advance_to(horizon)?;
        let label = match stop {
            Stop::Reached => return Ok(path),
            Stop::Left => None,
            Stop::Jump => {
                eng.apply_jump()?;
                let p = eng.probe();
                if p.reduced(cfg.widths.delta) == Some(cur) {
                    continue;
                }
                p.basin
            }
            Stop::Check => {
                let p = eng.probe();
                if p.reduced(cfg.widths.delta) == Some(cur) {
                    continue;
                }
                p.basin
            }
        };
        match label {
            Some(j) if j == cur => {}
            Some(j) => {
                path.times.push(eng.t);
                path.states.push(Some(j));
                cur = j;
            }
            None => {
                path.times.push(eng.t);
                path.states.push(None);
                return Ok(path);
            }
        }
    }
}

/// Uniform blur `σ ∈ [−1, 1]` of a replica.
pub fn blur(seed: u64, replica: u64) -> f64 {
    let mut r = rng::stream(seed, rng::tag::BLUR, replica);
    2.0 * r.random::<f64>() - 1.0
}

/// `E[ψ(X^ε_{(t + σ r_ε)/h_ε})]` over `replicas` paths; returns `(mean, se)`.
/// Lost paths contribute 0.
#[allow(clippy::too_many_arguments)]
pub fn randomized_time_observable<F>(
    landscape: &Landscape,
    coupling: &CouplingSpec,
    noise: &HeavyTailSpec,
    cfg: &SimConfig,
    x: &[f64],
    t: f64,
    r_eps: f64,
    psi: F,
    replicas: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate(landscape)?;
    if r_eps >= t {
        return Err(Error::arg("blur radius must be below the observation time"));
    }
    let h = noise.time_scale(cfg.epsilon);
    let vals: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let tt = (t + blur(cfg.seed, r) * r_eps) / h;
            let mut eng = PathEngine::new(landscape, coupling, noise, cfg, x, r)?;
            let obs = eng.observe(&[tt])?;
            Ok(obs[0].as_deref().map(&psi).unwrap_or(0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    let m: crate::stats::Moments = vals.into_iter().collect();
    Ok((m.mean, m.std_error()))
}

/// Default blur `r_ε = ε^{α/2}`: `r_ε → 0` while `r_ε / h_ε → ∞`.
pub fn default_blur(noise: &HeavyTailSpec, epsilon: f64) -> f64 {
    epsilon.powf(noise.alpha / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, Attractor, AttractorCatalog, BasinBoundary, SystemSpec};
    use crate::dynamics::trace_separatrix_duffing;
    use crate::dynamics::systems::Duffing;
    use std::sync::Arc;

    fn landscape() -> Landscape {
        let sys = SystemSpec::new(Arc::new(Duffing { friction: 0.5 }), 12.0, 400.0, 0.01)
            .unwrap()
            .with_max_move(0.01);
        let catalog = AttractorCatalog {
            entries: vec![
                Attractor::Point { state: vec![-1.0, 0.0] },
                Attractor::Point { state: vec![1.0, 0.0] },
            ],
            unclassified: vec![],
        };
        let sep = trace_separatrix_duffing(0.5, &sys).unwrap();
        let mut l = Landscape::new(sys, catalog, BasinBoundary { polylines: vec![sep] }).unwrap();
        l.set_tube_cap(0.1).unwrap();
        l
    }

    fn widths() -> Widths {
        Widths { delta: 0.02, delta_prime: 0.02 }
    }

    #[test]
    fn without_jumps_the_path_follows_the_flow() {
        let l = landscape();
        let c = CouplingSpec::named("identity-additive").unwrap();
        let noise = HeavyTailSpec::isotropic(1.5, 2, 0.5).unwrap();
        let mut cfg = SimConfig::new(1e-6, 20.0, 0.01, 3, widths());
        cfg.sample_dt = 0.5;
        let x = [0.3, 0.4];
        let rec = simulate_path(&l, &c, &noise, &cfg, &x, 0).unwrap();
        assert!(rec.jumps.is_empty());
        let det = integrate(&l.system, &x, 20.0, 0.01).unwrap();
        let last = rec.states.last().unwrap();
        assert!(crate::dynamics::dist(last, det.last()) < 1e-9);
        assert_eq!(rec.times.len(), 41);
    }

    #[test]
    fn additive_jump_shifts_state() {
        let l = landscape();
        let c = CouplingSpec::named("identity-additive").unwrap();
        let noise = HeavyTailSpec::isotropic(1.5, 2, 0.5).unwrap();
        let cfg = SimConfig::new(0.3, 200.0, 0.01, 11, widths());
        let rec = simulate_path(&l, &c, &noise, &cfg, &[1.0, 0.0], 0).unwrap();
        assert!(!rec.jumps.is_empty());
        for j in &rec.jumps {
            for i in 0..2 {
                assert!((j.post[i] - j.pre[i] - 0.3 * j.z[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jump_counts_match_poisson_mean() {
        let l = landscape();
        let c = CouplingSpec::named("identity-additive").unwrap();
        let noise = HeavyTailSpec::isotropic(1.5, 2, 0.5).unwrap();
        let mut cfg = SimConfig::new(0.1, 50.0, 0.05, 5, widths());
        cfg.sample_dt = 50.0;
        let rate = crate::noise::tail_mass(&scaled_noise(&noise, 0.1).unwrap(), 5.0).unwrap();
        let n = 500u64;
        let total: usize = (0..n)
            .into_par_iter()
            .map(|r| simulate_path(&l, &c, &noise, &cfg, &[1.0, 0.0], r).unwrap().jumps.len())
            .sum();
        let mean = rate * 50.0 * n as f64;
        assert!((total as f64 - mean).abs() < 3.0 * mean.sqrt(), "{total} vs {mean}");
    }

    #[test]
    fn zero_coupling_is_censored() {
        let l = landscape();
        let c = CouplingSpec::builtin(crate::jumpmaps::CouplingMode::Additive, "zero", 2, 2).unwrap();
        let noise = HeavyTailSpec::isotropic(1.5, 2, 0.5).unwrap();
        let cfg = SimConfig::new(0.2, 10.0, 0.01, 5, widths());
        let r = first_exit(&l, &c, &noise, &cfg, &[1.0, 0.0], 1, 300.0, 0).unwrap();
        assert!(r.censored && r.jumps > 0);
    }

    #[test]
    fn exit_state_leaves_reduced_domain() {
        let l = landscape();
        let c = CouplingSpec::named("identity-additive").unwrap();
        let noise = HeavyTailSpec::isotropic(1.5, 2, 0.5).unwrap();
        let cfg = SimConfig::new(0.3, 10.0, 0.01, 9, widths());
        let recs = exit_times(&l, &c, &noise, &cfg, &[1.0, 0.0], 1, 0.5, 20).unwrap();
        for r in &recs {
            assert!(!r.censored);
            assert_ne!(l.probe(&r.state).reduced(0.02), Some(1));
        }
        let again = exit_times(&l, &c, &noise, &cfg, &[1.0, 0.0], 1, 0.5, 20).unwrap();
        assert_eq!(recs, again);
    }

    #[test]
    fn switching_path_never_repeats() {
        let l = landscape();
        let c = CouplingSpec::named("identity-additive").unwrap();
        let noise = HeavyTailSpec::isotropic(1.5, 2, 0.5).unwrap();
        let cfg = SimConfig::new(0.4, 10.0, 0.01, 2, widths());
        let p = metastability_run(&l, &c, &noise, &cfg, &[1.0, 0.0], 3000.0, 0).unwrap();
        assert!(p.states.len() > 2);
        assert_eq!(p.times[0], 0.0);
        for w in p.states.windows(2) {
            assert_ne!(w[0], w[1]);
        }
        for w in p.times.windows(2) {
            assert!(w[1] > w[0]);
        }
        let occ = p.occupation(2);
        if p.states.last() != Some(&None) {
            assert!((occ.iter().sum::<f64>() - 3000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_observable_is_one() {
        let l = landscape();
        let c = CouplingSpec::named("identity-additive").unwrap();
        let noise = HeavyTailSpec::isotropic(1.5, 2, 0.5).unwrap();
        let cfg = SimConfig::new(0.3, 10.0, 0.01, 2, widths());
        let (m, se) = randomized_time_observable(&l, &c, &noise, &cfg, &[1.0, 0.0], 0.05, 0.01, |_| 1.0, 20).unwrap();
        assert_eq!((m, se), (1.0, 0.0));
    }

    #[test]
    fn brownian_paths_are_reproducible() {
        let l = landscape();
        let c = CouplingSpec::named("identity-additive").unwrap();
        let noise = HeavyTailSpec::isotropic(1.5, 2, 0.5).unwrap();
        let mut cfg = SimConfig::new(0.2, 30.0, 0.01, 4, widths());
        cfg.brownian = 0.5;
        let a = simulate_path(&l, &c, &noise, &cfg, &[1.0, 0.0], 3).unwrap();
        let b = simulate_path(&l, &c, &noise, &cfg, &[1.0, 0.0], 3).unwrap();
        assert_eq!(a, b);
        let d = integrate(&l.system, &[1.0, 0.0], 30.0, 0.01).unwrap();
        assert!(crate::dynamics::dist(a.states.last().unwrap(), d.last()) > 0.0);
    }
}
