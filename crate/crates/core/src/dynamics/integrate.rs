use super::{SystemSpec, VectorField};
use crate::error::{Error, Result};

/// Classical fourth-order Runge–Kutta stepper with reusable workspace.
///
/// `sign = -1` integrates the reversed field, used for tracing boundaries
/// backwards in time.
pub struct Flow<'a> {
    field: &'a dyn VectorField,
    sign: f64,
    max_move: f64,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> Flow<'a> {
    pub fn new(spec: &'a SystemSpec) -> Self {
        Self::with_field(spec.field.as_ref(), spec.max_move)
    }

    pub fn backward(spec: &'a SystemSpec) -> Self {
        let mut f = Self::new(spec);
        f.sign = -1.0;
        f
    }

    pub fn with_field(field: &'a dyn VectorField, max_move: f64) -> Self {
        let d = field.dim();
        Self {
            field,
            sign: 1.0,
            max_move,
            k1: vec![0.0; d],
            k2: vec![0.0; d],
            k3: vec![0.0; d],
            k4: vec![0.0; d],
            tmp: vec![0.0; d],
        }
    }

    /// Speed `‖f(x)‖`.
    pub fn speed(&mut self, x: &[f64]) -> f64 {
        self.field.eval(x, &mut self.k1);
        super::norm(&self.k1)
    }

    fn rk4(&mut self, x: &mut [f64], h: f64) {
        let s = self.sign;
        let d = x.len();
        self.field.eval(x, &mut self.k1);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * s * self.k1[i];
        }
        self.field.eval(&self.tmp, &mut self.k2);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * s * self.k2[i];
        }
        self.field.eval(&self.tmp, &mut self.k3);
        for i in 0..d {
            self.tmp[i] = x[i] + h * s * self.k3[i];
        }
        self.field.eval(&self.tmp, &mut self.k4);
        for i in 0..d {
            x[i] += h * s / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }

    /// Advance `x` by `h`, subdividing when the displacement bound is exceeded.
    /// Returns `false` if the state became non-finite.
    pub fn step(&mut self, x: &mut [f64], h: f64) -> bool {
        let n = if self.max_move.is_finite() {
            let v = self.speed(x);
            ((v * h / self.max_move).ceil() as usize).clamp(1, 100_000)
        } else {
            1
        };
        let sub = h / n as f64;
        for _ in 0..n {
            self.rk4(x, sub);
        }
        x.iter().all(|v| v.is_finite())
    }

    /// Advance `x` by `t` in steps no longer than `dt`, ending exactly at `t`.
    pub fn advance(&mut self, x: &mut [f64], t: f64, dt: f64) -> bool {
        if t <= 0.0 {
            return true;
        }
        let n = (t / dt).ceil().max(1.0) as usize;
        let h = t / n as f64;
        (0..n).all(|_| self.step(x, h))
    }
}

/// Sampled solution of the deterministic flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Set when the trajectory left the working box and was cut short.
    pub truncated: bool,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Integrate `x` for duration `t` with step `dt` (negative `t` runs the reversed field).
pub fn integrate(spec: &SystemSpec, x: &[f64], t: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::arg("dt must be positive"));
    }
    if x.len() != spec.dim {
        return Err(Error::arg("state dimension mismatch"));
    }
    if !spec.ball.contains(x) {
        return Err(Error::domain("initial state outside the working box"));
    }
    let mut flow = if t >= 0.0 { Flow::new(spec) } else { Flow::backward(spec) };
    let span = t.abs();
    let n = (span / dt).ceil() as usize;
    let h = if n > 0 { span / n as f64 } else { 0.0 };
    let mut cur = x.to_vec();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![cur.clone()],
        truncated: false,
    };
    for k in 1..=n {
        if !flow.step(&mut cur, h) {
            return Err(Error::Blowup {
                time: traj.times[traj.times.len() - 1],
            });
        }
        let time = t.signum() * k as f64 * h;
        traj.times.push(time);
        traj.states.push(cur.clone());
        if !spec.ball.contains(&cur) {
            traj.truncated = true;
            break;
        }
    }
    Ok(traj)
}
