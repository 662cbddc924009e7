//! Post-jump state maps: additive, Itô and canonical (Marcus) coupling.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::norm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    Additive,
    Ito,
    Marcus,
}

impl std::str::FromStr for CouplingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(Self::Additive),
            "ito" => Ok(Self::Ito),
            "marcus" => Ok(Self::Marcus),
            other => Err(Error::Config {
                key: "coupling.mode".into(),
                msg: format!("unknown coupling mode `{other}`"),
            }),
        }
    }
}

/// Matrix field `Φ: R^d → R^{d×m}`, written row-major into `out`.
pub trait JumpMatrix: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
    /// Whether `Φ` ignores its argument.
    fn is_constant(&self) -> bool;
    fn name(&self) -> String {
        "custom".to_string()
    }
}

/// `Φ(u) = [[0, u₂], [u₁, 0]]`.
#[derive(Debug, Clone, Copy)]
pub struct DuffingMatrix;

impl JumpMatrix for DuffingMatrix {
    fn rows(&self) -> usize {
        2
    }
    fn cols(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = x[1];
        out[2] = x[0];
        out[3] = 0.0;
    }
    fn is_constant(&self) -> bool {
        false
    }
    fn name(&self) -> String {
        "duffing".into()
    }
}

/// Constant matrix.
#[derive(Debug, Clone)]
pub struct ConstantMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
    pub label: String,
}

impl ConstantMatrix {
    pub fn identity(d: usize) -> Self {
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1.0;
        }
        Self {
            rows: d,
            cols: d,
            entries,
            label: "identity".into(),
        }
    }

    /// Injects a scalar jump into the first coordinate.
    pub fn first_coordinate(d: usize) -> Self {
        let mut entries = vec![0.0; d];
        entries[0] = 1.0;
        Self {
            rows: d,
            cols: 1,
            entries,
            label: "substrate".into(),
        }
    }

    pub fn zero(d: usize, m: usize) -> Self {
        Self {
            rows: d,
            cols: m,
            entries: vec![0.0; d * m],
            label: "zero".into(),
        }
    }
}

impl JumpMatrix for ConstantMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.entries);
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// How jump increments enter the state.
#[derive(Clone)]
pub struct CouplingSpec {
    pub mode: CouplingMode,
    pub phi: Arc<dyn JumpMatrix>,
}

impl fmt::Debug for CouplingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CouplingSpec")
            .field("mode", &self.mode)
            .field("phi", &self.phi.name())
            .finish()
    }
}

impl CouplingSpec {
    pub fn new(mode: CouplingMode, phi: Arc<dyn JumpMatrix>) -> Result<Self> {
        if mode == CouplingMode::Additive && !phi.is_constant() {
            return Err(Error::Config {
                key: "coupling.phi".into(),
                msg: format!("additive coupling needs a constant matrix, `{}` is state dependent", phi.name()),
            });
        }
        Ok(Self { mode, phi })
    }

    /// Built-in matrix field by name: `duffing`, `substrate`, `identity`, `zero`.
    pub fn builtin(mode: CouplingMode, phi: &str, dim: usize, noise_dim: usize) -> Result<Self> {
        let m: Arc<dyn JumpMatrix> = match phi {
            "duffing" if dim == 2 => Arc::new(DuffingMatrix),
            "substrate" => Arc::new(ConstantMatrix::first_coordinate(dim)),
            "identity" => Arc::new(ConstantMatrix::identity(dim)),
            "zero" => Arc::new(ConstantMatrix::zero(dim, noise_dim)),
            other => {
                return Err(Error::Config {
                    key: "coupling.phi".into(),
                    msg: format!("unknown or incompatible matrix field `{other}` for dimension {dim}"),
                })
            }
        };
        if m.cols() != noise_dim {
            return Err(Error::Config {
                key: "coupling.phi".into(),
                msg: format!("`{phi}` takes {}-dimensional jumps, noise has dimension {noise_dim}", m.cols()),
            });
        }
        Self::new(mode, m)
    }

    /// Shorthand names such as `duffing-marcus` or `goldbeter-additive`.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "duffing-marcus" => Self::new(CouplingMode::Marcus, Arc::new(DuffingMatrix)),
            "duffing-ito" => Self::new(CouplingMode::Ito, Arc::new(DuffingMatrix)),
            "goldbeter-additive" => Self::new(CouplingMode::Additive, Arc::new(ConstantMatrix::first_coordinate(2))),
            "identity-additive" => Self::new(CouplingMode::Additive, Arc::new(ConstantMatrix::identity(2))),
            other => Err(Error::Config {
                key: "coupling".into(),
                msg: format!("unknown coupling `{other}`"),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.phi.rows()
    }

    pub fn noise_dim(&self) -> usize {
        self.phi.cols()
    }
}

fn apply(phi: &dyn JumpMatrix, buf: &mut [f64], x: &[f64], z: &[f64], out: &mut [f64]) {
    phi.eval(x, buf);
    let m = z.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..m).map(|j| buf[i * m + j] * z[j]).sum();
    }
}

/// Number of RK4 substeps for the supplementary flow.
pub fn marcus_steps(z: &[f64]) -> usize {
    ((64.0 * norm(z)).ceil() as usize).max(32)
}

/// Supplementary flow `ẏ = Φ(y) z` from `x` up to time `t`, with `n` RK4 steps.
pub fn marcus_flow(phi: &dyn JumpMatrix, x: &[f64], z: &[f64], t: f64, n: usize) -> Result<Vec<f64>> {
    let d = x.len();
    let mut buf = vec![0.0; phi.rows() * phi.cols()];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut y = x.to_vec();
    let h = t / n as f64;
    for _ in 0..n {
        apply(phi, &mut buf, &y, z, &mut k1);
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        apply(phi, &mut buf, &tmp, z, &mut k2);
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        apply(phi, &mut buf, &tmp, z, &mut k3);
        for i in 0..d {
            tmp[i] = y[i] + h * k3[i];
        }
        apply(phi, &mut buf, &tmp, z, &mut k4);
        for i in 0..d {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Blowup { time: 0.0 });
        }
    }
    Ok(y)
}

/// State right after a jump with (already scaled) increment `z`.
pub fn post_jump(coupling: &CouplingSpec, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if x.len() != coupling.dim() || z.len() != coupling.noise_dim() {
        return Err(Error::arg("post_jump: dimension mismatch"));
    }
    match coupling.mode {
        CouplingMode::Additive | CouplingMode::Ito => {
            let phi = coupling.phi.as_ref();
            let mut buf = vec![0.0; phi.rows() * phi.cols()];
            let mut dx = vec![0.0; x.len()];
            apply(phi, &mut buf, x, z, &mut dx);
            Ok(x.iter().zip(&dx).map(|(a, b)| a + b).collect())
        }
        CouplingMode::Marcus => marcus_flow(coupling.phi.as_ref(), x, z, 1.0, marcus_steps(z)),
    }
}

/// Closed-form Marcus map of the Duffing coupling at `(±1, 0)`.
pub fn marcus_duffing_closed_form(x: &[f64], z: &[f64]) -> Result<[f64; 2]> {
    let s = match (x, z.len()) {
        ([a, b], 2) if *a == 1.0 && *b == 0.0 => 1.0,
        ([a, b], 2) if *a == -1.0 && *b == 0.0 => -1.0,
        _ => return Err(Error::domain("closed form only holds at (±1, 0) with planar jumps")),
    };
    let (z1, z2) = (z[0], z[1]);
    let p = z1 * z2;
    let out = if z2 == 0.0 {
        [1.0, z1]
    } else if z1 == 0.0 {
        [1.0, 0.0]
    } else if p > 0.0 {
        let r = p.sqrt();
        [r.cosh(), z1.signum() * (z1 / z2).sqrt() * r.sinh()]
    } else {
        let r = (-p).sqrt();
        [r.cos(), z1.signum() * (z1 / z2).abs().sqrt() * r.sin()]
    };
    Ok([s * out[0], s * out[1]])
}

/// Sampled Lipschitz constant of `Φ` (Frobenius norm) over `points`.
pub fn lipschitz_estimate(phi: &dyn JumpMatrix, points: &[Vec<f64>]) -> f64 {
    let n = phi.rows() * phi.cols();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    let mut l: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let dx = crate::dynamics::dist(p, q);
            if dx == 0.0 {
                continue;
            }
            phi.eval(p, &mut a);
            phi.eval(q, &mut b);
            let dm = a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            l = l.max(dm / dx);
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn duffing_marcus() -> CouplingSpec {
        CouplingSpec::named("duffing-marcus").unwrap()
    }

    #[test]
    fn zero_jump_is_identity_in_every_mode() {
        let x = [0.3, -1.7];
        for c in [
            duffing_marcus(),
            CouplingSpec::named("duffing-ito").unwrap(),
            CouplingSpec::named("identity-additive").unwrap(),
        ] {
            assert_eq!(post_jump(&c, &x, &[0.0, 0.0]).unwrap(), x.to_vec());
        }
        let g = CouplingSpec::named("goldbeter-additive").unwrap();
        assert_eq!(post_jump(&g, &x, &[0.0]).unwrap(), x.to_vec());
    }

    #[test]
    fn closed_form_examples() {
        let m = duffing_marcus();
        let y = post_jump(&m, &[1.0, 0.0], &[0.7, 0.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] - 0.7).abs() < 1e-12);
        let y = post_jump(&m, &[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((y[0] - 1.0f64.cosh()).abs() < 1e-8 && (y[1] - 1.0f64.sinh()).abs() < 1e-8);
        assert!((y[0] - 1.5431).abs() < 1e-4 && (y[1] - 1.1752).abs() < 1e-4);

        let c = marcus_duffing_closed_form(&[1.0, 0.0], &[1.0, -1.0]).unwrap();
        assert!((c[0] - 1.0f64.cos()).abs() < 1e-15 && (c[1] - 1.0f64.sin()).abs() < 1e-15);
        assert_eq!(marcus_duffing_closed_form(&[-1.0, 0.0], &[2.0, 0.0]).unwrap(), [-1.0, -2.0]);
        assert_eq!(marcus_duffing_closed_form(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), [1.0, 0.0]);
        assert!(marcus_duffing_closed_form(&[0.5, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_first_component_is_continuous_limit() {
        // branches along z₁ → 0 and a fine-step ODE agree with (1, 0)
        let m = duffing_marcus();
        let fine = marcus_flow(m.phi.as_ref(), &[1.0, 0.0], &[0.0, 3.0], 1.0, 4000).unwrap();
        assert!((fine[0] - 1.0).abs() < 1e-12 && fine[1].abs() < 1e-12);
        for &e in &[1e-4, -1e-4, 1e-7, -1e-7] {
            let c = marcus_duffing_closed_form(&[1.0, 0.0], &[e, 3.0]).unwrap();
            assert!((c[0] - 1.0).abs() < 10.0 * e.abs() && c[1].abs() < 10.0 * e.abs());
        }
    }

    #[test]
    fn marcus_matches_closed_form_on_grid() {
        let m = duffing_marcus();
        let mut worst: f64 = 0.0;
        for s in [1.0, -1.0] {
            for i in 0..41 {
                for j in 0..41 {
                    let z = [-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64];
                    let a = post_jump(&m, &[s, 0.0], &z).unwrap();
                    let b = marcus_duffing_closed_form(&[s, 0.0], &z).unwrap();
                    worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
                }
            }
        }
        assert!(worst < 1e-8, "worst = {worst}");
    }

    #[test]
    fn additive_rejects_state_dependent_matrix() {
        assert!(CouplingSpec::new(CouplingMode::Additive, Arc::new(DuffingMatrix)).is_err());
        assert!(CouplingSpec::builtin(CouplingMode::Marcus, "nope", 2, 2).is_err());
        assert!(CouplingSpec::builtin(CouplingMode::Additive, "substrate", 2, 2).is_err());
    }

    #[test]
    fn ito_marcus_quadratic_tangency() {
        let m = duffing_marcus();
        let ito = CouplingSpec::named("duffing-ito").unwrap();
        let x = [0.8, -0.3];
        let dir = [0.6, 0.8];
        let scales = [0.5, 0.25, 0.125, 0.0625, 0.03125];
        let errs: Vec<f64> = scales
            .iter()
            .map(|&s| {
                let z = [s * dir[0], s * dir[1]];
                let a = post_jump(&m, &x, &z).unwrap();
                let b = post_jump(&ito, &x, &z).unwrap();
                crate::dynamics::dist(&a, &b)
            })
            .collect();
        let n = scales.len() as f64;
        let lx: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let slope = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
            / lx.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>();
        assert!((1.9..=2.1).contains(&slope), "slope = {slope}");
    }

    #[test]
    fn growth_bound_on_probe_pairs() {
        let m = duffing_marcus();
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![-1.5 + 0.6 * i as f64, 0.4 - 0.15 * i as f64]).collect();
        let l = lipschitz_estimate(m.phi.as_ref(), &pts).max(1.0);
        let z = [0.9, -0.4];
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let a = post_jump(&m, &pts[i], &z).unwrap();
                let b = post_jump(&m, &pts[j], &z).unwrap();
                let lhs = crate::dynamics::dist(&a, &b);
                let rhs = l * (l * norm(&z)).exp() * crate::dynamics::dist(&pts[i], &pts[j]);
                assert!(lhs <= rhs);
            }
        }
    }

    proptest! {
        #[test]
        fn marcus_time_rescaling(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, z1 in -2.0f64..2.0, z2 in -2.0f64..2.0) {
            let m = duffing_marcus();
            let z = [z1, z2];
            for &t in &[0.25, 0.5] {
                let a = marcus_flow(m.phi.as_ref(), &[x1, x2], &z, t, 4000).unwrap();
                let zt = [t * z1, t * z2];
                let b = marcus_flow(m.phi.as_ref(), &[x1, x2], &zt, 1.0, 4000).unwrap();
                prop_assert!(crate::dynamics::dist(&a, &b) < 1e-8);
            }
        }

        #[test]
        fn marcus_matches_fine_step(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, z1 in -1.5f64..1.5, z2 in -1.5f64..1.5) {
            let m = duffing_marcus();
            let z = [z1, z2];
            let a = post_jump(&m, &[x1, x2], &z).unwrap();
            let b = marcus_flow(m.phi.as_ref(), &[x1, x2], &z, 1.0, 100 * marcus_steps(&z)).unwrap();
            let scale = 1.0 + norm(&b);
            prop_assert!(crate::dynamics::dist(&a, &b) < 1e-9 * scale, "{:?} vs {:?}", a, b);
        }
    }
}
