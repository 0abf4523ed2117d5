//! Built-in benchmark problems with closed-form solutions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryKind, BoundaryPatch, Domain, Face};
use crate::loss::AnalyticPair;
use crate::pde::{identity_matrix, ExactSolution, PdeProblem, ScalarFn, VectorFn};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BenchmarkSpec {
    /// Poisson problem on `(−1,1)^d` with a Neumann top face.
    Example1 { dim: usize, k: u32 },
    /// Singularly perturbed convection-diffusion-reaction on the unit square.
    Example2 { eps: f64 },
    /// `φ − u' = 0, φ' = 0` on `(0,1)` with `u(0) = 0, u(1) = 1`.
    Remark1d,
}

impl fmt::Display for BenchmarkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchmarkSpec::Example1 { dim, k } => write!(f, "example1(d={dim}, k={k})"),
            BenchmarkSpec::Example2 { eps } => write!(f, "example2(eps={eps})"),
            BenchmarkSpec::Remark1d => write!(f, "remark1d"),
        }
    }
}

impl BenchmarkSpec {
    pub fn build(&self) -> Result<PdeProblem> {
        match *self {
            BenchmarkSpec::Example1 { dim, k } => make_example1(dim, k),
            BenchmarkSpec::Example2 { eps } => make_example2(eps),
            BenchmarkSpec::Remark1d => make_remark1d(),
        }
    }
}

fn sin_product(x: &[f64], k: f64) -> f64 {
    x.iter().map(|xi| (k * PI * xi).sin()).product()
}

/// `u = Π_{i<d} sin(kπx_i) (1 − x_d²)` on `(−1,1)^d`; Neumann datum
/// `−2 Π_{i<d} sin(kπx_i)` on `x_d = 1`, homogeneous Dirichlet elsewhere.
pub fn make_example1(dim: usize, k: u32) -> Result<PdeProblem> {
    if dim < 2 || k < 1 {
        return Err(Error::Config(format!("example1 needs dim ≥ 2 and k ≥ 1, got dim={dim}, k={k}")));
    }
    let d = dim;
    let kf = k as f64;
    let domain = Domain::cube(d, -1.0, 1.0)?;
    let top = Face::upper(d - 1);
    let dirichlet_faces: Vec<Face> = Face::all(d).into_iter().filter(|f| *f != top).collect();
    let patches = vec![
        BoundaryPatch::faces(BoundaryKind::Dirichlet, &domain, dirichlet_faces)?,
        BoundaryPatch::faces(BoundaryKind::Neumann, &domain, vec![top])?,
    ];
    let source: ScalarFn = Arc::new(move |x: &[f64]| {
        let xd = x[d - 1];
        sin_product(&x[..d - 1], kf) * ((d - 1) as f64 * kf * kf * PI * PI * (1.0 - xd * xd) + 2.0)
    });
    let g_n: ScalarFn = Arc::new(move |x: &[f64]| -2.0 * sin_product(&x[..d - 1], kf));
    let u: ScalarFn = Arc::new(move |x: &[f64]| sin_product(&x[..d - 1], kf) * (1.0 - x[d - 1] * x[d - 1]));
    let grad: VectorFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
        let xd = x[d - 1];
        let sines: Vec<f64> = x[..d - 1].iter().map(|xi| (kf * PI * xi).sin()).collect();
        for j in 0..d - 1 {
            let others: f64 = sines.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, s)| s).product();
            out[j] = kf * PI * (kf * PI * x[j]).cos() * others * (1.0 - xd * xd);
        }
        out[d - 1] = -2.0 * xd * sines.iter().product::<f64>();
    });
    Ok(PdeProblem::new(format!("example1_d{d}_k{k}"), domain, source, patches)?
        .with_boundary_data(None, Some(g_n))
        .with_exact(ExactSolution { u, grad }))
}

/// Pieces of the one-dimensional layer profile `p(t) = t − (1 − e^{−t/ε})/(1 − e^{−1/ε})`.
#[derive(Debug, Clone, Copy)]
struct LayerProfile {
    eps: f64,
    denom: f64,
}

impl LayerProfile {
    fn new(eps: f64) -> Self {
        Self { eps, denom: -(-1.0 / eps).exp_m1() }
    }

    fn value(&self, t: f64) -> f64 {
        t + (-t / self.eps).exp_m1() / self.denom
    }

    fn slope(&self, t: f64) -> f64 {
        1.0 - (-t / self.eps).exp() / (self.eps * self.denom)
    }
}

/// `−εΔu + b·∇u + cu = f` on `(0,1)²`, `u = 0` on the boundary, with
/// `b = (2ε − 1, 2ε − 1)` and `c = 2(1 − ε)`.
pub fn make_example2(eps: f64) -> Result<PdeProblem> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("example2 needs eps in (0, 1), got {eps}")));
    }
    let domain = Domain::cube(2, 0.0, 1.0)?;
    let patches = vec![BoundaryPatch::faces(BoundaryKind::Dirichlet, &domain, Face::all(2))?];
    let p = LayerProfile::new(eps);
    let source: ScalarFn = Arc::new(move |x: &[f64]| -(p.value(x[0]) + p.value(x[1])) * (x[0] + x[1]).exp());
    let b = 2.0 * eps - 1.0;
    let beta: VectorFn = Arc::new(move |_x: &[f64], out: &mut [f64]| out.fill(b));
    let c = 2.0 * (1.0 - eps);
    let gamma: ScalarFn = Arc::new(move |_x: &[f64]| c);
    let u: ScalarFn = Arc::new(move |x: &[f64]| p.value(x[0]) * p.value(x[1]) * (x[0] + x[1]).exp());
    let grad: VectorFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
        let e = (x[0] + x[1]).exp();
        let (px, py) = (p.value(x[0]), p.value(x[1]));
        out[0] = (p.slope(x[0]) + px) * py * e;
        out[1] = px * (p.slope(x[1]) + py) * e;
    });
    Ok(PdeProblem::new(format!("example2_eps{eps}"), domain, source, patches)?
        .with_diffusion(identity_matrix(2, eps), Some((eps, eps)))?
        .with_convection_reaction(Some(beta), Some(gamma))
        .with_exact(ExactSolution { u, grad }))
}

/// `φ − u' = 0`, `φ' = 0` on `(0,1)`, `u(0) = 0`, `u(1) = 1`; solution
/// `u = x`, `φ = 1`.
pub fn make_remark1d() -> Result<PdeProblem> {
    let domain = Domain::cube(1, 0.0, 1.0)?;
    let patches = vec![BoundaryPatch::faces(BoundaryKind::Dirichlet, &domain, Face::all(1))?];
    let g_d: ScalarFn = Arc::new(|x: &[f64]| x[0]);
    Ok(PdeProblem::new("remark1d", domain, Arc::new(|_x: &[f64]| 0.0), patches)?
        .with_boundary_data(Some(g_d.clone()), None)
        .with_exact(ExactSolution { u: g_d, grad: Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 1.0) }))
}

/// Piecewise-linear ramp of width `2δ` around `x = 1/2` with its a.e.
/// derivative; satisfies both equations of [`make_remark1d`] away from the
/// ramp without being the solution.
pub fn remark_spurious_pair(delta: f64) -> AnalyticPair {
    let u: ScalarFn = Arc::new(move |x: &[f64]| {
        let t = x[0];
        if t <= 0.5 - delta {
            0.0
        } else if t >= 0.5 + delta {
            1.0
        } else {
            (t - 0.5 + delta) / (2.0 * delta)
        }
    });
    let phi: VectorFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
        let t = x[0];
        out[0] = if t > 0.5 - delta && t < 0.5 + delta { 1.0 / (2.0 * delta) } else { 0.0 };
    });
    AnalyticPair { dim: 1, u, phi }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_values() {
        let p = make_example1(2, 1).unwrap();
        let exact = p.exact.as_ref().unwrap();
        assert_eq!((exact.u)(&[0.0, 0.0]), 0.0);
        assert!(((p.source)(&[0.5, 0.0]) - (PI * PI + 2.0)).abs() < 1e-12);
        assert!((p.g_neumann(&[0.5, 1.0]) + 2.0).abs() < 1e-15);
        assert_eq!(p.domain.volume(), 4.0);
        assert!(make_example1(1, 1).is_err());
        assert!(make_example1(2, 0).is_err());
    }

    #[test]
    fn example2_boundary_values() {
        let p = make_example2(0.05).unwrap();
        let u = &p.exact.as_ref().unwrap().u;
        for t in [0.0, 0.1, 0.37, 0.9, 1.0] {
            assert_eq!(u(&[0.0, t]), 0.0);
            assert_eq!(u(&[t, 0.0]), 0.0);
            assert!(u(&[1.0, t]).abs() < 1e-15);
            assert!(u(&[t, 1.0]).abs() < 1e-15);
        }
        assert!(make_example2(0.0).is_err());
        assert!(make_example2(1.0).is_err());
        // tiny eps stays finite
        let p = make_example2(1e-3).unwrap();
        assert!((p.exact.as_ref().unwrap().u)(&[0.5, 0.5]).is_finite());
        assert!((p.source)(&[-1e-3, 0.5]).is_finite());
    }

    #[test]
    fn remark_problem() {
        let p = make_remark1d().unwrap();
        assert_eq!(p.g_dirichlet(&[0.0]), 0.0);
        assert_eq!(p.g_dirichlet(&[1.0]), 1.0);
        assert_eq!(p.dim(), 1);
        assert!(!p.has_neumann());
    }

    #[test]
    fn spec_round_trip() {
        let s = BenchmarkSpec::Example1 { dim: 3, k: 2 };
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<BenchmarkSpec>(&text).unwrap(), s);
        assert_eq!(s.build().unwrap().dim(), 3);
    }
}
