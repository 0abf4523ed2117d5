//! Trial-field composition, finite-difference residuals and the Monte Carlo
//! least-squares loss with its exact parameter gradient.
//!
//! The trial pair is
//!
//! ```text
//! u(x) = G_D(x) + d_D(x) v(x)
//! φ(x) = ψ(x) + (G_N(x) − ψ(x)·n(x) / (1 + d_N(x))) n(x)
//! ```
//!
//! and the loss at collocation points `x_1..x_N` is
//!
//! ```text
//! L_N = |Ω|/N Σ_k |φ − A∇_h u|² + (div_h φ − β·∇_h u − γu + f)²
//! ```
//!
//! with `∇_h`, `div_h` central differences of step `h`. Both residuals are
//! affine in the network outputs at the `2d + 1` stencil points, so the
//! gradient is a single reverse sweep per network over the stencil batch.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::auxiliary::AuxiliarySet;
use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::nn::{Activation, GradientRecord, Network};
use crate::pde::{PdeProblem, PointCoefficients, ScalarFn, VectorFn};

/// A pair `(u, φ)` that can be evaluated pointwise.
pub trait FieldPair: Sync {
    fn dim(&self) -> usize;
    fn u(&self, x: &[f64]) -> f64;
    fn phi_into(&self, x: &[f64], out: &mut [f64]);

    fn phi(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.phi_into(x, &mut out);
        out
    }
}

/// Closed-form pair, e.g. an exact solution `(u*, A∇u*)`.
#[derive(Clone)]
pub struct AnalyticPair {
    pub dim: usize,
    pub u: ScalarFn,
    pub phi: VectorFn,
}

impl AnalyticPair {
    /// `(u*, A∇u*)` for a problem with a known solution.
    pub fn exact(problem: &PdeProblem) -> Option<Self> {
        let exact = problem.exact.clone()?;
        let d = problem.dim();
        let a = problem.diffusion.clone();
        let grad = exact.grad.clone();
        let phi: VectorFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let mut g = vec![0.0; d];
            let mut m = vec![0.0; d * d];
            grad(x, &mut g);
            a(x, &mut m);
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..d).map(|j| m[i * d + j] * g[j]).sum();
            }
        });
        Some(Self { dim: d, u: exact.u, phi })
    }
}

impl FieldPair for AnalyticPair {
    fn dim(&self) -> usize {
        self.dim
    }

    fn u(&self, x: &[f64]) -> f64 {
        (self.u)(x)
    }

    fn phi_into(&self, x: &[f64], out: &mut [f64]) {
        (self.phi)(x, out)
    }
}

/// Networks `(v, ψ)` composed with the auxiliary functions.
#[derive(Debug, Clone)]
pub struct TrialFields {
    pub v: Network,
    pub psi: Network,
    pub aux: Arc<AuxiliarySet>,
    pub fd_step: f64,
}

impl TrialFields {
    pub fn new(v: Network, psi: Network, aux: Arc<AuxiliarySet>, fd_step: f64) -> Result<Self> {
        let d = v.input_dim();
        if v.output_dim() != 1 {
            return Err(Error::shape(1, v.output_dim()));
        }
        if psi.input_dim() != d {
            return Err(Error::shape(d, psi.input_dim()));
        }
        if psi.output_dim() != d {
            return Err(Error::shape(d, psi.output_dim()));
        }
        if let Some(n) = &aux.neumann {
            if n.normal.out_dim() != d {
                return Err(Error::shape(d, n.normal.out_dim()));
            }
        }
        if !(fd_step > 0.0) {
            return Err(Error::Config(format!("finite-difference step must be positive, got {fd_step}")));
        }
        Ok(Self { v, psi, aux, fd_step })
    }

    /// Freshly initialized networks with the given hidden widths.
    pub fn init<R: Rng + ?Sized>(
        dim: usize,
        hidden: &[usize],
        activation: Activation,
        aux: Arc<AuxiliarySet>,
        fd_step: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let widths = |out| {
            let mut w = vec![dim];
            w.extend_from_slice(hidden);
            w.push(out);
            w
        };
        let v = Network::init(widths(1), activation, rng)?;
        let psi = Network::init(widths(dim), activation, rng)?;
        Self::new(v, psi, aux, fd_step)
    }

    pub fn num_params(&self) -> usize {
        self.v.num_params() + self.psi.num_params()
    }

    /// Joint parameter vector `Θ = (Θ_v, Θ_ψ)`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.v.params().to_vec();
        p.extend_from_slice(self.psi.params());
        p
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::shape(self.num_params(), theta.len()));
        }
        let (a, b) = theta.split_at(self.v.num_params());
        self.v.set_params(a)?;
        self.psi.set_params(b)
    }
}

/// `u(x) = G_D(x) + d_D(x) v(x)`.
pub fn compose_u(trial: &TrialFields, x: &[f64]) -> f64 {
    let v = trial.v.forward_unchecked(x)[0];
    trial.aux.lifting_dirichlet.eval_scalar(x) + trial.aux.distance_dirichlet.eval_scalar(x) * v
}

/// `φ(x) = ψ + (G_N − ψ·n / (1 + d_N)) n`, or `ψ` when there is no Neumann
/// boundary.
pub fn compose_phi(trial: &TrialFields, x: &[f64]) -> Vec<f64> {
    let psi = trial.psi.forward_unchecked(x);
    match &trial.aux.neumann {
        None => psi,
        Some(aux) => {
            let n = aux.normal.eval(x);
            let g = aux.lifting.eval_scalar(x);
            let dn = aux.distance.eval_scalar(x);
            compose_flux(&psi, &n, g, dn)
        }
    }
}

#[inline]
fn compose_flux(psi: &[f64], n: &[f64], g: f64, dn: f64) -> Vec<f64> {
    let psi_n: f64 = psi.iter().zip(n).map(|(a, b)| a * b).sum();
    let coef = g - psi_n / (1.0 + dn);
    psi.iter().zip(n).map(|(p, ni)| p + coef * ni).collect()
}

impl FieldPair for TrialFields {
    fn dim(&self) -> usize {
        self.v.input_dim()
    }

    fn u(&self, x: &[f64]) -> f64 {
        compose_u(self, x)
    }

    fn phi_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&compose_phi(self, x));
    }
}

/// Central difference `(f(x + h e_i) − f(x − h e_i)) / 2h`.
pub fn fd_partial<F>(f: F, x: &[f64], axis: usize, h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[axis] += h;
    xm[axis] -= h;
    f(&xp).iter().zip(f(&xm)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Pointwise residuals of the first-order system.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSample {
    /// `φ − A∇u`
    pub r_flux: Vec<f64>,
    /// `div φ − Bu + f`
    pub r_div: f64,
}

impl ResidualSample {
    pub fn squared(&self) -> (f64, f64) {
        (self.r_flux.iter().map(|r| r * r).sum(), self.r_div * self.r_div)
    }
}

/// Residuals at `x` with finite-difference derivatives of step `h`.
///
/// Stencil points may leave Ω; every ingredient is defined on all of R^d.
pub fn residual_at<P: FieldPair + ?Sized>(problem: &PdeProblem, fields: &P, x: &[f64], h: f64) -> ResidualSample {
    let d = problem.dim();
    let coef = problem.coefficients_at(x);
    let mut grad_u = vec![0.0; d];
    let mut div = 0.0;
    let mut xs = x.to_vec();
    let mut phi_p = vec![0.0; d];
    let mut phi_m = vec![0.0; d];
    for i in 0..d {
        xs[i] = x[i] + h;
        let up = fields.u(&xs);
        fields.phi_into(&xs, &mut phi_p);
        xs[i] = x[i] - h;
        let um = fields.u(&xs);
        fields.phi_into(&xs, &mut phi_m);
        xs[i] = x[i];
        grad_u[i] = (up - um) / (2.0 * h);
        div += (phi_p[i] - phi_m[i]) / (2.0 * h);
    }
    let u = fields.u(x);
    let phi = fields.phi(x);
    residual_from_parts(&coef, &phi, &grad_u, div, u)
}

fn residual_from_parts(coef: &PointCoefficients, phi: &[f64], grad_u: &[f64], div: f64, u: f64) -> ResidualSample {
    let d = phi.len();
    let r_flux = (0..d)
        .map(|i| phi[i] - (0..d).map(|j| coef.a[i * d + j] * grad_u[j]).sum::<f64>())
        .collect();
    let bu: f64 = coef.beta.iter().zip(grad_u).map(|(b, g)| b * g).sum::<f64>() + coef.gamma * u;
    ResidualSample { r_flux, r_div: div - bu + coef.f }
}

/// Loss value split into its flux and divergence parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub flux: f64,
    pub div: f64,
}

/// Multipliers on the two residual terms; `(1, 1)` is the plain loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub flux: f64,
    pub div: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { flux: 1.0, div: 1.0 }
    }
}

fn check_points(problem: &PdeProblem, points: &PointSet) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Precondition("the collocation set is empty".into()));
    }
    if points.dim() != problem.dim() {
        return Err(Error::shape(problem.dim(), points.dim()));
    }
    Ok(())
}

/// `|Ω|/N Σ_k |r_flux(x_k)|² + r_div(x_k)²`, evaluated point by point.
pub fn discrete_loss<P: FieldPair + ?Sized>(problem: &PdeProblem, fields: &P, points: &PointSet, h: f64) -> Result<LossBreakdown> {
    check_points(problem, points)?;
    let scale = problem.domain.volume() / points.len() as f64;
    let (mut flux, mut div) = (0.0, 0.0);
    for x in points.iter() {
        let (f, g) = residual_at(problem, fields, x, h).squared();
        flux += f;
        div += g;
    }
    let (flux, div) = (scale * flux, scale * div);
    Ok(LossBreakdown { total: flux + div, flux, div })
}

/// Loss value together with its gradient with respect to `v` and `ψ`.
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub loss: LossBreakdown,
    pub grad_v: GradientRecord,
    pub grad_psi: GradientRecord,
}

impl LossGradient {
    /// Gradient with respect to the joint vector `(Θ_v, Θ_ψ)`.
    pub fn joint(&self) -> Vec<f64> {
        let mut g = self.grad_v.grad.clone();
        g.extend_from_slice(&self.grad_psi.grad);
        g
    }
}

/// Points handled per work unit. Fixed, so the reduction order (and hence
/// every bit of the result) does not depend on the number of workers.
const CHUNK_POINTS: usize = 128;

pub fn grad_loss(problem: &PdeProblem, trial: &TrialFields, points: &PointSet) -> Result<LossGradient> {
    grad_loss_weighted(problem, trial, points, LossWeights::default())
}

/// Exact gradient of the (weighted) discrete loss. Stencil evaluations are
/// ordinary forward passes, so the finite-difference quotients are
/// differentiated as written.
pub fn grad_loss_weighted(problem: &PdeProblem, trial: &TrialFields, points: &PointSet, weights: LossWeights) -> Result<LossGradient> {
    check_points(problem, points)?;
    if trial.dim() != problem.dim() {
        return Err(Error::shape(problem.dim(), trial.dim()));
    }
    let d = problem.dim();
    let scale = problem.domain.volume() / points.len() as f64;
    let parts: Vec<ChunkResult> = points
        .coords()
        .par_chunks(CHUNK_POINTS * d)
        .map(|chunk| eval_chunk(problem, trial, chunk, scale, weights))
        .collect();

    let mut out = LossGradient {
        loss: LossBreakdown { total: 0.0, flux: 0.0, div: 0.0 },
        grad_v: GradientRecord::zeros(trial.v.num_params()),
        grad_psi: GradientRecord::zeros(trial.psi.num_params()),
    };
    for p in parts {
        out.loss.flux += p.flux;
        out.loss.div += p.div;
        out.grad_v.grad.iter_mut().zip(&p.grad_v).for_each(|(a, b)| *a += b);
        out.grad_psi.grad.iter_mut().zip(&p.grad_psi).for_each(|(a, b)| *a += b);
    }
    out.loss.total = out.loss.flux + out.loss.div;
    Ok(out)
}

struct ChunkResult {
    flux: f64,
    div: f64,
    grad_v: Vec<f64>,
    grad_psi: Vec<f64>,
}

/// Row of stencil point `(k, s)`: `s = 0` centre, `1 + 2i` is `+h e_i`,
/// `2 + 2i` is `−h e_i`.
fn stencil_rows(chunk: &[f64], d: usize, h: f64) -> Array2<f64> {
    let c = chunk.len() / d;
    let s = 2 * d + 1;
    let mut rows = Array2::zeros((c * s, d));
    for (k, x) in chunk.chunks_exact(d).enumerate() {
        for j in 0..s {
            let mut row = rows.row_mut(k * s + j);
            row.iter_mut().zip(x).for_each(|(r, xi)| *r = *xi);
            if j > 0 {
                let axis = (j - 1) / 2;
                if j % 2 == 1 {
                    row[axis] = x[axis] + h;
                } else {
                    row[axis] = x[axis] - h;
                }
            }
        }
    }
    rows
}

fn eval_chunk(problem: &PdeProblem, trial: &TrialFields, chunk: &[f64], scale: f64, weights: LossWeights) -> ChunkResult {
    let d = problem.dim();
    let h = trial.fd_step;
    let s = 2 * d + 1;
    let rows = stencil_rows(chunk, d, h);
    let nrows = rows.nrows();

    let dist_d = trial.aux.distance_dirichlet.eval_batch(rows.view());
    let lift_d = trial.aux.lifting_dirichlet.eval_batch(rows.view());
    let neumann = trial.aux.neumann.as_ref().map(|n| {
        (n.distance.eval_batch(rows.view()), n.lifting.eval_batch(rows.view()), n.normal.eval_batch(rows.view()))
    });

    let tape_v = trial.v.forward_batch(rows.view());
    let tape_psi = trial.psi.forward_batch(rows.view());
    let v_out = tape_v.output();
    let psi_out = tape_psi.output();

    let u: Vec<f64> = (0..nrows).map(|r| lift_d[[r, 0]] + dist_d[[r, 0]] * v_out[[r, 0]]).collect();
    let mut phi = psi_out.clone();
    if let Some((dn, gn, n)) = &neumann {
        for r in 0..nrows {
            let psi_n: f64 = (0..d).map(|i| psi_out[[r, i]] * n[[r, i]]).sum();
            let coef = gn[[r, 0]] - psi_n / (1.0 + dn[[r, 0]]);
            for i in 0..d {
                phi[[r, i]] += coef * n[[r, i]];
            }
        }
    }

    let mut cot_u = vec![0.0; nrows];
    let mut cot_phi = Array2::<f64>::zeros((nrows, d));
    let mut coef = PointCoefficients { a: vec![0.0; d * d], beta: vec![0.0; d], gamma: 0.0, f: 0.0 };
    let (mut flux_sum, mut div_sum) = (0.0, 0.0);
    let mut grad_u = vec![0.0; d];
    let mut phi_c = vec![0.0; d];
    let mut g_grad = vec![0.0; d];
    for (k, x) in chunk.chunks_exact(d).enumerate() {
        problem.coefficients_into(x, &mut coef);
        let base = k * s;
        let mut div = 0.0;
        for i in 0..d {
            let (rp, rm) = (base + 1 + 2 * i, base + 2 + 2 * i);
            grad_u[i] = (u[rp] - u[rm]) / (2.0 * h);
            div += (phi[[rp, i]] - phi[[rm, i]]) / (2.0 * h);
            phi_c[i] = phi[[base, i]];
        }
        let res = residual_from_parts(&coef, &phi_c, &grad_u, div, u[base]);
        let (f2, g2) = res.squared();
        flux_sum += weights.flux * f2;
        div_sum += weights.div * g2;

        let c_div = 2.0 * scale * weights.div * res.r_div;
        // ∂L/∂(∇u) = −Aᵀ c_flux − β c_div
        for j in 0..d {
            let at_c: f64 = (0..d).map(|i| coef.a[i * d + j] * 2.0 * scale * weights.flux * res.r_flux[i]).sum();
            g_grad[j] = -at_c - coef.beta[j] * c_div;
        }
        cot_u[base] += -coef.gamma * c_div;
        for i in 0..d {
            cot_phi[[base, i]] += 2.0 * scale * weights.flux * res.r_flux[i];
            let (rp, rm) = (base + 1 + 2 * i, base + 2 + 2 * i);
            cot_u[rp] += g_grad[i] / (2.0 * h);
            cot_u[rm] -= g_grad[i] / (2.0 * h);
            cot_phi[[rp, i]] += c_div / (2.0 * h);
            cot_phi[[rm, i]] -= c_div / (2.0 * h);
        }
    }

    let cot_v = Array2::from_shape_fn((nrows, 1), |(r, _)| dist_d[[r, 0]] * cot_u[r]);
    // ∂φ/∂ψ = I − n nᵀ / (1 + d_N), symmetric
    let cot_psi = match &neumann {
        None => cot_phi,
        Some((dn, _, n)) => {
            let mut c = cot_phi.clone();
            for r in 0..nrows {
                let ng: f64 = (0..d).map(|i| n[[r, i]] * cot_phi[[r, i]]).sum::<f64>() / (1.0 + dn[[r, 0]]);
                for i in 0..d {
                    c[[r, i]] -= n[[r, i]] * ng;
                }
            }
            c
        }
    };

    let mut grad_v = vec![0.0; trial.v.num_params()];
    let mut grad_psi = vec![0.0; trial.psi.num_params()];
    trial.v.backward_batch(&tape_v, cot_v.view(), &mut grad_v);
    trial.psi.backward_batch(&tape_psi, cot_psi.view(), &mut grad_psi);
    ChunkResult { flux: scale * flux_sum, div: scale * div_sum, grad_v, grad_psi }
}

/// Composed values `(u, φ)` at every row of a point matrix, batched.
pub fn compose_batch(trial: &TrialFields, rows: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
    let d = rows.ncols();
    let v = trial.v.forward_batch(rows);
    let psi = trial.psi.forward_batch(rows);
    let dist = trial.aux.distance_dirichlet.eval_batch(rows);
    let lift = trial.aux.lifting_dirichlet.eval_batch(rows);
    let u = (0..rows.nrows()).map(|r| lift[[r, 0]] + dist[[r, 0]] * v.output()[[r, 0]]).collect();
    let mut phi = psi.output().clone();
    if let Some(aux) = &trial.aux.neumann {
        let (dn, gn, n) = (aux.distance.eval_batch(rows), aux.lifting.eval_batch(rows), aux.normal.eval_batch(rows));
        for r in 0..rows.nrows() {
            let psi_row: Vec<f64> = (0..d).map(|i| phi[[r, i]]).collect();
            let n_row: Vec<f64> = (0..d).map(|i| n[[r, i]]).collect();
            let composed = compose_flux(&psi_row, &n_row, gn[[r, 0]], dn[[r, 0]]);
            for i in 0..d {
                phi[[r, i]] = composed[i];
            }
        }
    }
    (u, phi)
}
