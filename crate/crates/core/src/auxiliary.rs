//! Auxiliary functions that impose boundary conditions by construction:
//! distance functions `d_D`, `d_N`, liftings `G_D`, `G_N` and the unit
//! normal field `n`.
//!
//! Each one is either a closed-form function (hypercube geometry) or a small
//! network trained on boundary samples before the main solve.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Diverged, Error, Result};
use crate::geometry::{sample_interior, stream_rng, streams, BoundaryKind, BoundaryPatch, DistanceTargets, Domain, Face, PointSet};
use crate::history::{StepRecord, TrainHistory};
use crate::nn::{Activation, Network};
use crate::optim::{adam_step, AdamState, LrSchedule};
use crate::pde::{PdeProblem, ScalarFn, VectorFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxRole {
    DistanceDirichlet,
    DistanceNeumann,
    LiftingDirichlet,
    LiftingNeumann,
    NormalField,
}

impl AuxRole {
    pub const ALL: [AuxRole; 5] = [
        AuxRole::DistanceDirichlet,
        AuxRole::DistanceNeumann,
        AuxRole::LiftingDirichlet,
        AuxRole::LiftingNeumann,
        AuxRole::NormalField,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AuxRole::DistanceDirichlet => "distance_dirichlet",
            AuxRole::DistanceNeumann => "distance_neumann",
            AuxRole::LiftingDirichlet => "lifting_dirichlet",
            AuxRole::LiftingNeumann => "lifting_neumann",
            AuxRole::NormalField => "normal_field",
        }
    }

    fn stream(self) -> u64 {
        streams::AUX_BASE + self as u64
    }
}

/// Map applied to a trained network's raw output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    Identity,
    /// `max(raw, 0)`; keeps distance functions nonnegative.
    Relu,
}

/// Sidecar metadata stored next to a trained auxiliary's checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxTag {
    pub role: AuxRole,
    pub transform: OutputTransform,
}

#[derive(Clone)]
pub enum AuxFunction {
    Analytic { role: AuxRole, out_dim: usize, f: VectorFn },
    Trained { role: AuxRole, net: Network, transform: OutputTransform },
}

impl fmt::Debug for AuxFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuxFunction::Analytic { role, out_dim, .. } => {
                f.debug_struct("Analytic").field("role", role).field("out_dim", out_dim).finish_non_exhaustive()
            }
            AuxFunction::Trained { role, net, transform } => f
                .debug_struct("Trained")
                .field("role", role)
                .field("widths", &net.widths())
                .field("transform", transform)
                .finish(),
        }
    }
}

impl AuxFunction {
    pub fn analytic_scalar(role: AuxRole, f: ScalarFn) -> Self {
        AuxFunction::Analytic { role, out_dim: 1, f: Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = f(x)) }
    }

    pub fn constant(role: AuxRole, value: Vec<f64>) -> Self {
        let out_dim = value.len();
        AuxFunction::Analytic { role, out_dim, f: Arc::new(move |_x: &[f64], out: &mut [f64]| out.copy_from_slice(&value)) }
    }

    pub fn trained(role: AuxRole, net: Network, transform: OutputTransform) -> Self {
        AuxFunction::Trained { role, net, transform }
    }

    pub fn role(&self) -> AuxRole {
        match self {
            AuxFunction::Analytic { role, .. } | AuxFunction::Trained { role, .. } => *role,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            AuxFunction::Analytic { out_dim, .. } => *out_dim,
            AuxFunction::Trained { net, .. } => net.output_dim(),
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self, AuxFunction::Analytic { .. })
    }

    pub fn tag(&self) -> Option<AuxTag> {
        match self {
            AuxFunction::Trained { role, transform, .. } => Some(AuxTag { role: *role, transform: *transform }),
            AuxFunction::Analytic { .. } => None,
        }
    }

    pub fn network(&self) -> Option<&Network> {
        match self {
            AuxFunction::Trained { net, .. } => Some(net),
            AuxFunction::Analytic { .. } => None,
        }
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            AuxFunction::Analytic { f, .. } => f(x, out),
            AuxFunction::Trained { net, transform, .. } => {
                let y = net.forward_unchecked(x);
                out.copy_from_slice(&y);
                if *transform == OutputTransform::Relu {
                    out.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_scalar(&self, x: &[f64]) -> f64 {
        let mut out = [0.0];
        self.eval_into(x, &mut out);
        out[0]
    }

    /// Values at every row of a `(rows, d)` matrix.
    pub fn eval_batch(&self, rows: ArrayView2<'_, f64>) -> Array2<f64> {
        match self {
            AuxFunction::Analytic { f, out_dim, .. } => {
                let mut out = Array2::zeros((rows.nrows(), *out_dim));
                let mut x = vec![0.0; rows.ncols()];
                for (r, mut o) in rows.outer_iter().zip(out.outer_iter_mut()) {
                    x.iter_mut().zip(r.iter()).for_each(|(a, b)| *a = *b);
                    f(&x, o.as_slice_mut().expect("row-major output"));
                }
                out
            }
            AuxFunction::Trained { net, transform, .. } => {
                let mut out = net.forward_batch(rows).output().clone();
                if *transform == OutputTransform::Relu {
                    out.mapv_inplace(|v| v.max(0.0));
                }
                out
            }
        }
    }
}

/// Auxiliary functions of one problem. The Neumann group is absent when
/// `Γ_N = ∅`.
#[derive(Debug, Clone)]
pub struct AuxiliarySet {
    pub distance_dirichlet: AuxFunction,
    pub lifting_dirichlet: AuxFunction,
    pub neumann: Option<NeumannAux>,
}

#[derive(Debug, Clone)]
pub struct NeumannAux {
    pub distance: AuxFunction,
    pub lifting: AuxFunction,
    pub normal: AuxFunction,
}

impl AuxiliarySet {
    pub fn functions(&self) -> Vec<&AuxFunction> {
        let mut v = vec![&self.distance_dirichlet, &self.lifting_dirichlet];
        if let Some(n) = &self.neumann {
            v.extend([&n.distance, &n.lifting, &n.normal]);
        }
        v
    }

    pub fn is_analytic(&self) -> bool {
        self.functions().iter().all(|f| f.is_analytic())
    }

    /// Closed-form auxiliaries for a hypercube problem whose patches are face
    /// unions.
    pub fn analytic_for(problem: &PdeProblem) -> Result<Self> {
        let faces_of = |kind| -> Result<Vec<Face>> {
            let mut faces = Vec::new();
            for p in problem.patches_of(kind) {
                let list = p
                    .face_list()
                    .ok_or_else(|| Error::UnsupportedGeometry("analytic auxiliaries need face patches".into()))?;
                faces.extend_from_slice(list);
            }
            Ok(faces)
        };
        analytic_hypercube_aux(
            &problem.domain,
            &faces_of(BoundaryKind::Dirichlet)?,
            &faces_of(BoundaryKind::Neumann)?,
            problem.dirichlet_data.clone(),
            problem.neumann_data.clone(),
            None,
        )
    }

    /// Root-mean-square boundary mismatches on `m` fresh samples per patch.
    pub fn boundary_mismatch<R: Rng>(&self, problem: &PdeProblem, m: usize, rng: &mut R) -> BoundaryMismatch {
        let rms = |vals: Vec<f64>| (vals.iter().map(|v| v * v).sum::<f64>() / vals.len().max(1) as f64).sqrt();
        let mut report = BoundaryMismatch::default();
        if let Some(patch) = problem.patches_of(BoundaryKind::Dirichlet).next() {
            let pts = patch.sample(m, rng);
            report.distance_dirichlet = rms(pts.iter().map(|x| self.distance_dirichlet.eval_scalar(x)).collect());
            report.lifting_dirichlet =
                rms(pts.iter().map(|x| self.lifting_dirichlet.eval_scalar(x) - problem.g_dirichlet(x)).collect());
        }
        if let (Some(patch), Some(n)) = (problem.patches_of(BoundaryKind::Neumann).next(), &self.neumann) {
            let pts = patch.sample(m, rng);
            report.distance_neumann = Some(rms(pts.iter().map(|x| n.distance.eval_scalar(x)).collect()));
            report.lifting_neumann = Some(rms(pts.iter().map(|x| n.lifting.eval_scalar(x) - problem.g_neumann(x)).collect()));
            report.normal = Some(rms(pts
                .iter()
                .map(|x| {
                    let nu = patch.normal(x);
                    n.normal.eval(x).iter().zip(&nu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                })
                .collect()));
        }
        report
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryMismatch {
    pub distance_dirichlet: f64,
    pub lifting_dirichlet: f64,
    pub distance_neumann: Option<f64>,
    pub lifting_neumann: Option<f64>,
    pub normal: Option<f64>,
}

/// Closed-form hypercube auxiliaries.
///
/// Distances are the minimum over the owned faces of the inward distance to
/// each face; the liftings are the boundary data themselves (defined on all
/// of R^d). The normal field is the constant outward normal of the Neumann
/// face unless `normal` overrides it.
pub fn analytic_hypercube_aux(
    domain: &Domain,
    dirichlet_faces: &[Face],
    neumann_faces: &[Face],
    g_dirichlet: Option<ScalarFn>,
    g_neumann: Option<ScalarFn>,
    normal: Option<VectorFn>,
) -> Result<AuxiliarySet> {
    let Domain::Hypercube { bounds } = domain else {
        return Err(Error::UnsupportedGeometry("analytic auxiliaries need a hypercube domain".into()));
    };
    if dirichlet_faces.is_empty() {
        return Err(Error::Config("the Dirichlet boundary must be non-empty".into()));
    }
    let distance = |faces: &[Face], role| {
        let (bounds, faces) = (bounds.clone(), faces.to_vec());
        AuxFunction::analytic_scalar(
            role,
            Arc::new(move |x: &[f64]| faces.iter().map(|f| f.distance(&bounds, x)).fold(f64::INFINITY, f64::min)),
        )
    };
    let lifting = |g: Option<ScalarFn>, role| match g {
        Some(g) => AuxFunction::analytic_scalar(role, g),
        None => AuxFunction::constant(role, vec![0.0]),
    };

    let neumann = if neumann_faces.is_empty() {
        None
    } else {
        let d = bounds.len();
        let normal = match normal {
            Some(f) => AuxFunction::Analytic { role: AuxRole::NormalField, out_dim: d, f },
            None => {
                let first = neumann_faces[0];
                if neumann_faces.iter().any(|f| *f != first) {
                    return Err(Error::UnsupportedGeometry(
                        "Neumann faces with different normals need a user-supplied normal field".into(),
                    ));
                }
                let mut nu = vec![0.0; d];
                nu[first.axis] = first.sign();
                AuxFunction::constant(AuxRole::NormalField, nu)
            }
        };
        Some(NeumannAux {
            distance: distance(neumann_faces, AuxRole::DistanceNeumann),
            lifting: lifting(g_neumann, AuxRole::LiftingNeumann),
            normal,
        })
    };
    Ok(AuxiliarySet {
        distance_dirichlet: distance(dirichlet_faces, AuxRole::DistanceDirichlet),
        lifting_dirichlet: lifting(g_dirichlet, AuxRole::LiftingDirichlet),
        neumann,
    })
}

/// Settings for training one auxiliary network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuxTrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub steps: usize,
    pub lr0: f64,
    pub halve_every: usize,
    /// Interior points `N_d` (fixed for distance targets, resampled for the
    /// normal field's unit-length term).
    pub interior_points: usize,
    /// Boundary batch size `M`, resampled every step.
    pub boundary_points: usize,
    pub seed: u64,
}

impl Default for AuxTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10],
            activation: Activation::Relu,
            steps: 2000,
            lr0: 1e-2,
            halve_every: 500,
            interior_points: 1000,
            boundary_points: 200,
            seed: 0,
        }
    }
}

impl AuxTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("aux.hidden widths must be positive".into()));
        }
        if !(self.lr0 > 0.0) || self.halve_every == 0 || self.interior_points == 0 || self.boundary_points == 0 {
            return Err(Error::Config("aux training needs lr0 > 0 and positive halve_every and point counts".into()));
        }
        Ok(())
    }

    fn widths(&self, d: usize, out: usize) -> Vec<usize> {
        let mut w = vec![d];
        w.extend_from_slice(&self.hidden);
        w.push(out);
        w
    }

    fn schedule(&self) -> LrSchedule {
        LrSchedule { lr0: self.lr0, halve_every: self.halve_every }
    }
}

/// ADAM loop shared by all auxiliary fits. `loss_grad` returns the loss of the
/// current network and accumulates its gradient into the provided buffer.
fn fit<R, F>(mut net: Network, cfg: &AuxTrainConfig, rng: &mut R, mut loss_grad: F) -> Result<(Network, TrainHistory)>
where
    R: Rng,
    F: FnMut(&Network, &mut R, &mut [f64]) -> Result<f64>,
{
    cfg.validate()?;
    let schedule = cfg.schedule();
    let mut state = AdamState::new(net.num_params());
    let mut history = TrainHistory::default();
    let mut grad = vec![0.0; net.num_params()];
    for step in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = loss_grad(&net, rng, &mut grad)?;
        let lr = schedule.at(step);
        let finite = loss.is_finite() && grad.iter().all(|g| g.is_finite());
        if !finite {
            return Err(Error::Divergence(Box::new(Diverged { step, last_params: net.params().to_vec(), history })));
        }
        history.push(StepRecord::new(step, loss, lr));
        adam_step(net.params_mut(), &grad, &mut state, lr)?;
    }
    Ok((net, history))
}

fn to_matrix(points: &PointSet) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((points.len(), points.dim()), points.coords()).expect("contiguous point set")
}

/// Trains a distance function to `patch` from running-minimum targets at
/// fixed interior points plus a zero-value term on fresh boundary batches.
///
/// The raw network is fitted directly; the returned function applies
/// [`OutputTransform::Relu`].
pub fn train_distance(
    patch: &BoundaryPatch,
    domain: &Domain,
    role: AuxRole,
    cfg: &AuxTrainConfig,
) -> Result<(AuxFunction, TrainHistory)> {
    let d = domain.dim();
    let mut rng = stream_rng(cfg.seed, role.stream());
    let net = Network::init(cfg.widths(d, 1), cfg.activation, &mut rng)?;
    let mut targets = DistanceTargets::new(sample_interior(domain, cfg.interior_points, &mut rng)?);
    let (net, history) = fit(net, cfg, &mut rng, |net, rng, grad| {
        let batch = patch.sample(cfg.boundary_points, rng);
        targets.update(&batch)?;

        let tape = net.forward_batch(to_matrix(targets.points()));
        let n = targets.points().len() as f64;
        let resid = tape.output().column(0).to_owned() - ndarray::ArrayView1::from(targets.distances());
        let mut loss = resid.mapv(|r| r * r).sum() / n;
        let cot = (resid * (2.0 / n)).insert_axis(ndarray::Axis(1));
        net.backward_batch(&tape, cot.view(), grad);

        let tape = net.forward_batch(to_matrix(&batch));
        let m = batch.len() as f64;
        let vals = tape.output();
        loss += vals.mapv(|v| v * v).sum() / m;
        let cot = vals * (2.0 / m);
        net.backward_batch(&tape, cot.view(), grad);
        Ok(loss)
    })?;
    Ok((AuxFunction::trained(role, net, OutputTransform::Relu), history))
}

/// Fits a lifting of the boundary datum `g` in mean square on fresh patch
/// batches, starting from the constant network equal to the mean datum. A
/// homogeneous datum (`None`) yields the exact zero network.
pub fn train_lifting(
    patch: &BoundaryPatch,
    g: Option<&ScalarFn>,
    role: AuxRole,
    cfg: &AuxTrainConfig,
) -> Result<(AuxFunction, TrainHistory)> {
    let d = patch.dim();
    let Some(g) = g else {
        let net = Network::zeros(cfg.widths(d, 1), cfg.activation)?;
        return Ok((AuxFunction::trained(role, net, OutputTransform::Identity), TrainHistory::default()));
    };
    let mut rng = stream_rng(cfg.seed, role.stream());
    let mut net = Network::init(cfg.widths(d, 1), cfg.activation, &mut rng)?;
    // start from the constant mean datum: zero output weights, bias = mean
    let probe = patch.sample(cfg.boundary_points, &mut rng);
    let mean = probe.iter().map(|x| g(x)).sum::<f64>() / probe.len() as f64;
    let fan_in = cfg.widths(d, 1)[cfg.hidden.len()];
    let m = net.num_params();
    net.params_mut()[m - 1 - fan_in..m - 1].fill(0.0);
    net.params_mut()[m - 1] = mean;
    let (net, history) = fit(net, cfg, &mut rng, |net, rng, grad| {
        let batch = patch.sample(cfg.boundary_points, rng);
        let tape = net.forward_batch(to_matrix(&batch));
        let m = batch.len() as f64;
        let mut cot = tape.output().clone();
        let mut loss = 0.0;
        for (c, x) in cot.column_mut(0).iter_mut().zip(batch.iter()) {
            let r = *c - g(x);
            loss += r * r / m;
            *c = 2.0 * r / m;
        }
        net.backward_batch(&tape, cot.view(), grad);
        Ok(loss)
    })?;
    Ok((AuxFunction::trained(role, net, OutputTransform::Identity), history))
}

/// Fits a vector field matching the outward normal on `patch` and of unit
/// length inside `domain`.
pub fn train_normal_field(patch: &BoundaryPatch, domain: &Domain, cfg: &AuxTrainConfig) -> Result<(AuxFunction, TrainHistory)> {
    let d = domain.dim();
    let role = AuxRole::NormalField;
    let mut rng = stream_rng(cfg.seed, role.stream());
    let net = Network::init(cfg.widths(d, d), cfg.activation, &mut rng)?;
    let (net, history) = fit(net, cfg, &mut rng, |net, rng, grad| {
        let batch = patch.sample(cfg.boundary_points, rng);
        let tape = net.forward_batch(to_matrix(&batch));
        let m = batch.len() as f64;
        let mut cot = tape.output().clone();
        let mut loss = 0.0;
        for (mut row, x) in cot.outer_iter_mut().zip(batch.iter()) {
            let nu = patch.normal(x);
            for (c, n) in row.iter_mut().zip(&nu) {
                let r = *c - n;
                loss += r * r / m;
                *c = 2.0 * r / m;
            }
        }
        net.backward_batch(&tape, cot.view(), grad);

        let inner = sample_interior(domain, cfg.interior_points, rng)?;
        let tape = net.forward_batch(to_matrix(&inner));
        let n = inner.len() as f64;
        let mut cot = tape.output().clone();
        for mut row in cot.outer_iter_mut() {
            let r = row.iter().map(|v| v * v).sum::<f64>() - 1.0;
            loss += r * r / n;
            row.mapv_inplace(|v| 4.0 * r * v / n);
        }
        net.backward_batch(&tape, cot.view(), grad);
        Ok(loss)
    })?;
    Ok((AuxFunction::trained(role, net, OutputTransform::Identity), history))
}

/// Trains every auxiliary the problem needs. Histories come back in the
/// order the functions were trained.
pub fn train_auxiliary_set(problem: &PdeProblem, cfg: &AuxTrainConfig) -> Result<(AuxiliarySet, Vec<(AuxRole, TrainHistory)>)> {
    let dirichlet = problem
        .patches_of(BoundaryKind::Dirichlet)
        .next()
        .ok_or_else(|| Error::Config("the Dirichlet boundary must be non-empty".into()))?;
    let mut histories = Vec::new();
    let (distance_dirichlet, h) = train_distance(dirichlet, &problem.domain, AuxRole::DistanceDirichlet, cfg)?;
    histories.push((AuxRole::DistanceDirichlet, h));
    let (lifting_dirichlet, h) = train_lifting(dirichlet, problem.dirichlet_data.as_ref(), AuxRole::LiftingDirichlet, cfg)?;
    histories.push((AuxRole::LiftingDirichlet, h));
    let neumann = match problem.patches_of(BoundaryKind::Neumann).next() {
        None => None,
        Some(patch) => {
            let (distance, h) = train_distance(patch, &problem.domain, AuxRole::DistanceNeumann, cfg)?;
            histories.push((AuxRole::DistanceNeumann, h));
            let (lifting, h) = train_lifting(patch, problem.neumann_data.as_ref(), AuxRole::LiftingNeumann, cfg)?;
            histories.push((AuxRole::LiftingNeumann, h));
            let (normal, h) = train_normal_field(patch, &problem.domain, cfg)?;
            histories.push((AuxRole::NormalField, h));
            Some(NeumannAux { distance, lifting, normal })
        }
    };
    Ok((AuxiliarySet { distance_dirichlet, lifting_dirichlet, neumann }, histories))
}

/// Reassembles a set from individually loaded auxiliaries.
pub fn assemble_set(functions: Vec<AuxFunction>) -> Result<AuxiliarySet> {
    let mut slots: [Option<AuxFunction>; 5] = Default::default();
    for f in functions {
        let idx = f.role() as usize;
        if slots[idx].is_some() {
            return Err(Error::Config(format!("auxiliary `{}` given twice", f.role().name())));
        }
        slots[idx] = Some(f);
    }
    let [dd, dn, ld, ln, nf] = slots;
    let missing = |r: AuxRole| Error::Config(format!("auxiliary `{}` missing", r.name()));
    let neumann = match (dn, ln, nf) {
        (None, None, None) => None,
        (Some(distance), Some(lifting), Some(normal)) => Some(NeumannAux { distance, lifting, normal }),
        (dn, ln, _) => {
            let role = if dn.is_none() {
                AuxRole::DistanceNeumann
            } else if ln.is_none() {
                AuxRole::LiftingNeumann
            } else {
                AuxRole::NormalField
            };
            return Err(missing(role));
        }
    };
    Ok(AuxiliarySet {
        distance_dirichlet: dd.ok_or_else(|| missing(AuxRole::DistanceDirichlet))?,
        lifting_dirichlet: ld.ok_or_else(|| missing(AuxRole::LiftingDirichlet))?,
        neumann,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Domain {
        Domain::cube(2, -1.0, 1.0).unwrap()
    }

    #[test]
    fn analytic_distances_on_square() {
        let dir = [Face::lower(0), Face::upper(0), Face::lower(1)];
        let aux = analytic_hypercube_aux(&square(), &dir, &[Face::upper(1)], None, None, None).unwrap();
        assert_eq!(aux.distance_dirichlet.eval_scalar(&[0.5, 0.0]), 0.5);
        assert_eq!(aux.distance_dirichlet.eval_scalar(&[0.0, 0.0]), 1.0);
        let n = aux.neumann.as_ref().unwrap();
        assert_eq!(n.distance.eval_scalar(&[0.2, 1.0]), 0.0);
        assert_eq!(n.distance.eval_scalar(&[0.2, 0.25]), 0.75);
        assert_eq!(n.normal.eval(&[0.3, 1.0]), vec![0.0, 1.0]);
        assert_eq!(n.normal.eval(&[-0.7, -0.2]), vec![0.0, 1.0]);
    }

    #[test]
    fn analytic_unit_square_dirichlet() {
        let dom = Domain::cube(2, 0.0, 1.0).unwrap();
        let aux = analytic_hypercube_aux(&dom, &Face::all(2), &[], None, None, None).unwrap();
        assert_eq!(aux.distance_dirichlet.eval_scalar(&[0.5, 0.25]), 0.25);
        assert!(aux.neumann.is_none());
    }

    #[test]
    fn conflicting_neumann_normals_rejected() {
        let r = analytic_hypercube_aux(&square(), &[Face::lower(0)], &[Face::upper(1), Face::upper(0)], None, None, None);
        assert!(matches!(r, Err(Error::UnsupportedGeometry(_))));
    }

    #[test]
    fn homogeneous_lifting_is_zero_network() {
        let patch = BoundaryPatch::faces(BoundaryKind::Dirichlet, &square(), vec![Face::lower(0)]).unwrap();
        let (g, h) = train_lifting(&patch, None, AuxRole::LiftingDirichlet, &AuxTrainConfig::default()).unwrap();
        assert!(h.is_empty());
        assert_eq!(g.eval_scalar(&[0.3, -0.4]), 0.0);
        assert!(g.network().unwrap().params().iter().all(|p| *p == 0.0));
    }

    #[test]
    fn relu_transform_is_nonnegative() {
        let net = Network::new(vec![1, 1], Activation::Relu, vec![1.0, -5.0]).unwrap();
        let f = AuxFunction::trained(AuxRole::DistanceDirichlet, net, OutputTransform::Relu);
        for x in [-3.0, 0.0, 4.0, 10.0] {
            assert!(f.eval_scalar(&[x]) >= 0.0);
        }
        assert_eq!(f.eval_scalar(&[7.0]), 2.0);
    }

    #[test]
    fn assemble_requires_complete_groups() {
        let aux = analytic_hypercube_aux(&square(), &[Face::lower(0)], &[Face::upper(1)], None, None, None).unwrap();
        let all: Vec<AuxFunction> = aux.functions().into_iter().cloned().collect();
        assert!(assemble_set(all.clone()).is_ok());
        assert!(assemble_set(all[..4].to_vec()).is_err());
        assert!(assemble_set(all[..2].to_vec()).unwrap().neumann.is_none());
    }
}
