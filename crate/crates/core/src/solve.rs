//! Main training loop: resample collocation points, differentiate the
//! discrete loss, take an ADAM step, optionally clip `‖Θ‖₂ ≤ R`.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Diverged, Error, Result};
use crate::geometry::{sample_interior, stream_rng, streams, Domain, PointSet};
use crate::history::{StepRecord, TrainHistory};
use crate::loss::{grad_loss, FieldPair, TrialFields};
use crate::optim::{adam_step, clip_params, l2_norm, AdamState, LrSchedule};
use crate::pde::{PdeProblem, ScalarFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    /// New collocation points before every step.
    EveryStep,
    /// One point set drawn up front and reused.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Collocation points per step, `N`.
    pub collocation: usize,
    pub steps: usize,
    pub lr0: f64,
    pub halve_every: usize,
    pub fd_step: f64,
    pub clip_radius: Option<f64>,
    pub seed: u64,
    pub resample: Resample,
    /// Monte Carlo error against the exact solution every this many steps
    /// (and at the last step); 0 disables it.
    pub error_every: usize,
    pub error_points: usize,
    /// Fill the `seconds` column. Off by default so reruns are byte-identical.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            collocation: 2000,
            steps: 10_000,
            lr0: 1e-2,
            halve_every: 2500,
            fd_step: 1e-3,
            clip_radius: None,
            seed: 0,
            resample: Resample::EveryStep,
            error_every: 0,
            error_points: 5000,
            record_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.collocation == 0 {
            return bad("train.collocation must be at least 1");
        }
        if !(self.lr0 > 0.0) {
            return bad("train.lr0 must be positive");
        }
        if self.halve_every == 0 {
            return bad("train.halve_every must be at least 1");
        }
        if !(self.fd_step > 0.0) {
            return bad("train.fd_step must be positive");
        }
        if let Some(r) = self.clip_radius {
            if !(r > 0.0) {
                return bad("train.clip_radius must be positive");
            }
        }
        if self.error_every > 0 && self.error_points == 0 {
            return bad("train.error_points must be positive when errors are tracked");
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { lr0: self.lr0, halve_every: self.halve_every }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        self.schedule().at(step)
    }
}

/// Monte Carlo error against an exact solution on `m` fresh points:
/// returns `(√(|Ω|·MSE), MSE)`.
pub fn mc_error<R: Rng>(fields: &dyn FieldPair, exact: &ScalarFn, domain: &Domain, m: usize, rng: &mut R) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::Precondition("error estimate needs at least one point".into()));
    }
    let pts = sample_interior(domain, m, rng)?;
    let mse = pts.iter().map(|y| (fields.u(y) - exact(y)).powi(2)).sum::<f64>() / m as f64;
    Ok(((domain.volume() * mse).sqrt(), mse))
}

/// Relative L² error estimate `‖u − u*‖ / ‖u*‖` on `m` fresh points.
pub fn mc_relative_error<R: Rng>(fields: &dyn FieldPair, exact: &ScalarFn, domain: &Domain, m: usize, rng: &mut R) -> Result<f64> {
    if m == 0 {
        return Err(Error::Precondition("error estimate needs at least one point".into()));
    }
    let pts = sample_interior(domain, m, rng)?;
    let (mut num, mut den) = (0.0, 0.0);
    for y in pts.iter() {
        let e = exact(y);
        num += (fields.u(y) - e).powi(2);
        den += e * e;
    }
    Ok((num / den).sqrt())
}

/// Runs `cfg.steps` optimizer steps on the joint parameters of `trial`.
pub fn solve(problem: &PdeProblem, trial: TrialFields, cfg: &TrainConfig) -> Result<(TrialFields, TrainHistory)> {
    solve_observed(problem, trial, cfg, |_| {})
}

/// [`solve`] with a callback invoked after every recorded step.
pub fn solve_observed<F>(problem: &PdeProblem, mut trial: TrialFields, cfg: &TrainConfig, mut observer: F) -> Result<(TrialFields, TrainHistory)>
where
    F: FnMut(&StepRecord),
{
    cfg.validate()?;
    if trial.dim() != problem.dim() {
        return Err(Error::shape(problem.dim(), trial.dim()));
    }
    trial.fd_step = cfg.fd_step;
    let started = Instant::now();
    let mut rng = stream_rng(cfg.seed, streams::COLLOCATION);
    let mut err_rng = stream_rng(cfg.seed, streams::ERROR_ESTIMATE);
    let fixed: Option<PointSet> = match cfg.resample {
        Resample::Fixed => Some(sample_interior(&problem.domain, cfg.collocation, &mut rng)?),
        Resample::EveryStep => None,
    };
    let mut theta = trial.params();
    let mut state = AdamState::new(theta.len());
    let mut history = TrainHistory::default();

    for step in 0..cfg.steps {
        let fresh;
        let points = match &fixed {
            Some(p) => p,
            None => {
                fresh = sample_interior(&problem.domain, cfg.collocation, &mut rng)?;
                &fresh
            }
        };
        let eval = grad_loss(problem, &trial, points)?;
        let grad = eval.joint();
        if !eval.loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence(Box::new(Diverged { step, last_params: theta, history })));
        }
        let lr = cfg.lr_at(step);
        let mut record = StepRecord::new(step, eval.loss.total, lr);
        record.loss_flux = eval.loss.flux;
        record.loss_div = eval.loss.div;
        let track_error = cfg.error_every > 0 && (step % cfg.error_every == 0 || step + 1 == cfg.steps);
        if let (true, Some(exact)) = (track_error, &problem.exact) {
            let (l2, mse) = mc_error(&trial, &exact.u, &problem.domain, cfg.error_points, &mut err_rng)?;
            record.l2_error = Some(l2);
            record.mse = Some(mse);
        }

        adam_step(&mut theta, &grad, &mut state, lr)?;
        if let Some(r) = cfg.clip_radius {
            clip_params(&mut theta, r);
        }
        trial.set_params(&theta)?;
        record.param_norm = l2_norm(&theta);
        if cfg.record_time {
            record.seconds = Some(started.elapsed().as_secs_f64());
        }
        observer(&record);
        history.push(record);
    }
    Ok((trial, history))
}
