//! Sums of Monte Carlo integral estimates over interior and boundary regions:
//!
//! ```text
//! L(Θ) ≈ Σ_i μ_i(ω_i)/N_i Σ_{x ∈ V_i} F_i(Θ-fields, x)
//! ```
//!
//! The least-squares loss is the single-term case; penalty formulations add
//! boundary mismatch terms.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{sample_interior, BoundaryKind, BoundaryPatch, Domain, PointSet};
use crate::loss::{residual_at, FieldPair};
use crate::pde::PdeProblem;

pub type Integrand = Arc<dyn Fn(&dyn FieldPair, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Debug)]
pub enum Region {
    Interior(Domain),
    Boundary(BoundaryPatch),
}

impl Region {
    fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<PointSet> {
        match self {
            Region::Interior(domain) => sample_interior(domain, n, rng),
            Region::Boundary(patch) => Ok(patch.sample(n, rng)),
        }
    }
}

#[derive(Clone)]
pub struct LossTerm {
    pub region: Region,
    /// Total measure `μ_i(ω_i)`.
    pub weight: f64,
    pub integrand: Integrand,
}

impl LossTerm {
    pub fn new(region: Region, weight: f64, integrand: Integrand) -> Result<Self> {
        if !(weight > 0.0) {
            return Err(Error::Config(format!("loss term weight must be positive, got {weight}")));
        }
        Ok(Self { region, weight, integrand })
    }

    /// Interior term with weight |Ω|.
    pub fn interior(domain: &Domain, integrand: Integrand) -> Result<Self> {
        Self::new(Region::Interior(domain.clone()), domain.volume(), integrand)
    }

    /// Boundary term with weight |Γ|.
    pub fn boundary(patch: &BoundaryPatch, integrand: Integrand) -> Result<Self> {
        Self::new(Region::Boundary(patch.clone()), patch.measure(), integrand)
    }

    /// Least-squares residual `|φ − A∇u|² + (div φ − Bu + f)²`.
    pub fn least_squares(problem: &PdeProblem, h: f64) -> Result<Self> {
        let p = problem.clone();
        Self::interior(
            &problem.domain,
            Arc::new(move |fields: &dyn FieldPair, x: &[f64]| {
                let (a, b) = residual_at(&p, fields, x, h).squared();
                a + b
            }),
        )
    }

    /// `(u − g_D)²` on the Dirichlet boundary.
    pub fn dirichlet_penalty(problem: &PdeProblem) -> Result<Self> {
        let patch = problem
            .patches_of(BoundaryKind::Dirichlet)
            .next()
            .ok_or_else(|| Error::Config("no Dirichlet patch".into()))?;
        let p = problem.clone();
        Self::boundary(
            patch,
            Arc::new(move |fields: &dyn FieldPair, x: &[f64]| (fields.u(x) - p.g_dirichlet(x)).powi(2)),
        )
    }

    /// `(φ·ν − g_N)²` on the Neumann boundary.
    pub fn neumann_penalty(problem: &PdeProblem) -> Result<Self> {
        let patch = problem
            .patches_of(BoundaryKind::Neumann)
            .next()
            .ok_or_else(|| Error::Config("no Neumann patch".into()))?
            .clone();
        let p = problem.clone();
        let normal_patch = patch.clone();
        Self::boundary(
            &patch,
            Arc::new(move |fields: &dyn FieldPair, x: &[f64]| {
                let nu = normal_patch.normal(x);
                let flux: f64 = fields.phi(x).iter().zip(&nu).map(|(a, b)| a * b).sum();
                (flux - p.g_neumann(x)).powi(2)
            }),
        )
    }

    fn estimate(&self, fields: &dyn FieldPair, points: &PointSet) -> Result<f64> {
        if points.is_empty() {
            return Err(Error::Precondition("loss term evaluated on an empty point set".into()));
        }
        let sum: f64 = points.iter().map(|x| (self.integrand)(fields, x)).sum();
        Ok(self.weight / points.len() as f64 * sum)
    }
}

/// A K-term loss assembled from [`LossTerm`]s.
#[derive(Clone)]
pub struct GeneralizedLoss {
    pub terms: Vec<LossTerm>,
}

impl GeneralizedLoss {
    pub fn new(terms: Vec<LossTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("a loss needs at least one term".into()));
        }
        Ok(Self { terms })
    }

    /// Least-squares interior residual plus Dirichlet and (when present)
    /// Neumann mismatch terms.
    pub fn penalty(problem: &PdeProblem, h: f64) -> Result<Self> {
        let mut terms = vec![LossTerm::least_squares(problem, h)?, LossTerm::dirichlet_penalty(problem)?];
        if problem.has_neumann() {
            terms.push(LossTerm::neumann_penalty(problem)?);
        }
        Self::new(terms)
    }

    /// Per-term estimates on caller-provided points, one set per term.
    pub fn evaluate_terms(&self, fields: &dyn FieldPair, points: &[PointSet]) -> Result<Vec<f64>> {
        if points.len() != self.terms.len() {
            return Err(Error::shape(self.terms.len(), points.len()));
        }
        self.terms.iter().zip(points).map(|(t, p)| t.estimate(fields, p)).collect()
    }

    pub fn evaluate_on(&self, fields: &dyn FieldPair, points: &[PointSet]) -> Result<f64> {
        Ok(self.evaluate_terms(fields, points)?.iter().sum())
    }

    /// Fresh `n` samples per term, then [`Self::evaluate_on`].
    pub fn estimate<R: Rng>(&self, fields: &dyn FieldPair, n: usize, rng: &mut R) -> Result<f64> {
        let points = self.terms.iter().map(|t| t.region.sample(n, rng)).collect::<Result<Vec<_>>>()?;
        self.evaluate_on(fields, &points)
    }
}
