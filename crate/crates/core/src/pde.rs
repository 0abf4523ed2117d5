//! Second-order elliptic problems `−div(A∇u) + Bu = f` with mixed boundary
//! data, where `Bu = β·∇u + γu`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{validate_partition, BoundaryKind, BoundaryPatch, Domain};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Writes a vector (or row-major matrix) value into the output slice.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Closed-form solution used for error reporting.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarFn,
    pub grad: VectorFn,
}

#[derive(Clone)]
pub struct PdeProblem {
    pub name: String,
    pub domain: Domain,
    /// Symmetric `d×d` coefficient, row-major.
    pub diffusion: VectorFn,
    pub convection: Option<VectorFn>,
    pub reaction: Option<ScalarFn>,
    pub source: ScalarFn,
    pub patches: Vec<BoundaryPatch>,
    /// Dirichlet datum defined on all of R^d; `None` means `g_D ≡ 0`.
    pub dirichlet_data: Option<ScalarFn>,
    /// Neumann datum defined on all of R^d; `None` means `g_N ≡ 0`.
    pub neumann_data: Option<ScalarFn>,
    /// Ellipticity bounds `(λ, Λ)` when known.
    pub eigen_bounds: Option<(f64, f64)>,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeProblem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("patches", &self.patches)
            .field("eigen_bounds", &self.eigen_bounds)
            .field("has_exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

/// Coefficients sampled at a single point.
#[derive(Debug, Clone)]
pub struct PointCoefficients {
    pub a: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub f: f64,
}

impl PdeProblem {
    /// Validated problem with `A = I`, `B = 0`.
    pub fn new(name: impl Into<String>, domain: Domain, source: ScalarFn, patches: Vec<BoundaryPatch>) -> Result<Self> {
        validate_partition(&patches)?;
        let d = domain.dim();
        for p in &patches {
            if p.dim() != d {
                return Err(Error::shape(d, p.dim()));
            }
        }
        Ok(Self {
            name: name.into(),
            domain,
            diffusion: identity_matrix(d, 1.0),
            convection: None,
            reaction: None,
            source,
            patches,
            dirichlet_data: None,
            neumann_data: None,
            eigen_bounds: Some((1.0, 1.0)),
            exact: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn with_diffusion(mut self, a: VectorFn, eigen_bounds: Option<(f64, f64)>) -> Result<Self> {
        if let Some((lo, hi)) = eigen_bounds {
            if !(lo > 0.0 && lo <= hi) {
                return Err(Error::Config(format!("eigenvalue bounds ({lo}, {hi}) must satisfy 0 < λ ≤ Λ")));
            }
        }
        self.diffusion = a;
        self.eigen_bounds = eigen_bounds;
        Ok(self)
    }

    /// `Bu = β·∇u + γu`.
    pub fn with_convection_reaction(mut self, beta: Option<VectorFn>, gamma: Option<ScalarFn>) -> Self {
        self.convection = beta;
        self.reaction = gamma;
        self
    }

    /// `Bu = div(βu)`, rewritten as `β·∇u + (div β)u` with `div β` supplied
    /// in closed form.
    pub fn with_divergence_convection(mut self, beta: VectorFn, div_beta: ScalarFn) -> Self {
        self.convection = Some(beta);
        self.reaction = Some(div_beta);
        self
    }

    pub fn with_boundary_data(mut self, dirichlet: Option<ScalarFn>, neumann: Option<ScalarFn>) -> Self {
        self.dirichlet_data = dirichlet;
        self.neumann_data = neumann;
        self
    }

    pub fn with_exact(mut self, exact: ExactSolution) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn patches_of(&self, kind: BoundaryKind) -> impl Iterator<Item = &BoundaryPatch> {
        self.patches.iter().filter(move |p| p.kind == kind)
    }

    pub fn has_neumann(&self) -> bool {
        self.patches_of(BoundaryKind::Neumann).next().is_some()
    }

    pub fn g_dirichlet(&self, x: &[f64]) -> f64 {
        self.dirichlet_data.as_ref().map_or(0.0, |g| g(x))
    }

    pub fn g_neumann(&self, x: &[f64]) -> f64 {
        self.neumann_data.as_ref().map_or(0.0, |g| g(x))
    }

    pub fn coefficients_at(&self, x: &[f64]) -> PointCoefficients {
        let d = self.dim();
        let mut c = PointCoefficients { a: vec![0.0; d * d], beta: vec![0.0; d], gamma: 0.0, f: (self.source)(x) };
        self.coefficients_into(x, &mut c);
        c
    }

    pub(crate) fn coefficients_into(&self, x: &[f64], c: &mut PointCoefficients) {
        (self.diffusion)(x, &mut c.a);
        match &self.convection {
            Some(b) => b(x, &mut c.beta),
            None => c.beta.iter_mut().for_each(|v| *v = 0.0),
        }
        c.gamma = self.reaction.as_ref().map_or(0.0, |g| g(x));
        c.f = (self.source)(x);
    }

    /// Checks `‖A − Aᵀ‖ ≤ 1e-12` at `x`.
    pub fn diffusion_is_symmetric_at(&self, x: &[f64]) -> bool {
        let d = self.dim();
        let mut a = vec![0.0; d * d];
        (self.diffusion)(x, &mut a);
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += (a[i * d + j] - a[j * d + i]).powi(2);
            }
        }
        s.sqrt() <= 1e-12
    }
}

/// `c·I` as a coefficient field.
pub fn identity_matrix(d: usize, c: f64) -> VectorFn {
    Arc::new(move |_x: &[f64], out: &mut [f64]| {
        for (idx, v) in out.iter_mut().enumerate() {
            *v = if idx / d == idx % d { c } else { 0.0 };
        }
    })
}
