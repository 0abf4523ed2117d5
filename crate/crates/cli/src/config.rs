//! Run configuration: TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use fosls::auxiliary::AuxTrainConfig;
use fosls::geometry::{BoundaryKind, BoundaryPatch, Domain, Face};
use fosls::{Activation, BenchmarkSpec, PdeProblem, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Threads for the loss reduction; results do not depend on it.
    pub workers: usize,
    pub problem: ProblemSection,
    pub geometry: Option<GeometrySection>,
    pub main: NetSection,
    pub aux: AuxSection,
    pub train: TrainConfig,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            problem: ProblemSection::default(),
            geometry: None,
            main: NetSection { hidden: vec![20; 5], activation: Activation::Sigmoid },
            aux: AuxSection::default(),
            train: TrainConfig::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    pub dim: usize,
    pub k: u32,
    pub eps: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self { name: "example1".into(), dim: 2, k: 1, eps: 0.05 }
    }
}

impl ProblemSection {
    pub fn spec(&self) -> Result<BenchmarkSpec, CliError> {
        match self.name.as_str() {
            "example1" => Ok(BenchmarkSpec::Example1 { dim: self.dim, k: self.k }),
            "example2" => Ok(BenchmarkSpec::Example2 { eps: self.eps }),
            "remark1d" => Ok(BenchmarkSpec::Remark1d),
            other => Err(CliError::config(format!("problem.name: unknown benchmark `{other}` (expected example1, example2 or remark1d)"))),
        }
    }
}

/// Replaces the benchmark's box and boundary split. Faces are written as
/// a sign and a 1-based axis, e.g. `"-x1"` or `"+x2"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub bounds: Vec<[f64; 2]>,
    pub dirichlet: Vec<String>,
    #[serde(default)]
    pub neumann: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AuxMode {
    /// Closed-form hypercube distances, liftings and normal.
    Analytic,
    /// Train the auxiliary networks before the main solve.
    Trained,
    /// Load previously trained auxiliaries from `aux.dir`.
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxSection {
    pub mode: AuxMode,
    /// Checkpoint directory; defaults to `<output.dir>/aux`.
    pub dir: Option<PathBuf>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub steps: usize,
    pub lr0: f64,
    pub halve_every: usize,
    pub interior_points: usize,
    pub boundary_points: usize,
}

impl Default for AuxSection {
    fn default() -> Self {
        let base = AuxTrainConfig::default();
        Self {
            mode: AuxMode::Analytic,
            dir: None,
            hidden: vec![10; 3],
            activation: Activation::Tanh,
            steps: base.steps,
            lr0: base.lr0,
            halve_every: base.halve_every,
            interior_points: base.interior_points,
            boundary_points: base.boundary_points,
        }
    }
}

impl AuxSection {
    pub fn train_config(&self, seed: u64) -> AuxTrainConfig {
        AuxTrainConfig {
            hidden: self.hidden.clone(),
            activation: self.activation,
            steps: self.steps,
            lr0: self.lr0,
            halve_every: self.halve_every,
            interior_points: self.interior_points,
            boundary_points: self.boundary_points,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("fosls-out") }
    }
}

/// Values given on the command line; each one overrides the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub problem: Option<String>,
    pub dim: Option<usize>,
    pub k: Option<u32>,
    pub eps: Option<f64>,
    pub aux_mode: Option<AuxMode>,
    /// Main training steps.
    pub steps: Option<usize>,
    /// Steps per auxiliary network.
    pub aux_steps: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        let o = overrides;
        if let Some(v) = o.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = o.workers {
            cfg.workers = v;
        }
        if let Some(v) = &o.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = &o.problem {
            cfg.problem.name = v.clone();
        }
        if let Some(v) = o.dim {
            cfg.problem.dim = v;
        }
        if let Some(v) = o.k {
            cfg.problem.k = v;
        }
        if let Some(v) = o.eps {
            cfg.problem.eps = v;
        }
        if let Some(v) = o.aux_mode {
            cfg.aux.mode = v;
        }
        if let Some(v) = o.steps {
            cfg.train.steps = v;
        }
        if let Some(v) = o.aux_steps {
            cfg.aux.steps = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::config("workers: must be at least 1"));
        }
        self.problem.spec()?;
        if self.main.hidden.is_empty() || self.main.hidden.contains(&0) {
            return Err(CliError::config("main.hidden: needs at least one layer and positive widths"));
        }
        self.aux.train_config(self.train.seed).validate().map_err(|e| CliError::config(format!("aux: {e}")))?;
        self.train.validate().map_err(|e| CliError::config(format!("train: {e}")))?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn aux_dir(&self) -> PathBuf {
        self.aux.dir.clone().unwrap_or_else(|| self.output.dir.join("aux"))
    }

    /// First 16 hex digits of the SHA-256 of every setting that can change
    /// results (output location and worker count excluded).
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.workers = 1;
        keyed.output = OutputSection::default();
        let text = serde_json::to_string(&keyed).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn build_problem(&self) -> Result<PdeProblem, CliError> {
        let mut problem = self.problem.spec()?.build().map_err(|e| CliError::config(format!("problem: {e}")))?;
        if let Some(g) = &self.geometry {
            let (domain, patches) = g.build(problem.dim())?;
            problem.domain = domain;
            problem.patches = patches;
            // the closed-form solution belongs to the benchmark's own geometry
            problem.exact = None;
        }
        Ok(problem)
    }
}

fn parse_face(tag: &str, dim: usize, path: &str) -> Result<Face, CliError> {
    let bad = || CliError::config(format!("{path}: `{tag}` is not a face (expected e.g. \"-x1\" or \"+x{dim}\")"));
    let (upper, rest) = match tag.as_bytes().first() {
        Some(b'+') => (true, &tag[1..]),
        Some(b'-') => (false, &tag[1..]),
        _ => return Err(bad()),
    };
    let axis: usize = rest.strip_prefix('x').and_then(|n| n.parse().ok()).ok_or_else(bad)?;
    if axis == 0 || axis > dim {
        return Err(CliError::config(format!("{path}: axis {axis} out of range 1..={dim}")));
    }
    Ok(if upper { Face::upper(axis - 1) } else { Face::lower(axis - 1) })
}

fn face_tag(f: &Face) -> String {
    format!("{}x{}", if f.upper { '+' } else { '-' }, f.axis + 1)
}

impl GeometrySection {
    pub fn build(&self, dim: usize) -> Result<(Domain, Vec<BoundaryPatch>), CliError> {
        if self.bounds.len() != dim {
            return Err(CliError::config(format!("geometry.bounds: {} axes given but the problem is {dim}-dimensional", self.bounds.len())));
        }
        for (i, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CliError::config(format!("geometry.bounds[{i}]: need finite lo < hi, got [{lo}, {hi}]")));
            }
        }
        let domain = Domain::hypercube(self.bounds.iter().map(|b| (b[0], b[1])).collect()).map_err(|e| CliError::config(format!("geometry.bounds: {e}")))?;
        let parse_all = |tags: &[String], key: &str| -> Result<Vec<Face>, CliError> {
            tags.iter().enumerate().map(|(i, t)| parse_face(t, dim, &format!("geometry.{key}[{i}]"))).collect()
        };
        let dirichlet = parse_all(&self.dirichlet, "dirichlet")?;
        let neumann = parse_all(&self.neumann, "neumann")?;
        if dirichlet.is_empty() {
            return Err(CliError::config("geometry.dirichlet: at least one face is required"));
        }
        for face in Face::all(dim) {
            let count = dirichlet.iter().chain(&neumann).filter(|f| **f == face).count();
            if count == 0 {
                return Err(CliError::config(format!("geometry: face {} has no boundary condition", face_tag(&face))));
            }
            if count > 1 {
                return Err(CliError::config(format!("geometry: face {} is listed more than once", face_tag(&face))));
            }
        }
        let mut patches = vec![BoundaryPatch::faces(BoundaryKind::Dirichlet, &domain, dirichlet).map_err(|e| CliError::config(format!("geometry.dirichlet: {e}")))?];
        if !neumann.is_empty() {
            patches.push(BoundaryPatch::faces(BoundaryKind::Neumann, &domain, neumann).map_err(|e| CliError::config(format!("geometry.neumann: {e}")))?);
        }
        Ok((domain, patches))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.lr0, 1e-2);
        assert_eq!(cfg.train.halve_every, 2500);
        assert_eq!(cfg.main.hidden.len(), 5);
        assert_eq!(cfg.aux.hidden.len(), 3);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.train.clip_radius = Some(3.0);
        cfg.geometry = Some(GeometrySection { bounds: vec![[0.0, 1.0], [0.0, 2.0]], dirichlet: vec!["-x1".into()], neumann: vec![] });
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        b.workers = 4;
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.train.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nlr0 = 0.1\n[main]\nhiden = [3]\nactivation = \"relu\"").is_err());
        assert!(toml::from_str::<RunConfig>("[problem]\nnme = \"x\"").is_err());
    }

    #[test]
    fn geometry_errors_name_the_field() {
        let g = GeometrySection { bounds: vec![[0.0, 1.0], [1.0, 0.0]], dirichlet: vec![], neumann: vec![] };
        assert!(g.build(2).unwrap_err().to_string().contains("geometry.bounds[1]"));
        let g = GeometrySection { bounds: vec![[0.0, 1.0], [0.0, 1.0]], dirichlet: vec!["-x1".into(), "x2".into()], neumann: vec![] };
        assert!(g.build(2).unwrap_err().to_string().contains("geometry.dirichlet[1]"));
        let g = GeometrySection { bounds: vec![[0.0, 1.0], [0.0, 1.0]], dirichlet: vec!["-x1".into(), "+x1".into(), "-x2".into()], neumann: vec![] };
        assert!(g.build(2).unwrap_err().to_string().contains("+x2"));
        let g = GeometrySection { bounds: vec![[0.0, 1.0], [0.0, 1.0]], dirichlet: vec!["-x1".into(), "+x1".into(), "-x2".into()], neumann: vec!["+x2".into()] };
        let (domain, patches) = g.build(2).unwrap();
        assert_eq!(domain.volume(), 1.0);
        assert_eq!(patches.len(), 2);
    }
}
