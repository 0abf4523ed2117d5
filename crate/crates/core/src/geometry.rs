//! Domains, boundary patches, seeded sampling and running nearest-distance
//! targets.

use std::fmt;
use std::sync::Arc;

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seeded generator for one independent stream.
///
/// Streams share the seed and differ in the ChaCha stream id, so auxiliary
/// trainings and the main solve never draw from the same sequence.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Well-known stream ids.
pub mod streams {
    pub const COLLOCATION: u64 = 0;
    pub const MAIN_INIT: u64 = 1;
    pub const ERROR_ESTIMATE: u64 = 2;
    pub const AUX_BASE: u64 = 16;
}

/// Points stored contiguously, row-major `(len, dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::shape(dim, coords.len()));
        }
        Ok(Self { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::shape(dim, r.len()));
            }
            coords.extend_from_slice(r);
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    fn push(&mut self, p: &[f64]) {
        self.coords.extend_from_slice(p);
    }
}

pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Open domain Ω ⊂ R^d.
#[derive(Clone)]
pub enum Domain {
    /// Axis-aligned box `Π (lo_i, hi_i)`.
    Hypercube { bounds: Vec<(f64, f64)> },
    /// Membership predicate inside a bounding box; volume estimated once.
    Predicate {
        bbox: Vec<(f64, f64)>,
        contains: Predicate,
        volume: f64,
    },
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Hypercube { bounds } => f.debug_struct("Hypercube").field("bounds", bounds).finish(),
            Domain::Predicate { bbox, volume, .. } => f
                .debug_struct("Predicate")
                .field("bbox", bbox)
                .field("volume", volume)
                .finish_non_exhaustive(),
        }
    }
}

/// Minimum acceptance rate tolerated by rejection sampling.
pub const MIN_ACCEPTANCE: f64 = 1e-6;
const VOLUME_TRIALS: u64 = 1_000_000;

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::Config("domain needs at least one axis".into()));
    }
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("axis {i}: bounds [{lo}, {hi}] are not an interval")));
        }
    }
    Ok(())
}

fn uniform_in_box<R: Rng + ?Sized>(bbox: &[(f64, f64)], rng: &mut R, out: &mut [f64]) {
    for (o, (lo, hi)) in out.iter_mut().zip(bbox) {
        let t: f64 = Open01.sample(rng);
        *o = lo + (hi - lo) * t;
    }
}

impl Domain {
    pub fn hypercube(bounds: Vec<(f64, f64)>) -> Result<Self> {
        check_bounds(&bounds)?;
        Ok(Domain::Hypercube { bounds })
    }

    /// `(lo, hi)^d`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::hypercube(vec![(lo, hi); dim])
    }

    /// Predicate domain; the volume is estimated from 10^6 box samples.
    pub fn predicate<R: Rng + ?Sized>(bbox: Vec<(f64, f64)>, contains: Predicate, rng: &mut R) -> Result<Self> {
        check_bounds(&bbox)?;
        let mut p = vec![0.0; bbox.len()];
        let mut hits = 0u64;
        for _ in 0..VOLUME_TRIALS {
            uniform_in_box(&bbox, rng, &mut p);
            if contains(&p) {
                hits += 1;
            }
        }
        let rate = hits as f64 / VOLUME_TRIALS as f64;
        if rate < MIN_ACCEPTANCE {
            return Err(Error::SamplingFailure { rate, attempts: VOLUME_TRIALS });
        }
        let box_volume: f64 = bbox.iter().map(|(lo, hi)| hi - lo).product();
        Ok(Domain::Predicate { bbox, contains, volume: box_volume * rate })
    }

    pub fn dim(&self) -> usize {
        self.bounding_box().len()
    }

    pub fn bounding_box(&self) -> &[(f64, f64)] {
        match self {
            Domain::Hypercube { bounds } => bounds,
            Domain::Predicate { bbox, .. } => bbox,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Domain::Hypercube { bounds } => bounds.iter().map(|(lo, hi)| hi - lo).product(),
            Domain::Predicate { volume, .. } => *volume,
        }
    }

    /// Membership in the open domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Hypercube { bounds } => x.iter().zip(bounds).all(|(xi, (lo, hi))| lo < xi && xi < hi),
            Domain::Predicate { bbox, contains, .. } => {
                x.iter().zip(bbox).all(|(xi, (lo, hi))| lo < xi && xi < hi) && contains(x)
            }
        }
    }

    /// Largest box edge over two; the unit of the finite-difference step.
    pub fn half_diameter(&self) -> f64 {
        self.bounding_box().iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max) / 2.0
    }
}

/// `N` i.i.d. uniform points in Ω.
pub fn sample_interior<R: Rng + ?Sized>(domain: &Domain, n: usize, rng: &mut R) -> Result<PointSet> {
    let d = domain.dim();
    let mut out = PointSet { dim: d, coords: Vec::with_capacity(n * d) };
    let mut p = vec![0.0; d];
    match domain {
        Domain::Hypercube { bounds } => {
            for _ in 0..n {
                uniform_in_box(bounds, rng, &mut p);
                out.push(&p);
            }
        }
        Domain::Predicate { bbox, contains, .. } => {
            let mut attempts = 0u64;
            while out.len() < n {
                uniform_in_box(bbox, rng, &mut p);
                attempts += 1;
                if contains(&p) {
                    out.push(&p);
                } else if attempts >= VOLUME_TRIALS {
                    let rate = out.len() as f64 / attempts as f64;
                    if rate < MIN_ACCEPTANCE {
                        return Err(Error::SamplingFailure { rate, attempts });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Which boundary condition a patch carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// One face of a hypercube: `x_axis = lo` (`upper == false`) or `x_axis = hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

impl Face {
    pub fn lower(axis: usize) -> Self {
        Face { axis, upper: false }
    }

    pub fn upper(axis: usize) -> Self {
        Face { axis, upper: true }
    }

    /// All `2d` faces of a `d`-dimensional box.
    pub fn all(dim: usize) -> Vec<Face> {
        (0..dim).flat_map(|a| [Face::lower(a), Face::upper(a)]).collect()
    }

    pub fn sign(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }

    /// Distance from `x` to the face's hyperplane, measured inward.
    pub fn distance(&self, bounds: &[(f64, f64)], x: &[f64]) -> f64 {
        let (lo, hi) = bounds[self.axis];
        if self.upper {
            hi - x[self.axis]
        } else {
            x[self.axis] - lo
        }
    }

    /// (d-1)-dimensional measure; faces of a 1-D interval count as 1.
    pub fn measure(&self, bounds: &[(f64, f64)]) -> f64 {
        bounds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.axis)
            .map(|(_, (lo, hi))| hi - lo)
            .product()
    }
}

pub type PatchSampler = Arc<dyn Fn(usize, &mut dyn rand::RngCore) -> PointSet + Send + Sync>;
pub type NormalFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum PatchGeometry {
    /// Union of hypercube faces.
    Faces { bounds: Vec<(f64, f64)>, faces: Vec<Face> },
    /// User-supplied surface sampler and outward unit normal.
    Custom {
        dim: usize,
        sampler: PatchSampler,
        normal: NormalFn,
        measure: f64,
    },
}

/// A labelled part of ∂Ω.
#[derive(Clone)]
pub struct BoundaryPatch {
    pub kind: BoundaryKind,
    pub geometry: PatchGeometry,
}

impl fmt::Debug for BoundaryPatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("BoundaryPatch");
        s.field("kind", &self.kind);
        match &self.geometry {
            PatchGeometry::Faces { faces, .. } => s.field("faces", faces),
            PatchGeometry::Custom { measure, .. } => s.field("measure", measure),
        };
        s.finish()
    }
}

impl BoundaryPatch {
    pub fn faces(kind: BoundaryKind, domain: &Domain, faces: Vec<Face>) -> Result<Self> {
        let Domain::Hypercube { bounds } = domain else {
            return Err(Error::UnsupportedGeometry("face patches need a hypercube domain".into()));
        };
        if faces.is_empty() {
            return Err(Error::Config("a face patch needs at least one face".into()));
        }
        for (i, f) in faces.iter().enumerate() {
            if f.axis >= bounds.len() {
                return Err(Error::Config(format!("face axis {} outside dimension {}", f.axis, bounds.len())));
            }
            if faces[..i].contains(f) {
                return Err(Error::Config(format!("face {f:?} listed twice")));
            }
        }
        Ok(Self { kind, geometry: PatchGeometry::Faces { bounds: bounds.clone(), faces } })
    }

    pub fn custom(kind: BoundaryKind, dim: usize, sampler: PatchSampler, normal: NormalFn, measure: f64) -> Result<Self> {
        if !(measure > 0.0) {
            return Err(Error::Config("custom patch measure must be positive".into()));
        }
        Ok(Self { kind, geometry: PatchGeometry::Custom { dim, sampler, normal, measure } })
    }

    pub fn dim(&self) -> usize {
        match &self.geometry {
            PatchGeometry::Faces { bounds, .. } => bounds.len(),
            PatchGeometry::Custom { dim, .. } => *dim,
        }
    }

    /// Total surface measure |Γ|.
    pub fn measure(&self) -> f64 {
        match &self.geometry {
            PatchGeometry::Faces { bounds, faces } => faces.iter().map(|f| f.measure(bounds)).sum(),
            PatchGeometry::Custom { measure, .. } => *measure,
        }
    }

    pub fn face_list(&self) -> Option<&[Face]> {
        match &self.geometry {
            PatchGeometry::Faces { faces, .. } => Some(faces),
            PatchGeometry::Custom { .. } => None,
        }
    }

    /// Outward unit normal at a point of the patch.
    pub fn normal(&self, x: &[f64]) -> Vec<f64> {
        match &self.geometry {
            PatchGeometry::Faces { bounds, faces } => {
                // the face the point lies on, ties broken by list order
                let face = faces
                    .iter()
                    .min_by(|a, b| a.distance(bounds, x).abs().total_cmp(&b.distance(bounds, x).abs()))
                    .expect("non-empty face list");
                let mut n = vec![0.0; bounds.len()];
                n[face.axis] = face.sign();
                n
            }
            PatchGeometry::Custom { normal, .. } => normal(x),
        }
    }

    /// `M` points uniform with respect to surface measure.
    pub fn sample<R: Rng>(&self, m: usize, rng: &mut R) -> PointSet {
        match &self.geometry {
            PatchGeometry::Faces { bounds, faces } => {
                let weights: Vec<f64> = faces.iter().map(|f| f.measure(bounds)).collect();
                let total: f64 = weights.iter().sum();
                let d = bounds.len();
                let mut out = PointSet { dim: d, coords: Vec::with_capacity(m * d) };
                let mut p = vec![0.0; d];
                for _ in 0..m {
                    let mut pick = rng.random::<f64>() * total;
                    let mut face = faces[faces.len() - 1];
                    for (f, w) in faces.iter().zip(&weights) {
                        if pick < *w {
                            face = *f;
                            break;
                        }
                        pick -= w;
                    }
                    uniform_in_box(bounds, rng, &mut p);
                    let (lo, hi) = bounds[face.axis];
                    p[face.axis] = if face.upper { hi } else { lo };
                    out.push(&p);
                }
                out
            }
            PatchGeometry::Custom { sampler, .. } => sampler(m, rng),
        }
    }

    /// Exact distance to the patch for face patches.
    pub fn face_distance(&self, x: &[f64]) -> Option<f64> {
        match &self.geometry {
            PatchGeometry::Faces { bounds, faces } => Some(
                faces
                    .iter()
                    .map(|f| distance_to_face_set(bounds, f, x))
                    .fold(f64::INFINITY, f64::min),
            ),
            PatchGeometry::Custom { .. } => None,
        }
    }
}

/// Euclidean distance from `x` to the closed face (not just its hyperplane).
fn distance_to_face_set(bounds: &[(f64, f64)], face: &Face, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, ((lo, hi), xi)) in bounds.iter().zip(x).enumerate() {
        let gap = if i == face.axis {
            if face.upper {
                xi - hi
            } else {
                xi - lo
            }
        } else if xi < lo {
            lo - xi
        } else if xi > hi {
            xi - hi
        } else {
            0.0
        };
        s += gap * gap;
    }
    s.sqrt()
}

/// Checks that Dirichlet and Neumann face patches are disjoint and that the
/// Dirichlet part is non-empty.
pub fn validate_partition(patches: &[BoundaryPatch]) -> Result<()> {
    let dirichlet: Vec<&BoundaryPatch> = patches.iter().filter(|p| p.kind == BoundaryKind::Dirichlet).collect();
    if dirichlet.is_empty() || dirichlet.iter().all(|p| p.measure() <= 0.0) {
        return Err(Error::Config("the Dirichlet boundary must be non-empty".into()));
    }
    let mut seen: Vec<Face> = Vec::new();
    for p in patches {
        if let Some(faces) = p.face_list() {
            for f in faces {
                if seen.contains(f) {
                    return Err(Error::Config(format!("face {f:?} belongs to more than one patch")));
                }
                seen.push(*f);
            }
        }
    }
    Ok(())
}

/// Running-minimum distance estimates from fixed interior points to a
/// boundary patch, refined one boundary batch at a time.
#[derive(Debug, Clone)]
pub struct DistanceTargets {
    points: PointSet,
    distances: Vec<f64>,
}

impl DistanceTargets {
    pub fn new(points: PointSet) -> Self {
        let distances = vec![f64::INFINITY; points.len()];
        Self { points, distances }
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// `D_k ← min(D_k, min_i |x_k − z_i|)`.
    pub fn update(&mut self, batch: &PointSet) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Precondition("boundary batch must be non-empty".into()));
        }
        if batch.dim() != self.points.dim() {
            return Err(Error::shape(self.points.dim(), batch.dim()));
        }
        for (x, dk) in self.points.iter().zip(&mut self.distances) {
            let mut best = f64::INFINITY;
            for z in batch.iter() {
                let s: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(s);
            }
            *dk = dk.min(best.sqrt());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_samples() {
        let dom = Domain::cube(2, -1.0, 1.0).unwrap();
        let mut rng = stream_rng(0, 0);
        assert!(sample_interior(&dom, 0, &mut rng).unwrap().is_empty());
        let top = BoundaryPatch::faces(BoundaryKind::Neumann, &dom, vec![Face::upper(1)]).unwrap();
        assert!(top.sample(0, &mut rng).is_empty());
    }

    #[test]
    fn interior_samples_are_inside() {
        let dom = Domain::cube(2, -1.0, 1.0).unwrap();
        let pts = sample_interior(&dom, 5000, &mut stream_rng(1, 0)).unwrap();
        assert!(pts.iter().all(|p| dom.contains(p)));
    }

    #[test]
    fn interior_mean_near_center() {
        let dom = Domain::cube(2, -1.0, 1.0).unwrap();
        let pts = sample_interior(&dom, 100_000, &mut stream_rng(2, 0)).unwrap();
        for axis in 0..2 {
            let mean = pts.iter().map(|p| p[axis]).sum::<f64>() / pts.len() as f64;
            // sd of the mean is sqrt(1/3 / 1e5) ~ 1.8e-3
            assert!(mean.abs() < 0.02, "axis {axis} mean {mean}");
        }
    }

    #[test]
    fn top_face_samples_are_on_face() {
        let dom = Domain::cube(2, -1.0, 1.0).unwrap();
        let top = BoundaryPatch::faces(BoundaryKind::Neumann, &dom, vec![Face::upper(1)]).unwrap();
        let pts = top.sample(100, &mut stream_rng(3, 0));
        assert_eq!(pts.len(), 100);
        assert!(pts.iter().all(|p| p[1] == 1.0 && p[0] > -1.0 && p[0] < 1.0));
        assert_eq!(top.normal(pts.point(0)), vec![0.0, 1.0]);
    }

    #[test]
    fn face_frequencies_follow_measure() {
        // rectangle (0,3) x (0,1): faces x0=const have length 1, x1=const length 3
        let dom = Domain::hypercube(vec![(0.0, 3.0), (0.0, 1.0)]).unwrap();
        let all = BoundaryPatch::faces(BoundaryKind::Dirichlet, &dom, Face::all(2)).unwrap();
        assert_eq!(all.measure(), 8.0);
        let n = 100_000;
        let pts = all.sample(n, &mut stream_rng(4, 0));
        let mut counts = [0usize; 4];
        for p in pts.iter() {
            let idx = if p[0] == 0.0 {
                0
            } else if p[0] == 3.0 {
                1
            } else if p[1] == 0.0 {
                2
            } else {
                assert_eq!(p[1], 1.0);
                3
            };
            counts[idx] += 1;
        }
        let expected = [1.0 / 8.0, 1.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0];
        for (c, e) in counts.iter().zip(expected) {
            let freq = *c as f64 / n as f64;
            assert!((freq - e).abs() < 0.02 * e.max(0.25), "freq {freq} expected {e}");
        }
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let dom = Domain::cube(3, 0.0, 1.0).unwrap();
        let a = sample_interior(&dom, 50, &mut stream_rng(7, 0)).unwrap();
        let b = sample_interior(&dom, 50, &mut stream_rng(7, 0)).unwrap();
        let c = sample_interior(&dom, 50, &mut stream_rng(7, 1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn predicate_domain_disk() {
        let disk: Predicate = Arc::new(|x: &[f64]| x[0] * x[0] + x[1] * x[1] < 1.0);
        let mut rng = stream_rng(5, 0);
        let dom = Domain::predicate(vec![(-1.0, 1.0), (-1.0, 1.0)], disk, &mut rng).unwrap();
        assert!((dom.volume() - std::f64::consts::PI).abs() < 0.01);
        let pts = sample_interior(&dom, 1000, &mut rng).unwrap();
        assert!(pts.iter().all(|p| dom.contains(p)));
    }

    #[test]
    fn predicate_domain_empty_fails() {
        let never: Predicate = Arc::new(|_: &[f64]| false);
        let r = Domain::predicate(vec![(0.0, 1.0)], never, &mut stream_rng(0, 0));
        assert!(matches!(r, Err(Error::SamplingFailure { .. })));
    }

    #[test]
    fn running_min_distance() {
        let mut t = DistanceTargets::new(PointSet::from_rows(2, &[vec![0.0, 0.0]]).unwrap());
        assert_eq!(t.distances(), &[f64::INFINITY]);
        t.update(&PointSet::from_rows(2, &[vec![1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(t.distances(), &[1.0]);
        t.update(&PointSet::from_rows(2, &[vec![2.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(t.distances(), &[1.0]);
        assert!(t.update(&PointSet::empty(2)).is_err());
    }

    #[test]
    fn distance_targets_approach_face_distance() {
        let dom = Domain::cube(2, -1.0, 1.0).unwrap();
        let boundary = BoundaryPatch::faces(BoundaryKind::Dirichlet, &dom, Face::all(2)).unwrap();
        let mut rng = stream_rng(6, 0);
        let mut t = DistanceTargets::new(sample_interior(&dom, 200, &mut rng).unwrap());
        let mut prev = t.distances().to_vec();
        for _ in 0..10 {
            t.update(&boundary.sample(1000, &mut rng)).unwrap();
            for (k, (now, before)) in t.distances().iter().zip(&prev).enumerate() {
                assert!(now <= before);
                let exact = boundary.face_distance(t.points().point(k)).unwrap();
                assert!(*now >= exact - 1e-12);
            }
            prev = t.distances().to_vec();
        }
        for (k, dk) in t.distances().iter().enumerate() {
            let exact = boundary.face_distance(t.points().point(k)).unwrap();
            assert!((dk - exact).abs() < 5e-2, "point {k}: {dk} vs {exact}");
        }
    }

    #[test]
    fn partition_validation() {
        let dom = Domain::cube(2, -1.0, 1.0).unwrap();
        let d = BoundaryPatch::faces(BoundaryKind::Dirichlet, &dom, vec![Face::lower(0), Face::upper(1)]).unwrap();
        let n = BoundaryPatch::faces(BoundaryKind::Neumann, &dom, vec![Face::upper(1)]).unwrap();
        assert!(validate_partition(&[d.clone(), n.clone()]).is_err());
        assert!(validate_partition(&[n]).is_err());
        assert!(validate_partition(&[d]).is_ok());
    }
}
