//! Model geometries and their exact primitives.
//!
//! Three manifolds are supported, each with closed-form exponential and
//! logarithm maps, distances, and parallel transport:
//!
//! * `Euclidean(k)`: flat space in Cartesian coordinates;
//! * `Sphere { radius }`: the round 2-sphere, represented by embedded
//!   coordinates of length 3 with `|x| = radius`; tangent and cotangent
//!   components live in the ambient frame, orthogonal to the base point,
//!   where the induced metric is the ambient dot product;
//! * `Hyperbolic2`: the upper half-plane `{(x, y) : y > 0}` with metric
//!   `y^{-2} (dx^2 + dy^2)`.
//!
//! A generic Runge–Kutta integration of the geodesic and transport ODEs
//! lives in [`ode`]; it is retained purely as a cross-check of the closed
//! forms and is exercised by the test suite.

pub mod ode;

mod hyperbolic;
mod sphere;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Cut-locus detection tolerance: angular separation from the antipode
/// below which the spherical logarithm refuses to pick a direction.
pub const CUT_LOCUS_TOL: f64 = 1e-9;

/// Which model geometry a [`ManifoldModel`] describes.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    /// Flat `R^k` in Cartesian coordinates.
    Euclidean(usize),
    /// Round 2-sphere of the given radius, embedded in `R^3`.
    Sphere { radius: f64 },
    /// Upper half-plane with the conformal metric `y^{-2} I`.
    Hyperbolic2,
}

/// A model geometry together with the curvature data the rest of the crate
/// needs: its dimension and a constant `L >= 0` with `Ric >= -L g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    kind: ManifoldKind,
    dim: usize,
    ricci_lower: f64,
}

/// A point, stored in the representation native to its manifold
/// (Cartesian, embedded, or half-plane chart coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub(crate) coords: DVector<f64>,
}

impl Point {
    /// Coordinate view in the manifold's representation.
    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Copies the coordinates into a plain vector (for serialization).
    pub fn to_vec(&self) -> Vec<f64> {
        self.coords.iter().copied().collect()
    }
}

/// A tangent vector attached to a base point. Components are expressed in
/// the same frame as the point representation.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub(crate) base: Point,
    pub(crate) components: DVector<f64>,
}

impl TangentVector {
    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn components(&self) -> &DVector<f64> {
        &self.components
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.components.iter().copied().collect()
    }

    /// The zero vector at `base`.
    pub fn zero(base: &Point) -> Self {
        TangentVector {
            base: base.clone(),
            components: DVector::zeros(base.coords.len()),
        }
    }

    /// Component-wise scaling (stays at the same base point).
    pub fn scaled(&self, factor: f64) -> Self {
        TangentVector {
            base: self.base.clone(),
            components: &self.components * factor,
        }
    }
}

/// A cotangent vector (momentum) attached to a base point, in the frame
/// dual to the point representation.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentVector {
    pub(crate) base: Point,
    pub(crate) components: DVector<f64>,
}

impl CotangentVector {
    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn components(&self) -> &DVector<f64> {
        &self.components
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.components.iter().copied().collect()
    }

    pub fn zero(base: &Point) -> Self {
        CotangentVector {
            base: base.clone(),
            components: DVector::zeros(base.coords.len()),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CotangentVector {
            base: self.base.clone(),
            components: &self.components * factor,
        }
    }
}

/// A sampled curve: strictly increasing times, one point per time, and
/// optionally a velocity at each sample.
#[derive(Debug, Clone)]
pub struct Curve {
    times: Vec<f64>,
    points: Vec<Point>,
    velocities: Option<Vec<TangentVector>>,
}

impl Curve {
    /// Validates sample times (strictly increasing, finite) and point
    /// compatibility, including that consecutive points stay within the
    /// injectivity radius so segment-wise geodesic constructions are licit.
    pub fn new(m: &ManifoldModel, times: Vec<f64>, points: Vec<Point>) -> Result<Self> {
        if times.len() != points.len() {
            return Err(Error::DegenerateCurve(format!(
                "{} times vs {} points",
                times.len(),
                points.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::DegenerateCurve("empty curve".into()));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::DegenerateCurve(format!(
                    "times not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        for p in &points {
            m.check_point(p)?;
        }
        for pair in points.windows(2) {
            let d = m.distance(&pair[0], &pair[1]);
            let inj = m.injectivity_radius(&pair[0]);
            if d >= inj - CUT_LOCUS_TOL {
                return Err(Error::DegenerateCurve(format!(
                    "consecutive samples at distance {d:.6} reach the injectivity radius {inj:.6}"
                )));
            }
        }
        Ok(Curve {
            times,
            points,
            velocities: None,
        })
    }

    /// Attaches explicit velocities (one per sample, based at the samples).
    pub fn with_velocities(mut self, velocities: Vec<TangentVector>) -> Result<Self> {
        if velocities.len() != self.points.len() {
            return Err(Error::DegenerateCurve(format!(
                "{} velocities vs {} points",
                velocities.len(),
                self.points.len()
            )));
        }
        for (v, p) in velocities.iter().zip(&self.points) {
            if v.base != *p {
                return Err(Error::InvalidVector(
                    "velocity base point does not match curve sample".into(),
                ));
            }
        }
        self.velocities = Some(velocities);
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn velocities(&self) -> Option<&[TangentVector]> {
        self.velocities.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Velocities stored on the curve, or central finite differences of the
    /// representation coordinates projected to the tangent space (one-sided
    /// at the ends). Needs at least two samples.
    pub fn velocities_or_fd(&self, m: &ManifoldModel) -> Result<Vec<TangentVector>> {
        if let Some(v) = &self.velocities {
            return Ok(v.clone());
        }
        if self.points.len() < 2 {
            return Err(Error::DegenerateCurve(
                "need at least 2 samples to differentiate".into(),
            ));
        }
        let n = self.points.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let dt = self.times[hi] - self.times[lo];
            let diff = (&self.points[hi].coords - &self.points[lo].coords) / dt;
            out.push(m.project_tangent(&self.points[i], diff));
        }
        Ok(out)
    }
}

/// Solutions of the geodesic boundary-value problem: initial velocities at
/// the start point, ordered by increasing speed. `degenerate` marks a
/// continuum of solutions collapsed to representatives (antipodal points).
#[derive(Debug, Clone)]
pub struct BvpSolutions {
    pub velocities: Vec<TangentVector>,
    pub degenerate: bool,
}

impl ManifoldModel {
    // ── constructors ───────────────────────────────────────────────────

    /// Flat `R^k`, `k >= 1`.
    pub fn euclidean(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("euclidean dimension must be >= 1".into()));
        }
        Ok(ManifoldModel {
            kind: ManifoldKind::Euclidean(k),
            dim: k,
            ricci_lower: 0.0,
        })
    }

    /// Round 2-sphere of the given radius.
    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Domain(format!("sphere radius must be positive, got {radius}")));
        }
        Ok(ManifoldModel {
            kind: ManifoldKind::Sphere { radius },
            dim: 2,
            ricci_lower: 0.0,
        })
    }

    /// Hyperbolic plane (upper half-plane chart). `Ric = -g`, so `L = 1`.
    pub fn hyperbolic2() -> Self {
        ManifoldModel {
            kind: ManifoldKind::Hyperbolic2,
            dim: 2,
            ricci_lower: 1.0,
        }
    }

    // ── descriptors ────────────────────────────────────────────────────

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    /// Intrinsic dimension `k`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of the coordinate representation (`k`, or `k + 1` embedded).
    pub fn repr_len(&self) -> usize {
        match self.kind {
            ManifoldKind::Euclidean(k) => k,
            ManifoldKind::Sphere { .. } => 3,
            ManifoldKind::Hyperbolic2 => 2,
        }
    }

    /// The constant `L >= 0` with `Ric >= -L g`.
    pub fn ricci_lower_bound(&self) -> f64 {
        self.ricci_lower
    }

    /// Injectivity radius at `x` (`pi * radius` on the sphere, infinite on
    /// the flat and hyperbolic models).
    pub fn injectivity_radius(&self, _x: &Point) -> f64 {
        match self.kind {
            ManifoldKind::Sphere { radius } => std::f64::consts::PI * radius,
            _ => f64::INFINITY,
        }
    }

    // ── construction and validation of geometric objects ───────────────

    /// Validating point constructor. Sphere coordinates may be off the
    /// sphere by at most `1e-9 * radius` and are renormalized exactly.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        let expected = self.repr_len();
        if coords.len() != expected {
            return Err(Error::InvalidPoint(format!(
                "expected {expected} coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        let mut coords = DVector::from_vec(coords);
        match self.kind {
            ManifoldKind::Euclidean(_) => {}
            ManifoldKind::Sphere { radius } => {
                let norm = coords.norm();
                if (norm - radius).abs() > 1e-9 * radius.max(1.0) {
                    return Err(Error::InvalidPoint(format!(
                        "norm {norm} is off the sphere of radius {radius}"
                    )));
                }
                coords *= radius / norm;
            }
            ManifoldKind::Hyperbolic2 => {
                if !(coords[1] > 0.0) {
                    return Err(Error::InvalidPoint(format!(
                        "half-plane height must be positive, got {}",
                        coords[1]
                    )));
                }
            }
        }
        Ok(Point { coords })
    }

    /// Validating tangent constructor. Sphere components may have an
    /// off-tangent-plane defect of at most `1e-8` relative and are projected.
    pub fn tangent(&self, base: &Point, components: Vec<f64>) -> Result<TangentVector> {
        self.check_point(base)?;
        if components.len() != self.repr_len() {
            return Err(Error::InvalidVector(format!(
                "expected {} components, got {}",
                self.repr_len(),
                components.len()
            )));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidVector("non-finite component".into()));
        }
        let comps = DVector::from_vec(components);
        if let ManifoldKind::Sphere { radius } = self.kind {
            let radial = comps.dot(&base.coords) / radius;
            if radial.abs() > 1e-8 * comps.norm().max(1e-300) {
                return Err(Error::InvalidVector(format!(
                    "components have radial part {radial:.3e}; not tangent to the sphere"
                )));
            }
        }
        Ok(self.project_tangent(base, comps))
    }

    /// Validating cotangent constructor (same frame conventions as tangents).
    pub fn cotangent(&self, base: &Point, components: Vec<f64>) -> Result<CotangentVector> {
        let v = self.tangent(base, components)?;
        Ok(CotangentVector {
            base: v.base,
            components: v.components,
        })
    }

    pub(crate) fn check_point(&self, p: &Point) -> Result<()> {
        if p.coords.len() != self.repr_len() {
            return Err(Error::InvalidPoint(format!(
                "expected {} coordinates, got {}",
                self.repr_len(),
                p.coords.len()
            )));
        }
        match self.kind {
            ManifoldKind::Sphere { radius } => {
                let norm = p.coords.norm();
                if (norm - radius).abs() > 1e-7 * radius.max(1.0) {
                    return Err(Error::InvalidPoint(format!(
                        "norm {norm} drifted off the sphere of radius {radius}"
                    )));
                }
            }
            ManifoldKind::Hyperbolic2 => {
                if !(p.coords[1] > 0.0) {
                    return Err(Error::InvalidPoint("half-plane height must be positive".into()));
                }
            }
            ManifoldKind::Euclidean(_) => {}
        }
        Ok(())
    }

    /// Projects raw representation components onto the tangent space at
    /// `base` (identity on chart models, removes the radial part on the
    /// sphere) without validation.
    pub(crate) fn project_tangent(&self, base: &Point, mut comps: DVector<f64>) -> TangentVector {
        if let ManifoldKind::Sphere { radius } = self.kind {
            let radial = comps.dot(&base.coords) / (radius * radius);
            comps.axpy(-radial, &base.coords, 1.0);
        }
        TangentVector {
            base: base.clone(),
            components: comps,
        }
    }

    // ── metric operations ──────────────────────────────────────────────

    /// Metric matrix `G(x)` in the representation frame. On the sphere the
    /// frame is the ambient basis restricted to the tangent plane, where the
    /// induced metric is the identity.
    pub fn metric_at(&self, x: &Point) -> DMatrix<f64> {
        match self.kind {
            ManifoldKind::Euclidean(k) => DMatrix::identity(k, k),
            ManifoldKind::Sphere { .. } => DMatrix::identity(3, 3),
            ManifoldKind::Hyperbolic2 => {
                let s = x.coords[1].powi(-2);
                DMatrix::from_diagonal_element(2, 2, s)
            }
        }
    }

    /// Riemannian inner product of two tangent vectors at the same base.
    pub fn inner(&self, v: &TangentVector, w: &TangentVector) -> f64 {
        debug_assert_eq!(v.base, w.base, "inner product of vectors at different points");
        match self.kind {
            ManifoldKind::Hyperbolic2 => {
                v.components.dot(&w.components) / v.base.coords[1].powi(2)
            }
            _ => v.components.dot(&w.components),
        }
    }

    /// Riemannian norm `|v|_g`.
    pub fn norm(&self, v: &TangentVector) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Index lowering: the cotangent vector `v^flat` with `<v^flat, w> = g(v, w)`.
    pub fn lower(&self, v: &TangentVector) -> CotangentVector {
        let components = match self.kind {
            ManifoldKind::Hyperbolic2 => &v.components / v.base.coords[1].powi(2),
            _ => v.components.clone(),
        };
        CotangentVector {
            base: v.base.clone(),
            components,
        }
    }

    /// Index raising: the tangent vector `p^sharp` with `g(p^sharp, w) = <p, w>`.
    pub fn raise(&self, p: &CotangentVector) -> TangentVector {
        let components = match self.kind {
            ManifoldKind::Hyperbolic2 => &p.components * p.base.coords[1].powi(2),
            _ => p.components.clone(),
        };
        TangentVector {
            base: p.base.clone(),
            components,
        }
    }

    /// Canonical pairing `<p, v>` (no metric involved).
    pub fn pair(&self, p: &CotangentVector, v: &TangentVector) -> f64 {
        debug_assert_eq!(p.base, v.base, "pairing objects at different points");
        p.components.dot(&v.components)
    }

    /// Dual norm `|p|_g = |p^sharp|_g`.
    pub fn conorm(&self, p: &CotangentVector) -> f64 {
        self.norm(&self.raise(p))
    }

    /// A g-orthonormal tangent basis at `x`, deterministic in `x`.
    pub fn orthonormal_basis(&self, x: &Point) -> Vec<TangentVector> {
        match self.kind {
            ManifoldKind::Euclidean(k) => (0..k)
                .map(|i| {
                    let mut c = DVector::zeros(k);
                    c[i] = 1.0;
                    TangentVector {
                        base: x.clone(),
                        components: c,
                    }
                })
                .collect(),
            ManifoldKind::Hyperbolic2 => {
                let y = x.coords[1];
                [(y, 0.0), (0.0, y)]
                    .iter()
                    .map(|&(a, b)| TangentVector {
                        base: x.clone(),
                        components: DVector::from_vec(vec![a, b]),
                    })
                    .collect()
            }
            ManifoldKind::Sphere { radius } => sphere::orthonormal_basis(radius, x),
        }
    }

    // ── geodesic calculus ──────────────────────────────────────────────

    /// Exponential map: endpoint of the geodesic from `v.base` with initial
    /// velocity `v`, evaluated at unit parameter time.
    pub fn exp_map(&self, x: &Point, v: &TangentVector) -> Result<Point> {
        self.check_point(x)?;
        if v.base != *x {
            return Err(Error::InvalidVector("exp_map: vector not based at x".into()));
        }
        if v.components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidVector("exp_map: non-finite components".into()));
        }
        let coords = match self.kind {
            ManifoldKind::Euclidean(_) => &x.coords + &v.components,
            ManifoldKind::Sphere { radius } => sphere::exp(radius, &x.coords, &v.components),
            ManifoldKind::Hyperbolic2 => hyperbolic::exp(&x.coords, &v.components),
        };
        Ok(Point { coords })
    }

    /// Point at parameter `t` along the geodesic with initial velocity `v`.
    pub fn geodesic_point(&self, x: &Point, v: &TangentVector, t: f64) -> Result<Point> {
        self.exp_map(x, &v.scaled(t))
    }

    /// Logarithm map: the minimal initial velocity with `exp_map(x, v) = y`.
    /// Errors with [`Error::CutLocus`] for antipodal sphere points.
    pub fn log_map(&self, x: &Point, y: &Point) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_point(y)?;
        let components = match self.kind {
            ManifoldKind::Euclidean(_) => &y.coords - &x.coords,
            ManifoldKind::Sphere { radius } => sphere::log(radius, &x.coords, &y.coords)?,
            ManifoldKind::Hyperbolic2 => hyperbolic::log(&x.coords, &y.coords),
        };
        Ok(TangentVector {
            base: x.clone(),
            components,
        })
    }

    /// Geodesic distance.
    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean(_) => (&y.coords - &x.coords).norm(),
            ManifoldKind::Sphere { radius } => sphere::distance(radius, &x.coords, &y.coords),
            ManifoldKind::Hyperbolic2 => hyperbolic::distance(&x.coords, &y.coords),
        }
    }

    /// Parallel transport of `v` along the minimal geodesic from `x` to `y`.
    pub fn transport_along(&self, x: &Point, y: &Point, v: &TangentVector) -> Result<TangentVector> {
        if v.base != *x {
            return Err(Error::InvalidVector("transport: vector not based at x".into()));
        }
        let components = match self.kind {
            ManifoldKind::Euclidean(_) => v.components.clone(),
            ManifoldKind::Sphere { radius } => {
                sphere::transport(radius, &x.coords, &y.coords, &v.components)?
            }
            ManifoldKind::Hyperbolic2 => hyperbolic::transport(&x.coords, &y.coords, &v.components),
        };
        Ok(TangentVector {
            base: y.clone(),
            components,
        })
    }

    /// Parallel transport of `v` along a sampled curve, interpreted as the
    /// piecewise-geodesic interpolant of its samples. Exact on each segment.
    pub fn parallel_transport(&self, curve: &Curve, v: &TangentVector) -> Result<TangentVector> {
        let first = curve
            .points
            .first()
            .ok_or_else(|| Error::DegenerateCurve("empty curve".into()))?;
        if v.base != *first {
            return Err(Error::InvalidVector(
                "transport: vector not based at the curve start".into(),
            ));
        }
        let mut current = v.clone();
        for pair in curve.points.windows(2) {
            current = self.transport_along(&pair[0], &pair[1], &current)?;
        }
        Ok(current)
    }

    /// Parallel transport of a cotangent vector by metric duality:
    /// raise, transport, lower.
    pub fn parallel_transport_cotangent(
        &self,
        curve: &Curve,
        p: &CotangentVector,
    ) -> Result<CotangentVector> {
        let v = self.raise(p);
        let moved = self.parallel_transport(curve, &v)?;
        Ok(self.lower(&moved))
    }

    /// Samples the geodesic `t -> exp_map(x, t v)` at the given parameter
    /// times, attaching exact velocities (the transported initial velocity).
    pub fn sample_geodesic(&self, x: &Point, v: &TangentVector, times: &[f64]) -> Result<Curve> {
        let mut points = Vec::with_capacity(times.len());
        let mut velocities = Vec::with_capacity(times.len());
        for &t in times {
            let p = self.geodesic_point(x, v, t)?;
            let vel = self.transport_along(x, &p, v)?;
            points.push(p);
            velocities.push(vel);
        }
        Curve::new(self, times.to_vec(), points)?.with_velocities(velocities)
    }

    // ── derived quantities ─────────────────────────────────────────────

    /// Differentials of the squared distance in each argument:
    /// `d_x d^2(x, y) = -2 (gamma'(0))^flat` and `d_y d^2(x, y) = +2 (gamma'(1))^flat`
    /// for the minimal geodesic `gamma` from `x` to `y`. Transporting the
    /// first to `y` and negating gives the second.
    pub fn grad_sq_distance(&self, x: &Point, y: &Point) -> Result<(CotangentVector, CotangentVector)> {
        let vx = self.log_map(x, y)?; // gamma'(0)
        let vy = self.log_map(y, x)?; // -gamma'(1)
        Ok((
            self.lower(&vx.scaled(-2.0)),
            self.lower(&vy.scaled(-2.0)),
        ))
    }

    /// Solves the geodesic boundary-value problem, returning up to
    /// `max_solutions` initial velocities sorted by speed. On the sphere
    /// this enumerates both great-circle arcs and full windings; antipodal
    /// endpoints yield evenly spaced representatives flagged `degenerate`.
    pub fn geodesic_bvp(&self, x: &Point, y: &Point, max_solutions: usize) -> Result<BvpSolutions> {
        if max_solutions == 0 {
            return Err(Error::Domain("max_solutions must be >= 1".into()));
        }
        self.check_point(x)?;
        self.check_point(y)?;
        match self.kind {
            ManifoldKind::Euclidean(_) | ManifoldKind::Hyperbolic2 => {
                let v = self.log_map(x, y)?;
                Ok(BvpSolutions {
                    velocities: vec![v],
                    degenerate: false,
                })
            }
            ManifoldKind::Sphere { radius } => sphere::bvp(self, radius, x, y, max_solutions),
        }
    }

    /// Containment function `Upsilon(x) = log(1 + rho(x))` built on a smooth
    /// proper surrogate `rho` of the squared distance to `x0`:
    /// `|x - x0|^2` (flat), `2 (cosh d - 1)` (hyperbolic),
    /// `2 r (r - <x, x0>/r)` (sphere). Returns the value and differential.
    /// `Upsilon(x0) = 0`, sublevel sets are compact, and `|d Upsilon|_g` is
    /// bounded, so Hamiltonians with radial symbol stay bounded along it.
    pub fn containment(&self, x0: &Point, x: &Point) -> Result<(f64, CotangentVector)> {
        self.check_point(x0)?;
        self.check_point(x)?;
        match self.kind {
            ManifoldKind::Euclidean(_) => {
                let diff = &x.coords - &x0.coords;
                let rho = diff.norm_squared();
                let scale = 2.0 / (1.0 + rho);
                Ok((
                    (1.0 + rho).ln(),
                    CotangentVector {
                        base: x.clone(),
                        components: diff * scale,
                    },
                ))
            }
            ManifoldKind::Sphere { radius } => {
                let rho = 2.0 * (radius * radius - x.coords.dot(&x0.coords));
                let mut comps = -2.0 * &x0.coords;
                let radial = comps.dot(&x.coords) / (radius * radius);
                comps.axpy(-radial, &x.coords, 1.0);
                comps /= 1.0 + rho;
                Ok((
                    (1.0 + rho).ln(),
                    CotangentVector {
                        base: x.clone(),
                        components: comps,
                    },
                ))
            }
            ManifoldKind::Hyperbolic2 => {
                let d = self.distance(x, x0);
                let rho = 2.0 * (d.cosh() - 1.0);
                let comps = if d < 1e-12 {
                    DVector::zeros(2)
                } else {
                    // d rho = 2 sinh(d) * (unit covector away from x0)
                    let away = self.log_map(x, x0)?.scaled(-1.0);
                    let scale = 2.0 * d.sinh() / (d * (1.0 + rho));
                    self.lower(&away).components * scale
                };
                Ok((
                    (1.0 + rho).ln(),
                    CotangentVector {
                        base: x.clone(),
                        components: comps,
                    },
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests;
