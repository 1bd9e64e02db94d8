//! Hamilton-Jacobi machinery for the two scaling regimes: Hamiltonians and
//! Lagrangians, path actions, the endpoint rate function, a variational
//! semigroup optimizer, and the characteristic flow of a scalar field.
//!
//! The walk regime takes its Hamiltonian from the cumulant generating
//! function of the step measure; the diffusion regime uses the metric
//! half-conorm squared. Both are radial in `|p|_g`, which is what makes the
//! endpoint rate reduce to a minimum over connecting geodesics.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CotangentVector, Curve, ManifoldModel, Point, TangentVector};
use crate::measures::{MeasureFamily, CONJUGATE_SENTINEL};
use crate::rng::stream;

/// Which scaling regime supplies `H(x, p)`.
#[derive(Debug, Clone)]
pub enum RateModelKind {
    /// Empirical-mean scaling of a geodesic random walk; `H` is the log
    /// moment generating function of the step measure.
    Walk(MeasureFamily),
    /// Small-noise diffusion scaling; `H(x, p) = ½|p|²_g`.
    Brownian,
}

/// A Hamiltonian `H(x, p)` on the cotangent bundle together with its
/// Legendre-dual Lagrangian `L(x, v)`.
#[derive(Debug, Clone)]
pub struct RateModel {
    kind: RateModelKind,
    manifold: ManifoldModel,
}

impl RateModel {
    pub fn walk(family: MeasureFamily) -> Self {
        let manifold = family.manifold().clone();
        RateModel { kind: RateModelKind::Walk(family), manifold }
    }

    pub fn brownian(m: &ManifoldModel) -> Self {
        RateModel { kind: RateModelKind::Brownian, manifold: m.clone() }
    }

    pub fn kind(&self) -> &RateModelKind {
        &self.kind
    }

    pub fn manifold(&self) -> &ManifoldModel {
        &self.manifold
    }

    /// `H(x, p)`.
    pub fn hamiltonian(&self, x: &Point, p: &CotangentVector) -> Result<f64> {
        match &self.kind {
            RateModelKind::Walk(family) => family.log_mgf(x, p),
            RateModelKind::Brownian => {
                self.manifold.check_point(x)?;
                let s = self.manifold.conorm(p);
                Ok(0.5 * s * s)
            }
        }
    }

    /// `∂H/∂p` as a tangent vector: the characteristic velocity paired with
    /// `p`. Radial symbols give `f'(|p|) · p♯ / |p|`.
    pub fn hamiltonian_gradient(&self, x: &Point, p: &CotangentVector) -> Result<TangentVector> {
        self.manifold.check_point(x)?;
        let sharp = self.manifold.raise(p);
        match &self.kind {
            RateModelKind::Brownian => Ok(sharp),
            RateModelKind::Walk(family) => {
                let s = self.manifold.conorm(p);
                if s == 0.0 {
                    // Centered measures have f'(0) = 0; the limit is the zero
                    // vector, which `sharp` already is.
                    return Ok(sharp);
                }
                Ok(sharp.scaled(family.radial_log_mgf_prime(s) / s))
            }
        }
    }

    /// `L(x, v) = sup_p {⟨p, v⟩ − H(x, p)}`. Velocities outside the
    /// reachable range come back as the large finite sentinel rather than an
    /// error, so optimizers can treat them as forbidden.
    pub fn lagrangian(&self, x: &Point, v: &TangentVector) -> Result<f64> {
        match &self.kind {
            RateModelKind::Walk(family) => Ok(family.legendre(x, v)?.value),
            RateModelKind::Brownian => {
                self.manifold.check_point(x)?;
                let s = self.manifold.norm(v);
                Ok(0.5 * s * s)
            }
        }
    }
}

/// Integrated cost of a curve, segment by segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionReport {
    /// Total action: the sum of `per_segment`.
    pub value: f64,
    /// Trapezoid contribution of each parameter segment.
    pub per_segment: Vec<f64>,
    /// Indices of segments touching a velocity the model cannot produce.
    pub flags: Vec<usize>,
}

/// Composite-trapezoid integral of `L(γ(t), γ̇(t))` over the curve's
/// parameter range. Velocities are taken from the curve when present and
/// differenced otherwise.
pub fn path_action(rm: &RateModel, c: &Curve) -> Result<ActionReport> {
    if c.len() < 2 {
        return Err(Error::DegenerateCurve("action needs at least two samples".into()));
    }
    let velocities = c.velocities_or_fd(rm.manifold())?;
    let costs: Vec<f64> = c
        .points()
        .iter()
        .zip(&velocities)
        .map(|(x, v)| rm.lagrangian(x, v))
        .collect::<Result<_>>()?;
    let times = c.times();
    let mut per_segment = Vec::with_capacity(c.len() - 1);
    let mut flags = Vec::new();
    for i in 0..c.len() - 1 {
        let (a, b) = (costs[i], costs[i + 1]);
        if !(a.is_finite() && b.is_finite()) || a.max(b) >= 0.5 * CONJUGATE_SENTINEL {
            flags.push(i);
        }
        per_segment.push(0.5 * (a + b) * (times[i + 1] - times[i]));
    }
    Ok(ActionReport { value: per_segment.iter().sum(), per_segment, flags })
}

/// Endpoint rate evaluation: the cheapest way to reach `x` from `x0` in unit
/// time along a geodesic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CramerReport {
    /// Minimal initial-velocity cost over the enumerated geodesics.
    pub rate: f64,
    /// Speed of the geodesic attaining the minimum.
    pub geodesic_speed: f64,
    /// Set when the endpoint pair admits a continuum of minimizing
    /// geodesics collapsed to representatives.
    pub degenerate: bool,
}

/// Minimizes `L(x0, γ̇(0))` over geodesics `γ` with `γ(0) = x0`, `γ(1) = x`.
/// The cost is constant along each geodesic for these radial models, so the
/// initial velocity carries the whole integral. Enumeration is truncated at
/// `max_geodesics` solutions; cost grows with speed, so the truncation only
/// ever discards more expensive connections.
pub fn cramer_rate(
    rm: &RateModel,
    x0: &Point,
    x: &Point,
    max_geodesics: usize,
) -> Result<CramerReport> {
    let m = rm.manifold();
    let sols = m.geodesic_bvp(x0, x, max_geodesics)?;
    let mut best: Option<(f64, f64)> = None;
    for v in &sols.velocities {
        let value = rm.lagrangian(x0, v)?;
        let speed = m.norm(v);
        let better = match best {
            None => true,
            Some((bv, bs)) => value < bv || (value == bv && speed < bs),
        };
        if better {
            best = Some((value, speed));
        }
    }
    let (rate, geodesic_speed) =
        best.ok_or_else(|| Error::Domain("no connecting geodesic found".into()))?;
    Ok(CramerReport { rate, geodesic_speed, degenerate: sols.degenerate })
}

/// A scalar function on the manifold, with a differential that defaults to
/// central differences along geodesics in an orthonormal frame.
pub trait ScalarField: Sync {
    fn value(&self, m: &ManifoldModel, x: &Point) -> f64;

    fn differential(&self, m: &ManifoldModel, x: &Point) -> Result<CotangentVector> {
        let h = 1e-5;
        let frame = m.orthonormal_basis(x);
        let mut components = DVector::zeros(x.coords().len());
        for e in &frame {
            let plus = self.value(m, &m.exp_map(x, &e.scaled(h))?);
            let minus = self.value(m, &m.exp_map(x, &e.scaled(-h))?);
            let slope = (plus - minus) / (2.0 * h);
            // df = Σ_j (∂f/∂e_j) e_j♭ for an orthonormal frame.
            components += m.lower(e).components() * slope;
        }
        Ok(CotangentVector { base: x.clone(), components })
    }
}

/// Adapter turning a closure into a [`ScalarField`] with the default
/// finite-difference differential.
pub struct FnField<F>(pub F);

impl<F> ScalarField for FnField<F>
where
    F: Fn(&ManifoldModel, &Point) -> f64 + Sync,
{
    fn value(&self, m: &ManifoldModel, x: &Point) -> f64 {
        (self.0)(m, x)
    }
}

/// Result of the variational terminal-value optimization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SemigroupValue {
    /// Best objective found: `f(γ(t)) − ∫₀ᵗ L(γ, γ̇) ds` over discretized
    /// paths started at `x`.
    pub value: f64,
    /// Whether the winning ascent stalled at its own tolerance rather than
    /// exhausting the iteration budget. Global optimality is not guaranteed
    /// either way.
    pub converged: bool,
}

const SEMIGROUP_STARTS: u64 = 8;
const SEMIGROUP_SEED: u64 = 0x7361_7465;
const ASCENT_BUDGET: usize = 4000;

/// Maximizes `f(γ(t)) − ∫₀ᵗ L(γ(s), γ̇(s)) ds` over paths from `x`,
/// discretized as `segments` geodesic legs between control points. Gradient
/// ascent with backtracking line search, multi-started from spread-out
/// initial paths; the best value wins, ties broken by start index.
pub fn variational_semigroup<Fld>(
    rm: &RateModel,
    f: &Fld,
    t: f64,
    x: &Point,
    segments: usize,
) -> Result<SemigroupValue>
where
    Fld: ScalarField + ?Sized,
{
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time {t} must be finite and > 0")));
    }
    if segments == 0 {
        return Err(Error::Domain("need at least one path segment".into()));
    }
    rm.manifold().check_point(x)?;
    let outcomes: Vec<(f64, bool)> = (0..SEMIGROUP_STARTS)
        .into_par_iter()
        .map(|start| ascend_from_start(rm, f, t, x, segments, start))
        .collect();
    let mut best = outcomes[0];
    for o in &outcomes[1..] {
        if o.0 > best.0 {
            best = *o;
        }
    }
    Ok(SemigroupValue { value: best.0, converged: best.1 })
}

/// One gradient-ascent run. Objective failures (cut-locus legs, forbidden
/// velocities) score a large negative penalty instead of erroring, so the
/// search simply steers away from them.
fn ascend_from_start<Fld>(
    rm: &RateModel,
    f: &Fld,
    t: f64,
    x: &Point,
    segments: usize,
    start: u64,
) -> (f64, bool)
where
    Fld: ScalarField + ?Sized,
{
    const PENALTY: f64 = -1e30;
    let m = rm.manifold();
    let dt = t / segments as f64;

    let leg_cost = |points: &[Point], i: usize| -> f64 {
        let Ok(chord) = m.log_map(&points[i - 1], &points[i]) else {
            return PENALTY;
        };
        match rm.lagrangian(&points[i - 1], &chord.scaled(1.0 / dt)) {
            Ok(l) if l.is_finite() && l < 0.5 * CONJUGATE_SENTINEL => -dt * l,
            _ => PENALTY,
        }
    };
    let total = |points: &[Point]| -> f64 {
        let mut acc = f.value(m, &points[segments]);
        for i in 1..=segments {
            acc += leg_cost(points, i);
        }
        acc
    };

    // Initial control points: the constant path for start 0, geodesic rays
    // toward randomized targets (of growing spread) for the rest.
    let mut points = vec![x.clone(); segments + 1];
    if start > 0 {
        let mut rng = stream(SEMIGROUP_SEED, &[start]);
        let frame = m.orthonormal_basis(x);
        let spread = 0.3 * start as f64 * t.sqrt();
        let mut direction = DVector::zeros(x.coords().len());
        for e in &frame {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            direction += e.components() * (spread * z);
        }
        let ray = TangentVector { base: x.clone(), components: direction };
        for i in 1..=segments {
            let frac = i as f64 / segments as f64;
            if let Ok(p) = m.exp_map(x, &ray.scaled(frac)) {
                points[i] = p;
            }
        }
    }

    let h = 1e-6;
    let mut objective = total(&points);
    let mut step = 1.0;
    let mut converged = false;
    for _ in 0..ASCENT_BUDGET {
        // Per-point gradient in frame coordinates; only the two adjacent
        // legs (plus the terminal payoff for the last point) move.
        let mut gradients = Vec::with_capacity(segments);
        let mut grad_sup: f64 = 0.0;
        for i in 1..=segments {
            let frame = m.orthonormal_basis(&points[i]);
            let local = |pts: &[Point]| -> f64 {
                let mut a = leg_cost(pts, i);
                if i < segments {
                    a += leg_cost(pts, i + 1);
                } else {
                    a += f.value(m, &pts[segments]);
                }
                a
            };
            let mut g = DVector::zeros(frame.len());
            for (j, e) in frame.iter().enumerate() {
                let mut trial = points.clone();
                let Ok(plus) = m.exp_map(&points[i], &e.scaled(h)) else {
                    continue;
                };
                trial[i] = plus;
                let up = local(&trial);
                let Ok(minus) = m.exp_map(&points[i], &e.scaled(-h)) else {
                    continue;
                };
                trial[i] = minus;
                let down = local(&trial);
                g[j] = (up - down) / (2.0 * h);
            }
            grad_sup = grad_sup.max(g.amax());
            gradients.push(g);
        }
        if grad_sup < 1e-8 * (1.0 + objective.abs()) {
            converged = true;
            break;
        }

        let mut improved = false;
        let mut trial_step = step;
        for _ in 0..40 {
            let mut candidate = points.clone();
            for i in 1..=segments {
                let frame = m.orthonormal_basis(&points[i]);
                let mut components = DVector::zeros(x.coords().len());
                for (j, e) in frame.iter().enumerate() {
                    components += e.components() * (trial_step * gradients[i - 1][j]);
                }
                let v = TangentVector { base: points[i].clone(), components };
                if let Ok(p) = m.exp_map(&points[i], &v) {
                    candidate[i] = p;
                }
            }
            let trial_objective = total(&candidate);
            if trial_objective > objective {
                let gain = trial_objective - objective;
                points = candidate;
                objective = trial_objective;
                step = (trial_step * 2.0).min(16.0);
                improved = true;
                if gain < 1e-12 * (1.0 + objective.abs()) {
                    converged = true;
                }
                break;
            }
            trial_step *= 0.5;
        }
        if !improved {
            // Stationary to line-search resolution.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    (objective, converged)
}

/// Integrates `ẋ = ∂H/∂p (x, df(x))` by a geodesic RK4 step: stage
/// velocities are evaluated downstream and parallel-transported back to the
/// step's base point before combining. Returns the trajectory with the stage
/// velocities attached.
pub fn characteristic_flow<Fld>(
    rm: &RateModel,
    f: &Fld,
    x0: &Point,
    horizon: f64,
    dt: f64,
) -> Result<Curve>
where
    Fld: ScalarField + ?Sized,
{
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon {horizon} must be finite and > 0")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("step size {dt} must be finite and > 0")));
    }
    let m = rm.manifold();
    let velocity = |x: &Point| -> Result<TangentVector> {
        let p = f.differential(m, x)?;
        let v = rm.hamiltonian_gradient(x, &p)?;
        if v.components().iter().any(|c| !c.is_finite()) {
            return Err(Error::StepFailure(
                "characteristic velocity diverged; the field's differential left the \
                 Hamiltonian's domain"
                    .into(),
            ));
        }
        Ok(v)
    };
    let steps = (horizon / dt).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    let mut velocities = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    for i in 0..=steps {
        let k1 = velocity(&x)?;
        times.push(i as f64 * dt);
        points.push(x.clone());
        velocities.push(k1.clone());
        if i == steps {
            break;
        }
        let pull = |y: &Point| -> Result<TangentVector> {
            m.transport_along(y, &x, &velocity(y)?)
        };
        let k2 = pull(&m.exp_map(&x, &k1.scaled(0.5 * dt))?)?;
        let k3 = pull(&m.exp_map(&x, &k2.scaled(0.5 * dt))?)?;
        let k4 = pull(&m.exp_map(&x, &k3.scaled(dt))?)?;
        let combined = (k1.components()
            + k2.components() * 2.0
            + k3.components() * 2.0
            + k4.components())
            * (dt / 6.0);
        x = m.exp_map(&x, &TangentVector { base: x.clone(), components: combined })?;
    }
    Curve::new(m, times, points)?.with_velocities(velocities)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::measures::RadialLaw;

    fn sphere_pole() -> (ManifoldModel, Point) {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let pole = m.point(vec![0.0, 0.0, 1.0]).unwrap();
        (m, pole)
    }

    #[test]
    fn brownian_hamiltonian_is_half_conorm_squared() {
        let m = ManifoldModel::hyperbolic2();
        let rm = RateModel::brownian(&m);
        let x = m.point(vec![0.0, 2.0]).unwrap();
        // Covector (1, 0) at height 2 has conorm |p|_g = 2.
        let p = m.cotangent(&x, vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(m.conorm(&p), 2.0, epsilon = 1e-14);
        assert_relative_eq!(rm.hamiltonian(&x, &p).unwrap(), 2.0, epsilon = 1e-13);
        let zero = m.cotangent(&x, vec![0.0, 0.0]).unwrap();
        assert_eq!(rm.hamiltonian(&x, &zero).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_walk_matches_the_diffusion_hamiltonian() {
        let (m, pole) = sphere_pole();
        let walk = RateModel::walk(MeasureFamily::gaussian(&m));
        let diffusion = RateModel::brownian(&m);
        let x = m.point(vec![0.6, 0.0, 0.8]).unwrap();
        for (px, py, pz) in [(0.0, 0.0, 0.0), (0.4, -0.5, -0.3), (1.2, 0.1, -0.9)] {
            for at in [&pole, &x] {
                let raw = DVector::from_vec(vec![px, py, pz]);
                let radial = raw.dot(at.coords());
                let p = m.cotangent(at, (raw - at.coords() * radial).iter().copied().collect())
                    .unwrap();
                let a = walk.hamiltonian(at, &p).unwrap();
                let b = diffusion.hamiltonian(at, &p).unwrap();
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn lagrangians_vanish_at_rest_and_stay_nonnegative() {
        let m = ManifoldModel::hyperbolic2();
        let x = m.point(vec![-0.4, 1.5]).unwrap();
        let models = [
            RateModel::brownian(&m),
            RateModel::walk(MeasureFamily::gaussian(&m)),
            RateModel::walk(MeasureFamily::uniform_ball(&m, 1.0).unwrap()),
            RateModel::walk(
                MeasureFamily::radial(&m, RadialLaw::discrete(vec![1.0], vec![1.0]).unwrap()),
            ),
        ];
        for rm in &models {
            let rest = m.tangent(&x, vec![0.0, 0.0]).unwrap();
            assert_eq!(rm.lagrangian(&x, &rest).unwrap(), 0.0);
            for scale in [0.1, 0.45, 0.8] {
                let v = m.tangent(&x, vec![scale * 1.5, -scale * 0.9]).unwrap();
                assert!(rm.lagrangian(&x, &v).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn fenchel_equality_holds_at_gradient_pairs() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let x = m.point(vec![0.0, 0.8, 0.6]).unwrap();
        let models = [
            RateModel::brownian(&m),
            RateModel::walk(MeasureFamily::gaussian(&m)),
            RateModel::walk(MeasureFamily::uniform_ball(&m, 1.3).unwrap()),
        ];
        for rm in &models {
            for coeffs in [[0.3, 0.0, -0.4], [-0.7, 0.5, 0.0]] {
                let raw = DVector::from_vec(coeffs.to_vec());
                let radial = raw.dot(x.coords());
                let p = m
                    .cotangent(&x, (raw - x.coords() * radial).iter().copied().collect())
                    .unwrap();
                let v = rm.hamiltonian_gradient(&x, &p).unwrap();
                let lhs = m.pair(&p, &v) - rm.hamiltonian(&x, &p).unwrap();
                let rhs = rm.lagrangian(&x, &v).unwrap();
                assert!((lhs - rhs).abs() < 1e-7, "duality gap {}", lhs - rhs);
            }
        }
    }

    #[test]
    fn hamiltonian_respects_transport_symmetry() {
        // For the squared-distance covector pair the two evaluations see the
        // same conorm, so every radial Hamiltonian must agree on them.
        let m = ManifoldModel::hyperbolic2();
        let models = [
            RateModel::brownian(&m),
            RateModel::walk(MeasureFamily::uniform_ball(&m, 4.0).unwrap()),
        ];
        let alpha = 0.7;
        let mut rng = stream(42, &[0]);
        for _ in 0..10 {
            let coords = |rng: &mut _| {
                let u: f64 = rand_distr::Distribution::sample(
                    &rand_distr::Uniform::new(-1.0f64, 1.0),
                    rng,
                );
                let h: f64 = rand_distr::Distribution::sample(
                    &rand_distr::Uniform::new(0.5f64, 2.5),
                    rng,
                );
                vec![u, h]
            };
            let x = m.point(coords(&mut rng)).unwrap();
            let y = m.point(coords(&mut rng)).unwrap();
            let (dx, dy) = m.grad_sq_distance(&x, &y).unwrap();
            let px = CotangentVector {
                base: x.clone(),
                components: dx.components() * (alpha / 2.0),
            };
            let py = CotangentVector {
                base: y.clone(),
                components: dy.components() * (-alpha / 2.0),
            };
            for rm in &models {
                let a = rm.hamiltonian(&x, &px).unwrap();
                let b = rm.hamiltonian(&y, &py).unwrap();
                assert!((a - b).abs() < 1e-7, "symmetry gap {}", a - b);
            }
        }
    }

    #[test]
    fn geodesic_action_is_the_energy() {
        let (m, pole) = sphere_pole();
        let rm = RateModel::brownian(&m);
        let w = 1.2;
        let v = m.tangent(&pole, vec![w, 0.0, 0.0]).unwrap();
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let exact = m.sample_geodesic(&pole, &v, &times).unwrap();
        let report = path_action(&rm, &exact).unwrap();
        assert!(report.flags.is_empty());
        assert_relative_eq!(report.value, 0.5 * w * w, epsilon = 1e-12);
        assert_relative_eq!(
            report.per_segment.iter().sum::<f64>(),
            report.value,
            epsilon = 1e-15
        );

        // Dropping the exact velocities forces differenced ones; the cost is
        // a discretization error within the advertised tolerance.
        let fd_curve = Curve::new(&m, times, exact.points().to_vec()).unwrap();
        let fd_report = path_action(&rm, &fd_curve).unwrap();
        assert!((fd_report.value - 0.5 * w * w).abs() < 1e-4, "{}", fd_report.value);
    }

    #[test]
    fn constant_curve_has_zero_action() {
        let m = ManifoldModel::euclidean(2).unwrap();
        let rm = RateModel::walk(MeasureFamily::gaussian(&m));
        let x = m.point(vec![0.3, -0.3]).unwrap();
        let times = vec![0.0, 0.5, 1.0];
        let curve = Curve::new(&m, times, vec![x.clone(), x.clone(), x]).unwrap();
        let report = path_action(&rm, &curve).unwrap();
        assert_eq!(report.value, 0.0);
        assert!(report.flags.is_empty());
    }

    #[test]
    fn uneven_speed_costs_more_than_the_geodesic() {
        let (m, pole) = sphere_pole();
        let rm = RateModel::brownian(&m);
        let w = 1.2;
        let v = m.tangent(&pole, vec![w, 0.0, 0.0]).unwrap();
        let uniform: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        // Same endpoints, quadratically warped schedule: slow start, fast
        // finish. Energy strictly exceeds the constant-speed value.
        let warped: Vec<f64> = uniform.iter().map(|s| s * s).collect();
        let points = m.sample_geodesic(&pole, &v, &warped).unwrap().points().to_vec();
        let curve = Curve::new(&m, uniform, points).unwrap();
        let report = path_action(&rm, &curve).unwrap();
        assert!(
            report.value > 0.5 * w * w + 0.1,
            "warped action {} not above energy",
            report.value
        );
    }

    #[test]
    fn forbidden_velocities_are_flagged() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let rm = RateModel::walk(MeasureFamily::uniform_ball(&m, 1.0).unwrap());
        // Speed-2 straight line: outside the reachable range everywhere.
        let times: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
        let points: Vec<Point> = times.iter().map(|t| m.point(vec![2.0 * t]).unwrap()).collect();
        let curve = Curve::new(&m, times, points).unwrap();
        let report = path_action(&rm, &curve).unwrap();
        assert_eq!(report.flags, vec![0, 1, 2, 3]);
        assert!(report.value >= 0.25 * CONJUGATE_SENTINEL);
    }

    #[test]
    fn gaussian_endpoint_rate_is_half_squared_distance() {
        let (m, pole) = sphere_pole();
        let rm = RateModel::walk(MeasureFamily::gaussian(&m));
        let target = m.point(vec![(1.0f64).sin(), 0.0, (1.0f64).cos()]).unwrap();
        let report = cramer_rate(&rm, &pole, &target, 6).unwrap();
        assert_relative_eq!(report.rate, 0.5, epsilon = 1e-10);
        assert_relative_eq!(report.geodesic_speed, 1.0, epsilon = 1e-10);
        assert!(!report.degenerate);

        let same = cramer_rate(&rm, &pole, &pole, 6).unwrap();
        assert_eq!(same.rate, 0.0);
        assert_eq!(same.geodesic_speed, 0.0);

        let m2 = ManifoldModel::hyperbolic2();
        let rm2 = RateModel::walk(MeasureFamily::gaussian(&m2));
        let a = m2.point(vec![0.0, 1.0]).unwrap();
        let b = m2.point(vec![0.7, 1.4]).unwrap();
        let d = m2.distance(&a, &b);
        let r2 = cramer_rate(&rm2, &a, &b, 4).unwrap();
        assert_relative_eq!(r2.rate, 0.5 * d * d, epsilon = 1e-10);
    }

    #[test]
    fn antipodal_rate_uses_the_half_turn_and_flags_degeneracy() {
        let (m, pole) = sphere_pole();
        let rm = RateModel::walk(MeasureFamily::gaussian(&m));
        let south = m.point(vec![0.0, 0.0, -1.0]).unwrap();
        let report = cramer_rate(&rm, &pole, &south, 8).unwrap();
        let pi = std::f64::consts::PI;
        assert_relative_eq!(report.rate, 0.5 * pi * pi, epsilon = 1e-9);
        assert!(report.degenerate);
    }

    #[test]
    fn winding_enumeration_feeds_the_minimum() {
        // Distance π/2 on the unit sphere: candidate speeds are π/2 and
        // 2π − π/2; the short arc must win.
        let (m, pole) = sphere_pole();
        let rm = RateModel::walk(MeasureFamily::gaussian(&m));
        let target = m.point(vec![1.0, 0.0, 0.0]).unwrap();
        let report = cramer_rate(&rm, &pole, &target, 5).unwrap();
        let quarter = std::f64::consts::FRAC_PI_2;
        assert_relative_eq!(report.rate, 0.5 * quarter * quarter, epsilon = 1e-10);
        assert_relative_eq!(report.geodesic_speed, quarter, epsilon = 1e-10);
    }

    #[test]
    fn bounded_support_rate_saturates_beyond_reach() {
        // Steps of length ≤ 1 cannot reach distance 2 in unit time: every
        // winding is forbidden and the sentinel propagates.
        let m = ManifoldModel::euclidean(1).unwrap();
        let rm = RateModel::walk(MeasureFamily::uniform_ball(&m, 1.0).unwrap());
        let x0 = m.point(vec![0.0]).unwrap();
        let far = m.point(vec![2.0]).unwrap();
        let report = cramer_rate(&rm, &x0, &far, 3).unwrap();
        assert!(report.rate >= 0.5 * CONJUGATE_SENTINEL);
    }

    #[test]
    fn semigroup_matches_the_quadratic_terminal_oracle() {
        // Flat line, diffusion model, terminal payoff −y²: the optimal value
        // from x is −x²/(1 + 2t).
        let m = ManifoldModel::euclidean(1).unwrap();
        let rm = RateModel::brownian(&m);
        let f = FnField(|_: &ManifoldModel, y: &Point| -(y.coords()[0] * y.coords()[0]));
        let x = m.point(vec![0.7]).unwrap();
        let t = 0.6;
        let got = variational_semigroup(&rm, &f, t, &x, 12).unwrap();
        let want = -(0.7 * 0.7) / (1.0 + 2.0 * t);
        assert!(got.converged);
        assert!((got.value - want).abs() < 1e-3, "{} vs {want}", got.value);
    }

    #[test]
    fn semigroup_of_a_constant_is_that_constant() {
        let (m, pole) = sphere_pole();
        let rm = RateModel::walk(MeasureFamily::gaussian(&m));
        let f = FnField(|_: &ManifoldModel, _: &Point| 2.5);
        let got = variational_semigroup(&rm, &f, 0.4, &pole, 6).unwrap();
        assert_relative_eq!(got.value, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn semigroup_short_times_recover_the_terminal_value() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let rm = RateModel::brownian(&m);
        let f = FnField(|_: &ManifoldModel, y: &Point| -(y.coords()[0] * y.coords()[0]));
        let x = m.point(vec![0.7]).unwrap();
        let got = variational_semigroup(&rm, &f, 1e-3, &x, 4).unwrap();
        assert!((got.value - (-0.49)).abs() < 2e-3, "{}", got.value);
    }

    #[test]
    fn characteristic_flow_of_a_linear_field_is_straight() {
        let m = ManifoldModel::euclidean(2).unwrap();
        let rm = RateModel::brownian(&m);
        let f = FnField(|_: &ManifoldModel, y: &Point| 0.8 * y.coords()[0] - 0.5 * y.coords()[1]);
        let x0 = m.point(vec![1.0, 1.0]).unwrap();
        let curve = characteristic_flow(&rm, &f, &x0, 1.0, 0.1).unwrap();
        let end = &curve.points()[curve.len() - 1];
        // Q = ∇f = (0.8, −0.5) everywhere.
        assert_relative_eq!(end.coords()[0], 1.8, epsilon = 1e-9);
        assert_relative_eq!(end.coords()[1], 0.5, epsilon = 1e-9);
        assert_eq!(curve.times().len(), 11);
    }

    #[test]
    fn characteristic_flow_is_stationary_at_critical_points() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let rm = RateModel::brownian(&m);
        let f = FnField(|_: &ManifoldModel, y: &Point| -(y.coords()[0] * y.coords()[0]));
        let x0 = m.point(vec![0.0]).unwrap();
        let curve = characteristic_flow(&rm, &f, &x0, 0.5, 0.05).unwrap();
        for p in curve.points() {
            assert!(p.coords()[0].abs() < 1e-12);
        }
    }

    #[test]
    fn flow_satisfies_the_hamiltonian_duality_identity() {
        // Along the flow, H(x, df) must equal ⟨df, ẋ⟩ − L(x, ẋ) because the
        // velocity is exactly the dual point of df.
        let (m, _) = sphere_pole();
        let start = m.point(vec![0.6, 0.0, 0.8]).unwrap();
        let models = [
            RateModel::brownian(&m),
            RateModel::walk(MeasureFamily::uniform_ball(&m, 2.0).unwrap()),
        ];
        let f = FnField(|_: &ManifoldModel, y: &Point| 0.3 * y.coords()[2]);
        for rm in &models {
            let curve = characteristic_flow(rm, &f, &start, 0.5, 0.05).unwrap();
            let velocities = curve.velocities().unwrap();
            for (x, v) in curve.points().iter().zip(velocities) {
                let p = f.differential(&m, x).unwrap();
                let hf = rm.hamiltonian(x, &p).unwrap();
                let dual = m.pair(&p, v) - rm.lagrangian(x, v).unwrap();
                assert!((hf - dual).abs() < 1e-6, "identity gap {}", hf - dual);
            }
        }
    }

    #[test]
    fn cost_is_constant_along_geodesics() {
        let m = ManifoldModel::hyperbolic2();
        let rm = RateModel::walk(MeasureFamily::uniform_ball(&m, 1.0).unwrap());
        let x = m.point(vec![0.2, 1.0]).unwrap();
        let v = m.tangent(&x, vec![0.5, 0.4]).unwrap();
        let speed = m.norm(&v);
        assert!(speed < 1.0);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let curve = m.sample_geodesic(&x, &v, &times).unwrap();
        let velocities = curve.velocities().unwrap();
        let costs: Vec<f64> = curve
            .points()
            .iter()
            .zip(velocities)
            .map(|(p, w)| rm.lagrangian(p, w).unwrap())
            .collect();
        let lo = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo < 1e-6, "cost drift {}", hi - lo);
    }

    #[test]
    fn perturbed_paths_never_beat_the_rate() {
        let (m, pole) = sphere_pole();
        let rm = RateModel::walk(MeasureFamily::gaussian(&m));
        let target = m.point(vec![(1.0f64).sin(), 0.0, (1.0f64).cos()]).unwrap();
        let rate = cramer_rate(&rm, &pole, &target, 6).unwrap().rate;
        let chord = m.log_map(&pole, &target).unwrap();
        let grid: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let base = m.sample_geodesic(&pole, &chord, &grid).unwrap();
        let mut rng = stream(7, &[0]);
        for trial in 0..50 {
            let points: Vec<Point> = base
                .points()
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if i == 0 || i == 8 {
                        return p.clone();
                    }
                    let frame = m.orthonormal_basis(p);
                    let mut components = DVector::zeros(p.coords().len());
                    for e in &frame {
                        let z: f64 = rand_distr::Distribution::sample(
                            &rand_distr::StandardNormal,
                            &mut rng,
                        );
                        components += e.components() * (0.08 * z);
                    }
                    m.exp_map(p, &TangentVector { base: p.clone(), components }).unwrap()
                })
                .collect();
            let curve = Curve::new(&m, grid.clone(), points).unwrap();
            let action = path_action(&rm, &curve).unwrap().value;
            assert!(
                action >= rate - 1e-4,
                "trial {trial}: action {action} beat the rate {rate}"
            );
        }
    }

    #[test]
    fn containment_keeps_every_hamiltonian_bounded() {
        // Grid-evaluated sup of H(x, dΥ(x)) stays under a model constant,
        // which is what makes Υ usable as a confinement function.
        let cases: Vec<(ManifoldModel, Point, Vec<Point>)> = vec![
            {
                let m = ManifoldModel::euclidean(2).unwrap();
                let x0 = m.point(vec![0.0, 0.0]).unwrap();
                let grid = (-4..=4)
                    .flat_map(|i| {
                        (-4..=4).map(move |j| (i as f64 * 0.7, j as f64 * 0.7))
                    })
                    .map(|(a, b)| m.point(vec![a, b]).unwrap())
                    .collect();
                (m, x0, grid)
            },
            {
                let m = ManifoldModel::sphere(1.0).unwrap();
                let x0 = m.point(vec![0.0, 0.0, 1.0]).unwrap();
                let grid = (0..40)
                    .map(|i| {
                        let theta = i as f64 * 0.077;
                        let phi = i as f64 * 0.31;
                        m.point(vec![
                            theta.sin() * phi.cos(),
                            theta.sin() * phi.sin(),
                            theta.cos(),
                        ])
                        .unwrap()
                    })
                    .collect();
                (m, x0, grid)
            },
            {
                let m = ManifoldModel::hyperbolic2();
                let x0 = m.point(vec![0.0, 1.0]).unwrap();
                let grid = (-4..=4)
                    .flat_map(|i| (1..=5).map(move |j| (i as f64 * 0.8, j as f64 * 0.6)))
                    .map(|(a, b)| m.point(vec![a, b]).unwrap())
                    .collect();
                (m, x0, grid)
            },
        ];
        for (m, x0, grid) in cases {
            let models = [
                RateModel::brownian(&m),
                RateModel::walk(MeasureFamily::gaussian(&m)),
                RateModel::walk(MeasureFamily::uniform_ball(&m, 1.0).unwrap()),
            ];
            for rm in &models {
                let mut sup = f64::NEG_INFINITY;
                for x in &grid {
                    let (_, dy) = m.containment(&x0, x).unwrap();
                    sup = sup.max(rm.hamiltonian(x, &dy).unwrap());
                }
                // |dΥ|_g ≤ 2 on all three models and every radial symbol here
                // is finite at conorm 2; declare 5 as the admissibility bar.
                assert!(sup.is_finite() && sup < 5.0, "sup H along dΥ = {sup}");
            }
        }
    }
}
