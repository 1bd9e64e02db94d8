//! Riemannian Brownian motion via horizontal lifts to the orthonormal frame
//! bundle, plus flat-space SDE schemes used for cross-validation.
//!
//! The integrator keeps a point together with an orthonormal frame, moves the
//! point one geodesic step along the frame-weighted noise, parallel-transports
//! the frame, and re-orthonormalizes. Everything stays exactly on the
//! manifold; discretization error lives in the transport and is controlled by
//! step-halving comparisons.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, Point, TangentVector};
use crate::rng::stream;

/// A point plus an orthonormal frame of its tangent space.
#[derive(Debug, Clone)]
pub struct FrameState {
    pub(crate) x: Point,
    pub(crate) frame: Vec<TangentVector>,
}

impl FrameState {
    /// Validates that `frame` is an orthonormal basis at `x` (defect below
    /// 1e-8 in the sup norm).
    pub fn new(m: &ManifoldModel, x: Point, frame: Vec<TangentVector>) -> Result<Self> {
        if frame.len() != m.dim() {
            return Err(Error::InvalidVector(format!(
                "frame has {} vectors; the manifold has dimension {}",
                frame.len(),
                m.dim()
            )));
        }
        let state = FrameState { x, frame };
        let defect = frame_defect(m, &state);
        if defect > 1e-8 {
            return Err(Error::InvalidVector(format!(
                "frame orthonormality defect {defect:.3e} exceeds 1e-8"
            )));
        }
        Ok(state)
    }

    pub fn point(&self) -> &Point {
        &self.x
    }

    pub fn frame(&self) -> &[TangentVector] {
        &self.frame
    }
}

/// Sup-norm distance of the frame Gram matrix from the identity.
pub fn frame_defect(m: &ManifoldModel, s: &FrameState) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, vi) in s.frame.iter().enumerate() {
        for (j, vj) in s.frame.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m.inner(vi, vj) - target).abs());
        }
    }
    worst
}

/// A realized frame-bundle path on a uniform time grid.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    pub(crate) times: Vec<f64>,
    pub(crate) states: Vec<FrameState>,
    /// Raw (unscaled) Gaussian increments, one per step, variance `dt` per
    /// component.
    pub(crate) driving_noise: Vec<DVector<f64>>,
}

impl BrownianPath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[FrameState] {
        &self.states
    }

    pub fn driving_noise(&self) -> &[DVector<f64>] {
        &self.driving_noise
    }

    pub fn endpoint(&self) -> &Point {
        &self.states[self.states.len() - 1].x
    }

    /// The flat-space curve obtained by rolling the path back into the
    /// initial tangent space: cumulative sums of the scaled noise, starting
    /// at zero.
    pub fn anti_development(&self, eps: f64) -> Vec<DVector<f64>> {
        let k = self.driving_noise.first().map_or(0, |db| db.len());
        let mut out = Vec::with_capacity(self.driving_noise.len() + 1);
        let mut acc = DVector::zeros(k);
        out.push(acc.clone());
        let root = eps.sqrt();
        for db in &self.driving_noise {
            acc += db * root;
            out.push(acc.clone());
        }
        out
    }
}

/// One step of the horizontal stochastic flow: geodesic move along the
/// frame-weighted noise, frame transport, re-orthonormalization.
pub fn horizontal_step(
    m: &ManifoldModel,
    s: &FrameState,
    db: &DVector<f64>,
    dt: f64,
    eps: f64,
) -> Result<FrameState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("step size {dt} must be finite and > 0")));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("noise scale {eps} must be finite and >= 0")));
    }
    if db.len() != s.frame.len() || db.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidVector("noise increment has wrong shape or NaN".into()));
    }
    let root = eps.sqrt();
    let mut coords = DVector::zeros(s.frame[0].components().len());
    for (i, e) in s.frame.iter().enumerate() {
        coords += e.components() * (root * db[i]);
    }
    let v = TangentVector { base: s.x.clone(), components: coords };
    let next = m.exp_map(&s.x, &v)?;
    let mut frame = Vec::with_capacity(s.frame.len());
    for e in &s.frame {
        frame.push(m.transport_along(&s.x, &next, e)?);
    }
    gram_schmidt(m, &next, &mut frame)?;
    Ok(FrameState { x: next, frame })
}

/// Modified Gram-Schmidt in the metric at `x`.
fn gram_schmidt(m: &ManifoldModel, x: &Point, vecs: &mut [TangentVector]) -> Result<()> {
    for i in 0..vecs.len() {
        for j in 0..i {
            let c = m.inner(&vecs[i], &vecs[j]);
            let components = vecs[i].components() - vecs[j].components() * c;
            vecs[i] = TangentVector { base: x.clone(), components };
        }
        let n = m.norm(&vecs[i]);
        if !(n > 0.0) {
            return Err(Error::StepFailure("frame collapsed during re-orthonormalization".into()));
        }
        vecs[i] = vecs[i].scaled(1.0 / n);
    }
    Ok(())
}

/// Simulates the horizontal flow for `⌈T/dt⌉` steps with noise scale `eps`,
/// starting from the deterministic reference frame at `x0`.
pub fn run_brownian(
    m: &ManifoldModel,
    x0: &Point,
    eps: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<BrownianPath> {
    let noise = sample_noise(m.dim(), step_total(horizon, dt)?, dt, seed);
    run_brownian_with_noise(m, x0, eps, dt, &noise)
}

/// Same flow driven by caller-supplied raw increments (variance `dt` per
/// component). Lets coupled experiments share noise: a half-step run and a
/// full-step run are coupled by summing consecutive fine increments.
pub fn run_brownian_with_noise(
    m: &ManifoldModel,
    x0: &Point,
    eps: f64,
    dt: f64,
    noise: &[DVector<f64>],
) -> Result<BrownianPath> {
    m.check_point(x0)?;
    let frame = m.orthonormal_basis(x0);
    let mut state = FrameState { x: x0.clone(), frame };
    let mut times = Vec::with_capacity(noise.len() + 1);
    let mut states = Vec::with_capacity(noise.len() + 1);
    times.push(0.0);
    states.push(state.clone());
    for (i, db) in noise.iter().enumerate() {
        state = horizontal_step(m, &state, db, dt, eps)?;
        times.push((i + 1) as f64 * dt);
        states.push(state.clone());
    }
    Ok(BrownianPath { times, states, driving_noise: noise.to_vec() })
}

fn step_total(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon {horizon} must be finite and > 0")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("step size {dt} must be finite and > 0")));
    }
    Ok((horizon / dt).ceil() as usize)
}

/// Draws `steps` raw increments of dimension `k`, each `N(0, dt·I)`, from
/// per-step counter streams of `seed`.
pub fn sample_noise(k: usize, steps: usize, dt: f64, seed: u64) -> Vec<DVector<f64>> {
    let root = dt.sqrt();
    (0..steps)
        .map(|i| {
            let mut rng = stream(seed, &[i as u64]);
            DVector::from_fn(k, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                root * z
            })
        })
        .collect()
}

/// First grid time at which the path leaves the geodesic ball of radius
/// `delta` around `x0`, if it does.
pub fn radial_exit_time(
    m: &ManifoldModel,
    p: &BrownianPath,
    x0: &Point,
    delta: f64,
) -> Result<Option<f64>> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("exit radius {delta} must be > 0")));
    }
    for (t, s) in p.times.iter().zip(&p.states) {
        if m.distance(x0, &s.x) >= delta {
            return Ok(Some(*t));
        }
    }
    Ok(None)
}

/// Closed-form tail bound for the exit probability of the radius-`delta`
/// geodesic ball by time `tau`, on a `k`-dimensional manifold whose Ricci
/// curvature is bounded below by `-(k-1)L`:
/// `2·exp(−(kLτ − δ²/2)² / (2δ²τ))`, valid when `δ > √(2kLτ)`.
pub fn exit_bound(k: usize, l: f64, tau: f64, delta: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("dimension k must be at least 1".into()));
    }
    if !(l >= 1.0 && l.is_finite()) {
        return Err(Error::Domain(format!("curvature scale L = {l} must be >= 1")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("time window tau = {tau} must be > 0")));
    }
    let floor = (2.0 * k as f64 * l * tau).sqrt();
    if !(delta > floor) {
        return Err(Error::Domain(format!(
            "radius delta = {delta} must exceed sqrt(2kL·tau) = {floor}"
        )));
    }
    let a = k as f64 * l * tau - 0.5 * delta * delta;
    Ok(2.0 * (-0.5 * a * a / (delta * delta * tau)).exp())
}

/// Integration schemes for the flat-space diffusion `dY = b dt + √eps·σ dW`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdeScheme {
    /// Forward Euler reading the equation in the Ito sense.
    ItoEuler,
    /// Predictor-corrector Heun step, the Stratonovich reading.
    StratonovichHeun,
    /// Ito reading plus the drift `½·eps·(Dσ·σ)` that converts the
    /// Stratonovich equation to Ito form; `Dσ` by central differences.
    ItoWithCorrection,
}

/// Simulates the flat diffusion and returns the discrete path `Y_0 … Y_m`.
pub fn run_euclidean_sde<B, S>(
    b: B,
    sigma: S,
    eps: f64,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
    scheme: SdeScheme,
    seed: u64,
) -> Result<Vec<DVector<f64>>>
where
    B: Fn(&DVector<f64>) -> DVector<f64>,
    S: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let width = sigma(x0).ncols();
    let noise = sample_noise(width, step_total(horizon, dt)?, dt, seed);
    run_euclidean_sde_with_noise(b, sigma, eps, x0, dt, scheme, &noise)
}

/// Scheme comparison entry point: the same raw increments drive any scheme.
pub fn run_euclidean_sde_with_noise<B, S>(
    b: B,
    sigma: S,
    eps: f64,
    x0: &DVector<f64>,
    dt: f64,
    scheme: SdeScheme,
    noise: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>>
where
    B: Fn(&DVector<f64>) -> DVector<f64>,
    S: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("step size {dt} must be finite and > 0")));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("noise scale {eps} must be finite and >= 0")));
    }
    let root = eps.sqrt();
    let mut path = Vec::with_capacity(noise.len() + 1);
    let mut y = x0.clone();
    path.push(y.clone());
    for db in noise {
        let step = match scheme {
            SdeScheme::ItoEuler => b(&y) * dt + sigma(&y) * db * root,
            SdeScheme::StratonovichHeun => {
                let predictor = &y + b(&y) * dt + sigma(&y) * db * root;
                (b(&y) + b(&predictor)) * (0.5 * dt)
                    + (sigma(&y) + sigma(&predictor)) * db * (0.5 * root)
            }
            SdeScheme::ItoWithCorrection => {
                (b(&y) + stratonovich_drift(&sigma, &y) * (0.5 * eps)) * dt
                    + sigma(&y) * db * root
            }
        };
        y += step;
        path.push(y.clone());
    }
    Ok(path)
}

/// `(Dσ·σ)_i = Σ_{j,l} ∂σ_{ij}/∂x_l · σ_{lj}`, with the Jacobian by central
/// differences.
fn stratonovich_drift<S>(sigma: &S, y: &DVector<f64>) -> DVector<f64>
where
    S: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let h = 1e-5;
    let d = y.len();
    let s0 = sigma(y);
    let mut out = DVector::zeros(d);
    for l in 0..d {
        let mut up = y.clone();
        up[l] += h;
        let mut down = y.clone();
        down[l] -= h;
        let ds = (sigma(&up) - sigma(&down)) / (2.0 * h);
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..s0.ncols() {
                acc += ds[(i, j)] * s0[(l, j)];
            }
            out[i] += acc;
        }
    }
    out
}
