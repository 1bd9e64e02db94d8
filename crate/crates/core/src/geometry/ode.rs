//! Runge–Kutta cross-checks for the closed-form geodesic calculus.
//!
//! These integrate the geodesic equation and the parallel-transport
//! equation componentwise in the raw representation (embedded coordinates
//! on the sphere, chart coordinates elsewhere). They are deliberately
//! independent of the closed forms in the parent module so the test suite
//! can confront the two implementations.

use nalgebra::DVector;

use super::{ManifoldKind, ManifoldModel, Point, TangentVector};
use crate::error::{Error, Result};

/// Classical fixed-step RK4 over `[0, span]`.
fn rk4<F>(f: F, y0: DVector<f64>, span: f64, steps: usize) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let h = span / steps as f64;
    let mut y = y0;
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&(&y + &k1 * (h / 2.0)));
        let k3 = f(&(&y + &k2 * (h / 2.0)));
        let k4 = f(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

/// Right-hand side of the geodesic equation as a first-order system on
/// (position, velocity) stacked into one vector.
fn geodesic_rhs(m: &ManifoldModel, state: &DVector<f64>) -> DVector<f64> {
    let n = state.len() / 2;
    let mut out = DVector::zeros(2 * n);
    for i in 0..n {
        out[i] = state[n + i];
    }
    match m.kind {
        ManifoldKind::Euclidean(_) => {}
        ManifoldKind::Sphere { radius } => {
            let speed_sq: f64 = (0..n).map(|i| state[n + i] * state[n + i]).sum();
            let scale = -speed_sq / (radius * radius);
            for i in 0..n {
                out[n + i] = scale * state[i];
            }
        }
        ManifoldKind::Hyperbolic2 => {
            let y = state[1];
            let (vx, vy) = (state[2], state[3]);
            out[2] = 2.0 * vx * vy / y;
            out[3] = (vy * vy - vx * vx) / y;
        }
    }
    out
}

/// Integrates the geodesic ODE from `x` with initial velocity `v` over unit
/// parameter time, using `steps` RK4 steps.
pub fn exp_map_ode(m: &ManifoldModel, x: &Point, v: &TangentVector, steps: usize) -> Result<Point> {
    if steps == 0 {
        return Err(Error::Domain("exp_map_ode needs at least one step".into()));
    }
    let n = m.repr_len();
    let mut state = DVector::zeros(2 * n);
    for i in 0..n {
        state[i] = x.coords[i];
        state[n + i] = v.components[i];
    }
    let end = rk4(|s| geodesic_rhs(m, s), state, 1.0, steps);
    if end.iter().any(|c| !c.is_finite()) {
        return Err(Error::StepFailure("geodesic ODE produced non-finite state".into()));
    }
    let mut coords = DVector::zeros(n);
    for i in 0..n {
        coords[i] = end[i];
    }
    if let ManifoldKind::Sphere { radius } = m.kind {
        let norm = coords.norm();
        coords *= radius / norm;
    }
    Ok(Point { coords })
}

/// `exp_map_ode` with the default resolution (step `1e-3` of the interval),
/// halving the step until two successive refinements agree to `1e-9`.
pub fn exp_map_ode_refined(m: &ManifoldModel, x: &Point, v: &TangentVector) -> Result<Point> {
    let mut steps = 1_000;
    let mut prev = exp_map_ode(m, x, v, steps)?;
    for _ in 0..8 {
        steps *= 2;
        let next = exp_map_ode(m, x, v, steps)?;
        let gap = (&next.coords - &prev.coords).norm();
        if gap < 1e-9 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence {
        iterations: steps,
        residual: f64::NAN,
    })
}

/// Integrates the parallel-transport equation for `w` along the geodesic
/// with initial velocity `v`, over unit parameter time.
pub fn transport_ode(
    m: &ManifoldModel,
    x: &Point,
    v: &TangentVector,
    w: &TangentVector,
    steps: usize,
) -> Result<TangentVector> {
    if steps == 0 {
        return Err(Error::Domain("transport_ode needs at least one step".into()));
    }
    let n = m.repr_len();
    let mut state = DVector::zeros(3 * n);
    for i in 0..n {
        state[i] = x.coords[i];
        state[n + i] = v.components[i];
        state[2 * n + i] = w.components[i];
    }
    let rhs = |s: &DVector<f64>| {
        let mut out = DVector::zeros(3 * n);
        let geo = geodesic_rhs(m, &s.rows(0, 2 * n).into_owned());
        for i in 0..2 * n {
            out[i] = geo[i];
        }
        match m.kind {
            ManifoldKind::Euclidean(_) => {}
            ManifoldKind::Sphere { radius } => {
                let dot: f64 = (0..n).map(|i| s[2 * n + i] * s[n + i]).sum();
                let scale = -dot / (radius * radius);
                for i in 0..n {
                    out[2 * n + i] = scale * s[i];
                }
            }
            ManifoldKind::Hyperbolic2 => {
                let y = s[1];
                let (gx, gy) = (s[2], s[3]);
                let (wx, wy) = (s[4], s[5]);
                out[4] = (gx * wy + gy * wx) / y;
                out[5] = (gy * wy - gx * wx) / y;
            }
        }
        out
    };
    let end = rk4(rhs, state, 1.0, steps);
    if end.iter().any(|c| !c.is_finite()) {
        return Err(Error::StepFailure("transport ODE produced non-finite state".into()));
    }
    let mut coords = DVector::zeros(n);
    let mut comps = DVector::zeros(n);
    for i in 0..n {
        coords[i] = end[i];
        comps[i] = end[2 * n + i];
    }
    if let ManifoldKind::Sphere { radius } = m.kind {
        let norm = coords.norm();
        coords *= radius / norm;
    }
    let base = Point { coords };
    Ok(m.project_tangent(&base, comps))
}
