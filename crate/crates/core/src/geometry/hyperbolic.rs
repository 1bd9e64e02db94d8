//! Closed forms on the hyperbolic plane in the upper half-plane chart.
//!
//! Geodesics are vertical rays and semicircles centered on the real axis.
//! A unit-speed geodesic on the circle with center `(c, 0)` and radius `R`
//! is parametrized as
//!
//! ```text
//! gamma(u) = (c - R tanh u, R sech u),      u = u0 + sigma * arclength,
//! ```
//!
//! whose chart-unit velocity is `-sigma (sech u, tanh u)`. All endpoint
//! formulas below are arranged as products of exponentials of *differences*
//! (`cosh u0 / cosh u1`, `sinh s / cosh u1`), which stays accurate for
//! nearly vertical directions where the naive center-and-radius arithmetic
//! cancels catastrophically.

use nalgebra::DVector;

/// `log(cosh u)` without overflow.
fn ln_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `log(sinh s)` for `s > 0` without overflow.
fn ln_sinh(s: f64) -> f64 {
    s + (-(-2.0 * s).exp()).ln_1p() - std::f64::consts::LN_2
}

/// `acosh(1 + e)` accurate for all `e >= 0` (the std form loses the small-
/// distance regime to rounding in `1 + e`).
fn acosh1p(e: f64) -> f64 {
    (e + (e * (2.0 + e)).sqrt()).ln_1p()
}

pub(super) fn distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let e = (dx * dx + dy * dy) / (2.0 * a[1] * b[1]);
    acosh1p(e)
}

pub(super) fn exp(x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let (x0, y0) = (x[0], x[1]);
    let chart_len = v.norm();
    if chart_len == 0.0 {
        return x.clone();
    }
    let s = chart_len / y0; // g-length of v = arclength travelled
    let cos_t = v[0] / chart_len;
    let sin_t = v[1] / chart_len;
    if cos_t.abs() < 1e-15 {
        // Vertical ray; the x drift of order cos_t is below representable.
        return DVector::from_vec(vec![x0, y0 * (sin_t.signum() * s).exp()]);
    }
    let sigma = -cos_t.signum();
    let u0 = (cos_t.signum() * sin_t).atanh();
    let u1 = u0 + sigma * s;
    let y1 = y0 * (ln_cosh(u0) - ln_cosh(u1)).exp();
    let dx = -sigma * y0 * (ln_sinh(s) - ln_cosh(u1)).exp();
    DVector::from_vec(vec![x0 + dx, y1])
}

/// Geometry of the connecting geodesic: chart-unit travel directions at
/// both endpoints. `None` when the points coincide.
fn travel_dirs(a: &DVector<f64>, b: &DVector<f64>) -> Option<([f64; 2], [f64; 2])> {
    let (x0, y0) = (a[0], a[1]);
    let (x1, y1) = (b[0], b[1]);
    if x0 == x1 {
        if y0 == y1 {
            return None;
        }
        let up = (y1 - y0).signum();
        return Some(([0.0, up], [0.0, up]));
    }
    // Circle center on the real axis through both points; written without
    // differences of large squares.
    let c = x0 + ((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 + y0)) / (2.0 * (x1 - x0));
    if !c.is_finite() {
        // x gap subnormal relative to the heights: the ray is vertical to
        // all representable precision.
        if y0 == y1 {
            return None;
        }
        let up = (y1 - y0).signum();
        return Some(([0.0, up], [0.0, up]));
    }
    let (dx0, dx1) = (x0 - c, x1 - c);
    let r0 = dx0.hypot(y0);
    let r1 = dx1.hypot(y1);
    // phi increases exactly when x decreases, so:
    let sigma = (x0 - x1).signum();
    let e0 = [sigma * (-y0 / r0), sigma * (dx0 / r0)];
    let e1 = [sigma * (-y1 / r1), sigma * (dx1 / r1)];
    Some((e0, e1))
}

pub(super) fn log(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    match travel_dirs(a, b) {
        None => DVector::zeros(2),
        Some((e0, _)) => {
            let d = distance(a, b);
            let scale = d * a[1]; // chart length of a g-norm-d vector
            DVector::from_vec(vec![scale * e0[0], scale * e0[1]])
        }
    }
}

/// Parallel transport along the geodesic from `a` to `b`. The metric is
/// conformal, so transport preserves the chart angle to the travel
/// direction and the g-norm; both endpoints' travel directions are exact.
pub(super) fn transport(a: &DVector<f64>, b: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let Some((e0, e1)) = travel_dirs(a, b) else {
        return v.clone();
    };
    let chart_len = v.norm();
    if chart_len == 0.0 {
        return DVector::zeros(2);
    }
    let g_norm = chart_len / a[1];
    let vx = v[0] / chart_len;
    let vy = v[1] / chart_len;
    // Signed angle from e0 to v-hat.
    let cos_alpha = e0[0] * vx + e0[1] * vy;
    let sin_alpha = e0[0] * vy - e0[1] * vx;
    // Rotate e1 by the same signed angle, rescale to chart length at b.
    let out_x = cos_alpha * e1[0] - sin_alpha * e1[1];
    let out_y = sin_alpha * e1[0] + cos_alpha * e1[1];
    let scale = g_norm * b[1];
    DVector::from_vec(vec![scale * out_x, scale * out_y])
}
