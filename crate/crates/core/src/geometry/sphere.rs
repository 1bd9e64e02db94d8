//! Closed forms on the round sphere of radius `r`, in embedded coordinates.
//!
//! Geodesics are great circles: with `theta = |v| / r`,
//! `exp_x(v) = cos(theta) x + sin(theta) r v/|v|`. The angle between points
//! is recovered from both dot product and chord so it stays accurate near
//! `0` and near the antipode.

use nalgebra::DVector;

use super::{BvpSolutions, ManifoldModel, Point, TangentVector, CUT_LOCUS_TOL};
use crate::error::{Error, Result};

/// Angle `theta in [0, pi]` between `x` and `y`, via `atan2` of the
/// projected sine and cosine (stable at both ends of the range).
fn angle(radius: f64, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let cos = (x.dot(y) / (radius * radius)).clamp(-1.0, 1.0);
    // |y/r - cos * x/r| = sin(theta)
    let mut tail = y / radius;
    tail.axpy(-cos / radius, x, 1.0);
    let sin = tail.norm();
    sin.atan2(cos)
}

pub(super) fn exp(radius: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let speed = v.norm();
    if speed == 0.0 {
        return x.clone();
    }
    let theta = speed / radius;
    let mut out = x * theta.cos();
    out.axpy(theta.sin() * radius / speed, v, 1.0);
    // Renormalize: |out| = r exactly, so later drift checks never trip.
    let n = out.norm();
    out * (radius / n)
}

pub(super) fn log(radius: f64, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let theta = angle(radius, x, y);
    // Below ~1e-12 the chord `y - cos(theta) x` is pure cancellation noise
    // (it can even be exactly zero while theta is not), so call it the same
    // point: the answer is off by at most `radius * theta`.
    if theta < 1e-12 {
        return Ok(DVector::zeros(x.len()));
    }
    if std::f64::consts::PI - theta < CUT_LOCUS_TOL {
        return Err(Error::CutLocus(format!(
            "points are antipodal within angular tolerance {CUT_LOCUS_TOL:e}; \
             the minimizing direction is not unique"
        )));
    }
    // Unit tangent toward y: normalize the component of y orthogonal to x.
    let cos = theta.cos();
    let mut dir = y.clone();
    dir.axpy(-cos, x, 1.0); // y - cos(theta) x, orthogonal to x
    let n = dir.norm();
    Ok(dir * (radius * theta / n))
}

pub(super) fn distance(radius: f64, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    radius * angle(radius, x, y)
}

/// Parallel transport along the minimal geodesic from `x` to `y`: rotate in
/// the plane spanned by `x` and the travel direction, identity on its
/// orthogonal complement.
pub(super) fn transport(
    radius: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let theta = angle(radius, x, y);
    // Same cutoff as `log`: below it the travel direction is not resolvable
    // and the true transport differs from the identity by O(theta |v|).
    if theta < 1e-12 {
        return Ok(v.clone());
    }
    if std::f64::consts::PI - theta < CUT_LOCUS_TOL {
        return Err(Error::CutLocus(
            "transport between antipodal points is not unique".into(),
        ));
    }
    let log_dir = log(radius, x, y)?;
    let u = &log_dir / log_dir.norm();
    let xhat = x / radius;
    let a = v.dot(&u);
    // v = a u + w with w fixed by the rotation.
    let mut w = v.clone();
    w.axpy(-a, &u, 1.0);
    // u rotates to u cos(theta) - xhat sin(theta).
    let mut out = w;
    out.axpy(a * theta.cos(), &u, 1.0);
    out.axpy(-a * theta.sin(), &xhat, 1.0);
    // Project out any residual radial drift at y.
    let radial = out.dot(y) / (radius * radius);
    out.axpy(-radial, y, 1.0);
    Ok(out)
}

/// Deterministic orthonormal tangent basis: Gram-Schmidt of the ambient
/// axes against `x`, skipping the axis most parallel to `x`.
pub(super) fn orthonormal_basis(radius: f64, x: &Point) -> Vec<TangentVector> {
    let xhat = &x.coords / radius;
    let skip = xhat.iamax(); // index of the largest |component|
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(2);
    for i in 0..3 {
        if i == skip {
            continue;
        }
        let mut e = DVector::zeros(3);
        e[i] = 1.0;
        let radial = e.dot(&xhat);
        e.axpy(-radial, &xhat, 1.0);
        for b in &basis {
            let overlap = e.dot(b);
            e.axpy(-overlap, b, 1.0);
        }
        let n = e.norm();
        basis.push(e / n);
    }
    basis
        .into_iter()
        .map(|components| TangentVector {
            base: x.clone(),
            components,
        })
        .collect()
}

/// Great-circle boundary-value solutions sorted by speed: the short arc,
/// the long arc (opposite direction), and full windings on top of both.
pub(super) fn bvp(
    m: &ManifoldModel,
    radius: f64,
    x: &Point,
    y: &Point,
    max_solutions: usize,
) -> Result<BvpSolutions> {
    let two_pi_r = 2.0 * std::f64::consts::PI * radius;
    let theta = angle(radius, &x.coords, &y.coords);
    let d = radius * theta;

    if theta < 1e-12 {
        // Same point: the trivial solution plus whole loops in a fixed
        // tangent direction.
        let u = m.orthonormal_basis(x).remove(0);
        let velocities = (0..max_solutions)
            .map(|j| u.scaled(j as f64 * two_pi_r))
            .collect();
        return Ok(BvpSolutions {
            velocities,
            degenerate: false,
        });
    }
    if std::f64::consts::PI - theta < CUT_LOCUS_TOL {
        // Antipodal: a circle of minimizing geodesics. Return evenly spaced
        // representatives at the minimal speed, flagged degenerate.
        let basis = m.orthonormal_basis(x);
        let velocities = (0..max_solutions)
            .map(|j| {
                let alpha = 2.0 * std::f64::consts::PI * j as f64 / max_solutions as f64;
                let mut comps = basis[0].components.clone() * alpha.cos();
                comps.axpy(alpha.sin(), &basis[1].components, 1.0);
                TangentVector {
                    base: x.clone(),
                    components: comps * d,
                }
            })
            .collect();
        return Ok(BvpSolutions {
            velocities,
            degenerate: true,
        });
    }

    let log_v = log(radius, &x.coords, &y.coords)?;
    let u = &log_v / log_v.norm();
    let mut velocities = Vec::with_capacity(max_solutions);
    let mut winding = 0.0;
    while velocities.len() < max_solutions {
        // Forward arc d + 2 pi r w, then backward arc 2 pi r (w+1) - d.
        velocities.push(TangentVector {
            base: x.clone(),
            components: &u * (d + winding * two_pi_r),
        });
        if velocities.len() == max_solutions {
            break;
        }
        velocities.push(TangentVector {
            base: x.clone(),
            components: &u * -((winding + 1.0) * two_pi_r - d),
        });
        winding += 1.0;
    }
    Ok(BvpSolutions {
        velocities,
        degenerate: false,
    })
}
