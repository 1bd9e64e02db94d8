use std::f64::consts::{FRAC_PI_2, PI};

use approx::assert_relative_eq;

use super::*;
use crate::error::Error;

fn euclid(k: usize) -> ManifoldModel {
    ManifoldModel::euclidean(k).unwrap()
}

fn sphere1() -> ManifoldModel {
    ManifoldModel::sphere(1.0).unwrap()
}

fn h2() -> ManifoldModel {
    ManifoldModel::hyperbolic2()
}

#[test]
fn curvature_constants() {
    assert_eq!(euclid(3).ricci_lower_bound(), 0.0);
    assert_eq!(sphere1().ricci_lower_bound(), 0.0);
    assert_eq!(h2().ricci_lower_bound(), 1.0);
}

#[test]
fn injectivity_radii() {
    let s = ManifoldModel::sphere(2.0).unwrap();
    let p = s.point(vec![2.0, 0.0, 0.0]).unwrap();
    assert_relative_eq!(s.injectivity_radius(&p), 2.0 * PI);
    let e = euclid(2);
    let q = e.point(vec![0.0, 0.0]).unwrap();
    assert!(e.injectivity_radius(&q).is_infinite());
    assert!(h2().injectivity_radius(&h2().point(vec![0.0, 1.0]).unwrap()).is_infinite());
}

#[test]
fn hyperbolic_metric_quarter_identity() {
    let m = h2();
    let x = m.point(vec![0.0, 2.0]).unwrap();
    let g = m.metric_at(&x);
    assert_relative_eq!(g[(0, 0)], 0.25);
    assert_relative_eq!(g[(1, 1)], 0.25);
    assert_eq!(g[(0, 1)], 0.0);
}

#[test]
fn point_validation() {
    assert!(matches!(
        sphere1().point(vec![1.0, 1.0, 1.0]),
        Err(Error::InvalidPoint(_))
    ));
    assert!(matches!(
        h2().point(vec![0.0, -1.0]),
        Err(Error::InvalidPoint(_))
    ));
    assert!(matches!(
        euclid(2).point(vec![0.0, f64::NAN]),
        Err(Error::InvalidPoint(_))
    ));
    // Slightly off the sphere is renormalized, not rejected.
    let p = sphere1().point(vec![1.0 + 1e-12, 0.0, 0.0]).unwrap();
    assert_relative_eq!(p.coords().norm(), 1.0, epsilon = 1e-15);
}

#[test]
fn euclidean_exp_log_are_affine() {
    let m = euclid(2);
    let x = m.point(vec![0.5, -1.0]).unwrap();
    let v = m.tangent(&x, vec![1.0, 2.0]).unwrap();
    let y = m.exp_map(&x, &v).unwrap();
    assert_relative_eq!(y.coords()[0], 1.5);
    assert_relative_eq!(y.coords()[1], 1.0);
    let back = m.log_map(&x, &y).unwrap();
    assert_relative_eq!((back.components() - v.components()).norm(), 0.0, epsilon = 1e-15);
}

#[test]
fn sphere_quarter_circle() {
    let m = sphere1();
    let pole = m.point(vec![0.0, 0.0, 1.0]).unwrap();
    let v = m.tangent(&pole, vec![FRAC_PI_2, 0.0, 0.0]).unwrap();
    let y = m.exp_map(&pole, &v).unwrap();
    assert_relative_eq!(y.coords()[0], 1.0, epsilon = 1e-14);
    assert_relative_eq!(y.coords()[1], 0.0, epsilon = 1e-14);
    assert_relative_eq!(y.coords()[2], 0.0, epsilon = 1e-14);
    assert_relative_eq!(m.distance(&pole, &y), FRAC_PI_2, epsilon = 1e-14);
}

#[test]
fn sphere_antipodal_log_is_cut_locus() {
    let m = sphere1();
    let x = m.point(vec![0.0, 0.0, 1.0]).unwrap();
    let y = m.point(vec![0.0, 0.0, -1.0]).unwrap();
    assert!(matches!(m.log_map(&x, &y), Err(Error::CutLocus(_))));
    // ... and the distance is still fine.
    assert_relative_eq!(m.distance(&x, &y), PI, epsilon = 1e-12);
}

#[test]
fn hyperbolic_vertical_geodesic() {
    let m = h2();
    let x = m.point(vec![0.0, 1.0]).unwrap();
    let y = m.point(vec![0.0, std::f64::consts::E]).unwrap();
    assert_relative_eq!(m.distance(&x, &y), 1.0, epsilon = 1e-14);
    let v = m.log_map(&x, &y).unwrap();
    assert_relative_eq!(v.components()[0], 0.0);
    assert_relative_eq!(v.components()[1], 1.0, epsilon = 1e-14);
    assert_relative_eq!(m.norm(&v), 1.0, epsilon = 1e-14);
    let fwd = m.exp_map(&x, &v).unwrap();
    assert_relative_eq!(fwd.coords()[1], std::f64::consts::E, epsilon = 1e-14);
}

#[test]
fn hyperbolic_unit_circle_geodesic() {
    // From i pointing horizontally: gamma(s) = (tanh s, sech s).
    let m = h2();
    let x = m.point(vec![0.0, 1.0]).unwrap();
    let s = 0.85;
    let v = m.tangent(&x, vec![s, 0.0]).unwrap();
    let y = m.exp_map(&x, &v).unwrap();
    assert_relative_eq!(y.coords()[0], s.tanh(), epsilon = 1e-14);
    assert_relative_eq!(y.coords()[1], 1.0 / s.cosh(), epsilon = 1e-14);
    assert_relative_eq!(m.distance(&x, &y), s, epsilon = 1e-13);
    let back = m.log_map(&x, &y).unwrap();
    assert_relative_eq!((back.components() - v.components()).norm(), 0.0, epsilon = 1e-12);
}

#[test]
fn transport_moves_geodesic_velocity() {
    let m = h2();
    let x = m.point(vec![0.3, 0.8]).unwrap();
    let v = m.tangent(&x, vec![0.5, -0.2]).unwrap();
    let y = m.exp_map(&x, &v).unwrap();
    let moved = m.transport_along(&x, &y, &v).unwrap();
    let expected = m.log_map(&y, &x).unwrap().scaled(-1.0);
    // gamma'(1) = -log_y(x) for the same geodesic.
    assert_relative_eq!(
        (moved.components() - expected.components()).norm(),
        0.0,
        epsilon = 1e-10
    );
}

#[test]
fn octant_loop_holonomy_is_quarter_turn() {
    let m = sphere1();
    let pole = m.point(vec![0.0, 0.0, 1.0]).unwrap();
    let a = m.point(vec![1.0, 0.0, 0.0]).unwrap();
    let b = m.point(vec![0.0, 1.0, 0.0]).unwrap();
    let loop_curve = Curve::new(
        &m,
        vec![0.0, 1.0, 2.0, 3.0],
        vec![pole.clone(), a, b, pole.clone()],
    )
    .unwrap();
    let v = m.tangent(&pole, vec![1.0, 0.0, 0.0]).unwrap();
    let out = m.parallel_transport(&loop_curve, &v).unwrap();
    // Enclosed area pi/2 => rotation by pi/2: e_x -> e_y.
    assert_relative_eq!(out.components()[0], 0.0, epsilon = 1e-12);
    assert_relative_eq!(out.components()[1], 1.0, epsilon = 1e-12);
    assert_relative_eq!(out.components()[2], 0.0, epsilon = 1e-12);
}

#[test]
fn transport_is_isometric_on_curves() {
    let m = sphere1();
    let x = m.point(vec![1.0, 0.0, 0.0]).unwrap();
    let mid = m.point(vec![0.0, 1.0, 0.0]).unwrap();
    let end = m
        .point(vec![0.0, 1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()])
        .unwrap();
    let c = Curve::new(&m, vec![0.0, 0.5, 1.0], vec![x.clone(), mid, end]).unwrap();
    let v = m.tangent(&x, vec![0.0, 0.3, -0.4]).unwrap();
    let out = m.parallel_transport(&c, &v).unwrap();
    assert_relative_eq!(m.norm(&out), m.norm(&v), epsilon = 1e-12);
}

#[test]
fn grad_sq_distance_euclidean_closed_form() {
    let m = euclid(2);
    let x = m.point(vec![0.3, -0.7]).unwrap();
    let y = m.point(vec![1.1, 0.4]).unwrap();
    let (dx, dy) = m.grad_sq_distance(&x, &y).unwrap();
    // d_x d^2 = 2 (x - y).
    assert_relative_eq!(dx.components()[0], 2.0 * (0.3 - 1.1), epsilon = 1e-14);
    assert_relative_eq!(dx.components()[1], 2.0 * (-0.7 - 0.4), epsilon = 1e-14);
    assert_relative_eq!(dy.components()[0], 2.0 * (1.1 - 0.3), epsilon = 1e-14);
}

#[test]
fn grad_sq_distance_matches_finite_differences() {
    for (m, xc, yc) in [
        (euclid(2), vec![0.2, 0.1], vec![-0.5, 0.9]),
        (sphere1(), vec![1.0, 0.0, 0.0], vec![0.0, 0.8, 0.6]),
        (h2(), vec![0.4, 1.3], vec![-0.2, 0.5]),
    ] {
        let x = m.point(xc).unwrap();
        let y = m.point(yc).unwrap();
        let (dx, _) = m.grad_sq_distance(&x, &y).unwrap();
        let h = 1e-6;
        for e in m.orthonormal_basis(&x) {
            let plus = m.exp_map(&x, &e.scaled(h)).unwrap();
            let minus = m.exp_map(&x, &e.scaled(-h)).unwrap();
            let fd = (m.distance(&plus, &y).powi(2) - m.distance(&minus, &y).powi(2)) / (2.0 * h);
            let analytic = m.pair(&dx, &e);
            assert_relative_eq!(fd, analytic, epsilon = 1e-6, max_relative = 1e-6);
        }
    }
}

#[test]
fn grad_sq_distance_transport_identity() {
    // Transporting the x-derivative along the connecting geodesic and
    // negating yields the y-derivative.
    let m = sphere1();
    let x = m.point(vec![1.0, 0.0, 0.0]).unwrap();
    let y = m.point(vec![0.0, 0.6, 0.8]).unwrap();
    let (dx, dy) = m.grad_sq_distance(&x, &y).unwrap();
    let moved = m.transport_along(&x, &y, &m.raise(&dx)).unwrap();
    let moved_flat = m.lower(&moved);
    assert_relative_eq!(
        (moved_flat.components() + dy.components()).norm(),
        0.0,
        epsilon = 1e-10
    );
}

#[test]
fn bvp_sphere_enumerates_windings() {
    let m = sphere1();
    let x = m.point(vec![1.0, 0.0, 0.0]).unwrap();
    let y = m.point(vec![0.0, 1.0, 0.0]).unwrap();
    let sols = m.geodesic_bvp(&x, &y, 3).unwrap();
    assert!(!sols.degenerate);
    let speeds: Vec<f64> = sols.velocities.iter().map(|v| m.norm(v)).collect();
    assert_relative_eq!(speeds[0], FRAC_PI_2, epsilon = 1e-12);
    assert_relative_eq!(speeds[1], 2.0 * PI - FRAC_PI_2, epsilon = 1e-12);
    assert_relative_eq!(speeds[2], 2.0 * PI + FRAC_PI_2, epsilon = 1e-12);
    // Every solution actually reaches y.
    for v in &sols.velocities {
        let reached = m.exp_map(&x, v).unwrap();
        assert!(m.distance(&reached, &y) < 1e-9);
    }
}

#[test]
fn bvp_same_point_gives_loops() {
    let m = sphere1();
    let x = m.point(vec![0.0, 0.0, 1.0]).unwrap();
    let sols = m.geodesic_bvp(&x, &x, 2).unwrap();
    let speeds: Vec<f64> = sols.velocities.iter().map(|v| m.norm(v)).collect();
    assert_relative_eq!(speeds[0], 0.0);
    assert_relative_eq!(speeds[1], 2.0 * PI, epsilon = 1e-12);
    let looped = m.exp_map(&x, &sols.velocities[1]).unwrap();
    assert!(m.distance(&looped, &x) < 1e-9);
}

#[test]
fn bvp_antipodal_is_degenerate() {
    let m = sphere1();
    let x = m.point(vec![0.0, 0.0, 1.0]).unwrap();
    let y = m.point(vec![0.0, 0.0, -1.0]).unwrap();
    let sols = m.geodesic_bvp(&x, &y, 4).unwrap();
    assert!(sols.degenerate);
    assert_eq!(sols.velocities.len(), 4);
    for v in &sols.velocities {
        assert_relative_eq!(m.norm(v), PI, epsilon = 1e-12);
        let reached = m.exp_map(&x, v).unwrap();
        assert!(m.distance(&reached, &y) < 1e-9);
    }
}

#[test]
fn euclidean_containment_values() {
    let m = euclid(2);
    let x0 = m.point(vec![0.0, 0.0]).unwrap();
    let x = m.point(vec![1.0, 0.0]).unwrap();
    let (val, diff) = m.containment(&x0, &x).unwrap();
    assert_relative_eq!(val, 2f64.ln(), epsilon = 1e-14);
    assert_relative_eq!(diff.components()[0], 1.0, epsilon = 1e-14); // 2*1/(1+1)
    let (at_center, d0) = m.containment(&x0, &x0).unwrap();
    assert_eq!(at_center, 0.0);
    assert_relative_eq!(d0.components().norm(), 0.0);
}

#[test]
fn containment_gradient_is_bounded() {
    // |d Upsilon|_g stays below 3 on a coarse grid out to distance ~5.
    let m = h2();
    let x0 = m.point(vec![0.0, 1.0]).unwrap();
    let mut max_grad: f64 = 0.0;
    for i in -5..=5 {
        for j in 1..=10 {
            let x = m.point(vec![i as f64 * 0.8, j as f64 * 0.5]).unwrap();
            let (_, diff) = m.containment(&x0, &x).unwrap();
            max_grad = max_grad.max(m.conorm(&diff));
        }
    }
    assert!(max_grad < 3.0, "gradient bound violated: {max_grad}");
    // The hyperbolic surrogate peaks at 2/sqrt(3).
    assert!(max_grad <= 2.0 / 3f64.sqrt() + 1e-9);
}

#[test]
fn containment_matches_finite_differences() {
    for (m, x0c, xc) in [
        (euclid(2), vec![0.1, -0.2], vec![0.7, 0.5]),
        (sphere1(), vec![0.0, 0.0, 1.0], vec![0.6, 0.0, 0.8]),
        (h2(), vec![0.0, 1.0], vec![0.9, 1.7]),
    ] {
        let x0 = m.point(x0c).unwrap();
        let x = m.point(xc).unwrap();
        let (_, diff) = m.containment(&x0, &x).unwrap();
        let h = 1e-6;
        for e in m.orthonormal_basis(&x) {
            let plus = m.exp_map(&x, &e.scaled(h)).unwrap();
            let minus = m.exp_map(&x, &e.scaled(-h)).unwrap();
            let fd = (m.containment(&x0, &plus).unwrap().0 - m.containment(&x0, &minus).unwrap().0)
                / (2.0 * h);
            assert_relative_eq!(fd, m.pair(&diff, &e), epsilon = 1e-6, max_relative = 1e-5);
        }
    }
}

#[test]
fn curve_validation_rejects_bad_input() {
    let m = sphere1();
    let x = m.point(vec![1.0, 0.0, 0.0]).unwrap();
    let y = m.point(vec![-1.0, 0.0, 0.0]).unwrap();
    // Antipodal consecutive samples are not a valid piecewise geodesic.
    assert!(matches!(
        Curve::new(&m, vec![0.0, 1.0], vec![x.clone(), y]),
        Err(Error::DegenerateCurve(_))
    ));
    let z = m.point(vec![0.0, 1.0, 0.0]).unwrap();
    assert!(matches!(
        Curve::new(&m, vec![0.0, 0.0], vec![x.clone(), z]),
        Err(Error::DegenerateCurve(_))
    ));
}

#[test]
fn ode_cross_checks_agree_with_closed_forms() {
    for (m, xc, vc) in [
        (sphere1(), vec![0.0, 0.0, 1.0], vec![0.9, -0.4, 0.0]),
        (h2(), vec![0.2, 1.1], vec![-0.8, 0.55]),
        (euclid(2), vec![0.0, 0.0], vec![1.0, 2.0]),
    ] {
        let x = m.point(xc).unwrap();
        let v = m.tangent(&x, vc).unwrap();
        let closed = m.exp_map(&x, &v).unwrap();
        let ode = ode::exp_map_ode(&m, &x, &v, 10_000).unwrap();
        assert!(
            m.distance(&closed, &ode) < 1e-8,
            "geodesic mismatch on {:?}",
            m.kind()
        );
        let refined = ode::exp_map_ode_refined(&m, &x, &v).unwrap();
        assert!(m.distance(&closed, &refined) < 1e-8);

        let w = m.orthonormal_basis(&x)[0].scaled(0.7);
        let closed_t = {
            let y = m.exp_map(&x, &v).unwrap();
            m.transport_along(&x, &y, &w).unwrap()
        };
        let ode_t = ode::transport_ode(&m, &x, &v, &w, 10_000).unwrap();
        assert!(
            (closed_t.components() - ode_t.components()).norm() < 1e-8,
            "transport mismatch on {:?}",
            m.kind()
        );
    }
}

#[test]
fn geodesic_sampling_carries_exact_velocities() {
    let m = sphere1();
    let x = m.point(vec![1.0, 0.0, 0.0]).unwrap();
    let v = m.tangent(&x, vec![0.0, 1.2, 0.3]).unwrap();
    let times: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let c = m.sample_geodesic(&x, &v, &times).unwrap();
    let vels = c.velocities().unwrap();
    for vel in vels {
        assert_relative_eq!(m.norm(vel), m.norm(&v), epsilon = 1e-12);
    }
    // Finite differences of the samples approximate the stored velocities.
    let fd = {
        let mut stripped = Curve::new(&m, c.times().to_vec(), c.points().to_vec()).unwrap();
        stripped.velocities = None;
        stripped.velocities_or_fd(&m).unwrap()
    };
    for (a, b) in fd.iter().zip(vels).skip(1).take(8) {
        assert!((a.components() - b.components()).norm() < 5e-3);
    }
}
