mod common;

use common::{dense_fit, random_nodes, random_values};
use surfspline::fem::FemSystem;
use surfspline::likelihood::{log_likelihood, trend_estimate};
use surfspline::mesh::{build_projection, generate_cylinder_mesh, generate_sphere_mesh, Sites, TriangleMesh};
use surfspline::metric::MetricField;
use surfspline::spline::SplineModel;

fn check(mesh: &TriangleMesh, metric: &MetricField, n: usize, tau: f64, seed: u64) {
    let fem = FemSystem::assemble(mesh, metric).unwrap();
    let proj = build_projection(mesh, &Sites::Nodes(random_nodes(mesh.num_vertices(), n, seed))).unwrap();
    let y = random_values(n, seed);
    let dense = dense_fit(&fem, &proj, &y, tau);
    let model = SplineModel::new(fem, proj, tau).unwrap();
    let r = log_likelihood(&model, &y).unwrap();
    assert!(
        (r.loglik - dense.loglik).abs() < 1e-6,
        "loglik {} vs dense {} (tau {tau})",
        r.loglik,
        dense.loglik
    );
    assert!((r.logdet_term - dense.logdet).abs() < 1e-6);
    assert!((r.quad_term - dense.quad).abs() < 1e-6);
    let a = trend_estimate(&model, &y).unwrap();
    assert!((a - dense.trend).abs() <= 1e-8 * dense.trend.abs().max(1e-3));
}

#[test]
fn interpolation_matches_dense_density() {
    let mesh = generate_sphere_mesh(2).unwrap();
    for seed in 0..4 {
        check(&mesh, &MetricField::Isotropic, 6, 0.0, seed);
        check(&mesh, &MetricField::constant(0.7, 2.0, 0.6).unwrap(), 6, 0.0, seed);
    }
}

#[test]
fn smoothing_matches_dense_density() {
    let mesh = generate_sphere_mesh(2).unwrap();
    for seed in 0..4 {
        check(&mesh, &MetricField::Isotropic, 6, 0.1, seed);
        check(&mesh, &MetricField::constant(-0.3, 0.5, 1.8).unwrap(), 6, 0.1, seed);
    }
}

#[test]
fn cylinder_matches_dense_density() {
    let mesh = generate_cylinder_mesh(1.0, -1.0, 1.0, 12, 8).unwrap();
    let metric = MetricField::constant(0.4, 1.5, 0.8).unwrap();
    check(&mesh, &metric, 8, 0.0, 11);
    check(&mesh, &metric, 8, 0.2, 12);
}

#[test]
fn noise_enters_through_the_determinant() {
    let mesh = generate_sphere_mesh(2).unwrap();
    let fem = FemSystem::assemble(&mesh, &MetricField::Isotropic).unwrap();
    let proj = build_projection(&mesh, &Sites::Nodes(random_nodes(162, 6, 5))).unwrap();
    let y = random_values(6, 5);
    let mut terms = Vec::new();
    for tau in [0.05, 0.3] {
        let model = SplineModel::new(fem.clone(), proj.clone(), tau).unwrap();
        let r = log_likelihood(&model, &y).unwrap();
        let dense = dense_fit(&fem, &proj, &y, tau);
        assert!((r.logdet_term - dense.logdet).abs() < 1e-6);
        terms.push(r.logdet_term);
    }
    assert!((terms[0] - terms[1]).abs() > 1e-3);
}

#[test]
fn single_observation_is_finite() {
    let mesh = generate_sphere_mesh(1).unwrap();
    let fem = FemSystem::assemble(&mesh, &MetricField::Isotropic).unwrap();
    let proj = build_projection(&mesh, &Sites::Nodes(vec![3])).unwrap();
    let model = SplineModel::new(fem.clone(), proj.clone(), 0.0).unwrap();
    let r = log_likelihood(&model, &[0.7]).unwrap();
    let dense = dense_fit(&fem, &proj, &[0.7], 0.0);
    assert!(r.loglik.is_finite());
    assert!((r.loglik - dense.loglik).abs() < 1e-6);
}
