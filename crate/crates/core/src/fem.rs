//! P1 finite elements with lumped mass on a triangulated surface.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, DEGENERATE_RELATIVE_AREA};
use crate::metric::{element_frame, MetricField};
use crate::sparse::SparseSymmetric;

/// Deformed area and 3x3 stiffness of one element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementMatrices {
    pub area: f64,
    pub stiffness: [[f64; 3]; 3],
}

/// Plain embedded P1 element: `K_ij = (e_i . e_j) / (4 A)` with `e_i` the
/// edge opposite vertex `i`.
fn embedded_element(mesh: &TriangleMesh, t: usize) -> ElementMatrices {
    let [p0, p1, p2] = mesh.triangle_points(t);
    let e = [p2 - p1, p0 - p2, p1 - p0];
    let area = 0.5 * e[2].cross(&(-e[1])).norm();
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = e[i].dot(&e[j]) / (4.0 * area);
        }
    }
    ElementMatrices { area, stiffness: k }
}

/// Element under the metric `G` expressed in the orthonormal chart frame
/// projected on the triangle: area `A sqrt(det G)`, stiffness
/// `A sqrt(det G) g_i^T G^{-1} g_j`.
fn deformed_element(mesh: &TriangleMesh, t: usize, g: &Matrix2<f64>) -> Result<ElementMatrices> {
    let (t1, t2) = element_frame(mesh, t)?;
    let pts = mesh.triangle_points(t);
    let x: Vec<Vector2<f64>> = pts.iter().map(|p| Vector2::new(p.dot(&t1), p.dot(&t2))).collect();
    let b = Matrix2::from_columns(&[x[1] - x[0], x[2] - x[0]]);
    let det = b.determinant();
    let binv = b
        .try_inverse()
        .ok_or(Error::DegenerateTriangle { triangle: t, area: 0.0 })?;
    let g1 = binv.row(0).transpose();
    let g2 = binv.row(1).transpose();
    let grads = [-(g1 + g2), g1, g2];
    let ginv = g
        .try_inverse()
        .ok_or_else(|| Error::Parameter(format!("metric on triangle {t} is singular")))?;
    let sq = g.determinant().sqrt();
    let area = 0.5 * det.abs() * sq;
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * grads[i].dot(&(ginv * grads[j]));
        }
    }
    Ok(ElementMatrices { area, stiffness: k })
}

/// Element quantities of triangle `t` under `field`.
pub fn element_matrices(mesh: &TriangleMesh, field: &MetricField, t: usize) -> Result<ElementMatrices> {
    if field.is_isotropic() {
        Ok(embedded_element(mesh, t))
    } else {
        deformed_element(mesh, t, &field.element_metric(mesh, t))
    }
}

fn all_elements(mesh: &TriangleMesh, field: &MetricField) -> Result<Vec<ElementMatrices>> {
    field.validate_for(mesh)?;
    let elems: Vec<ElementMatrices> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| element_matrices(mesh, field, t))
        .collect::<Result<_>>()?;
    let mean = elems.iter().map(|e| e.area).sum::<f64>() / elems.len() as f64;
    for (t, e) in elems.iter().enumerate() {
        if !(e.area >= DEGENERATE_RELATIVE_AREA * mean) || !e.area.is_finite() {
            return Err(Error::DegenerateTriangle {
                triangle: t,
                area: e.area,
            });
        }
    }
    Ok(elems)
}

fn lump(mesh: &TriangleMesh, elems: &[ElementMatrices]) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for (tri, e) in mesh.triangles().iter().zip(elems) {
        for &v in tri {
            m[v] += e.area / 3.0;
        }
    }
    m
}

fn stiffness_from(mesh: &TriangleMesh, elems: &[ElementMatrices]) -> SparseSymmetric {
    let mut trip = Vec::with_capacity(6 * elems.len());
    for (tri, e) in mesh.triangles().iter().zip(elems) {
        for i in 0..3 {
            for j in 0..=i {
                let (a, b) = (tri[i], tri[j]);
                let v = if i == j {
                    e.stiffness[i][i]
                } else {
                    0.5 * (e.stiffness[i][j] + e.stiffness[j][i])
                };
                trip.push((a, b, v));
            }
        }
    }
    SparseSymmetric::from_triplets(mesh.num_vertices(), &trip).expect("mesh indices are validated")
}

/// Lumped mass: each vertex gets a third of the deformed area of its triangles.
pub fn assemble_lumped_mass(mesh: &TriangleMesh, field: &MetricField) -> Result<Vec<f64>> {
    Ok(lump(mesh, &all_elements(mesh, field)?))
}

pub fn assemble_stiffness(mesh: &TriangleMesh, field: &MetricField) -> Result<SparseSymmetric> {
    Ok(stiffness_from(mesh, &all_elements(mesh, field)?))
}

/// Constant vector with unit mass norm, `1 / |sqrt(M) 1|`.
pub fn compute_phi0(mass: &[f64]) -> Result<Vec<f64>> {
    check_mass(mass)?;
    let c = 1.0 / mass.iter().sum::<f64>().sqrt();
    Ok(vec![c; mass.len()])
}

/// `S = M^{-1/2} F M^{-1/2}`.
pub fn build_s_matrix(mass: &[f64], stiffness: &SparseSymmetric) -> Result<SparseSymmetric> {
    check_mass(mass)?;
    if mass.len() != stiffness.dim() {
        return Err(Error::DimensionMismatch {
            expected: stiffness.dim(),
            found: mass.len(),
        });
    }
    let d: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    Ok(stiffness.scale_symmetric(&d))
}

fn check_mass(mass: &[f64]) -> Result<()> {
    if mass.is_empty() {
        return Err(Error::Parameter("empty mass vector".into()));
    }
    if let Some(i) = mass.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(Error::Parameter(format!("mass entry {i} is not positive")));
    }
    Ok(())
}

/// Assembled finite-element operators of one surface and metric.
#[derive(Clone, Debug)]
pub struct FemSystem {
    mass: Vec<f64>,
    stiffness: SparseSymmetric,
    s_matrix: SparseSymmetric,
    phi0: Vec<f64>,
}

impl FemSystem {
    pub fn assemble(mesh: &TriangleMesh, field: &MetricField) -> Result<Self> {
        let elems = all_elements(mesh, field)?;
        Self::from_parts(lump(mesh, &elems), stiffness_from(mesh, &elems))
    }

    pub fn from_parts(mass: Vec<f64>, stiffness: SparseSymmetric) -> Result<Self> {
        let s_matrix = build_s_matrix(&mass, &stiffness)?;
        let phi0 = compute_phi0(&mass)?;
        Ok(Self {
            mass,
            stiffness,
            s_matrix,
            phi0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    /// Diagonal of the lumped mass matrix.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseSymmetric {
        &self.stiffness
    }

    pub fn s_matrix(&self) -> &SparseSymmetric {
        &self.s_matrix
    }

    pub fn phi0(&self) -> &[f64] {
        &self.phi0
    }

    /// `M phi0`.
    pub fn mass_phi0(&self) -> Vec<f64> {
        self.mass.iter().zip(&self.phi0).map(|(m, p)| m * p).collect()
    }

    /// `sqrt(M) phi0`, the kernel vector of `S`.
    pub fn kernel_vector(&self) -> Vec<f64> {
        self.mass.iter().zip(&self.phi0).map(|(m, p)| m.sqrt() * p).collect()
    }

    /// `Q = sqrt(M) S^2 sqrt(M) = F M^{-1} F`, sparse on the two-ring pattern.
    pub fn q_matrix(&self) -> SparseSymmetric {
        let inv: Vec<f64> = self.mass.iter().map(|m| 1.0 / m).collect();
        self.stiffness
            .weighted_square(&inv)
            .expect("mass and stiffness dimensions agree")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_cylinder_mesh, generate_sphere_mesh, Point};
    use std::f64::consts::PI;

    fn flat_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    // integrand grad(psi_i)^T G^{-1} grad(psi_j) sqrt(det G) from central
    // differences of the barycentric functions, times the element area
    fn quadrature_oracle(pts: [Vector2<f64>; 3], g: Matrix2<f64>) -> [[f64; 3]; 3] {
        let b = Matrix2::from_columns(&[pts[1] - pts[0], pts[2] - pts[0]]);
        let binv = b.try_inverse().unwrap();
        let lam = |x: Vector2<f64>| {
            let l = binv * (x - pts[0]);
            [1.0 - l[0] - l[1], l[0], l[1]]
        };
        let h = 1e-6;
        let c = (pts[0] + pts[1] + pts[2]) / 3.0;
        let grad = |i: usize| {
            let dx = (lam(c + Vector2::new(h, 0.0))[i] - lam(c - Vector2::new(h, 0.0))[i]) / (2.0 * h);
            let dy = (lam(c + Vector2::new(0.0, h))[i] - lam(c - Vector2::new(0.0, h))[i]) / (2.0 * h);
            Vector2::new(dx, dy)
        };
        let tri_area = 0.5 * b.determinant().abs();
        let ginv = g.try_inverse().unwrap();
        let sq = g.determinant().sqrt();
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = tri_area * sq * grad(i).dot(&(ginv * grad(j)));
            }
        }
        k
    }

    #[test]
    fn right_isosceles_stiffness() {
        let m = flat_triangle();
        let e = element_matrices(&m, &MetricField::Isotropic, 0).unwrap();
        let want = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((e.stiffness[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
        let mass = assemble_lumped_mass(&m, &MetricField::Isotropic).unwrap();
        assert!(mass.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn deformed_element_matches_quadrature() {
        let mesh = generate_cylinder_mesh(1.0, 0.0, 1.0, 8, 3).unwrap();
        let field = MetricField::constant(0.4, 1.8, 0.6).unwrap();
        let t = 3;
        let e = element_matrices(&mesh, &field, t).unwrap();
        let (t1, t2) = element_frame(&mesh, t).unwrap();
        let pts = mesh.triangle_points(t).map(|p| Vector2::new(p.dot(&t1), p.dot(&t2)));
        let k = quadrature_oracle(pts, field.element_metric(&mesh, t));
        for i in 0..3 {
            for j in 0..3 {
                assert!((e.stiffness[i][j] - k[i][j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn scaled_identity_metric() {
        let mesh = generate_sphere_mesh(2).unwrap();
        let base = FemSystem::assemble(&mesh, &MetricField::Isotropic).unwrap();
        let c = 1.7;
        let sys = FemSystem::assemble(&mesh, &MetricField::constant(0.3, c, c).unwrap()).unwrap();
        let diff = sys.stiffness().linear_combination(1.0, base.stiffness(), -1.0).unwrap();
        assert!(diff.inf_norm() < 1e-10 * base.stiffness().inf_norm());
        for (a, b) in sys.mass().iter().zip(base.mass()) {
            assert!((a - c * c * b).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn sphere_area_and_kernel() {
        let mesh = generate_sphere_mesh(3).unwrap();
        for field in [MetricField::Isotropic, MetricField::constant(0.7, 2.0, 0.5).unwrap()] {
            let sys = FemSystem::assemble(&mesh, &field).unwrap();
            let ones = vec![1.0; sys.dim()];
            let f1 = sys.stiffness().mul_vec(&ones);
            let fnorm = sys.stiffness().inf_norm();
            assert!(f1.iter().all(|v| v.abs() < 1e-10 * fnorm));
            let k = sys.kernel_vector();
            let sk = sys.s_matrix().mul_vec(&k);
            assert!(sk.iter().all(|v| v.abs() < 1e-10 * sys.s_matrix().inf_norm()));
            let norm: f64 = sys.mass().iter().zip(sys.phi0()).map(|(m, p)| m * p * p).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let sys = FemSystem::assemble(&mesh, &MetricField::Isotropic).unwrap();
        let total: f64 = sys.mass().iter().sum();
        assert!((total - 4.0 * PI).abs() < 0.01 * 4.0 * PI);
    }

    #[test]
    fn phi0_cases() {
        let p = compute_phi0(&[1.0; 4]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let q = compute_phi0(&[4.0; 4]).unwrap();
        assert!((q[0] - 0.25).abs() < 1e-15);
        assert!(compute_phi0(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn q_matrix_matches_dense() {
        let mesh = generate_sphere_mesh(1).unwrap();
        let sys = FemSystem::assemble(&mesh, &MetricField::Isotropic).unwrap();
        let f = sys.stiffness().to_dense();
        let minv = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            sys.dim(),
            sys.mass().iter().map(|m| 1.0 / m),
        ));
        let dense = &f * minv * &f;
        assert!((sys.q_matrix().to_dense() - dense).abs().max() < 1e-12);
    }

    #[test]
    fn anisotropy_without_chart_rejected() {
        let mesh = generate_sphere_mesh(1).unwrap().without_chart();
        let field = MetricField::constant(0.0, 2.0, 1.0).unwrap();
        assert!(matches!(FemSystem::assemble(&mesh, &field), Err(Error::Chart(_))));
    }
}
