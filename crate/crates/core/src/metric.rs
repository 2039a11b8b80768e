//! Riemannian metric deformations expressed in a surface chart.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use nalgebra::{Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ChartKind, Point, TriangleMesh};

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

pub fn rotation_matrix_2d(delta: f64) -> Matrix2<f64> {
    let (s, c) = delta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// `R_z(d3) R_y(d2) R_x(d1)` with the sign convention of the 2D rotation.
pub fn rotation_matrix_3d(d1: f64, d2: f64, d3: f64) -> Matrix3<f64> {
    let (s1, c1) = d1.sin_cos();
    let (s2, c2) = d2.sin_cos();
    let (s3, c3) = d3.sin_cos();
    let rz = Matrix3::new(c3, -s3, 0.0, s3, c3, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(c2, 0.0, -s2, 0.0, 1.0, 0.0, s2, 0.0, c2);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, c1, -s1, 0.0, s1, c1);
    rz * ry * rx
}

/// `R diag(rho^2) R^T` for three angles and three scalings.
pub fn deformation_matrix_3d(delta: [f64; 3], rho: [f64; 3]) -> Result<Matrix3<f64>> {
    if !rho.iter().all(|&r| r > 0.0 && r.is_finite()) {
        return Err(Error::Parameter(format!("scalings must be positive, got {rho:?}")));
    }
    let r = rotation_matrix_3d(delta[0], delta[1], delta[2]);
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(rho[0] * rho[0], rho[1] * rho[1], rho[2] * rho[2]));
    Ok(r * d * r.transpose())
}

/// Rotation angle and two scalings of a 2D chart deformation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anisotropy {
    pub delta: f64,
    pub rho: [f64; 2],
}

impl Anisotropy {
    pub fn new(delta: f64, rho1: f64, rho2: f64) -> Result<Self> {
        let a = Self {
            delta,
            rho: [rho1, rho2],
        };
        a.check()?;
        Ok(a)
    }

    pub fn identity() -> Self {
        Self {
            delta: 0.0,
            rho: [1.0, 1.0],
        }
    }

    fn check(&self) -> Result<()> {
        if !self.delta.is_finite() {
            return Err(Error::Parameter("rotation angle must be finite".into()));
        }
        if !self.rho.iter().all(|&r| r > 0.0 && r.is_finite()) {
            return Err(Error::Parameter(format!(
                "scalings must be positive, got {:?}",
                self.rho
            )));
        }
        Ok(())
    }

    /// `G = R(delta) diag(rho1^2, rho2^2) R(delta)^T`.
    pub fn matrix(&self) -> Matrix2<f64> {
        let r = rotation_matrix_2d(self.delta);
        let d = Matrix2::new(self.rho[0] * self.rho[0], 0.0, 0.0, self.rho[1] * self.rho[1]);
        r * d * r.transpose()
    }

    pub fn is_identity(&self) -> bool {
        self.rho == [1.0, 1.0]
    }
}

/// Hyperparameters of a constant deformation, optionally with the noise level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub beta: Anisotropy,
    pub tau: Option<f64>,
}

impl Hyperparameters {
    pub fn new(delta: f64, rho1: f64, rho2: f64, tau: Option<f64>) -> Result<Self> {
        if let Some(t) = tau {
            if !(t > 0.0) {
                return Err(Error::Parameter(format!("tau must be positive, got {t}")));
            }
        }
        Ok(Self {
            beta: Anisotropy::new(wrap_angle(delta), rho1, rho2)?,
            tau,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MetricField {
    Isotropic,
    Constant(Anisotropy),
    PerNode(Vec<Anisotropy>),
}

impl MetricField {
    pub fn constant(delta: f64, rho1: f64, rho2: f64) -> Result<Self> {
        Ok(MetricField::Constant(Anisotropy::new(delta, rho1, rho2)?))
    }

    pub fn per_node(values: Vec<Anisotropy>) -> Result<Self> {
        for a in &values {
            a.check()?;
        }
        Ok(MetricField::PerNode(values))
    }

    /// Checks the field against a mesh: per-node counts, and a chart for
    /// any non-isotropic field.
    pub fn validate_for(&self, mesh: &TriangleMesh) -> Result<()> {
        if let MetricField::PerNode(v) = self {
            if v.len() != mesh.num_vertices() {
                return Err(Error::DimensionMismatch {
                    expected: mesh.num_vertices(),
                    found: v.len(),
                });
            }
        }
        if !self.is_isotropic() && mesh.chart().is_none() {
            return Err(Error::Chart(
                "an anisotropic metric needs chart coordinates on the mesh".into(),
            ));
        }
        Ok(())
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self, MetricField::Isotropic)
    }

    /// Deformation parameters at a vertex.
    pub fn at_vertex(&self, v: usize) -> Anisotropy {
        match self {
            MetricField::Isotropic => Anisotropy::identity(),
            MetricField::Constant(a) => *a,
            MetricField::PerNode(p) => p[v],
        }
    }

    /// `G` at a vertex.
    pub fn deformation_matrix(&self, v: usize) -> Matrix2<f64> {
        self.at_vertex(v).matrix()
    }

    /// Piecewise-constant parameters on a triangle: circular mean of the
    /// angles, geometric mean of the scalings.
    pub fn element_parameters(&self, tri: [usize; 3]) -> Anisotropy {
        match self {
            MetricField::Isotropic => Anisotropy::identity(),
            MetricField::Constant(a) => *a,
            MetricField::PerNode(p) => {
                let [a, b, c] = tri.map(|v| p[v]);
                if a == b && b == c {
                    return a;
                }
                let (s, co) = [a, b, c]
                    .iter()
                    .fold((0.0, 0.0), |(s, co), x| (s + x.delta.sin(), co + x.delta.cos()));
                let delta = if s.hypot(co) < 1e-14 { a.delta } else { s.atan2(co) };
                let gm = |k: usize| ((a.rho[k].ln() + b.rho[k].ln() + c.rho[k].ln()) / 3.0).exp();
                Anisotropy {
                    delta,
                    rho: [gm(0), gm(1)],
                }
            }
        }
    }

    pub fn element_metric(&self, mesh: &TriangleMesh, t: usize) -> Matrix2<f64> {
        self.element_parameters(mesh.triangles()[t]).matrix()
    }
}

/// Orthonormal chart frame at the centroid of triangle `t`, projected onto
/// the triangle plane. Near the sphere poles the frame of longitude zero is
/// used instead.
pub fn element_frame(mesh: &TriangleMesh, t: usize) -> Result<(Point, Point)> {
    let chart = mesh
        .chart()
        .ok_or_else(|| Error::Chart("mesh has no chart".into()))?;
    let c = mesh.centroid(t);
    let uv = chart.kind.coordinates(&c);
    let frame = match chart.kind {
        ChartKind::Spherical { .. } if uv[0].cos().abs() > 1.0 - 1e-9 => {
            chart.kind.frame([uv[0].clamp(1e-6, PI - 1e-6), 0.0])
        }
        _ => chart.kind.frame(uv),
    };
    let (eu, ev) = frame.ok_or_else(|| Error::Chart(format!("chart is singular at triangle {t}")))?;
    let n = mesh.triangle_normal(t).normalize();
    let t1 = eu - n * eu.dot(&n);
    let t1n = t1.norm();
    if t1n < 1e-8 {
        return Err(Error::Chart(format!("chart frame is normal to triangle {t}")));
    }
    let t1 = t1 / t1n;
    let t2 = ev - n * ev.dot(&n) - t1 * ev.dot(&t1);
    let t2n = t2.norm();
    if t2n < 1e-8 {
        return Err(Error::Chart(format!("chart frame is degenerate on triangle {t}")));
    }
    Ok((t1, t2 / t2n))
}

/// Reads a per-node metric CSV with header `vertex_index,delta,rho1,rho2`.
pub fn read_metric_csv<R: Read>(input: R, num_vertices: usize) -> Result<MetricField> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Load { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["vertex_index", "delta", "rho1", "rho2"] {
        return Err(Error::Load {
            line: 1,
            message: "header must be 'vertex_index,delta,rho1,rho2'".into(),
        });
    }
    let mut values: Vec<Option<Anisotropy>> = vec![None; num_vertices];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Load {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |m: String| Error::Load { line, message: m };
        if rec.len() != 4 {
            return Err(bad("expected four fields".into()));
        }
        let i: usize = rec[0].parse().map_err(|_| bad("bad vertex index".into()))?;
        let f = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(format!("bad number '{}'", &rec[k])));
        let a = Anisotropy::new(f(1)?, f(2)?, f(3)?).map_err(|e| bad(e.to_string()))?;
        let slot = values
            .get_mut(i)
            .ok_or_else(|| bad(format!("vertex index {i} out of range")))?;
        if slot.replace(a).is_some() {
            return Err(bad(format!("vertex {i} listed twice")));
        }
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| Error::Parameter(format!("vertex {i} has no metric entry"))))
        .collect::<Result<Vec<_>>>()?;
    MetricField::per_node(values)
}

pub fn load_metric_csv(path: &Path, num_vertices: usize) -> Result<MetricField> {
    read_metric_csv(std::fs::File::open(path)?, num_vertices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_sphere_mesh;
    use proptest::prelude::*;

    #[test]
    fn rotation_cases() {
        assert_eq!(rotation_matrix_2d(0.0), Matrix2::identity());
        let q = rotation_matrix_2d(PI / 2.0);
        assert!((q - Matrix2::new(0.0, -1.0, 1.0, 0.0)).abs().max() < 1e-15);
    }

    #[test]
    fn diagonal_deformation() {
        let g = Anisotropy::new(0.0, 2.0, 0.5).unwrap().matrix();
        assert_eq!(g, Matrix2::new(4.0, 0.0, 0.0, 0.25));
    }

    #[test]
    fn wrap_range() {
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_scaling() {
        assert!(Anisotropy::new(0.0, 0.0, 1.0).is_err());
        assert!(MetricField::constant(0.1, 1.0, -2.0).is_err());
    }

    #[test]
    fn per_node_equal_tuples_match_constant() {
        let a = Anisotropy::new(2.9, 1.7, 0.3).unwrap();
        let f = MetricField::per_node(vec![a; 12]).unwrap();
        assert_eq!(f.element_parameters([0, 1, 2]), a);
    }

    #[test]
    fn circular_mean_across_seam() {
        let f = MetricField::per_node(vec![
            Anisotropy::new(PI - 0.1, 1.0, 1.0).unwrap(),
            Anisotropy::new(-PI + 0.1, 1.0, 1.0).unwrap(),
            Anisotropy::new(PI, 1.0, 1.0).unwrap(),
        ])
        .unwrap();
        let d = f.element_parameters([0, 1, 2]).delta;
        assert!((wrap_angle(d) - PI).abs() < 1e-12);
    }

    #[test]
    fn frames_are_tangent_and_orthonormal() {
        let m = generate_sphere_mesh(2).unwrap();
        for t in 0..m.num_triangles() {
            let (a, b) = element_frame(&m, t).unwrap();
            let n = m.triangle_normal(t).normalize();
            assert!(a.dot(&n).abs() < 1e-12 && b.dot(&n).abs() < 1e-12);
            assert!(a.dot(&b).abs() < 1e-12);
            assert!(a.cross(&b).dot(&n) > 0.0);
        }
    }

    #[test]
    fn metric_csv() {
        let src = "vertex_index,delta,rho1,rho2\n1,0.5,2,0.5\n0,0,1,1\n";
        let f = read_metric_csv(src.as_bytes(), 2).unwrap();
        assert_eq!(f.at_vertex(1), Anisotropy::new(0.5, 2.0, 0.5).unwrap());
        assert!(read_metric_csv(src.as_bytes(), 3).is_err());
    }

    proptest! {
        #[test]
        fn spectrum_is_rho_squared(delta in -10.0f64..10.0, r1 in 0.05f64..20.0, r2 in 0.05f64..20.0) {
            let g = Anisotropy::new(delta, r1, r2).unwrap().matrix();
            prop_assert!((g - g.transpose()).abs().max() < 1e-14 * g.abs().max());
            let mut ev: Vec<f64> = g.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let mut want = [r1 * r1, r2 * r2];
            want.sort_by(f64::total_cmp);
            prop_assert!((ev[0] - want[0]).abs() < 1e-10 * want[1]);
            prop_assert!((ev[1] - want[1]).abs() < 1e-10 * want[1]);
            prop_assert!((g.determinant() - (r1 * r2).powi(2)).abs() < 1e-12 * (r1 * r2).powi(2).max(1.0));
            prop_assert!(g.cholesky().is_some());
            let swapped = Anisotropy::new(delta + PI / 2.0, r2, r1).unwrap().matrix();
            prop_assert!((g - swapped).abs().max() < 1e-10 * want[1]);
        }

        #[test]
        fn rotation_orthogonal(delta in -10.0f64..10.0, d2 in -3.0f64..3.0, d3 in -3.0f64..3.0) {
            let r = rotation_matrix_2d(delta);
            prop_assert!((r * r.transpose() - Matrix2::identity()).abs().max() < 1e-14);
            let r3 = rotation_matrix_3d(delta, d2, d3);
            prop_assert!((r3 * r3.transpose() - Matrix3::identity()).abs().max() < 1e-14);
            prop_assert!((r3.determinant() - 1.0).abs() < 1e-14);
        }
    }
}
