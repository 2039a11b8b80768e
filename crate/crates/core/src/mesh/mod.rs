//! Triangulated surfaces, chart coordinates, observations and the
//! observation projection matrix.

mod generate;
mod io;
mod locate;
mod observations;
mod snap;

pub use generate::{generate_cylinder_mesh, generate_sphere_grid, generate_sphere_mesh, icosphere};
pub use io::{load_chart_csv, load_mesh, read_chart_csv, read_off, save_chart_csv, save_mesh, write_off};
pub use locate::{Locator, PointLocation, BVH_TRIANGLE_THRESHOLD};
pub use observations::{
    build_projection, load_observations, read_observations, write_observations, Observations,
    ProjectionMatrix, Sites,
};
pub use snap::{snap_to_nodes, SnapDistance};

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Relative area below which a triangle counts as degenerate.
pub const DEGENERATE_RELATIVE_AREA: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChartKind {
    /// `(theta, phi)`: colatitude in `[0, pi]` and longitude in `[0, 2 pi)`.
    Spherical { radius: f64 },
    /// `(theta, z)` around the z axis.
    Cylindrical { radius: f64 },
}

impl ChartKind {
    pub fn name(&self) -> &'static str {
        match self {
            ChartKind::Spherical { .. } => "spherical",
            ChartKind::Cylindrical { .. } => "cylindrical",
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            ChartKind::Spherical { radius } | ChartKind::Cylindrical { radius } => radius,
        }
    }

    /// Chart coordinates of a 3D point.
    pub fn coordinates(&self, p: &Point) -> [f64; 2] {
        let phi = {
            let a = p.y.atan2(p.x);
            if a < 0.0 {
                a + 2.0 * PI
            } else {
                a
            }
        };
        match self {
            ChartKind::Spherical { .. } => {
                let r = p.norm();
                let c = if r > 0.0 { (p.z / r).clamp(-1.0, 1.0) } else { 1.0 };
                [c.acos(), phi]
            }
            ChartKind::Cylindrical { .. } => [phi, p.z],
        }
    }

    /// Embedding of chart coordinates.
    pub fn embed(&self, uv: [f64; 2]) -> Point {
        match *self {
            ChartKind::Spherical { radius } => {
                let (st, ct) = uv[0].sin_cos();
                let (sp, cp) = uv[1].sin_cos();
                Point::new(radius * st * cp, radius * st * sp, radius * ct)
            }
            ChartKind::Cylindrical { radius } => {
                let (s, c) = uv[0].sin_cos();
                Point::new(radius * c, radius * s, uv[1])
            }
        }
    }

    /// Orthonormal tangent frame `(e_u, e_v)` of the chart at `uv`. Returns
    /// `None` where the chart is singular (sphere poles).
    pub fn frame(&self, uv: [f64; 2]) -> Option<(Point, Point)> {
        match self {
            ChartKind::Spherical { .. } => {
                let (st, ct) = uv[0].sin_cos();
                if st.abs() < 1e-12 {
                    return None;
                }
                let (sp, cp) = uv[1].sin_cos();
                Some((Point::new(ct * cp, ct * sp, -st), Point::new(-sp, cp, 0.0)))
            }
            ChartKind::Cylindrical { .. } => {
                let (s, c) = uv[0].sin_cos();
                Some((Point::new(-s, c, 0.0), Point::new(0.0, 0.0, 1.0)))
            }
        }
    }

    /// Distance from `p` to the analytic surface described by the chart.
    pub fn surface_distance(&self, p: &Point) -> f64 {
        match *self {
            ChartKind::Spherical { radius } => (p.norm() - radius).abs(),
            ChartKind::Cylindrical { radius } => (p.x.hypot(p.y) - radius).abs(),
        }
    }

    /// Distance between two points measured in chart coordinates, with the
    /// periodic longitude wrapped. Cylinder angles are scaled by the radius.
    pub fn chart_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let wrap = |d: f64| {
            let d = d.rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        };
        match *self {
            ChartKind::Spherical { .. } => (a[0] - b[0]).hypot(wrap(a[1] - b[1])),
            ChartKind::Cylindrical { radius } => (radius * wrap(a[0] - b[0])).hypot(a[1] - b[1]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub kind: ChartKind,
    pub coords: Vec<[f64; 2]>,
}

#[derive(Clone, Debug)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    chart: Option<Chart>,
}

impl TriangleMesh {
    /// Validates and builds a mesh: indices in range, no degenerate
    /// triangles, every vertex used, connected, manifold edges and
    /// consistent winding.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            chart: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_chart(mut self, chart: Chart) -> Result<Self> {
        if chart.coords.len() != self.vertices.len() {
            return Err(Error::Chart(format!(
                "chart has {} coordinates for {} vertices",
                chart.coords.len(),
                self.vertices.len()
            )));
        }
        let tol = 1e-6 * self.bounding_box_diagonal().max(f64::MIN_POSITIVE);
        for (i, (uv, v)) in chart.coords.iter().zip(&self.vertices).enumerate() {
            if !uv.iter().all(|c| c.is_finite()) {
                return Err(Error::Chart(format!("non-finite chart coordinate at vertex {i}")));
            }
            let d = (chart.kind.embed(*uv) - v).norm();
            if d > tol {
                return Err(Error::Chart(format!(
                    "chart coordinate of vertex {i} maps {d:e} away from the vertex"
                )));
            }
        }
        self.chart = Some(chart);
        Ok(self)
    }

    /// Attaches chart coordinates computed from the vertex positions.
    pub fn with_computed_chart(self, kind: ChartKind) -> Result<Self> {
        let coords = self.vertices.iter().map(|p| kind.coordinates(p)).collect();
        self.with_chart(Chart { kind, coords })
    }

    pub fn without_chart(mut self) -> Self {
        self.chart = None;
        self
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn chart(&self) -> Option<&Chart> {
        self.chart.as_ref()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal `(b - a) x (c - a)`; its norm is twice the area.
    pub fn triangle_normal(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.triangle_normal(t).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        (a + b + c) / 3.0
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.triangles.len() as i64
    }

    /// Edges used by exactly one triangle.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out: Vec<_> = count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
        out.sort_unstable();
        out
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }

    /// Sorted neighbour lists of the vertex graph.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            out[a].push(b);
            out[b].push(a);
        }
        for n in &mut out {
            n.sort_unstable();
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if nv < 3 || self.triangles.is_empty() {
            return Err(Error::Topology("mesh needs at least one triangle".into()));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::Topology(format!("vertex {i} has non-finite coordinates")));
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::Topology(format!(
                    "triangle {t} references vertex {bad} but the mesh has {nv} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateTriangle {
                    triangle: t,
                    area: 0.0,
                });
            }
        }
        let areas: Vec<f64> = (0..self.triangles.len()).map(|t| self.triangle_area(t)).collect();
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        for (t, &a) in areas.iter().enumerate() {
            if !(a >= DEGENERATE_RELATIVE_AREA * mean) || a == 0.0 {
                return Err(Error::DegenerateTriangle { triangle: t, area: a });
            }
        }

        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                if let Some(prev) = directed.insert((a, b), t) {
                    return Err(Error::Topology(format!(
                        "edge ({a}, {b}) has the same direction in triangles {prev} and {t}; winding is inconsistent"
                    )));
                }
                let c = undirected.entry((a.min(b), a.max(b))).or_default();
                *c += 1;
                if *c > 2 {
                    return Err(Error::Topology(format!(
                        "edge ({a}, {b}) is shared by more than two triangles"
                    )));
                }
            }
        }

        let mut adj = vec![Vec::new(); nv];
        for &(a, b) in undirected.keys() {
            adj[a].push(b);
            adj[b].push(a);
        }
        if let Some(i) = adj.iter().position(|n| n.is_empty()) {
            return Err(Error::Topology(format!("vertex {i} is not used by any triangle")));
        }
        let mut seen = vec![false; nv];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        if reached != nv {
            return Err(Error::Topology(format!(
                "mesh is not connected ({reached} of {nv} vertices reachable)"
            )));
        }
        Ok(())
    }
}
