//! Locating surface points on triangles.

use super::{ChartKind, Point, TriangleMesh};
use crate::error::{Error, Result};

/// Meshes with at least this many triangles get a bounding-volume hierarchy.
pub const BVH_TRIANGLE_THRESHOLD: usize = 100_000;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLocation {
    pub triangle: usize,
    /// Barycentric weights of the triangle's vertices, nonnegative, summing to 1.
    pub weights: [f64; 3],
    /// Distance of the query point from the surface.
    pub distance: f64,
}

/// Closest point on triangle `abc` to `p`, as barycentric weights.
fn closest_barycentric(p: &Point, a: &Point, b: &Point, c: &Point) -> [f64; 3] {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [1.0 - v - w, v, w]
}

fn combine(w: [f64; 3], pts: &[Point; 3]) -> Point {
    pts[0] * w[0] + pts[1] * w[1] + pts[2] * w[2]
}

/// Barycentric coordinates of `q` (assumed in the plane of `abc`).
fn plane_barycentric(q: &Point, pts: &[Point; 3]) -> [f64; 3] {
    let [a, b, c] = pts;
    let n = (b - a).cross(&(c - a));
    let nn = n.norm_squared();
    let wa = (c - b).cross(&(q - b)).dot(&n) / nn;
    let wb = (a - c).cross(&(q - c)).dot(&n) / nn;
    [wa, wb, 1.0 - wa - wb]
}

fn clamp_weights(w: [f64; 3]) -> [f64; 3] {
    let c = [w[0].max(0.0), w[1].max(0.0), w[2].max(0.0)];
    let s = c[0] + c[1] + c[2];
    if s > 0.0 {
        [c[0] / s, c[1] / s, c[2] / s]
    } else {
        [1.0 / 3.0; 3]
    }
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Point,
    hi: Point,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Point::repeat(f64::INFINITY),
            hi: Point::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn distance_squared(&self, p: &Point) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let e = (self.lo[k] - p[k]).max(0.0).max(p[k] - self.hi[k]);
            d += e * e;
        }
        d
    }
}

#[derive(Debug)]
enum Node {
    Leaf { bbox: Aabb, start: usize, end: usize },
    Inner { bbox: Aabb, left: usize, right: usize },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

#[derive(Debug)]
struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    fn build(mesh: &TriangleMesh) -> Self {
        let centroids: Vec<Point> = (0..mesh.num_triangles()).map(|t| mesh.centroid(t)).collect();
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..mesh.num_triangles()).collect(),
        };
        let n = bvh.order.len();
        bvh.build_node(mesh, &centroids, 0, n);
        bvh
    }

    fn build_node(&mut self, mesh: &TriangleMesh, centroids: &[Point], start: usize, end: usize) -> usize {
        let mut bbox = Aabb::empty();
        let mut cbox = Aabb::empty();
        for &t in &self.order[start..end] {
            for p in mesh.triangle_points(t) {
                bbox.grow(&p);
            }
            cbox.grow(&centroids[t]);
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bbox, start, end });
            return id;
        }
        self.nodes.push(Node::Leaf { bbox, start, end });
        let ext = cbox.hi - cbox.lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis])
        });
        let left = self.build_node(mesh, centroids, start, mid);
        let right = self.build_node(mesh, centroids, mid, end);
        self.nodes[id] = Node::Inner { bbox, left, right };
        id
    }

    fn nearest(&self, mesh: &TriangleMesh, p: &Point) -> (usize, [f64; 3], f64) {
        let mut best = (usize::MAX, [0.0; 3], f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bbox().distance_squared(p) >= best.2 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        let pts = mesh.triangle_points(t);
                        let w = closest_barycentric(p, &pts[0], &pts[1], &pts[2]);
                        let d2 = (combine(w, &pts) - p).norm_squared();
                        if d2 < best.2 {
                            best = (t, w, d2);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bbox().distance_squared(p);
                    let dr = self.nodes[right].bbox().distance_squared(p);
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }
}

/// Finds containing triangles for free points on a mesh.
///
/// Uncharted meshes use the nearest triangle. Charted meshes (sphere,
/// cylinder) project the point radially onto the triangulation, so points on
/// the analytic surface are accepted even though the flat triangles lie
/// slightly inside it.
pub struct Locator<'a> {
    mesh: &'a TriangleMesh,
    bvh: Option<Bvh>,
    vertex_triangles: Vec<Vec<usize>>,
    tolerance: f64,
    z_range: (f64, f64),
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        let bvh = (mesh.num_triangles() >= BVH_TRIANGLE_THRESHOLD).then(|| Bvh::build(mesh));
        let (lo, hi) = mesh.bounding_box();
        Self {
            mesh,
            bvh,
            vertex_triangles: mesh.vertex_triangles(),
            tolerance: 1e-6 * mesh.bounding_box_diagonal(),
            z_range: (lo.z, hi.z),
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Nearest triangle, closest-point barycentrics and distance.
    pub fn nearest_triangle(&self, p: &Point) -> (usize, [f64; 3], f64) {
        if let Some(bvh) = &self.bvh {
            let (t, w, d2) = bvh.nearest(self.mesh, p);
            return (t, w, d2.sqrt());
        }
        let mut best = (0, [1.0, 0.0, 0.0], f64::INFINITY);
        for t in 0..self.mesh.num_triangles() {
            let pts = self.mesh.triangle_points(t);
            let w = closest_barycentric(p, &pts[0], &pts[1], &pts[2]);
            let d2 = (combine(w, &pts) - p).norm_squared();
            if d2 < best.2 {
                best = (t, w, d2);
            }
        }
        (best.0, best.1, best.2.sqrt())
    }

    fn radial(&self, kind: &ChartKind, p: &Point, t: usize) -> Option<[f64; 3]> {
        let pts = self.mesh.triangle_points(t);
        let (origin, dir) = match kind {
            ChartKind::Spherical { .. } => (Point::zeros(), *p),
            ChartKind::Cylindrical { .. } => (Point::new(0.0, 0.0, p.z), Point::new(p.x, p.y, 0.0)),
        };
        let n = (pts[1] - pts[0]).cross(&(pts[2] - pts[0]));
        let nd = n.dot(&dir);
        if nd.abs() <= 1e-14 * n.norm() * dir.norm() {
            return None;
        }
        let s = n.dot(&(pts[0] - origin)) / nd;
        if s <= 0.0 {
            return None;
        }
        let w = plane_barycentric(&(origin + dir * s), &pts);
        (w.iter().all(|&x| x >= -1e-10)).then_some(w)
    }

    /// Locates one point; `index` is only used in the error.
    pub fn locate(&self, p: &Point, index: usize) -> Result<PointLocation> {
        let (t0, w0, d0) = self.nearest_triangle(p);
        let (triangle, weights, distance) = match self.mesh.chart().map(|c| c.kind) {
            Some(kind) => {
                let mut dist = kind.surface_distance(p);
                if let ChartKind::Cylindrical { .. } = kind {
                    let excess = (self.z_range.0 - p.z).max(p.z - self.z_range.1).max(0.0);
                    dist = dist.max(excess);
                }
                let tri = self.mesh.triangles()[t0];
                let mut found = self.radial(&kind, p, t0).map(|w| (t0, w));
                if found.is_none() {
                    let mut cands: Vec<usize> = tri
                        .iter()
                        .flat_map(|&v| self.vertex_triangles[v].iter().copied())
                        .collect();
                    cands.sort_unstable();
                    cands.dedup();
                    let mut best: Option<(usize, [f64; 3], f64)> = None;
                    for t in cands {
                        if let Some(w) = self.radial(&kind, p, t) {
                            let m = w[0].min(w[1]).min(w[2]);
                            if best.is_none_or(|b| m > b.2) {
                                best = Some((t, w, m));
                            }
                        }
                    }
                    found = best.map(|(t, w, _)| (t, w));
                }
                let (t, w) = found.unwrap_or((t0, w0));
                (t, w, dist)
            }
            None => (t0, w0, d0),
        };
        if !(distance <= self.tolerance) {
            return Err(Error::Location {
                index,
                distance,
                tolerance: self.tolerance,
            });
        }
        Ok(PointLocation {
            triangle,
            weights: clamp_weights(weights),
            distance,
        })
    }

    pub fn locate_all(&self, points: &[Point]) -> Result<Vec<PointLocation>> {
        points.iter().enumerate().map(|(i, p)| self.locate(p, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_cylinder_mesh, generate_sphere_mesh};

    #[test]
    fn centroid_weights() {
        let m = generate_sphere_mesh(2).unwrap().without_chart();
        let loc = Locator::new(&m);
        let c = m.centroid(17);
        let l = loc.locate(&c, 0).unwrap();
        assert_eq!(l.triangle, 17);
        for w in l.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vertex_gives_unit_weight() {
        let m = generate_sphere_mesh(2).unwrap();
        let loc = Locator::new(&m);
        let l = loc.locate(&m.vertices()[5], 0).unwrap();
        let tri = m.triangles()[l.triangle];
        let k = tri.iter().position(|&v| v == 5).unwrap();
        assert!((l.weights[k] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn analytic_sphere_points_accepted_radially() {
        let m = generate_sphere_mesh(3).unwrap();
        let loc = Locator::new(&m);
        let kind = m.chart().unwrap().kind;
        for k in 0..50 {
            let p = kind.embed([0.05 + 3.0 * k as f64 / 50.0, 0.37 * k as f64]);
            let l = loc.locate(&p, k).unwrap();
            let pts = m.triangle_points(l.triangle);
            let q = combine(l.weights, &pts);
            assert!((q.normalize() - p).norm() < 1e-9, "point {k}");
        }
    }

    #[test]
    fn far_point_rejected() {
        let m = generate_sphere_mesh(1).unwrap();
        let loc = Locator::new(&m);
        match loc.locate(&Point::new(0.0, 0.0, 1.5), 3) {
            Err(Error::Location { index: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cylinder_radial_location() {
        let m = generate_cylinder_mesh(1.0, 0.0, 2.0, 12, 6).unwrap();
        let loc = Locator::new(&m);
        let kind = m.chart().unwrap().kind;
        let p = kind.embed([1.0, 0.7]);
        let l = loc.locate(&p, 0).unwrap();
        let q = combine(l.weights, &m.triangle_points(l.triangle));
        assert!((q.z - 0.7).abs() < 1e-9);
        assert!(loc.locate(&kind.embed([1.0, 2.5]), 0).is_err());
    }

    #[test]
    fn bvh_matches_exhaustive() {
        let m = generate_sphere_mesh(3).unwrap().without_chart();
        let bvh = Bvh::build(&m);
        let loc = Locator::new(&m);
        for k in 0..40 {
            let p = Point::new((k as f64).sin(), (1.3 * k as f64).cos(), 0.3 - 0.01 * k as f64) * 0.9;
            let (t1, _, d1) = loc.nearest_triangle(&p);
            let (_, _, d2) = bvh.nearest(&m, &p);
            assert!((d1 - d2.sqrt()).abs() < 1e-12, "{t1}");
        }
    }
}
