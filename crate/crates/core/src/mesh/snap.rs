use super::{Point, TriangleMesh};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SnapDistance {
    /// Straight-line distance in the embedding.
    #[default]
    Chord,
    /// Distance in chart coordinates with the longitude wrapped.
    Chart,
}

/// Replaces each point by its nearest mesh vertex. Points are processed in
/// order and a vertex already taken is skipped, so the result is distinct.
pub fn snap_to_nodes(mesh: &TriangleMesh, points: &[Point], distance: SnapDistance) -> Result<Vec<usize>> {
    let m = mesh.num_vertices();
    if points.len() > m {
        return Err(Error::Parameter(format!(
            "cannot snap {} points to {m} distinct vertices",
            points.len()
        )));
    }
    let chart = match distance {
        SnapDistance::Chord => None,
        SnapDistance::Chart => Some(
            mesh.chart()
                .ok_or_else(|| Error::Chart("chart distance requested on an uncharted mesh".into()))?,
        ),
    };
    let mut taken = vec![false; m];
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let uv = chart.map(|c| c.kind.coordinates(p));
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, v) in mesh.vertices().iter().enumerate() {
            if taken[j] {
                continue;
            }
            let d = match (chart, uv) {
                (Some(c), Some(uv)) => c.kind.chart_distance(uv, c.coords[j]),
                _ => (v - p).norm(),
            };
            if d < best.1 {
                best = (j, d);
            }
        }
        taken[best.0] = true;
        out.push(best.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_sphere_mesh;

    #[test]
    fn vertices_snap_to_themselves() {
        let m = generate_sphere_mesh(2).unwrap();
        let pts: Vec<Point> = [4usize, 90, 17].iter().map(|&i| m.vertices()[i] * 1.001).collect();
        for d in [SnapDistance::Chord, SnapDistance::Chart] {
            assert_eq!(snap_to_nodes(&m, &pts, d).unwrap(), vec![4, 90, 17]);
        }
    }

    #[test]
    fn duplicate_points_get_distinct_nodes() {
        let m = generate_sphere_mesh(1).unwrap();
        let p = m.vertices()[3];
        let idx = snap_to_nodes(&m, &[p, p], SnapDistance::Chord).unwrap();
        assert_eq!(idx[0], 3);
        assert_ne!(idx[1], 3);
    }
}
