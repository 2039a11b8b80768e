use std::collections::HashMap;
use std::f64::consts::PI;

use super::{Chart, ChartKind, Point, TriangleMesh};
use crate::error::{Error, Result};

const ICOSAHEDRON_FACES: [[usize; 3]; 20] = [
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
];

fn icosahedron() -> Vec<Point> {
    let g = (1.0 + 5.0f64.sqrt()) / 2.0;
    [
        [-1.0, g, 0.0], [1.0, g, 0.0], [-1.0, -g, 0.0], [1.0, -g, 0.0],
        [0.0, -1.0, g], [0.0, 1.0, g], [0.0, -1.0, -g], [0.0, 1.0, -g],
        [g, 0.0, -1.0], [g, 0.0, 1.0], [-g, 0.0, -1.0], [-g, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Point::new(v[0], v[1], v[2]).normalize())
    .collect()
}

/// Unit icosphere built by frequency-`k` subdivision of every icosahedron
/// face, giving `10 k^2 + 2` vertices. Spherical chart attached.
pub fn icosphere(frequency: usize) -> Result<TriangleMesh> {
    if frequency == 0 {
        return Err(Error::Parameter("icosphere frequency must be at least 1".into()));
    }
    let k = frequency;
    let base = icosahedron();
    let mut vertices: Vec<Point> = Vec::with_capacity(10 * k * k + 2);
    let mut index: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    let mut triangles = Vec::with_capacity(20 * k * k);

    for face in ICOSAHEDRON_FACES {
        let mut face = face;
        let n = (base[face[1]] - base[face[0]]).cross(&(base[face[2]] - base[face[0]]));
        if n.dot(&(base[face[0]] + base[face[1]] + base[face[2]])) < 0.0 {
            face.swap(1, 2);
        }
        let [a, b, c] = face;
        let mut local = vec![vec![0usize; k + 1]; k + 1];
        for i in 0..=k {
            for j in 0..=k - i {
                let w = [(a, i), (b, j), (c, k - i - j)];
                let mut key: Vec<(usize, usize)> = w.iter().copied().filter(|e| e.1 > 0).collect();
                key.sort_unstable();
                let id = *index.entry(key).or_insert_with(|| {
                    let p = (base[a] * i as f64 + base[b] * j as f64 + base[c] * (k - i - j) as f64)
                        / k as f64;
                    vertices.push(p.normalize());
                    vertices.len() - 1
                });
                local[i][j] = id;
            }
        }
        for i in 0..k {
            for j in 0..k - i {
                triangles.push([local[i][j], local[i + 1][j], local[i][j + 1]]);
                if i + j + 1 < k {
                    triangles.push([local[i + 1][j], local[i + 1][j + 1], local[i][j + 1]]);
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles)?.with_computed_chart(ChartKind::Spherical { radius: 1.0 })
}

/// Unit icosphere where `refinement` halvings of the icosahedron edges give
/// 12, 42, 162, 642, 2562, ... vertices.
pub fn generate_sphere_mesh(refinement: u32) -> Result<TriangleMesh> {
    if refinement > 12 {
        return Err(Error::Parameter(format!("refinement {refinement} is too large")));
    }
    icosphere(1usize << refinement)
}

/// Unit sphere triangulated on a regular `(theta, phi)` grid with the given
/// step in degrees. The two poles are single vertices.
pub fn generate_sphere_grid(step_degrees: f64) -> Result<TriangleMesh> {
    if !(step_degrees > 0.0 && step_degrees <= 90.0) {
        return Err(Error::Parameter(format!(
            "grid step must lie in (0, 90] degrees, got {step_degrees}"
        )));
    }
    let rows = (180.0 / step_degrees).round() as usize;
    let cols = (360.0 / step_degrees).round() as usize;
    if rows < 2 || cols < 3 {
        return Err(Error::Parameter("grid step too coarse".into()));
    }
    let dt = PI / rows as f64;
    let dp = 2.0 * PI / cols as f64;
    let kind = ChartKind::Spherical { radius: 1.0 };

    let mut coords = vec![[0.0, 0.0]];
    for r in 1..rows {
        for c in 0..cols {
            coords.push([r as f64 * dt, c as f64 * dp]);
        }
    }
    coords.push([PI, 0.0]);
    let south = coords.len() - 1;
    let id = |r: usize, c: usize| 1 + (r - 1) * cols + c % cols;

    let mut triangles = Vec::new();
    for c in 0..cols {
        triangles.push([0, id(1, c), id(1, c + 1)]);
    }
    for r in 1..rows - 1 {
        for c in 0..cols {
            let (a, b, cc, d) = (id(r, c), id(r + 1, c), id(r + 1, c + 1), id(r, c + 1));
            triangles.push([a, b, cc]);
            triangles.push([a, cc, d]);
        }
    }
    for c in 0..cols {
        triangles.push([id(rows - 1, c), south, id(rows - 1, c + 1)]);
    }
    let vertices = coords.iter().map(|&uv| kind.embed(uv)).collect();
    TriangleMesh::new(vertices, triangles)?.with_chart(Chart { kind, coords })
}

/// Open cylinder around the z axis with `n_theta` nodes per ring and `n_z`
/// rings. Odd rings are rotated by half an angular step so each band splits
/// into near-isosceles triangles.
pub fn generate_cylinder_mesh(
    radius: f64,
    z_min: f64,
    z_max: f64,
    n_theta: usize,
    n_z: usize,
) -> Result<TriangleMesh> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Parameter(format!("cylinder radius must be positive, got {radius}")));
    }
    if !(z_max > z_min) || !z_min.is_finite() || !z_max.is_finite() {
        return Err(Error::Parameter(format!("need z_max > z_min, got [{z_min}, {z_max}]")));
    }
    if n_theta < 3 || n_z < 2 {
        return Err(Error::Parameter(format!(
            "need n_theta >= 3 and n_z >= 2, got {n_theta} x {n_z}"
        )));
    }
    let kind = ChartKind::Cylindrical { radius };
    let dt = 2.0 * PI / n_theta as f64;
    let dz = (z_max - z_min) / (n_z - 1) as f64;
    let mut coords = Vec::with_capacity(n_theta * n_z);
    for j in 0..n_z {
        let shift = if j % 2 == 1 { 0.5 } else { 0.0 };
        for i in 0..n_theta {
            coords.push([(i as f64 + shift) * dt, z_min + j as f64 * dz]);
        }
    }
    let id = |i: usize, j: usize| j * n_theta + i % n_theta;
    let mut triangles = Vec::with_capacity(2 * n_theta * (n_z - 1));
    for j in 0..n_z - 1 {
        for i in 0..n_theta {
            if j % 2 == 0 {
                triangles.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                triangles.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            } else {
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            }
        }
    }
    let vertices = coords.iter().map(|&uv| kind.embed(uv)).collect();
    TriangleMesh::new(vertices, triangles)?.with_chart(Chart { kind, coords })
}
