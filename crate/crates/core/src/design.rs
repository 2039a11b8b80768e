//! Space-filling observation designs in chart coordinates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{snap_to_nodes, ChartKind, SnapDistance, TriangleMesh};

pub const DEFAULT_RESTARTS: usize = 200;

/// One Latin hypercube sample of `n` points in the box `bounds`.
pub fn latin_hypercube<R: Rng>(n: usize, bounds: [[f64; 2]; 2], rng: &mut R) -> Vec<[f64; 2]> {
    let mut cols: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for (c, b) in cols.iter_mut().zip(bounds) {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        c.extend(
            strata
                .into_iter()
                .map(|s| b[0] + (b[1] - b[0]) * (s as f64 + rng.random::<f64>()) / n as f64),
        );
    }
    (0..n).map(|i| [cols[0][i], cols[1][i]]).collect()
}

fn min_distance<D: Fn([f64; 2], [f64; 2]) -> f64>(pts: &[[f64; 2]], dist: &D) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in 0..i {
            best = best.min(dist(pts[i], pts[j]));
        }
    }
    best
}

/// Best of `restarts` Latin hypercube samples under the maximin criterion.
pub fn maximin_lhs<D>(n: usize, bounds: [[f64; 2]; 2], restarts: usize, seed: u64, dist: D) -> Vec<[f64; 2]>
where
    D: Fn([f64; 2], [f64; 2]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for _ in 0..restarts.max(1) {
        let cand = latin_hypercube(n, bounds, &mut rng);
        let d = min_distance(&cand, &dist);
        if d > best.1 {
            best = (cand, d);
        }
    }
    best.0
}

/// Chart box covered by the mesh.
pub fn chart_bounds(mesh: &TriangleMesh) -> Result<(ChartKind, [[f64; 2]; 2])> {
    let chart = mesh
        .chart()
        .ok_or_else(|| Error::Chart("designs need a mesh with a chart".into()))?;
    let bounds = match chart.kind {
        ChartKind::Spherical { .. } => [[0.0, std::f64::consts::PI], [0.0, 2.0 * std::f64::consts::PI]],
        ChartKind::Cylindrical { .. } => {
            let (lo, hi) = chart
                .coords
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c[1]), hi.max(c[1])));
            [[0.0, 2.0 * std::f64::consts::PI], [lo, hi]]
        }
    };
    Ok((chart.kind, bounds))
}

/// Maximin design of `n` distinct mesh nodes: sampled in chart space, then
/// snapped to the nearest free vertex.
pub fn node_design(
    mesh: &TriangleMesh,
    n: usize,
    restarts: usize,
    seed: u64,
    snap: SnapDistance,
) -> Result<Vec<usize>> {
    if n == 0 || n > mesh.num_vertices() {
        return Err(Error::Parameter(format!(
            "design size {n} must be between 1 and the number of vertices {}",
            mesh.num_vertices()
        )));
    }
    let (kind, bounds) = chart_bounds(mesh)?;
    let uv = maximin_lhs(n, bounds, restarts, seed, |a, b| kind.chart_distance(a, b));
    let points: Vec<_> = uv.into_iter().map(|c| kind.embed(c)).collect();
    snap_to_nodes(mesh, &points, snap)
}
