use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{Locator, Point, TriangleMesh};
use crate::error::{Error, Result};
use crate::sparse::SparseSymmetric;

#[derive(Clone, Debug, PartialEq)]
pub enum Sites {
    /// Distinct mesh vertex indices.
    Nodes(Vec<usize>),
    /// Points on (or within tolerance of) the surface.
    Points(Vec<Point>),
}

impl Sites {
    pub fn len(&self) -> usize {
        match self {
            Sites::Nodes(v) => v.len(),
            Sites::Points(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    pub sites: Sites,
    pub values: Vec<f64>,
    /// Noise standard deviation; zero means exact interpolation.
    pub tau: f64,
}

impl Observations {
    pub fn new(sites: Sites, values: Vec<f64>, tau: f64) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Parameter("at least one observation is required".into()));
        }
        if sites.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: sites.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("observation {i} is not finite")));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::Parameter(format!("noise tau must be >= 0, got {tau}")));
        }
        match &sites {
            Sites::Nodes(idx) => {
                let mut sorted = idx.clone();
                sorted.sort_unstable();
                if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                    return Err(Error::Parameter(format!("node {} observed twice", w[0])));
                }
            }
            Sites::Points(_) => {
                if tau == 0.0 {
                    return Err(Error::Parameter(
                        "free-point observations require a positive noise tau".into(),
                    ));
                }
            }
        }
        Ok(Self { sites, values, tau })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sparse `n x m` matrix whose rows hold the P1 basis functions evaluated at
/// the observation sites.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ProjectionMatrix {
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if let Some(&(j, _)) = r.iter().find(|e| e.0 >= ncols) {
                return Err(Error::Parameter(format!("row {i} has column {j} out of range")));
            }
        }
        Ok(Self { ncols, rows })
    }

    /// Indicator rows selecting the given nodes.
    pub fn indicator(ncols: usize, nodes: &[usize]) -> Result<Self> {
        Self::from_rows(ncols, nodes.iter().map(|&j| vec![(j, 1.0)]).collect())
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        self.rows.iter().map(|r| r.iter().map(|&(j, a)| a * x[j]).sum()).collect()
    }

    /// `A^T y`.
    pub fn mul_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows.len());
        let mut out = vec![0.0; self.ncols];
        for (r, &yi) in self.rows.iter().zip(y) {
            for &(j, a) in r {
                out[j] += a * yi;
            }
        }
        out
    }

    /// `A^T A` as a sparse symmetric matrix.
    pub fn gram(&self) -> SparseSymmetric {
        let t: Vec<(usize, usize, f64)> = self
            .rows
            .iter()
            .flat_map(|r| {
                r.iter().flat_map(move |&(i, a)| {
                    r.iter().filter(move |e| e.0 <= i).map(move |&(j, b)| (i, j, a * b))
                })
            })
            .collect();
        SparseSymmetric::from_triplets(self.ncols, &t).expect("indices validated on construction")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                a[(i, j)] += v;
            }
        }
        a
    }

    /// Node indices if every row is a single unit entry on distinct nodes.
    pub fn indicator_indices(&self) -> Option<Vec<usize>> {
        let idx: Option<Vec<usize>> = self
            .rows
            .iter()
            .map(|r| match r.as_slice() {
                [(j, v)] if *v == 1.0 => Some(*j),
                _ => None,
            })
            .collect();
        let idx = idx?;
        let mut s = idx.clone();
        s.sort_unstable();
        s.windows(2).all(|w| w[0] != w[1]).then_some(idx)
    }
}

/// Builds the projection matrix for observation sites on a mesh.
pub fn build_projection(mesh: &TriangleMesh, sites: &Sites) -> Result<ProjectionMatrix> {
    let m = mesh.num_vertices();
    match sites {
        Sites::Nodes(idx) => {
            if let Some(&bad) = idx.iter().find(|&&j| j >= m) {
                return Err(Error::Parameter(format!(
                    "observation node {bad} out of range for {m} vertices"
                )));
            }
            ProjectionMatrix::indicator(m, idx)
        }
        Sites::Points(points) => {
            let loc = Locator::new(mesh);
            let rows = loc
                .locate_all(points)?
                .into_iter()
                .map(|l| {
                    let tri = mesh.triangles()[l.triangle];
                    (0..3).filter(|&k| l.weights[k] > 0.0).map(|k| (tri[k], l.weights[k])).collect()
                })
                .collect();
            ProjectionMatrix::from_rows(m, rows)
        }
    }
}

/// Reads observations from CSV. The header row selects the mode:
/// `node_index,value` or `x,y,z,value`.
pub fn read_observations<R: Read>(input: R, tau: f64) -> Result<Observations> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Load { line: 1, message: e.to_string() })?
        .iter()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    let nodes = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["node_index", "value"] => true,
        ["x", "y", "z", "value"] => false,
        _ => {
            return Err(Error::Load {
                line: 1,
                message: "header must be 'node_index,value' or 'x,y,z,value'".into(),
            })
        }
    };
    let mut idx = Vec::new();
    let mut pts = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Load {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str| Error::Load {
            line,
            message: format!("bad {what}"),
        };
        let num = |k: usize, what: &str| -> Result<f64> {
            rec.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| bad(what))
        };
        if nodes {
            idx.push(rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("node index"))?);
            values.push(num(1, "value")?);
        } else {
            pts.push(Point::new(num(0, "x")?, num(1, "y")?, num(2, "z")?));
            values.push(num(3, "value")?);
        }
    }
    let sites = if nodes { Sites::Nodes(idx) } else { Sites::Points(pts) };
    Observations::new(sites, values, tau)
}

pub fn load_observations(path: &Path, tau: f64) -> Result<Observations> {
    read_observations(File::open(path)?, tau)
}

pub fn write_observations<W: Write>(obs: &Observations, mut out: W) -> Result<()> {
    match &obs.sites {
        Sites::Nodes(idx) => {
            writeln!(out, "node_index,value")?;
            for (i, v) in idx.iter().zip(&obs.values) {
                writeln!(out, "{i},{v}")?;
            }
        }
        Sites::Points(pts) => {
            writeln!(out, "x,y,z,value")?;
            for (p, v) in pts.iter().zip(&obs.values) {
                writeln!(out, "{},{},{},{v}", p.x, p.y, p.z)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_sphere_mesh;
    use proptest::prelude::*;

    #[test]
    fn node_rows_are_indicators() {
        let m = generate_sphere_mesh(1).unwrap();
        let a = build_projection(&m, &Sites::Nodes(vec![3, 7])).unwrap();
        assert_eq!(a.row(0), &[(3, 1.0)]);
        assert_eq!(a.indicator_indices(), Some(vec![3, 7]));
    }

    #[test]
    fn duplicate_nodes_rejected() {
        assert!(Observations::new(Sites::Nodes(vec![1, 1]), vec![0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn points_need_noise() {
        let s = Sites::Points(vec![Point::new(0.0, 0.0, 1.0)]);
        assert!(Observations::new(s.clone(), vec![1.0], 0.0).is_err());
        assert!(Observations::new(s, vec![1.0], 0.1).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let obs = Observations::new(
            Sites::Points(vec![Point::new(0.0, 0.6, 0.8), Point::new(1.0, 0.0, 0.0)]),
            vec![1.5, -2.0],
            0.1,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_observations(&obs, &mut buf).unwrap();
        assert_eq!(read_observations(&buf[..], 0.1).unwrap(), obs);
        let nodes = "node_index,value\n4,1.0\n9,2.0\n";
        let o = read_observations(nodes.as_bytes(), 0.0).unwrap();
        assert_eq!(o.sites, Sites::Nodes(vec![4, 9]));
    }

    #[test]
    fn gram_matches_dense() {
        let m = generate_sphere_mesh(1).unwrap();
        let pts: Vec<Point> = (0..5).map(|t| m.centroid(t * 3).normalize()).collect();
        let a = build_projection(&m, &Sites::Points(pts)).unwrap();
        let d = a.to_dense();
        assert!((a.gram().to_dense() - d.transpose() * &d).abs().max() < 1e-15);
    }

    proptest! {
        #[test]
        fn rows_partition_unity(theta in 0.01f64..3.13, phi in 0.0f64..6.28) {
            let m = generate_sphere_mesh(2).unwrap();
            let p = m.chart().unwrap().kind.embed([theta, phi]);
            let a = build_projection(&m, &Sites::Points(vec![p])).unwrap();
            let row = a.row(0);
            prop_assert!(row.len() <= 3);
            prop_assert!(row.iter().all(|e| e.1 >= 0.0));
            prop_assert!((row.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }
}
