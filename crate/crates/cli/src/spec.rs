//! Parsing of mesh and metric specification strings.

use std::path::Path;

use surfspline::mesh::{generate_cylinder_mesh, generate_sphere_grid, generate_sphere_mesh, icosphere, load_mesh, TriangleMesh};
use surfspline::metric::{load_metric_csv, MetricField};

use crate::Failure;

fn bad(spec: &str, what: &str) -> Failure {
    Failure::Input(format!("invalid {what} specification '{spec}'"))
}

fn num<T: std::str::FromStr>(s: &str, spec: &str, what: &str) -> Result<T, Failure> {
    s.trim().parse().map_err(|_| bad(spec, what))
}

pub fn parse_mesh(spec: &str, chart: Option<&Path>) -> Result<TriangleMesh, Failure> {
    let (kind, rest) = spec.split_once(':').ok_or_else(|| bad(spec, "mesh"))?;
    let mesh = match kind {
        "sphere" => generate_sphere_mesh(num(rest, spec, "mesh")?)?,
        "icosphere" => icosphere(num(rest, spec, "mesh")?)?,
        "sphere-grid" => generate_sphere_grid(num(rest, spec, "mesh")?)?,
        "cylinder" => {
            let parts: Vec<&str> = rest.split(':').collect();
            let (nt, nz) = parts[0].split_once('x').ok_or_else(|| bad(spec, "mesh"))?;
            let (z_min, z_max) = match parts.len() {
                1 => (0.0, 10.0),
                3 | 4 => (num(parts[1], spec, "mesh")?, num(parts[2], spec, "mesh")?),
                _ => return Err(bad(spec, "mesh")),
            };
            let radius = if parts.len() == 4 { num(parts[3], spec, "mesh")? } else { 1.0 };
            generate_cylinder_mesh(radius, z_min, z_max, num(nt, spec, "mesh")?, num(nz, spec, "mesh")?)?
        }
        "file" => {
            let path = Path::new(rest);
            if !path.exists() {
                return Err(Failure::Input(format!("mesh file {} does not exist", path.display())));
            }
            load_mesh(path, chart)?
        }
        _ => return Err(bad(spec, "mesh")),
    };
    Ok(mesh)
}

pub fn parse_metric(spec: &str, num_vertices: usize) -> Result<MetricField, Failure> {
    if spec == "isotropic" {
        return Ok(MetricField::Isotropic);
    }
    let (kind, rest) = spec.split_once(':').ok_or_else(|| bad(spec, "metric"))?;
    match kind {
        "constant" => {
            let v: Vec<f64> = rest
                .split(',')
                .map(|s| num(s, spec, "metric"))
                .collect::<Result<_, _>>()?;
            if v.len() != 3 {
                return Err(bad(spec, "metric"));
            }
            Ok(MetricField::constant(v[0], v[1], v[2])?)
        }
        "file" => Ok(load_metric_csv(Path::new(rest), num_vertices)?),
        _ => Err(bad(spec, "metric")),
    }
}
