//! OFF meshes and chart sidecar files.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Chart, ChartKind, Point, TriangleMesh};
use crate::error::{Error, Result};

fn load_err(line: usize, message: impl Into<String>) -> Error {
    Error::Load {
        line,
        message: message.into(),
    }
}

/// Reads an ASCII OFF file. Only triangular faces are accepted.
pub fn read_off<R: BufRead>(input: R) -> Result<TriangleMesh> {
    // (line number, tokens) of every non-empty, non-comment line
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if !content.is_empty() {
            rows.push((no + 1, content.split_whitespace().map(str::to_string).collect()));
        }
    }
    let mut it = rows.into_iter();
    let (hline, mut header) = it.next().ok_or_else(|| load_err(1, "empty file"))?;
    if header.first().map(String::as_str) != Some("OFF") {
        return Err(load_err(hline, "missing OFF header"));
    }
    header.remove(0);
    let (cline, counts) = if header.is_empty() {
        it.next().ok_or_else(|| load_err(hline, "missing element counts"))?
    } else {
        (hline, header)
    };
    if counts.len() < 2 {
        return Err(load_err(cline, "expected vertex and face counts"));
    }
    let nv: usize = counts[0].parse().map_err(|_| load_err(cline, "bad vertex count"))?;
    let nf: usize = counts[1].parse().map_err(|_| load_err(cline, "bad face count"))?;

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let (line, tok) = it
            .next()
            .ok_or_else(|| load_err(cline, format!("file ends after {k} of {nv} vertices")))?;
        if tok.len() < 3 {
            return Err(load_err(line, format!("vertex {k} needs three coordinates")));
        }
        let mut c = [0.0; 3];
        for d in 0..3 {
            c[d] = tok[d]
                .parse()
                .map_err(|_| load_err(line, format!("bad coordinate '{}' in vertex {k}", tok[d])))?;
        }
        vertices.push(Point::new(c[0], c[1], c[2]));
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let (line, tok) = it
            .next()
            .ok_or_else(|| load_err(cline, format!("file ends after {f} of {nf} faces")))?;
        let arity: usize = tok[0]
            .parse()
            .map_err(|_| load_err(line, format!("bad vertex count in face {f}")))?;
        if arity != 3 {
            return Err(load_err(
                line,
                format!("face {f} has {arity} vertices; only triangles are supported"),
            ));
        }
        if tok.len() < 4 {
            return Err(load_err(line, format!("face {f} lists fewer than three indices")));
        }
        let mut t = [0usize; 3];
        for d in 0..3 {
            let v: usize = tok[d + 1]
                .parse()
                .map_err(|_| load_err(line, format!("bad index '{}' in face {f}", tok[d + 1])))?;
            if v >= nv {
                return Err(load_err(
                    line,
                    format!("face {f} references vertex {v} but only {nv} vertices exist"),
                ));
            }
            t[d] = v;
        }
        triangles.push(t);
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn write_off<W: Write>(mesh: &TriangleMesh, mut out: W) -> Result<()> {
    writeln!(out, "OFF")?;
    writeln!(out, "{} {} {}", mesh.num_vertices(), mesh.num_triangles(), mesh.edges().len())?;
    for v in mesh.vertices() {
        writeln!(out, "{} {} {}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// Reads a chart sidecar: a `# chart=spherical|cylindrical [radius=R]`
/// line followed by `vertex_index,u,v` rows. Without an explicit radius it
/// is inferred from the vertices.
pub fn read_chart_csv<R: Read>(input: R, vertices: &[Point]) -> Result<Chart> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let header = first.trim().trim_start_matches('#').trim();
    let mut kind_name = None;
    let mut radius = None;
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("chart", v)) => kind_name = Some(v.to_ascii_lowercase()),
            Some(("radius", v)) => {
                radius = Some(v.parse::<f64>().map_err(|_| load_err(1, "bad radius"))?)
            }
            _ => return Err(load_err(1, format!("unexpected header field '{field}'"))),
        }
    }
    let n = vertices.len().max(1) as f64;
    let kind = match kind_name.as_deref() {
        Some("spherical") => ChartKind::Spherical {
            radius: radius.unwrap_or_else(|| vertices.iter().map(|v| v.norm()).sum::<f64>() / n),
        },
        Some("cylindrical") => ChartKind::Cylindrical {
            radius: radius
                .unwrap_or_else(|| vertices.iter().map(|v| v.x.hypot(v.y)).sum::<f64>() / n),
        },
        Some(other) => return Err(load_err(1, format!("unknown chart '{other}'"))),
        None => return Err(load_err(1, "expected '# chart=spherical|cylindrical'")),
    };
    if !(kind.radius() > 0.0) {
        return Err(Error::Chart("chart radius must be positive".into()));
    }

    let mut coords: Vec<Option<[f64; 2]>> = vec![None; vertices.len()];
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    for rec in csv.records() {
        let rec = rec.map_err(|e| load_err(e.position().map_or(0, |p| p.line() as usize + 1), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize + 1);
        if rec.get(0) == Some("vertex_index") {
            continue;
        }
        if rec.len() != 3 {
            return Err(load_err(line, "expected 'vertex_index,u,v'"));
        }
        let i: usize = rec[0].parse().map_err(|_| load_err(line, "bad vertex index"))?;
        let u: f64 = rec[1].parse().map_err(|_| load_err(line, "bad u coordinate"))?;
        let v: f64 = rec[2].parse().map_err(|_| load_err(line, "bad v coordinate"))?;
        let slot = coords
            .get_mut(i)
            .ok_or_else(|| load_err(line, format!("vertex index {i} out of range")))?;
        if slot.is_some() {
            return Err(load_err(line, format!("vertex {i} listed twice")));
        }
        *slot = Some([u, v]);
    }
    let coords = coords
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::Chart(format!("vertex {i} has no chart coordinates"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Chart { kind, coords })
}

pub fn save_chart_csv<W: Write>(chart: &Chart, mut out: W) -> Result<()> {
    writeln!(out, "# chart={} radius={}", chart.kind.name(), chart.kind.radius())?;
    writeln!(out, "vertex_index,u,v")?;
    for (i, c) in chart.coords.iter().enumerate() {
        writeln!(out, "{i},{},{}", c[0], c[1])?;
    }
    Ok(())
}

pub fn load_chart_csv(path: &Path, vertices: &[Point]) -> Result<Chart> {
    read_chart_csv(File::open(path)?, vertices)
}

/// Loads an OFF mesh and, if given, its chart sidecar.
pub fn load_mesh(path: &Path, chart: Option<&Path>) -> Result<TriangleMesh> {
    let mesh = read_off(BufReader::new(File::open(path)?))?;
    match chart {
        Some(p) => {
            let c = load_chart_csv(p, mesh.vertices())?;
            mesh.with_chart(c)
        }
        None => Ok(mesh),
    }
}

/// Writes the mesh as OFF and, when it carries a chart, a sidecar CSV.
pub fn save_mesh(mesh: &TriangleMesh, path: &Path, chart: Option<&Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write_off(mesh, &mut f)?;
    f.flush()?;
    if let (Some(c), Some(p)) = (mesh.chart(), chart) {
        let mut f = std::io::BufWriter::new(File::create(p)?);
        save_chart_csv(c, &mut f)?;
        f.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_sphere_mesh;

    #[test]
    fn minimal_off() {
        let src = "OFF\n# comment\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let m = read_off(src.as_bytes()).unwrap();
        assert_eq!((m.num_vertices(), m.num_triangles()), (3, 1));
    }

    #[test]
    fn quad_face_rejected_with_line() {
        let src = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        match read_off(src.as_bytes()) {
            Err(Error::Load { line, message }) => {
                assert_eq!(line, 7);
                assert!(message.contains("face 0"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_index_rejected() {
        let src = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n";
        assert!(matches!(read_off(src.as_bytes()), Err(Error::Load { line: 6, .. })));
    }

    #[test]
    fn round_trip_sphere() {
        let m = generate_sphere_mesh(2).unwrap();
        let mut buf = Vec::new();
        write_off(&m, &mut buf).unwrap();
        let back = read_off(&buf[..]).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());

        let mut cbuf = Vec::new();
        save_chart_csv(m.chart().unwrap(), &mut cbuf).unwrap();
        let chart = read_chart_csv(&cbuf[..], back.vertices()).unwrap();
        assert_eq!(&chart, m.chart().unwrap());
    }

    #[test]
    fn chart_must_cover_all_vertices() {
        let m = generate_sphere_mesh(0).unwrap();
        let src = "# chart=spherical\nvertex_index,u,v\n0,0.1,0.2\n";
        assert!(matches!(read_chart_csv(src.as_bytes(), m.vertices()), Err(Error::Chart(_))));
    }
}
