use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use serde::Serialize;
use serde_json::json;
use surfspline::design::{node_design, DEFAULT_RESTARTS};
use surfspline::fem::FemSystem;
use surfspline::fit::{build_model, evaluate_rmse, optimize, FitResult};
use surfspline::likelihood::log_likelihood;
use surfspline::mesh::{
    build_projection, load_observations, save_chart_csv, write_off, write_observations, ChartKind, Observations,
    Sites, SnapDistance, TriangleMesh,
};
use surfspline::metric::{Anisotropy, MetricField};
use surfspline::reference::{f_cyl, f_sphere, ClassicalSpline, TruncatedSphericalKernel, DEFAULT_TRUNCATION};
use surfspline::sparse::PowerOptions;
use surfspline::spline::{select_alpha, SplineModel};

use crate::args::{BenchArgs, CompareArgs, DesignArgs, FitArgs, MeshArgs, MeshGenArgs, ModelArgs, PredictArgs, Snap, Truth};
use crate::config::RunConfig;
use crate::spec::{parse_mesh, parse_metric};
use crate::Failure;

const DEFAULT_N_GRID: [usize; 8] = [10, 20, 50, 100, 200, 500, 1000, 2000];

fn output_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = flag.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::Input(e.to_string()))?;
    writeln!(out).map_err(|e| Failure::Input(e.to_string()))?;
    Ok(())
}

fn write_predictions(path: &Path, values: &[f64]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| Failure::Input(e.to_string());
    w.write_record(["vertex_index", "prediction"]).map_err(io)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:.17e}")]).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Input(e.to_string()))?;
    Ok(())
}

fn load_mesh_args(args: &MeshArgs, cfg: &RunConfig) -> Result<TriangleMesh, Failure> {
    let spec = args
        .mesh
        .clone()
        .or_else(|| cfg.mesh.clone())
        .ok_or_else(|| Failure::Input("no mesh given (--mesh)".into()))?;
    let chart = args.chart.clone().or_else(|| cfg.chart.clone());
    parse_mesh(&spec, chart.as_deref())
}

fn truth_values(mesh: &TriangleMesh, truth: Truth) -> Result<Vec<f64>, Failure> {
    let chart = mesh
        .chart()
        .ok_or_else(|| Failure::Input("analytical truth needs a mesh with a chart".into()))?;
    match (truth, chart.kind) {
        (Truth::Sphere, ChartKind::Spherical { .. }) => Ok(chart.coords.iter().map(|c| f_sphere(c[0], c[1])).collect()),
        (Truth::Cylinder, ChartKind::Cylindrical { .. }) => {
            let z_max = chart.coords.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max);
            Ok(chart.coords.iter().map(|c| f_cyl(c[0], c[1], z_max)).collect())
        }
        _ => Err(Failure::Input(format!("truth function {truth:?} does not match the {} chart", chart.kind.name()))),
    }
}

pub fn mesh_gen(args: &MeshGenArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let mesh = if args.sphere {
        parse_mesh(&format!("sphere:{}", args.refinement), None)?
    } else if let Some(step) = args.sphere_grid {
        parse_mesh(&format!("sphere-grid:{step}"), None)?
    } else if args.cylinder {
        parse_mesh(
            &format!("cylinder:{}x{}:{}:{}:{}", args.ntheta, args.nz, args.z_min, args.z_max, args.radius),
            None,
        )?
    } else {
        load_mesh_args(&args.mesh, cfg)?
    };
    let dir = output_dir(&args.output_dir, cfg)?;
    let mut out = create(&dir.join("mesh.off"))?;
    write_off(&mesh, &mut out)?;
    out.flush().map_err(|e| Failure::Input(e.to_string()))?;
    if let Some(chart) = mesh.chart() {
        let mut out = create(&dir.join("mesh_chart.csv"))?;
        save_chart_csv(chart, &mut out)?;
        out.flush().map_err(|e| Failure::Input(e.to_string()))?;
    }
    let summary = json!({
        "vertices": mesh.num_vertices(),
        "edges": mesh.edges().len(),
        "faces": mesh.num_triangles(),
        "euler_characteristic": mesh.euler_characteristic(),
        "boundary_edges": mesh.boundary_edges().len(),
        "area": mesh.total_area(),
        "chart": mesh.chart().map(|c| c.kind.name()),
    });
    write_json(&dir.join("mesh_summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary).unwrap());
    Ok(())
}

pub fn design(args: &DesignArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let mesh = load_mesh_args(&args.mesh, cfg)?;
    let n = args
        .n
        .or(cfg.design.n)
        .ok_or_else(|| Failure::Input("design size missing (--n)".into()))?;
    let restarts = args.restarts.or(cfg.design.restarts).unwrap_or(DEFAULT_RESTARTS);
    let snap = match args.snap.or(cfg.design.snap).unwrap_or(Snap::Chord) {
        Snap::Chord => SnapDistance::Chord,
        Snap::Chart => SnapDistance::Chart,
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let nodes = node_design(&mesh, n, restarts, seed, snap)?;
    let values = match args.truth.or(cfg.truth) {
        Some(t) => {
            let truth = truth_values(&mesh, t)?;
            nodes.iter().map(|&i| truth[i]).collect()
        }
        None => vec![0.0; n],
    };
    let obs = Observations::new(Sites::Nodes(nodes), values, 0.0)?;
    let dir = output_dir(&args.output_dir, cfg)?;
    let mut out = create(&dir.join("observations.csv"))?;
    write_observations(&obs, &mut out)?;
    out.flush().map_err(|e| Failure::Input(e.to_string()))?;
    Ok(())
}

/// Mesh, observations and noise resolved from flags and config.
struct Problem {
    mesh: TriangleMesh,
    obs: Observations,
    tau: f64,
    truth: Option<Vec<f64>>,
}

fn load_problem(args: &ModelArgs, cfg: &RunConfig) -> Result<Problem, Failure> {
    let mesh = load_mesh_args(&args.mesh, cfg)?;
    let path = args
        .observations
        .clone()
        .or_else(|| cfg.observations.clone())
        .ok_or_else(|| Failure::Input("no observations given (--observations)".into()))?;
    if !path.exists() {
        return Err(Failure::Input(format!("observations file {} does not exist", path.display())));
    }
    let tau = args.tau.or(cfg.tau).unwrap_or(0.0);
    let obs = load_observations(&path, tau)?;
    if tau == 0.0 && matches!(obs.sites, Sites::Points(_)) {
        return Err(Failure::Input("observations at free points need a positive --tau".into()));
    }
    let truth = args.truth.or(cfg.truth).map(|t| truth_values(&mesh, t)).transpose()?;
    Ok(Problem { mesh, obs, tau, truth })
}

fn metric_arg(args: &ModelArgs, cfg: &RunConfig, mesh: &TriangleMesh) -> Result<MetricField, Failure> {
    let spec = args.metric.clone().or_else(|| cfg.metric.clone()).unwrap_or_else(|| "isotropic".into());
    let metric = parse_metric(&spec, mesh.num_vertices())?;
    metric.validate_for(mesh)?;
    Ok(metric)
}

pub fn predict(args: &PredictArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let args = &args.model;
    let p = load_problem(args, cfg)?;
    let metric = metric_arg(args, cfg, &p.mesh)?;
    let t0 = Instant::now();
    let fem = FemSystem::assemble(&p.mesh, &metric)?;
    let t_assemble = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let (alpha, bracket) = match args.alpha.or(cfg.alpha) {
        Some(a) => (a, None),
        None => {
            let sel = select_alpha(&fem, PowerOptions::default())?;
            (sel.alpha, Some((sel.lambda_min, sel.lambda_max)))
        }
    };
    let t_alpha = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let proj = build_projection(&p.mesh, &p.obs.sites)?;
    let model = SplineModel::with_alpha(fem, proj.clone(), p.tau, alpha)?;
    let t_factor = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let pred = model.predict(&p.obs.values)?;
    let t_predict = t0.elapsed().as_secs_f64();
    let loglik = log_likelihood(&model, &p.obs.values).ok().map(|r| r.loglik);

    let fitted = proj.mul(&pred.values);
    let residuals: Vec<f64> = fitted.iter().zip(&p.obs.values).map(|(f, y)| y - f).collect();
    let rmse = p.truth.as_ref().map(|t| evaluate_rmse(&pred.values, t)).transpose()?;
    let dir = output_dir(&args.output_dir, cfg)?;
    write_predictions(&dir.join("predictions.csv"), &pred.values)?;
    let diagnostics = json!({
        "m": p.mesh.num_vertices(),
        "n": p.obs.values.len(),
        "tau": p.tau,
        "scenario": if model.is_interpolation() { "interpolation" } else { "smoothing" },
        "alpha": alpha,
        "lambda_min": bracket.map(|b| b.0),
        "lambda_max": bracket.map(|b| b.1),
        "trend": pred.trend,
        "residual_norm": residuals.iter().map(|r| r * r).sum::<f64>().sqrt(),
        "max_abs_residual": residuals.iter().map(|r| r.abs()).fold(0.0, f64::max),
        "loglik": loglik,
        "rmse": rmse,
        "timings": {
            "assemble_seconds": t_assemble,
            "alpha_seconds": t_alpha,
            "factor_seconds": t_factor,
            "predict_seconds": t_predict,
        },
    });
    write_json(&dir.join("diagnostics.json"), &diagnostics)?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    #[serde(flatten)]
    result: FitResult,
    loglik_isotropic: Option<f64>,
    rmse_fitted: Option<f64>,
    rmse_isotropic: Option<f64>,
}

pub fn fit(args: &FitArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let p = load_problem(&args.model, cfg)?;
    if p.mesh.chart().is_none() {
        return Err(Failure::Input("fitting needs a mesh with a chart".into()));
    }
    let mut config = cfg.fit.clone().unwrap_or_default();
    if let Some(s) = args.seed.or(cfg.seed) {
        config.seed = s;
    }
    if let Some(e) = args.max_evaluations {
        config.max_evaluations = e;
    }
    if let Some(pop) = args.population {
        config.population = Some(pop);
    }
    if args.estimate_tau {
        config.estimate_tau = true;
    }
    if let Some(b) = &args.rho_bounds {
        config.rho_bounds = [b[0], b[1]];
    }
    config.validate()?;
    if config.estimate_tau && p.tau == 0.0 {
        return Err(Failure::Input("estimating tau needs a positive starting --tau".into()));
    }
    let result = optimize(&p.mesh, &p.obs, &config)?;
    let proj = build_projection(&p.mesh, &p.obs.sites)?;
    let tol = config.alpha_tolerance;
    let fitted = build_model(&p.mesh, &proj, &result.beta, result.tau, tol)?;
    let pred = fitted.predict(&p.obs.values)?;
    let iso = build_model(&p.mesh, &proj, &Anisotropy::identity(), p.tau, tol)?;
    let loglik_isotropic = log_likelihood(&iso, &p.obs.values).ok().map(|r| r.loglik);
    let (rmse_fitted, rmse_isotropic) = match &p.truth {
        Some(t) => (
            Some(evaluate_rmse(&pred.values, t)?),
            Some(evaluate_rmse(&iso.predict(&p.obs.values)?.values, t)?),
        ),
        None => (None, None),
    };
    let dir = output_dir(&args.model.output_dir, cfg)?;
    write_json(
        &dir.join("fit.json"),
        &FitReport {
            result,
            loglik_isotropic,
            rmse_fitted,
            rmse_isotropic,
        },
    )?;
    write_predictions(&dir.join("predictions.csv"), &pred.values)?;
    Ok(())
}

fn require_unit_sphere(mesh: &TriangleMesh) -> Result<(), Failure> {
    match mesh.chart().map(|c| c.kind) {
        Some(ChartKind::Spherical { radius }) if (radius - 1.0).abs() < 1e-12 => Ok(()),
        _ => Err(Failure::Input("the classical baseline needs a unit sphere mesh".into())),
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn site_points(mesh: &TriangleMesh, sites: &Sites) -> Vec<surfspline::mesh::Point> {
    match sites {
        Sites::Nodes(idx) => idx.iter().map(|&i| mesh.vertices()[i]).collect(),
        Sites::Points(p) => p.iter().map(|q| q.normalize()).collect(),
    }
}

pub fn compare(args: &CompareArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let p = load_problem(&args.model, cfg)?;
    require_unit_sphere(&p.mesh)?;
    let metric = metric_arg(&args.model, cfg, &p.mesh)?;
    let proj = build_projection(&p.mesh, &p.obs.sites)?;
    let run = |metric: &MetricField| -> Result<Vec<f64>, Failure> {
        let fem = FemSystem::assemble(&p.mesh, metric)?;
        let model = match args.model.alpha.or(cfg.alpha) {
            Some(a) => SplineModel::with_alpha(fem, proj.clone(), p.tau, a)?,
            None => SplineModel::new(fem, proj.clone(), p.tau)?,
        };
        Ok(model.predict(&p.obs.values)?.values)
    };
    let iso = run(&MetricField::Isotropic)?;
    let aniso = if metric.is_isotropic() { None } else { Some(run(&metric)?) };
    let kernel = TruncatedSphericalKernel::new(args.truncation.or(cfg.compare.truncation).unwrap_or(DEFAULT_TRUNCATION));
    let classical = ClassicalSpline::fit(&kernel, &site_points(&p.mesh, &p.obs.sites), &p.obs.values, p.tau)?
        .predict_at(p.mesh.vertices())?;

    let mut report = json!({
        "m": p.mesh.num_vertices(),
        "n": p.obs.values.len(),
        "tau": p.tau,
        "correlation_fem_isotropic_classical": correlation(&iso, &classical),
    });
    if let Some(a) = &aniso {
        report["correlation_fem_anisotropic_classical"] = json!(correlation(a, &classical));
        report["correlation_fem_anisotropic_isotropic"] = json!(correlation(a, &iso));
    }
    if let Some(t) = &p.truth {
        report["rmse_fem_isotropic"] = json!(evaluate_rmse(&iso, t)?);
        report["rmse_classical"] = json!(evaluate_rmse(&classical, t)?);
        if let Some(a) = &aniso {
            report["rmse_fem_anisotropic"] = json!(evaluate_rmse(a, t)?);
        }
    }
    let dir = output_dir(&args.model.output_dir, cfg)?;
    write_json(&dir.join("compare.json"), &report)?;
    Ok(())
}

pub fn bench(args: &BenchArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let mesh = load_mesh_args(&args.mesh, cfg)?;
    require_unit_sphere(&mesh)?;
    let m = mesh.num_vertices();
    let grid = args
        .n_grid
        .clone()
        .or_else(|| cfg.bench.n_grid.clone())
        .unwrap_or_else(|| DEFAULT_N_GRID.to_vec());
    if let Some(&n) = grid.iter().find(|&&n| n == 0 || n >= m) {
        return Err(Failure::Input(format!("sample size {n} must be between 1 and {}", m - 1)));
    }
    let tau = args.tau.or(cfg.tau).unwrap_or(0.0);
    let repeats = args.repeats.or(cfg.bench.repeats).unwrap_or(1).max(1);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let truth = truth_values(&mesh, Truth::Sphere)?;
    let fem = FemSystem::assemble(&mesh, &MetricField::Isotropic)?;
    let alpha = select_alpha(&fem, PowerOptions::default())?.alpha;
    let kernel = TruncatedSphericalKernel::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let dir = output_dir(&args.output_dir, cfg)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("timing.csv"))?);
    let io = |e: csv::Error| Failure::Input(e.to_string());
    w.write_record(["n", "fem_seconds", "classical_seconds"]).map_err(io)?;
    for &n in &grid {
        let nodes = rand::seq::index::sample(&mut rng, m, n).into_vec();
        let y: Vec<f64> = nodes.iter().map(|&i| truth[i]).collect();
        let proj = build_projection(&mesh, &Sites::Nodes(nodes.clone()))?;
        let pts: Vec<_> = nodes.iter().map(|&i| mesh.vertices()[i]).collect();
        let mut fem_best = f64::INFINITY;
        let mut cls_best = f64::INFINITY;
        for _ in 0..repeats {
            let t = Instant::now();
            SplineModel::with_alpha(fem.clone(), proj.clone(), tau, alpha)?.predict(&y)?;
            fem_best = fem_best.min(t.elapsed().as_secs_f64());
            let t = Instant::now();
            match ClassicalSpline::fit(&kernel, &pts, &y, tau).and_then(|c| c.predict_at(mesh.vertices())) {
                Ok(_) => cls_best = cls_best.min(t.elapsed().as_secs_f64()),
                Err(e) => {
                    log::warn!("classical prediction failed at n = {n}: {e}");
                    cls_best = f64::NAN;
                }
            }
        }
        log::info!("n = {n}: fem {fem_best:.4} s, classical {cls_best:.4} s");
        w.write_record([n.to_string(), fem_best.to_string(), cls_best.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Input(e.to_string()))?;
    Ok(())
}
