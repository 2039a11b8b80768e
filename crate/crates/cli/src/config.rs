use std::path::{Path, PathBuf};

use serde::Deserialize;
use surfspline::fit::FitConfig;

use crate::args::{Snap, Truth};
use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: Option<String>,
    pub chart: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub metric: Option<String>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub truth: Option<Truth>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub design: DesignSection,
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub compare: CompareSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub n: Option<usize>,
    pub restarts: Option<usize>,
    pub snap: Option<Snap>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub n_grid: Option<Vec<usize>>,
    pub repeats: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub truncation: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::Input(format!("config {}: {e}", path.display())))?;
        // Relative paths in the file are taken relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        rebase(&mut cfg.chart);
        rebase(&mut cfg.observations);
        rebase(&mut cfg.output_dir);
        for spec in [&mut cfg.mesh, &mut cfg.metric].into_iter().flatten() {
            if let Some(rest) = spec.strip_prefix("file:") {
                if Path::new(rest).is_relative() {
                    *spec = format!("file:{}", base.join(rest).display());
                }
            }
        }
        Ok(cfg)
    }
}
