//! Run configuration: TOML schema, validation and resolution into solver
//! inputs.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use degdiff_core::field::{Grid, GridField};
use degdiff_core::graph::{build_graph, GraphSpec, MonotoneGraph};
use degdiff_core::oracles;

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphConfig,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    /// Optional strictly decreasing regularization weights for the
    /// continuation study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<ParticleConfig>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub steps: usize,
    /// Times at which field/ensemble snapshots are written; defaults to
    /// the initial and final time. Rounded to the step grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub count: usize,
    pub substeps: usize,
    pub seed: u64,
    /// `coupled` (default) or `selfconsistent`.
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    /// Dump every particle instead of the 999 plotting quantiles.
    #[serde(default)]
    pub full_dump: bool,
    /// Draw initial positions i.i.d. instead of stratified.
    #[serde(default)]
    pub iid_init: bool,
}

fn default_mode() -> String {
    "coupled".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl RunConfig {
    /// Parse and validate a TOML configuration file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        cfg.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    /// Field validity beyond what the types enforce.
    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        self.graph_spec()?;
        if !(self.grid.half_width > 0.0) || self.grid.cells < 3 {
            bail!("grid needs half_width > 0 and cells >= 3");
        }
        if !(self.time.horizon > 0.0) || self.time.steps == 0 {
            bail!("time needs horizon > 0 and steps >= 1");
        }
        if let Some(snaps) = &self.time.snapshots {
            for &t in snaps {
                if !(0.0..=self.time.horizon * (1.0 + 1e-12)).contains(&t) {
                    bail!("snapshot time {t} outside [0, {}]", self.time.horizon);
                }
            }
        }
        if let Some(eps) = &self.epsilon_list {
            if eps.is_empty() || eps.iter().any(|&e| e <= 0.0) {
                bail!("epsilon_list must be non-empty and positive");
            }
            if eps.windows(2).any(|p| p[1] >= p[0]) {
                bail!("epsilon_list must be strictly decreasing");
            }
        }
        if let Some(p) = &self.particles {
            if p.count == 0 || p.substeps == 0 {
                bail!("particles need count >= 1 and substeps >= 1");
            }
            match p.mode.as_str() {
                "coupled" | "selfconsistent" => {}
                other => bail!("unknown particle mode {other:?}"),
            }
            if let Some(b) = p.bandwidth {
                if !(b > 0.0) {
                    bail!("kernel bandwidth must be positive, got {b}");
                }
            }
        }
        if self.initial.profile == "csv" {
            let p = self
                .initial
                .path
                .as_ref()
                .context("initial.profile = \"csv\" needs initial.path")?;
            let resolved = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
            if !resolved.exists() {
                bail!("initial datum file {} does not exist", resolved.display());
            }
        }
        self.initial_label()?;
        Ok(())
    }

    pub fn graph_spec(&self) -> Result<GraphSpec> {
        let g = &self.graph;
        Ok(match g.kind.as_str() {
            "linear" => GraphSpec::Linear { slope: g.slope.context("linear graph needs slope")? },
            "power" => {
                GraphSpec::Power { exponent: g.exponent.context("power graph needs exponent")? }
            }
            "heaviside" => GraphSpec::Heaviside {
                threshold: g.threshold.context("heaviside graph needs threshold")?,
            },
            "table" => {
                GraphSpec::Table { points: g.points.clone().context("table graph needs points")? }
            }
            other => bail!("unknown graph kind {other:?}"),
        })
    }

    pub fn build_graph(&self) -> Result<MonotoneGraph> {
        Ok(build_graph(&self.graph_spec()?)?)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.grid.half_width, self.grid.cells)?)
    }

    fn initial_label(&self) -> Result<&str> {
        match self.initial.profile.as_str() {
            p @ ("gaussian" | "box" | "barenblatt" | "csv") => Ok(p),
            other => bail!("unknown initial profile {other:?}"),
        }
    }

    /// Materialize the initial datum on the run grid.
    pub fn build_initial(&self, base_dir: &Path) -> Result<GridField> {
        let grid = self.build_grid()?;
        let ini = &self.initial;
        Ok(match self.initial_label()? {
            "gaussian" => {
                let sigma = ini.sigma.context("gaussian profile needs sigma")?;
                if !(sigma > 0.0) {
                    bail!("gaussian sigma must be positive");
                }
                GridField::from_fn(grid, |x| oracles::heat_exact(sigma, 0.0, x))
            }
            "box" => {
                let height = ini.height.context("box profile needs height")?;
                let half = ini.half_width.context("box profile needs half_width")?;
                if !(height >= 0.0) || !(half > 0.0) {
                    bail!("box profile needs height >= 0 and half_width > 0");
                }
                GridField::from_fn(grid, move |x| if x.abs() < half { height } else { 0.0 })
            }
            "barenblatt" => {
                let m = ini.exponent.context("barenblatt profile needs exponent")?;
                let mass = ini.mass.unwrap_or(1.0);
                let t0 = ini.t0.context("barenblatt profile needs t0")?;
                // evaluate once to surface range errors early
                oracles::barenblatt(m, mass, t0, 0.0)?;
                GridField::from_fn(grid, move |x| {
                    oracles::barenblatt(m, mass, t0, x).unwrap_or(0.0)
                })
            }
            "csv" => {
                let p = ini.path.as_ref().context("csv profile needs path")?;
                let resolved = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                let (xs, vs) = crate::io::read_field_csv(&resolved)?;
                if xs.len() != grid.len() {
                    bail!(
                        "initial datum has {} rows but the grid has {} cells",
                        xs.len(),
                        grid.len()
                    );
                }
                for (i, &x) in xs.iter().enumerate() {
                    if (x - grid.node(i)).abs() > 1e-9 * (1.0 + x.abs()) {
                        bail!("initial datum node {i} at {x} does not match the grid");
                    }
                }
                GridField::new(grid, vs)?
            }
            _ => unreachable!(),
        })
    }

    /// Snapshot times resolved onto the step grid (sorted, deduplicated
    /// step indices).
    pub fn snapshot_indices(&self) -> Vec<usize> {
        let dt = self.time.horizon / self.time.steps as f64;
        let mut idx: Vec<usize> = match &self.time.snapshots {
            Some(times) => times
                .iter()
                .map(|&t| ((t / dt).round() as usize).min(self.time.steps))
                .collect(),
            None => vec![0, self.time.steps],
        };
        idx.sort_unstable();
        idx.dedup();
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> &'static str {
        r#"
            [graph]
            kind = "heaviside"
            threshold = 1.0

            [grid]
            half_width = 2.0
            cells = 100

            [initial]
            profile = "box"
            height = 1.5
            half_width = 0.3333333333333333

            [time]
            horizon = 0.5
            steps = 100

            [output]
            dir = "out/test"
        "#
    }

    #[test]
    fn parses_minimal_config() {
        let cfg: RunConfig = toml::from_str(minimal_toml()).unwrap();
        cfg.validate(Path::new(".")).unwrap();
        assert!(cfg.build_graph().is_ok());
        assert_eq!(cfg.snapshot_indices(), vec![0, 100]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let bad = minimal_toml().replace("[output]", "typo_key = 1\n[output]");
        assert!(toml::from_str::<RunConfig>(&bad).is_err());

        let mut cfg: RunConfig = toml::from_str(minimal_toml()).unwrap();
        cfg.time.snapshots = Some(vec![0.7]);
        assert!(cfg.validate(Path::new(".")).is_err());

        let mut cfg: RunConfig = toml::from_str(minimal_toml()).unwrap();
        cfg.epsilon_list = Some(vec![0.1, 0.2]);
        assert!(cfg.validate(Path::new(".")).is_err());

        let mut cfg: RunConfig = toml::from_str(minimal_toml()).unwrap();
        cfg.graph.kind = "cubic".into();
        assert!(cfg.validate(Path::new(".")).is_err());
    }

    #[test]
    fn snapshot_times_round_to_step_grid() {
        let mut cfg: RunConfig = toml::from_str(minimal_toml()).unwrap();
        cfg.time.snapshots = Some(vec![0.0, 0.2501, 0.5]);
        assert_eq!(cfg.snapshot_indices(), vec![0, 50, 100]);
    }

    #[test]
    fn initial_profiles_materialize() {
        let mut cfg: RunConfig = toml::from_str(minimal_toml()).unwrap();
        let u0 = cfg.build_initial(Path::new(".")).unwrap();
        assert!(degdiff_core::field::linf_norm(&u0) == 1.5);

        cfg.initial = InitialConfig {
            profile: "gaussian".into(),
            sigma: Some(1.0),
            height: None,
            half_width: None,
            exponent: None,
            mass: None,
            t0: None,
            path: None,
        };
        cfg.grid = GridConfig { half_width: 10.0, cells: 500 };
        let u0 = cfg.build_initial(Path::new(".")).unwrap();
        let mass = degdiff_core::field::integrate(&u0);
        assert!((mass - 1.0).abs() < 1e-6);
    }
}
