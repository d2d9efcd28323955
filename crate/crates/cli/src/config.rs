//! Run configuration: TOML on input, echoed verbatim into every output.

use std::path::Path;

use julia_thermo::family::{AffineSlice, CubicParabolicFamily, ParameterFamily, QuadraticFamily};
use julia_thermo::Complex64;
use serde::{Deserialize, Serialize};

/// A complex number written as `[re, im]`.
pub type Pair = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyConfig,
    /// Required: every quantity here depends on the choice of eta.
    pub eta: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    /// Level used by the single-level metric commands; defaults to the
    /// deepest of `levels`.
    #[serde(default)]
    pub metric_level: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub directions: Vec<Vec<f64>>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub path: Option<PathConfig>,
    #[serde(default)]
    pub distance: Option<DistanceConfig>,
    #[serde(default)]
    pub per: Option<PerConfig>,
    #[serde(default = "default_budget")]
    pub fate_budget: usize,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_levels() -> Vec<usize> {
    julia_thermo::bowen::DEFAULT_LEVELS.to_vec()
}

fn default_budget() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilyConfig {
    /// `z^2 + c`, parameter `[re c, im c]`.
    Quadratic {
        #[serde(default)]
        parameter: Vec<f64>,
    },
    /// `z + z^2 + a z^3`, parameter `[re a, im a]`.
    CubicParabolic {
        #[serde(default)]
        parameter: Vec<f64>,
    },
    /// Coefficients (constant term first) `base + sum t_k directions[k]`.
    Affine {
        base: Vec<Pair>,
        #[serde(default)]
        directions: Vec<Vec<Pair>>,
        #[serde(default)]
        relations: Vec<(usize, Pair)>,
        #[serde(default)]
        parameter: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub solver: f64,
    pub newton: f64,
    pub psd: f64,
    pub gradient: f64,
    pub fd_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver: 1e-12,
            newton: 1e-10,
            psd: 1e-6,
            gradient: 1e-4,
            fd_step: 1e-3,
        }
    }
}

/// `psi = -theta log|f'| + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub nodes: Vec<Vec<f64>>,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default = "default_distance_budget")]
    pub budget: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_interior")]
    pub interior_nodes: usize,
}

fn default_distance_budget() -> usize {
    40
}

fn default_interior() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerConfig {
    pub period: usize,
    pub multiplier: Pair,
    pub seed_point: Pair,
    pub seed_parameter: Pair,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// File stem inside the output directory; defaults to the command name.
    #[serde(default)]
    pub stem: Option<String>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

fn pair(p: Pair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

impl RunConfig {
    /// Reads TOML, or the `config` block of a previously emitted JSON result.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            let mut doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let block = doc
                .get_mut("config")
                .map(serde_json::Value::take)
                .ok_or_else(|| bad("JSON input has no `config` key"))?;
            serde_json::from_value(block).map_err(|e| bad(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.tolerances;
        for (name, v) in [
            ("solver", t.solver),
            ("newton", t.newton),
            ("psd", t.psd),
            ("gradient", t.gradient),
            ("fd_step", t.fd_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(format!("tolerance `{name}` must be positive")));
            }
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(bad("levels must be a nonempty list of positive integers"));
        }
        if self.metric_level == Some(0) {
            return Err(bad("metric_level must be positive"));
        }
        let family = self.build_family()?;
        let degree = self.degree();
        let upper = (degree as f64).ln();
        if !(self.eta > 0.0 && self.eta < upper) {
            return Err(bad(format!("eta = {} must lie in (0, log {degree})", self.eta)));
        }
        let dim = family.real_dimension();
        let check = |what: &str, v: &[f64]| -> Result<(), ConfigError> {
            if v.len() != dim {
                return Err(bad(format!("{what} has {} coordinates, family needs {dim}", v.len())));
            }
            Ok(())
        };
        if !self.parameter().is_empty() {
            check("family.parameter", self.parameter())?;
        }
        for d in &self.directions {
            check("direction", d)?;
        }
        if let Some(g) = &self.grid {
            check("grid.lower", &g.lower)?;
            check("grid.upper", &g.upper)?;
            if g.resolution.len() != dim {
                return Err(bad("grid.resolution must match the parameter dimension"));
            }
        }
        if let Some(p) = &self.path {
            for n in &p.nodes {
                check("path node", n)?;
            }
        }
        if let Some(d) = &self.distance {
            check("distance.x", &d.x)?;
            check("distance.y", &d.y)?;
        }
        Ok(())
    }

    pub fn parameter(&self) -> &[f64] {
        match &self.family {
            FamilyConfig::Quadratic { parameter }
            | FamilyConfig::CubicParabolic { parameter }
            | FamilyConfig::Affine { parameter, .. } => parameter,
        }
    }

    pub fn build_family(&self) -> Result<Box<dyn ParameterFamily>, ConfigError> {
        Ok(match &self.family {
            FamilyConfig::Quadratic { .. } => Box::new(QuadraticFamily),
            FamilyConfig::CubicParabolic { .. } => Box::new(CubicParabolicFamily),
            FamilyConfig::Affine {
                base,
                directions,
                relations,
                ..
            } => {
                let slice = AffineSlice::new(
                    base.iter().copied().map(pair).collect(),
                    directions.iter().map(|d| d.iter().copied().map(pair).collect()).collect(),
                )
                .map_err(|e| bad(e.to_string()))?;
                Box::new(slice.with_relations(relations.iter().map(|&(n, m)| (n, pair(m))).collect()))
            }
        })
    }

    pub fn degree(&self) -> usize {
        match &self.family {
            FamilyConfig::Quadratic { .. } => 2,
            FamilyConfig::CubicParabolic { .. } => 3,
            FamilyConfig::Affine { base, .. } => base.len().saturating_sub(1),
        }
    }

    pub fn metric_level(&self) -> usize {
        self.metric_level
            .unwrap_or_else(|| *self.levels.iter().max().expect("levels validated nonempty"))
    }
}
