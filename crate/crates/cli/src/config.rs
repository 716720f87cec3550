//! Scenario configuration files (TOML, schema `fraccal/v1`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fraccal::grid::PointPredicate;
use fraccal::{make_grid, mask_from_predicate, DomainMask, Field, Flavor, Grid, Shape};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::scenarios::Scenario;

pub const SCHEMA: &str = "fraccal/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the output root unless absolute.
    pub output: Option<PathBuf>,
    pub grid: GridConfig,
    pub domain: Shape,
    #[serde(default)]
    pub windows: BTreeMap<String, Shape>,
    pub operator: OperatorConfig,
    pub conductivity: Option<FieldFamily>,
    pub potential: Option<FieldFamily>,
    /// Exterior background deviation `m₀` for the nonuniqueness construction.
    pub deviation: Option<FieldFamily>,
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub extent: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub s: f64,
    #[serde(default = "default_flavor")]
    pub flavor: Flavor,
}

fn default_flavor() -> Flavor {
    Flavor::Spectral
}

/// Parametric field families.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldFamily {
    Constant {
        value: f64,
    },
    /// `base + height · exp(1 - 1/(1 - r²))` inside the ball of `radius`.
    Bump {
        #[serde(default)]
        base: f64,
        center: Vec<f64>,
        radius: f64,
        height: f64,
    },
    /// `base + height` on a shape, `base` elsewhere.
    Plateau {
        #[serde(default)]
        base: f64,
        height: f64,
        shape: Shape,
    },
    /// One value per grid point, single column with a header row.
    Csv {
        path: PathBuf,
    },
}

impl FieldFamily {
    pub fn build(&self, grid: Grid, base_dir: &Path) -> CliResult<Field> {
        let field = match self {
            FieldFamily::Constant { value } => Field::constant(grid, *value),
            FieldFamily::Bump {
                base,
                center,
                radius,
                height,
            } => {
                if !(*radius > 0.0) {
                    return Err(CliError::Config("bump.radius must be positive".into()));
                }
                Field::from_fn(grid, |p| {
                    let r2: f64 = p
                        .iter()
                        .zip(center.iter().chain(std::iter::repeat(&0.0)))
                        .map(|(x, c)| ((x - c) / radius).powi(2))
                        .sum();
                    if r2 < 1.0 {
                        base + height * (1.0 - 1.0 / (1.0 - r2)).exp()
                    } else {
                        *base
                    }
                })?
            }
            FieldFamily::Plateau {
                base,
                height,
                shape,
            } => Field::from_fn(grid, |p| if shape.contains(p) { base + height } else { *base })?,
            FieldFamily::Csv { path } => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Config(format!("cannot read field file {}: {e}", path.display()))
                })?;
                let values = text
                    .lines()
                    .skip(1)
                    .filter(|l| !l.trim().is_empty())
                    .enumerate()
                    .map(|(i, l)| {
                        l.trim().parse::<f64>().map_err(|e| {
                            CliError::Config(format!("{}:{}: {e}", path.display(), i + 2))
                        })
                    })
                    .collect::<CliResult<Vec<f64>>>()?;
                if values.len() != grid.len() {
                    return Err(CliError::Config(format!(
                        "{}: {} values for a grid of {} points",
                        path.display(),
                        values.len(),
                        grid.len()
                    )));
                }
                Field::new(grid, values)?
            }
        };
        Ok(field)
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema != SCHEMA {
            return Err(CliError::Config(format!(
                "unsupported schema `{}` (expected `{SCHEMA}`)",
                cfg.schema
            )));
        }
        Scenario::from_name(&cfg.scenario)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn scenario(&self) -> Scenario {
        Scenario::from_name(&self.scenario).expect("validated on parse")
    }

    pub fn make_grid(&self) -> CliResult<Grid> {
        Ok(make_grid(self.grid.dim, self.grid.extent, self.grid.points)?)
    }

    pub fn mask(&self) -> CliResult<DomainMask> {
        self.mask_on(self.make_grid()?, &self.domain)
    }

    /// Mask for an arbitrary interior shape, carrying the configured windows.
    pub fn mask_on(&self, grid: Grid, domain: &Shape) -> CliResult<DomainMask> {
        let preds: Vec<_> = self
            .windows
            .iter()
            .map(|(name, shape)| (name.as_str(), move |p: &[f64]| shape.contains(p)))
            .collect();
        let refs: Vec<(&str, PointPredicate)> = preds.iter().map(|(n, f)| (*n, f as PointPredicate)).collect();
        Ok(mask_from_predicate(grid, |p| domain.contains(p), &refs)?)
    }

    pub fn family(&self, which: &'static str) -> CliResult<&FieldFamily> {
        let f = match which {
            "conductivity" => &self.conductivity,
            "potential" => &self.potential,
            "deviation" => &self.deviation,
            _ => unreachable!("unknown family slot"),
        };
        f.as_ref()
            .ok_or_else(|| CliError::Config(format!("missing table [{which}]")))
    }

    /// Scenario-specific parameters; unknown keys are rejected.
    pub fn params<P: DeserializeOwned>(&self) -> CliResult<P> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("[params]: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = "fraccal/v1"
scenario = "runge_decay"
[grid]
dim = 1
extent = 8.0
points = 32
[domain]
kind = "interval"
lo = -1.0
hi = 1.0
[operator]
s = 0.5
"#;

    #[test]
    fn parses_minimal() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.operator.flavor, Flavor::Spectral);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.mask().unwrap().interior().len(), 7);
    }

    #[test]
    fn missing_order_is_named() {
        let text = MINIMAL.replace("s = 0.5", "flavor = \"kernel\"");
        let msg = ScenarioConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("missing field `s`"), "{msg}");
    }

    #[test]
    fn wrong_schema() {
        let text = MINIMAL.replace("fraccal/v1", "fraccal/v0");
        assert!(matches!(ScenarioConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn families_build() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let bump = FieldFamily::Bump {
            base: 1.0,
            center: vec![0.0],
            radius: 1.0,
            height: 0.5,
        };
        let f = bump.build(g, Path::new(".")).unwrap();
        assert_eq!(f.values()[16], 1.5);
        assert_eq!(f.values()[0], 1.0);
        let plateau = FieldFamily::Plateau {
            base: 0.0,
            height: 2.0,
            shape: Shape::Interval { lo: -0.5, hi: 0.5 },
        };
        assert_eq!(plateau.build(g, Path::new(".")).unwrap().support().len(), 3);
    }
}
