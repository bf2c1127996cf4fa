//! TOML scenario files.
//!
//! ```toml
//! [numerics]
//! dt = 0.01
//! horizon = 1.0
//! t0 = 0.1
//!
//! [law]
//! kind = "gravitropic"
//! beta = 1.0
//!
//! [seed_curve]
//! kind = "segment"
//! direction = [0.0, 0.0, 1.0]
//!
//! [[scene.obstacles]]
//! kind = "sphere"
//! center = [0.0, 0.0, 2.0]
//! radius = 0.5
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curves::Vec3;
use crate::error::{ConfigError, ObstacleError, StepError};
use crate::growth::{GrowthLaw, Response};
use crate::obstacles::{Obstacle, Scene};
use crate::stepper::{init_state, InitialCurve, SimConfig, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub numerics: Numerics,
    #[serde(default)]
    pub law: LawSpec,
    pub seed_curve: SeedCurve,
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    pub eps_contact: Option<f64>,
    pub eps_penetration: Option<f64>,
    pub eps_breakdown_angle: Option<f64>,
    pub eps_breakdown_curvature: Option<f64>,
}

fn default_kappa() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    #[default]
    Zero,
    Gravitropic,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    #[serde(default)]
    pub kind: LawKind,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default = "vertical")]
    pub up: [f64; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ages: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn vertical() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl Default for LawSpec {
    fn default() -> Self {
        Self {
            kind: LawKind::Zero,
            beta: 0.0,
            gain: 1.0,
            up: vertical(),
            ages: Vec::new(),
            factors: Vec::new(),
        }
    }
}

impl LawSpec {
    pub fn to_law(&self) -> GrowthLaw {
        let response = match self.kind {
            LawKind::Zero => Response::Zero,
            LawKind::Gravitropic => Response::Gravitropic,
            LawKind::Table => Response::Table {
                ages: self.ages.clone(),
                factors: self.factors.clone(),
            },
        };
        GrowthLaw {
            response,
            beta: self.beta,
            gain: self.gain,
            up: Vec3::from(self.up),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedCurve {
    /// Straight segment from the origin.
    Segment { direction: [f64; 3] },
    /// Circular arc leaving the origin along `direction` and bending toward
    /// `bend` (projected perpendicular to `direction`).
    Arc {
        direction: [f64; 3],
        bend: [f64; 3],
        curvature: f64,
    },
    /// Polyline from the origin, resampled by arclength.
    Polyline { points: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "one_usize")]
    pub stride: usize,
}

fn one_usize() -> usize {
    1
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

fn unit_vector(field: &str, v: [f64; 3]) -> Result<Vec3, ConfigError> {
    let v = Vec3::from(v);
    let n = v.norm();
    if !(n > 1e-12 && n.is_finite()) {
        return Err(ConfigError::invalid(field, "must be a non-zero finite vector"));
    }
    Ok(v / n)
}

impl SeedCurve {
    /// Cell tangents on `[0, t0]` at spacing `ds` followed by the end tangent.
    pub fn discretize(&self, ds: f64, cells: usize) -> Result<InitialCurve, ConfigError> {
        let t0 = cells as f64 * ds;
        match self {
            SeedCurve::Segment { direction } => Ok(InitialCurve::straight(
                unit_vector("seed_curve.direction", *direction)?,
                cells,
            )),
            SeedCurve::Arc {
                direction,
                bend,
                curvature,
            } => {
                let d = unit_vector("seed_curve.direction", *direction)?;
                let b = Vec3::from(*bend);
                let b = b - d * d.dot(&b);
                let b = unit_vector("seed_curve.bend", [b.x, b.y, b.z]).map_err(|_| {
                    ConfigError::invalid("seed_curve.bend", "must not be parallel to the direction")
                })?;
                if !curvature.is_finite() {
                    return Err(ConfigError::invalid("seed_curve.curvature", "must be finite"));
                }
                let tangent = |s: f64| d * (curvature * s).cos() + b * (curvature * s).sin();
                // The chord of a circular arc is parallel to its midpoint tangent.
                let mut tangents: Vec<Vec3> = (0..cells)
                    .map(|i| tangent((i as f64 + 0.5) * ds).normalize())
                    .collect();
                tangents.push(tangent(t0).normalize());
                Ok(InitialCurve { tangents })
            }
            SeedCurve::Polyline { points } => {
                let pts: Vec<Vec3> = points.iter().map(|p| Vec3::from(*p)).collect();
                if pts.len() < 2 {
                    return Err(ConfigError::invalid("seed_curve.points", "need at least two points"));
                }
                if pts[0] != Vec3::zeros() {
                    return Err(ConfigError::invalid("seed_curve.points", "must start at the origin"));
                }
                if pts.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
                    return Err(ConfigError::invalid("seed_curve.points", "must be finite"));
                }
                let mut arc = vec![0.0];
                for w in pts.windows(2) {
                    let l = (w[1] - w[0]).norm();
                    if l == 0.0 {
                        return Err(ConfigError::invalid(
                            "seed_curve.points",
                            "consecutive points must differ",
                        ));
                    }
                    arc.push(arc.last().unwrap() + l);
                }
                let length = *arc.last().unwrap();
                if length < t0 * (1.0 - 1e-9) {
                    return Err(ConfigError::invalid(
                        "seed_curve.points",
                        format!("polyline length {length} is shorter than t0 = {t0}"),
                    ));
                }
                let at = |s: f64| -> (Vec3, Vec3) {
                    let s = s.min(length);
                    let seg = arc.partition_point(|&a| a <= s).clamp(1, pts.len() - 1) - 1;
                    let dir = pts[seg + 1] - pts[seg];
                    let l = arc[seg + 1] - arc[seg];
                    (pts[seg] + dir * ((s - arc[seg]) / l), dir / l)
                };
                let samples: Vec<Vec3> = (0..=cells).map(|i| at(i as f64 * ds).0).collect();
                let mut tangents: Vec<Vec3> = samples
                    .windows(2)
                    .map(|w| (w[1] - w[0]).normalize())
                    .collect();
                let end = if t0 >= length {
                    pts[pts.len() - 1] - pts[pts.len() - 2]
                } else {
                    at(t0).1
                };
                tangents.push(end.normalize());
                Ok(InitialCurve { tangents })
            }
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs serialize")
    }

    fn tolerances(&self) -> Tolerances {
        let n = &self.numerics;
        let d = Tolerances::for_spacing(n.dt);
        Tolerances {
            contact: n.eps_contact.unwrap_or(d.contact),
            penetration: n.eps_penetration.unwrap_or(d.penetration),
            breakdown_angle: n.eps_breakdown_angle.unwrap_or(d.breakdown_angle),
            breakdown_curvature: n.eps_breakdown_curvature.unwrap_or(d.breakdown_curvature),
        }
    }

    /// Fills omitted tolerances with their defaults.
    pub fn with_defaults(mut self) -> Self {
        let t = self.tolerances();
        let n = &mut self.numerics;
        n.eps_contact = Some(t.contact);
        n.eps_penetration = Some(t.penetration);
        n.eps_breakdown_angle = Some(t.breakdown_angle);
        n.eps_breakdown_curvature = Some(t.breakdown_curvature);
        self
    }

    /// Checks the fields and builds the simulation setup. The initial curve
    /// must stay outside the obstacles, with the base strictly outside.
    pub fn to_sim_config(&self) -> Result<SimConfig, ConfigError> {
        let n = &self.numerics;
        if !(n.dt > 0.0 && n.dt.is_finite()) {
            return Err(ConfigError::invalid("numerics.dt", format!("must be positive, got {}", n.dt)));
        }
        if !(n.t0 >= 0.0 && n.t0.is_finite()) {
            return Err(ConfigError::invalid("numerics.t0", format!("must be >= 0, got {}", n.t0)));
        }
        if !(n.horizon > n.t0 && n.horizon.is_finite()) {
            return Err(ConfigError::invalid(
                "numerics.horizon",
                format!("must exceed t0 = {}, got {}", n.t0, n.horizon),
            ));
        }
        let on_grid = |v: f64| ((v / n.dt).round() * n.dt - v).abs() <= 1e-9 * v.max(1.0);
        if !on_grid(n.t0) {
            return Err(ConfigError::invalid("numerics.t0", "must be a multiple of dt"));
        }
        if !on_grid(n.horizon) {
            return Err(ConfigError::invalid("numerics.horizon", "must be a multiple of dt"));
        }
        if !(n.kappa >= 0.0 && n.kappa.is_finite()) {
            return Err(ConfigError::invalid("numerics.kappa", "must be >= 0"));
        }
        let tol = self.tolerances();
        for (field, v) in [
            ("numerics.eps_contact", tol.contact),
            ("numerics.eps_penetration", tol.penetration),
            ("numerics.eps_breakdown_angle", tol.breakdown_angle),
            ("numerics.eps_breakdown_curvature", tol.breakdown_curvature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(field, "must be positive"));
            }
        }
        if self.output.stride == 0 {
            return Err(ConfigError::invalid("output.stride", "must be at least 1"));
        }
        let law = self.law.to_law();
        law.validate()
            .map_err(|e| ConfigError::invalid("law", e.to_string()))?;
        let obstacles = self
            .scene
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| {
                normalized(o)
                    .map_err(|e| ConfigError::invalid(format!("scene.obstacles[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let scene = Scene::new(obstacles, 0.0)
            .map_err(|e| ConfigError::invalid("scene.obstacles", e.to_string()))?;
        let cells = (n.t0 / n.dt).round() as usize;
        let initial = self.seed_curve.discretize(n.dt, cells)?;
        let config = SimConfig {
            dt: n.dt,
            horizon: n.horizon,
            t0: n.t0,
            initial,
            tolerances: tol,
            kappa: n.kappa,
            law,
            scene,
        };
        match init_state(&config) {
            Ok(_) | Err(StepError::InitialBreakdown) => Ok(config),
            Err(StepError::InitialPenetration(m)) => Err(ConfigError::invalid(
                "seed_curve",
                format!("initial curve violates non-penetration: {m}"),
            )),
            Err(e) => Err(ConfigError::invalid("numerics", e.to_string())),
        }
    }
}

/// Rebuilds an obstacle through its constructor so direction fields may be
/// given unnormalized.
fn normalized(o: &Obstacle) -> Result<Obstacle, ObstacleError> {
    match *o {
        Obstacle::Sphere { center, radius } => Obstacle::sphere(center, radius),
        Obstacle::HalfSpace {
            point,
            outward_normal,
        } => Obstacle::half_space(point, outward_normal),
        Obstacle::Cylinder {
            axis_point,
            axis_dir,
            radius,
        } => Obstacle::cylinder(axis_point, axis_dir, radius),
    }
}

pub fn load_config(path: &Path) -> Result<(ScenarioConfig, SimConfig), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config = ScenarioConfig::from_toml(&text)?.with_defaults();
    let sim = config.to_sim_config()?;
    Ok((config, sim))
}
