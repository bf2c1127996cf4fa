//! Rigid obstacles described by exact signed distance functions.
//!
//! `Φ < 0` inside an obstacle, `Φ > 0` outside, and `∇Φ` is the unit outer
//! normal on the boundary. Only analytic primitives with smooth boundaries
//! are supported, and a [`Scene`] requires its members to be well separated
//! so every query resolves against a single primitive.

use serde::{Deserialize, Serialize};

use crate::curves::{UnitVec3, Vec3};
use crate::error::ObstacleError;

/// Returned by [`Scene::signed_distance`] when the scene is empty.
pub const FAR_AWAY: f64 = f64::MAX;

/// Gradients shorter than this are treated as undefined (medial axis).
const DEGENERATE_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// The obstacle is `{x : ⟨x - point, outward_normal⟩ < 0}`.
    HalfSpace {
        point: Vec3,
        outward_normal: Vec3,
    },
    /// Infinite circular cylinder.
    Cylinder {
        axis_point: Vec3,
        axis_dir: Vec3,
        radius: f64,
    },
}

impl Obstacle {
    pub fn sphere(center: Vec3, radius: f64) -> Result<Self, ObstacleError> {
        let o = Obstacle::Sphere { center, radius };
        o.validate()?;
        Ok(o)
    }

    pub fn half_space(point: Vec3, outward_normal: Vec3) -> Result<Self, ObstacleError> {
        let o = Obstacle::HalfSpace {
            point,
            outward_normal: unit_or_err(outward_normal, "outward_normal")?,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn cylinder(axis_point: Vec3, axis_dir: Vec3, radius: f64) -> Result<Self, ObstacleError> {
        let o = Obstacle::Cylinder {
            axis_point,
            axis_dir: unit_or_err(axis_dir, "axis_dir")?,
            radius,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<(), ObstacleError> {
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        let unit = |v: &Vec3| (v.norm() - 1.0).abs() <= 1e-12;
        match self {
            Obstacle::Sphere { center, radius } => {
                if !finite(center) || !(radius.is_finite() && *radius > 0.0) {
                    return Err(ObstacleError::Invalid(format!(
                        "sphere needs a finite center and positive radius (radius {radius})"
                    )));
                }
            }
            Obstacle::HalfSpace {
                point,
                outward_normal,
            } => {
                if !finite(point) || !unit(outward_normal) {
                    return Err(ObstacleError::Invalid(
                        "half-space needs a finite point and unit outward normal".into(),
                    ));
                }
            }
            Obstacle::Cylinder {
                axis_point,
                axis_dir,
                radius,
            } => {
                if !finite(axis_point)
                    || !unit(axis_dir)
                    || !(radius.is_finite() && *radius > 0.0)
                {
                    return Err(ObstacleError::Invalid(format!(
                        "cylinder needs a finite axis, unit direction and positive radius (radius {radius})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        match self {
            Obstacle::Sphere { center, radius } => (x - center).norm() - radius,
            Obstacle::HalfSpace {
                point,
                outward_normal,
            } => (x - point).dot(outward_normal),
            Obstacle::Cylinder {
                axis_point,
                axis_dir,
                radius,
            } => radial(x, axis_point, axis_dir).norm() - radius,
        }
    }

    /// `∇Φ(x)`, defined everywhere except on the medial axis.
    pub fn gradient(&self, x: &Vec3) -> Result<UnitVec3, ObstacleError> {
        let direction = match self {
            Obstacle::Sphere { center, .. } => x - center,
            Obstacle::HalfSpace { outward_normal, .. } => *outward_normal,
            Obstacle::Cylinder {
                axis_point,
                axis_dir,
                ..
            } => radial(x, axis_point, axis_dir),
        };
        let norm = direction.norm();
        if norm <= DEGENERATE_RADIUS {
            return Err(ObstacleError::DegenerateGradient);
        }
        Ok(UnitVec3::new_unchecked(direction / norm))
    }
}

fn radial(x: &Vec3, axis_point: &Vec3, axis_dir: &Vec3) -> Vec3 {
    let d = x - axis_point;
    d - axis_dir * d.dot(axis_dir)
}

fn unit_or_err(v: Vec3, what: &str) -> Result<Vec3, ObstacleError> {
    let n = v.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(ObstacleError::Invalid(format!("{what} must be nonzero")));
    }
    Ok(v / n)
}

/// Lower bound on the distance between the surfaces of two obstacles;
/// negative or `-inf` when they may intersect.
fn separation(a: &Obstacle, b: &Obstacle) -> f64 {
    use Obstacle::*;
    match (a, b) {
        (Sphere { center: c1, radius: r1 }, Sphere { center: c2, radius: r2 }) => {
            (c1 - c2).norm() - r1 - r2
        }
        (Sphere { center, radius }, other @ HalfSpace { .. })
        | (other @ HalfSpace { .. }, Sphere { center, radius })
        | (Sphere { center, radius }, other @ Cylinder { .. })
        | (other @ Cylinder { .. }, Sphere { center, radius }) => {
            other.signed_distance(center) - radius
        }
        (
            HalfSpace {
                point: p1,
                outward_normal: n1,
            },
            HalfSpace {
                point: p2,
                outward_normal: n2,
            },
        ) => {
            // Only anti-parallel half-spaces facing away from each other are disjoint.
            if (n1 + n2).norm() <= 1e-12 {
                (p1 - p2).dot(n1)
            } else {
                f64::NEG_INFINITY
            }
        }
        (
            hs @ HalfSpace { outward_normal, .. },
            Cylinder {
                axis_point,
                axis_dir,
                radius,
            },
        )
        | (
            Cylinder {
                axis_point,
                axis_dir,
                radius,
            },
            hs @ HalfSpace { outward_normal, .. },
        ) => {
            if axis_dir.dot(outward_normal).abs() <= 1e-12 {
                hs.signed_distance(axis_point) - radius
            } else {
                f64::NEG_INFINITY
            }
        }
        (
            Cylinder {
                axis_point: p1,
                axis_dir: d1,
                radius: r1,
            },
            Cylinder {
                axis_point: p2,
                axis_dir: d2,
                radius: r2,
            },
        ) => {
            let cross = d1.cross(d2);
            let gap = if cross.norm() <= 1e-12 {
                radial(p2, p1, d1).norm()
            } else {
                (p2 - p1).dot(&cross).abs() / cross.norm()
            };
            gap - r1 - r2
        }
    }
}

/// A disjoint union of obstacles. May be empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scene {
    obstacles: Vec<Obstacle>,
}

impl Scene {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a scene whose members are pairwise more than `min_separation` apart.
    pub fn new(obstacles: Vec<Obstacle>, min_separation: f64) -> Result<Self, ObstacleError> {
        for o in &obstacles {
            o.validate()?;
        }
        for (i, a) in obstacles.iter().enumerate() {
            for (j, b) in obstacles.iter().enumerate().skip(i + 1) {
                let gap = separation(a, b);
                if !(gap > min_separation) {
                    return Err(ObstacleError::Invalid(format!(
                        "obstacles {i} and {j} are not separated (gap {gap})"
                    )));
                }
            }
        }
        Ok(Self { obstacles })
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    /// Minimum over obstacles; [`FAR_AWAY`] for the empty scene.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        self.nearest(x).map_or(FAR_AWAY, |(_, d)| d)
    }

    fn nearest(&self, x: &Vec3) -> Option<(&Obstacle, f64)> {
        let mut best: Option<(&Obstacle, f64)> = None;
        for o in &self.obstacles {
            let d = o.signed_distance(x);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((o, d));
            }
        }
        best
    }

    /// Outer normal of the nearest boundary, which must lie within `band`.
    pub fn outer_normal(&self, x: &Vec3, band: f64) -> Result<UnitVec3, ObstacleError> {
        match self.nearest(x) {
            Some((o, d)) if d.abs() < band => o.gradient(x),
            Some((_, d)) => Err(ObstacleError::NoNearbyBoundary { distance: d, band }),
            None => Err(ObstacleError::NoNearbyBoundary {
                distance: FAR_AWAY,
                band,
            }),
        }
    }
}
