//! Free growth laws: the angular-velocity density a stem would follow
//! without obstacles.

use serde::{Deserialize, Serialize};

use crate::curves::Vec3;
use crate::error::GrowthError;

/// Age profile of the bending response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    /// No internal bending.
    Zero,
    /// Upward bending `e^{-β age} k × up`, with stiffness growing with age.
    Gravitropic,
    /// `factor(age) k × up` with `factor` piecewise linear through the
    /// table and held constant outside it.
    Table { ages: Vec<f64>, factors: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthLaw {
    pub response: Response,
    /// Stiffening rate (1/time). Also weights the elastic energy of the reaction.
    pub beta: f64,
    pub gain: f64,
    pub up: Vec3,
}

impl Default for GrowthLaw {
    fn default() -> Self {
        Self::zero(0.0)
    }
}

impl GrowthLaw {
    pub fn zero(beta: f64) -> Self {
        Self {
            response: Response::Zero,
            beta,
            gain: 1.0,
            up: Vec3::z(),
        }
    }

    pub fn gravitropic(beta: f64, gain: f64) -> Self {
        Self {
            response: Response::Gravitropic,
            beta,
            gain,
            up: Vec3::z(),
        }
    }

    pub fn validate(&self) -> Result<(), GrowthError> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(GrowthError::Invalid(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.gain.is_finite() && self.gain >= 0.0) {
            return Err(GrowthError::Invalid(format!("gain must be >= 0, got {}", self.gain)));
        }
        if (self.up.norm() - 1.0).abs() > 1e-12 {
            return Err(GrowthError::Invalid("up direction must be a unit vector".into()));
        }
        if let Response::Table { ages, factors } = &self.response {
            if ages.is_empty() || ages.len() != factors.len() {
                return Err(GrowthError::Invalid(
                    "table needs matching, non-empty `ages` and `factors`".into(),
                ));
            }
            if ages.windows(2).any(|w| !(w[0] < w[1])) || ages[0] < 0.0 {
                return Err(GrowthError::Invalid(
                    "table ages must be non-negative and strictly increasing".into(),
                ));
            }
            if factors.iter().any(|f| !f.is_finite()) {
                return Err(GrowthError::Invalid("table factors must be finite".into()));
            }
        }
        Ok(())
    }

    /// Free angular-velocity density `Ψ(t, s, γ, k)` at the cell born at `s`.
    pub fn eval_psi(&self, t: f64, s: f64, _gamma: &Vec3, k: &Vec3) -> Result<Vec3, GrowthError> {
        if s > t {
            return Err(GrowthError::AgeNegative { t, s });
        }
        let age = t - s;
        let factor = match &self.response {
            Response::Zero => return Ok(Vec3::zeros()),
            Response::Gravitropic => (-self.beta * age).exp(),
            Response::Table { ages, factors } => interpolate(ages, factors, age),
        };
        Ok(k.cross(&self.up) * (self.gain * factor))
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&a| a <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}
