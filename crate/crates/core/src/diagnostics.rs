//! Measurements on solutions: the rotation-field distance between two
//! stems, its Gronwall growth rate, and invariant audits of stored states.

use serde::{Deserialize, Serialize};

use crate::curves::{ArclengthGrid, Vec3};
use crate::error::DiagnosticsError;
use crate::obstacles::Scene;
use crate::stepper::{StemState, UNIT_TOLERANCE};

/// Below this `1 + ⟨k₁, k₂⟩` the rotation axis is undefined.
const ANTIPODAL_MARGIN: f64 = 1e-9;

/// Shortest rotation vector `W = θ a` carrying `k1` onto `k2`.
pub fn minimal_rotation(k1: &Vec3, k2: &Vec3) -> Result<Vec3, DiagnosticsError> {
    let c = k1.dot(k2);
    if c <= -1.0 + ANTIPODAL_MARGIN {
        return Err(DiagnosticsError::AntipodalAmbiguity { node: 0 });
    }
    let axis = k1.cross(k2);
    let s = axis.norm();
    if s == 0.0 {
        return Ok(Vec3::zeros());
    }
    Ok(axis * (s.atan2(c) / s))
}

/// Pointwise minimal rotations between the tangents of two stems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationField {
    pub grid: ArclengthGrid,
    /// One vector per grown cell.
    pub values: Vec<Vec3>,
}

/// `W_i` with `k₂,i = R[W_i] k₁,i` on every grown cell.
pub fn rotation_field(stem1: &StemState, stem2: &StemState) -> Result<RotationField, DiagnosticsError> {
    if stem1.grid() != stem2.grid() {
        return Err(DiagnosticsError::GridMismatch(format!(
            "spacing {} with {} nodes vs spacing {} with {} nodes",
            stem1.spacing(),
            stem1.grid().len(),
            stem2.spacing(),
            stem2.grid().len()
        )));
    }
    if stem1.tip() != stem2.tip() {
        return Err(DiagnosticsError::GridMismatch(format!(
            "tips at nodes {} and {}",
            stem1.tip(),
            stem2.tip()
        )));
    }
    let values = (0..stem1.tip())
        .map(|i| {
            minimal_rotation(&stem1.tangents()[i], &stem2.tangents()[i])
                .map_err(|_| DiagnosticsError::AntipodalAmbiguity { node: i })
        })
        .collect::<Result<_, _>>()?;
    Ok(RotationField {
        grid: *stem1.grid(),
        values,
    })
}

/// Exponentially weighted `L²` norm on `[0, t]` with weight `e^{-βs}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub beta: f64,
    pub t: f64,
}

/// `(Σ_i Δs e^{-β s_i} |W_i|²)^{1/2}` over cells inside `[0, t]`.
pub fn weighted_norm(field: &RotationField, norm: &WeightedNorm) -> f64 {
    let ds = field.grid.spacing();
    let limit = norm.t + 1e-9 * ds;
    field
        .values
        .iter()
        .enumerate()
        .take_while(|(i, _)| field.grid.node(*i) + ds <= limit)
        .map(|(i, w)| ds * (-norm.beta * field.grid.node(i)).exp() * w.norm_squared())
        .sum::<f64>()
        .sqrt()
}

pub const MIN_SERIES_LEN: usize = 10;

/// Exponential envelope of a distance series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallCertificate {
    /// Least `C ≥ 0` with `D_k ≤ D_0 e^{C t_k} (1 + 1e-9)` for all samples.
    pub rate: f64,
    /// Largest `ln(D_{k+1} / D_k) / Δt`.
    pub max_log_increment: f64,
    pub samples: usize,
}

/// Fits the envelope to `D_k` sampled at `t_k = k Δt`.
pub fn gronwall_certificate(distances: &[f64], dt: f64) -> Result<GronwallCertificate, DiagnosticsError> {
    if distances.len() < MIN_SERIES_LEN {
        return Err(DiagnosticsError::SeriesTooShort {
            found: distances.len(),
            min: MIN_SERIES_LEN,
        });
    }
    if let Some(index) = distances.iter().position(|d| !(*d > 0.0)) {
        return Err(DiagnosticsError::NonPositiveDistance { index });
    }
    let d0 = distances[0] * (1.0 + 1e-9);
    let rate = distances
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, d)| (d / d0).ln() / (k as f64 * dt))
        .fold(0.0, f64::max);
    let max_log_increment = distances
        .windows(2)
        .map(|w| (w[1] / w[0]).ln() / dt)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GronwallCertificate {
        rate,
        max_log_increment,
        samples: distances.len(),
    })
}

/// Invariant residuals of one stored state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateAudit {
    /// `max_i ||k_i| - 1|`.
    pub unit_defect: f64,
    /// `max_i |γ_{i+1} - γ_i| / Δs - 1`, clipped at zero.
    pub segment_excess: f64,
    pub base_offset: f64,
    pub extension_straight: bool,
    /// `|L(t) - t|` for the grown part.
    pub arclength_defect: f64,
    /// Minimum signed distance over grown nodes.
    pub min_distance: f64,
}

impl StateAudit {
    pub fn passes(&self, penetration: f64) -> bool {
        self.unit_defect <= UNIT_TOLERANCE
            && self.segment_excess <= 1e-10
            && self.base_offset == 0.0
            && self.extension_straight
            && self.arclength_defect <= 1e-12
            && self.min_distance >= -penetration
    }
}

pub fn audit_state(state: &StemState, scene: &Scene) -> StateAudit {
    let ds = state.spacing();
    let unit_defect = state
        .tangents()
        .iter()
        .map(|k| (k.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let segments: Vec<f64> = state
        .positions()
        .windows(2)
        .map(|w| (w[1] - w[0]).norm())
        .collect();
    let segment_excess = segments
        .iter()
        .map(|l| (l / ds - 1.0).max(0.0))
        .fold(0.0, f64::max);
    let k_tip = state.tip_tangent();
    let grown_length: f64 = segments[..state.tip()].iter().sum();
    StateAudit {
        unit_defect,
        segment_excess,
        base_offset: state.positions()[0].norm(),
        extension_straight: state.tangents()[state.tip()..].iter().all(|k| *k == k_tip),
        arclength_defect: (grown_length - state.t()).abs() / state.t().max(1.0),
        min_distance: state.min_distance(scene),
    }
}
