use serde::{Deserialize, Serialize};

use crate::curves::{positions_from_tangents, ArclengthGrid, Vec3};
use crate::error::StepError;
use crate::obstacles::Scene;

/// Tolerance on `| |k_i| - 1 |`.
pub const UNIT_TOLERANCE: f64 = 1e-10;

/// Discretized stem on a fixed grid over `[0, T]`.
///
/// Node `tip` sits at `s = t`; nodes beyond it form the straight extension.
/// `tangents[i]` is the tangent on the cell `[s_i, s_{i+1}]`, and every
/// tangent at or beyond the tip equals the tip direction bitwise. The base
/// is pinned at the origin and a node's arclength is also its birth time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemState {
    grid: ArclengthGrid,
    tip: usize,
    positions: Vec<Vec3>,
    tangents: Vec<Vec3>,
}

impl StemState {
    /// Builds a state from cell tangents; the extension is overwritten with
    /// the tip tangent.
    pub fn from_tangents(
        grid: ArclengthGrid,
        tip: usize,
        mut tangents: Vec<Vec3>,
    ) -> Result<Self, StepError> {
        if tangents.len() != grid.len() {
            return Err(StepError::InvariantViolated(format!(
                "{} tangents for a grid of {} nodes",
                tangents.len(),
                grid.len()
            )));
        }
        if tip >= grid.len() {
            return Err(StepError::InvariantViolated(format!(
                "tip index {tip} outside grid of {} nodes",
                grid.len()
            )));
        }
        let k_tip = tangents[tip];
        for k in &mut tangents[tip..] {
            *k = k_tip;
        }
        let positions = positions_from_tangents(&tangents, grid.spacing(), Vec3::zeros());
        let state = Self {
            grid,
            tip,
            positions,
            tangents,
        };
        state.check_invariants()?;
        Ok(state)
    }

    pub(crate) fn from_parts_unchecked(
        grid: ArclengthGrid,
        tip: usize,
        positions: Vec<Vec3>,
        tangents: Vec<Vec3>,
    ) -> Self {
        Self {
            grid,
            tip,
            positions,
            tangents,
        }
    }

    pub fn grid(&self) -> &ArclengthGrid {
        &self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    /// Current time, equal to the grown length.
    pub fn t(&self) -> f64 {
        self.grid.node(self.tip)
    }

    pub fn tip(&self) -> usize {
        self.tip
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn tangents(&self) -> &[Vec3] {
        &self.tangents
    }

    pub fn tip_position(&self) -> Vec3 {
        self.positions[self.tip]
    }

    pub fn tip_tangent(&self) -> Vec3 {
        self.tangents[self.tip]
    }

    pub fn grown_positions(&self) -> &[Vec3] {
        &self.positions[..=self.tip]
    }

    pub fn at_horizon(&self) -> bool {
        self.tip + 1 == self.grid.len()
    }

    /// Minimum signed distance over grown nodes.
    pub fn min_distance(&self, scene: &Scene) -> f64 {
        self.grown_positions()
            .iter()
            .map(|p| scene.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Structural invariants that hold independently of the obstacle.
    pub fn check_invariants(&self) -> Result<(), StepError> {
        let fail = |m: String| Err(StepError::InvariantViolated(m));
        let ds = self.grid.spacing();
        if self.positions.len() != self.grid.len() || self.tangents.len() != self.grid.len() {
            return fail("field lengths disagree with the grid".into());
        }
        if self.positions[0] != Vec3::zeros() {
            return fail(format!("base moved to {:?}", self.positions[0]));
        }
        for (i, k) in self.tangents.iter().enumerate() {
            if !((k.norm() - 1.0).abs() <= UNIT_TOLERANCE) {
                return fail(format!("|k_{i}| = {}", k.norm()));
            }
        }
        for (i, w) in self.positions.windows(2).enumerate() {
            if !((w[1] - w[0]).norm() <= ds * (1.0 + 1e-10)) {
                return fail(format!("segment {i} longer than the grid spacing"));
            }
        }
        let k_tip = self.tangents[self.tip];
        if self.tangents[self.tip..].iter().any(|k| *k != k_tip) {
            return fail("extension is not straight".into());
        }
        Ok(())
    }
}
