//! Rotation algebra and arc-length reconstruction of curves.
//!
//! Tangent fields are stored per grid node and read as piecewise constant
//! on cells: `k[i]` is the unit tangent on `[s_i, s_{i+1}]`, so consecutive
//! positions are exactly `Δs` apart. Angular-velocity densities follow the
//! same convention (value at the left node of each cell).

use nalgebra::{Matrix3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

pub type Vec3 = Vector3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;
pub type Rotation3 = Matrix3<f64>;

/// Below this angle the closed form loses digits to cancellation.
const TAYLOR_ANGLE: f64 = 1e-6;

/// Cross-product matrix: `hat(w) * v == w.cross(&v)`.
pub fn hat(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Time-one flow of `v' = w × v`, i.e. rotation by `|w|` about `w / |w|`.
pub fn rodrigues(w: &Vec3) -> Rotation3 {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let a = hat(w);
    let a2 = a * a;
    let (c1, c2) = if theta < TAYLOR_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + a * c1 + a2 * c2
}

/// Uniform arclength grid `s_i = i Δs`, `i = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArclengthGrid {
    spacing: f64,
    len: usize,
}

impl ArclengthGrid {
    pub fn new(spacing: f64, len: usize) -> Result<Self, GeometryError> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(GeometryError::BadSpacing(spacing));
        }
        if len == 0 {
            return Err(GeometryError::EmptyGrid);
        }
        Ok(Self { spacing, len })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    pub fn last(&self) -> f64 {
        self.node(self.len - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.node(i))
    }
}

/// Unit tangents, one per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    grid: ArclengthGrid,
    tangents: Vec<Vec3>,
}

impl TangentField {
    pub const UNIT_TOLERANCE: f64 = 1e-10;

    pub fn new(grid: ArclengthGrid, tangents: Vec<Vec3>) -> Result<Self, GeometryError> {
        if tangents.len() != grid.len() {
            return Err(GeometryError::LengthMismatch {
                expected: grid.len(),
                found: tangents.len(),
            });
        }
        if let Some((index, k)) = tangents
            .iter()
            .enumerate()
            .find(|(_, k)| !((k.norm() - 1.0).abs() <= Self::UNIT_TOLERANCE))
        {
            return Err(GeometryError::NotUnit {
                index,
                norm: k.norm(),
            });
        }
        Ok(Self { grid, tangents })
    }

    pub fn grid(&self) -> &ArclengthGrid {
        &self.grid
    }

    pub fn tangents(&self) -> &[Vec3] {
        &self.tangents
    }
}

/// Positions from tangents: `γ_0 = base`, `γ_{i+1} = γ_i + Δs k_i`.
pub fn integrate_tangents(field: &TangentField, base: Vec3) -> Vec<Vec3> {
    positions_from_tangents(field.tangents(), field.grid().spacing(), base)
}

pub(crate) fn positions_from_tangents(tangents: &[Vec3], spacing: f64, base: Vec3) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(tangents.len());
    let mut p = base;
    out.push(p);
    for k in &tangents[..tangents.len().saturating_sub(1)] {
        p += k * spacing;
        out.push(p);
    }
    out
}

/// `∫_0^s ω dσ` for a cellwise-constant density sampled at left nodes.
///
/// `s` is clamped to the grid range.
pub fn cumulative_angular_velocity(density: &[Vec3], grid: &ArclengthGrid, s: f64) -> Vec3 {
    debug_assert!(density.len() <= grid.len());
    let ds = grid.spacing();
    let s = s.clamp(0.0, grid.last());
    let mut total = Vec3::zeros();
    for (i, w) in density.iter().enumerate() {
        let left = grid.node(i);
        if left >= s {
            break;
        }
        let width = (s - left).min(ds);
        total += w * width;
    }
    total
}

/// Cumulative integrals through the end of each cell: entry `i` is
/// `Σ_{l ≤ i} Δs ω_l`.
pub(crate) fn inclusive_prefix(density: &[Vec3], spacing: f64) -> Vec<Vec3> {
    let mut acc = Vec3::zeros();
    density
        .iter()
        .map(|w| {
            acc += w * spacing;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn rk4_flow(w: &Vec3, v0: &Vec3, steps: usize) -> Vec3 {
        let h = 1.0 / steps as f64;
        let f = |v: &Vec3| w.cross(v);
        let mut v = *v0;
        for _ in 0..steps {
            let k1 = f(&v);
            let k2 = f(&(v + k1 * (h / 2.0)));
            let k3 = f(&(v + k2 * (h / 2.0)));
            let k4 = f(&(v + k3 * h));
            v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        v
    }

    #[test]
    fn zero_vector_is_identity() {
        assert_eq!(rodrigues(&Vec3::zeros()), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_e3() {
        let q = rodrigues(&Vec3::new(0.0, 0.0, PI / 2.0));
        let v = q * Vec3::x();
        assert_abs_diff_eq!(v, Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn matches_ode_flow() {
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        let w = axis * 0.3;
        let v0 = Vec3::new(0.2, 0.9, -0.4);
        let exact = rodrigues(&w) * v0;
        let flow = rk4_flow(&w, &v0, 10_000);
        assert_abs_diff_eq!(exact, flow, epsilon = 1e-10);
    }

    #[test]
    fn small_angle_branch_is_first_order_identity() {
        let w = Vec3::new(1e-8, -2e-8, 3e-9);
        let q = rodrigues(&w);
        let lin = Matrix3::identity() + hat(&w);
        assert!((q - lin).norm() < 1e-15);
        assert!((q.transpose() * q - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn axis_is_fixed() {
        let w = Vec3::new(1.0, 2.0, -0.5);
        let q = rodrigues(&w);
        assert_abs_diff_eq!(q * w, w, epsilon = 1e-12);
        // rotation angle: trace = 1 + 2 cos θ
        let cos = (q.trace() - 1.0) / 2.0;
        assert_abs_diff_eq!(cos, w.norm().cos(), epsilon = 1e-12);
    }

    #[test]
    fn straight_vertical_stem() {
        let grid = ArclengthGrid::new(0.1, 11).unwrap();
        let field = TangentField::new(grid, vec![Vec3::z(); 11]).unwrap();
        let gamma = integrate_tangents(&field, Vec3::zeros());
        for (i, p) in gamma.iter().enumerate() {
            assert_abs_diff_eq!(*p, Vec3::new(0.0, 0.0, 0.1 * i as f64), epsilon = 1e-12);
        }
    }

    #[test]
    fn translation_covariance() {
        let grid = ArclengthGrid::new(0.1, 11).unwrap();
        let field = TangentField::new(grid, vec![Vec3::x(); 11]).unwrap();
        let gamma = integrate_tangents(&field, Vec3::new(1.0, 2.0, 3.0));
        for (i, p) in gamma.iter().enumerate() {
            let s = grid.node(i);
            assert_abs_diff_eq!(*p, Vec3::new(1.0 + s, 2.0, 3.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_circle_reconstruction_is_second_order() {
        // Unit circle through the origin with tangent e1 at s = 0:
        // γ(s) = (sin s, 1 - cos s, 0). Tangents sampled at cell midpoints.
        let max_error = |cells: usize| {
            let ds = 2.0 * PI / cells as f64;
            let grid = ArclengthGrid::new(ds, cells + 1).unwrap();
            let tangents = (0..=cells)
                .map(|i| {
                    let th = (i as f64 + 0.5) * ds;
                    Vec3::new(th.cos(), th.sin(), 0.0)
                })
                .collect();
            let field = TangentField::new(grid, tangents).unwrap();
            let gamma = integrate_tangents(&field, Vec3::zeros());
            gamma
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let s = grid.node(i);
                    (p - Vec3::new(s.sin(), 1.0 - s.cos(), 0.0)).norm()
                })
                .fold(0.0, f64::max)
        };
        let e1 = max_error(64);
        let e2 = max_error(128);
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "observed order {order}");
        assert!(e1 < 0.01);
    }

    #[test]
    fn steps_are_exactly_grid_spacing() {
        let grid = ArclengthGrid::new(0.05, 4).unwrap();
        let t = vec![
            Vec3::x(),
            Vec3::new(0.6, 0.8, 0.0),
            Vec3::new(0.0, 0.6, 0.8),
            Vec3::z(),
        ];
        let gamma = integrate_tangents(&TangentField::new(grid, t).unwrap(), Vec3::zeros());
        for w in gamma.windows(2) {
            assert!(((w[1] - w[0]).norm() - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn cumulative_constant_density() {
        let grid = ArclengthGrid::new(0.1, 11).unwrap();
        let dens = vec![Vec3::z(); 11];
        assert_abs_diff_eq!(
            cumulative_angular_velocity(&dens, &grid, 0.5),
            Vec3::new(0.0, 0.0, 0.5),
            epsilon = 1e-12
        );
        assert_eq!(cumulative_angular_velocity(&dens, &grid, 0.0), Vec3::zeros());
    }

    #[test]
    fn cumulative_piecewise_density() {
        let grid = ArclengthGrid::new(0.1, 11).unwrap();
        let dens: Vec<Vec3> = grid
            .nodes()
            .map(|s| if s < 0.3 - 1e-12 { Vec3::x() } else { Vec3::y() })
            .collect();
        assert_abs_diff_eq!(
            cumulative_angular_velocity(&dens, &grid, 1.0),
            Vec3::new(0.3, 0.7, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cumulative_is_additive_and_matches_prefix() {
        let grid = ArclengthGrid::new(0.25, 9).unwrap();
        let dens: Vec<Vec3> = (0..9)
            .map(|i| Vec3::new(i as f64, 1.0, -(i as f64) * 0.5))
            .collect();
        let prefix = inclusive_prefix(&dens, 0.25);
        for i in 0..8 {
            let c = cumulative_angular_velocity(&dens, &grid, grid.node(i + 1));
            assert_abs_diff_eq!(c, prefix[i], epsilon = 1e-12);
        }
        let a = cumulative_angular_velocity(&dens, &grid, 0.6);
        let b = cumulative_angular_velocity(&dens, &grid, 1.3);
        let tail: Vec3 = dens[2] * 0.15 + dens[3] * 0.25 + dens[4] * 0.25 + dens[5] * 0.05;
        assert_abs_diff_eq!(b - a, tail, epsilon = 1e-12);
    }

    #[test]
    fn tangent_field_rejects_non_unit() {
        let grid = ArclengthGrid::new(0.1, 2).unwrap();
        let err = TangentField::new(grid, vec![Vec3::x(), Vec3::x() * 1.1]).unwrap_err();
        assert!(matches!(err, GeometryError::NotUnit { index: 1, .. }));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
            (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
        }

        proptest! {
            #[test]
            fn rodrigues_is_special_orthogonal(w in vec3(10.0)) {
                let q = rodrigues(&w);
                prop_assert!((q.transpose() * q - Matrix3::identity()).norm() <= 1e-12);
                prop_assert!((q.determinant() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn negation_inverts(w in vec3(4.0)) {
                let prod = rodrigues(&w) * rodrigues(&(-w));
                prop_assert!((prod - Matrix3::identity()).norm() <= 1e-12);
            }

            #[test]
            fn preserves_unit_norm(w in vec3(6.0), v in vec3(1.0)) {
                prop_assume!(v.norm() > 1e-3);
                let u = v.normalize();
                prop_assert!(((rodrigues(&w) * u).norm() - 1.0).abs() <= 1e-12);
            }
        }
    }
}
