//! Obstacle reaction.
//!
//! At each time the reaction is the angular-velocity density `ω̄` of least
//! elastic energy `½ Σ_i d_i |ω_i|²`, `d_i = Δs e^{β(t - σ_i)}`, among all
//! densities that stop every contact point from moving into the obstacle:
//!
//! ```text
//! Σ_{i<j} Δs ⟨ω_i, a_j(σ_i)⟩ ≥ b_j,     a_j(σ_i) = (γ_j - γ_i) × n_j
//! ```
//!
//! The multipliers `μ_j ≥ 0` of these constraints are the atoms of the
//! contact measure, and stationarity gives
//! `ω̄_i = e^{-β(t - σ_i)} Σ_j μ_j a_j(σ_i)`.
//!
//! [`solve_reaction`] works on the dual; [`oracle_solve_reaction`] enumerates
//! active sets of the primal KKT system and is meant for verification.

mod oracle;
mod solver;

pub use oracle::{oracle_solve_reaction, ORACLE_MAX_CONTACTS};
pub use solver::{solve_reaction, solve_reaction_warm, SolverOptions};

use serde::{Deserialize, Serialize};

use nalgebra::{Matrix3, Matrix6, Vector6};

use crate::curves::{hat, UnitVec3, Vec3};
use crate::error::ReactionError;
use crate::growth::GrowthLaw;
use crate::obstacles::Scene;
use crate::stepper::StemState;

/// Contact detection thresholds, in length units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactTolerances {
    /// A grown node with `Φ ≤ contact` touches the obstacle.
    pub contact: f64,
    /// `Φ < -penetration` is an integrity failure.
    pub penetration: f64,
}

impl ContactTolerances {
    pub fn for_spacing(ds: f64) -> Self {
        Self {
            contact: 1e-3 * ds,
            penetration: 0.05 * ds,
        }
    }

    /// Distance band in which boundary normals are queried.
    pub fn normal_band(&self) -> f64 {
        (10.0 * self.contact).max(2.0 * self.penetration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    /// Within the contact tolerance at the start of the step.
    Touching,
    /// Outside the tolerance but would cross the boundary during the step.
    Swept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub node: usize,
    pub arclength: f64,
    pub normal: UnitVec3,
    /// Signed distance `Φ(γ_j)`; negative values are penetration depth.
    pub distance: f64,
    pub kind: ContactKind,
}

/// Grown nodes in contact, sorted by node index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactSet {
    pub contacts: Vec<Contact>,
    /// Index of the tip node of the stem the set was detected on.
    pub tip: usize,
}

impl ContactSet {
    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.contacts.iter().map(|c| c.node).collect()
    }

    pub fn tip_in_contact(&self) -> bool {
        self.tip_contact().is_some()
    }

    pub fn tip_contact(&self) -> Option<&Contact> {
        self.contacts.last().filter(|c| c.node == self.tip)
    }

    pub fn contains(&self, node: usize) -> bool {
        self.contacts.binary_search_by_key(&node, |c| c.node).is_ok()
    }

    /// Inserts keeping the node order; existing nodes are left untouched.
    pub fn insert(&mut self, contact: Contact) {
        if let Err(pos) = self.contacts.binary_search_by_key(&contact.node, |c| c.node) {
            self.contacts.insert(pos, contact);
        }
    }
}

/// Grown nodes with `Φ(γ_i) ≤ tol.contact`, with their outer normals.
pub fn detect_contacts(
    stem: &StemState,
    scene: &Scene,
    tol: &ContactTolerances,
) -> Result<ContactSet, ReactionError> {
    let mut contacts = Vec::new();
    for (node, p) in stem.grown_positions().iter().enumerate() {
        let distance = scene.signed_distance(p);
        if distance < -tol.penetration {
            return Err(ReactionError::PenetrationExceeded {
                node,
                distance,
                allowed: tol.penetration,
            });
        }
        if distance <= tol.contact {
            contacts.push(Contact {
                node,
                arclength: stem.grid().node(node),
                normal: scene.outer_normal(p, tol.normal_band())?,
                distance,
                kind: ContactKind::Touching,
            });
        }
    }
    Ok(ContactSet {
        contacts,
        tip: stem.tip(),
    })
}

/// One unilateral constraint `Σ_{i<node} Δs ⟨ω_i, (point - γ_i) × normal⟩ ≥ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub node: usize,
    pub point: Vec3,
    pub normal: Vec3,
    pub rhs: f64,
    pub tip: bool,
}

/// Rows supported on at most this many cells are summed directly; the
/// moment formulas lose relative accuracy when the lever arms are short.
const DIRECT_CELLS: usize = 32;

/// Up to this many positive multipliers, `ω(μ)` is summed row by row.
const DIRECT_ROWS: usize = 16;

/// Discrete energy minimization problem for one time step.
///
/// Writing `a_j(σ_i) = c_j - x_i × n_j` with `c_j = p_j × n_j` makes every
/// row a fixed 6-vector `y_j = (c_j, n_j)` seen through `B_i = [I, -x̂_i]`.
/// Prefix sums over cells then give Gram entries in `O(1)` and `Aω`,
/// `ω(μ)` in `O(N + m)`. Positions are taken relative to the last grown
/// cell to keep the moments small.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    spacing: f64,
    /// `γ_i` at the left node of each grown cell.
    positions: Vec<Vec3>,
    /// `e^{-β(t - σ_i)}` per cell; the energy weight is `Δs / decay_i`.
    decay: Vec<f64>,
    rows: Vec<ConstraintRow>,
    origin: Vec3,
    /// `S_k = Σ_{i<k} Δs decay_i B_iᵀ B_i`, `k = 0..=cells`.
    moments: Vec<Matrix6<f64>>,
}

impl ConstraintSystem {
    pub fn new(
        spacing: f64,
        positions: Vec<Vec3>,
        decay: Vec<f64>,
        rows: Vec<ConstraintRow>,
    ) -> Result<Self, ReactionError> {
        let bad = |m: String| Err(ReactionError::Obstacle(crate::error::ObstacleError::Invalid(m)));
        if !(spacing > 0.0 && spacing.is_finite()) {
            return bad(format!("spacing {spacing}"));
        }
        if positions.len() != decay.len() {
            return bad("one decay factor per cell required".into());
        }
        if decay.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return bad("energy weights must be positive".into());
        }
        if let Some(r) = rows.iter().find(|r| r.node > positions.len()) {
            return bad(format!("row at node {} beyond {} cells", r.node, positions.len()));
        }
        let origin = positions.last().copied().unwrap_or_else(Vec3::zeros);
        let mut moments = Vec::with_capacity(positions.len() + 1);
        let mut acc = Matrix6::zeros();
        moments.push(acc);
        for (x, d) in positions.iter().zip(&decay) {
            let h = hat(&(x - origin));
            let mut m = Matrix6::zeros();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-h));
            m.fixed_view_mut::<3, 3>(3, 0).copy_from(&h);
            m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-(h * h)));
            acc += m * (spacing * d);
            moments.push(acc);
        }
        Ok(Self {
            spacing,
            positions,
            decay,
            rows,
            origin,
            moments,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cells(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [ConstraintRow] {
        &mut self.rows
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs).collect()
    }

    /// Energy weight `d_i = Δs e^{β(t - σ_i)}`.
    pub fn weight(&self, cell: usize) -> f64 {
        self.spacing / self.decay[cell]
    }

    /// `a_j(σ_i)`, zero for cells at or beyond the contact.
    pub fn coefficient(&self, row: usize, cell: usize) -> Vec3 {
        let r = &self.rows[row];
        if cell < r.node {
            (r.point - self.positions[cell]).cross(&r.normal)
        } else {
            Vec3::zeros()
        }
    }

    fn row_vector(&self, row: usize) -> Vector6<f64> {
        let r = &self.rows[row];
        let c = (r.point - self.origin).cross(&r.normal);
        Vector6::new(c.x, c.y, c.z, r.normal.x, r.normal.y, r.normal.z)
    }

    /// `(Aω)_j = Σ_i Δs ⟨ω_i, a_j(σ_i)⟩`.
    pub fn apply(&self, omega: &[Vec3]) -> Vec<f64> {
        // prefix[k] = Σ_{i<k} (ω_i, x_i × ω_i)
        let mut prefix = Vec::with_capacity(omega.len() + 1);
        let mut acc = Vector6::zeros();
        prefix.push(acc);
        for (w, x) in omega.iter().zip(&self.positions) {
            let m = (x - self.origin).cross(w);
            acc += Vector6::new(w.x, w.y, w.z, m.x, m.y, m.z);
            prefix.push(acc);
        }
        (0..self.rows.len())
            .map(|j| {
                let node = self.rows[j].node;
                if node <= DIRECT_CELLS {
                    self.apply_row_direct(j, omega)
                } else {
                    prefix[node].dot(&self.row_vector(j)) * self.spacing
                }
            })
            .collect()
    }

    /// `(Aω)_j` summed cell by cell.
    pub fn apply_row_direct(&self, row: usize, omega: &[Vec3]) -> f64 {
        let mut acc = 0.0;
        for (i, w) in omega.iter().enumerate().take(self.rows[row].node) {
            acc += w.dot(&self.coefficient(row, i));
        }
        acc * self.spacing
    }

    /// `Aω - b`.
    pub fn slack(&self, omega: &[Vec3]) -> Vec<f64> {
        self.apply(omega)
            .into_iter()
            .zip(&self.rows)
            .map(|(a, r)| a - r.rhs)
            .collect()
    }

    /// `G_{jl} = Σ_i Δs e^{-β(t - σ_i)} ⟨a_j(σ_i), a_l(σ_i)⟩`.
    pub fn gram_entry(&self, j: usize, l: usize) -> f64 {
        let end = self.rows[j].node.min(self.rows[l].node);
        if end <= DIRECT_CELLS {
            let mut acc = 0.0;
            for i in 0..end {
                acc += self.decay[i] * self.coefficient(j, i).dot(&self.coefficient(l, i));
            }
            return acc * self.spacing;
        }
        self.row_vector(j).dot(&(self.moments[end] * self.row_vector(l)))
    }

    /// Stationarity map `ω_i = e^{-β(t-σ_i)} Σ_j μ_j a_j(σ_i)`.
    pub fn omega_from_multipliers(&self, mu: &[f64]) -> Vec<Vec3> {
        let n = self.cells();
        let support: Vec<usize> = (0..mu.len()).filter(|&j| mu[j] != 0.0).collect();
        if support.len() <= DIRECT_ROWS {
            let mut omega = vec![Vec3::zeros(); n];
            for (i, w) in omega.iter_mut().enumerate() {
                let mut acc = Vec3::zeros();
                let mut any = false;
                for &j in &support {
                    if self.rows[j].node > i {
                        acc += self.coefficient(j, i) * mu[j];
                        any = true;
                    }
                }
                if any {
                    *w = acc * self.decay[i];
                }
            }
            return omega;
        }
        // weights[k] = Σ_{j: node_j = k} μ_j y_j, summed from the end below
        let mut at_node = vec![Vector6::zeros(); n + 1];
        for (j, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                at_node[self.rows[j].node] += self.row_vector(j) * m;
            }
        }
        let mut omega = vec![Vec3::zeros(); n];
        let mut tail = Vector6::<f64>::zeros();
        for i in (0..n).rev() {
            tail += at_node[i + 1];
            if tail == Vector6::zeros() {
                continue;
            }
            let c = Vec3::new(tail[0], tail[1], tail[2]);
            let nn = Vec3::new(tail[3], tail[4], tail[5]);
            omega[i] = (c - (self.positions[i] - self.origin).cross(&nn)) * self.decay[i];
        }
        omega
    }

    pub fn energy(&self, omega: &[Vec3]) -> f64 {
        0.5 * omega
            .iter()
            .enumerate()
            .map(|(i, w)| self.weight(i) * w.norm_squared())
            .sum::<f64>()
    }
}

/// Minimizer of the reaction problem with its dual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionSolution {
    /// `ω̄_i` per grown cell.
    pub omega: Vec<Vec3>,
    /// `μ_j ≥ 0` per constraint row.
    pub multipliers: Vec<f64>,
    pub energy: f64,
    /// Rows with `μ_j > 0`.
    pub active: Vec<usize>,
    /// `Aω̄ - b` per row.
    pub slack: Vec<f64>,
    pub iterations: usize,
}

impl ReactionSolution {
    pub fn zero(system: &ConstraintSystem) -> Self {
        let omega = vec![Vec3::zeros(); system.cells()];
        let slack = system.slack(&omega);
        Self {
            omega,
            multipliers: vec![0.0; system.rows().len()],
            energy: 0.0,
            active: Vec::new(),
            slack,
            iterations: 0,
        }
    }

    pub(crate) fn from_multipliers(
        system: &ConstraintSystem,
        multipliers: Vec<f64>,
        iterations: usize,
    ) -> Self {
        let omega = system.omega_from_multipliers(&multipliers);
        let slack = system.slack(&omega);
        let energy = system.energy(&omega);
        let active = multipliers
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(j, _)| j)
            .collect();
        Self {
            omega,
            multipliers,
            energy,
            active,
            slack,
            iterations,
        }
    }
}

/// Per-cell free density `Ψ_i` over the grown cells.
pub fn free_density(stem: &StemState, law: &GrowthLaw) -> Result<Vec<Vec3>, ReactionError> {
    let t = stem.t();
    (0..stem.tip())
        .map(|i| {
            law.eval_psi(t, stem.grid().node(i), &stem.positions()[i], &stem.tangents()[i])
                .map_err(ReactionError::from)
        })
        .collect()
}

/// Velocity of `point` induced by a density on the first `end` cells:
/// `Σ_{i<end} Δs ω_i × (point - γ_i)`.
pub(crate) fn induced_velocity(
    density: &[Vec3],
    positions: &[Vec3],
    spacing: f64,
    end: usize,
    point: &Vec3,
) -> Vec3 {
    let mut v = Vec3::zeros();
    for i in 0..end {
        v += density[i].cross(&(point - positions[i]));
    }
    v * spacing
}

/// Builds the unilateral constraints for the given contacts.
///
/// With `Ψ` the free density, contact `j` at node `n_j` requires
/// `Σ_i Δs ⟨ω_i, a_j(σ_i)⟩ ≥ b_j` with
/// `b_j = -⟨Σ_i Δs Ψ_i × (γ_j - γ_i), n_j⟩ + κ max(0, -Φ_j) / Δt`,
/// and the tip row also carries `-⟨k_tip, n⟩` for the elongation.
pub fn assemble_constraints(
    stem: &StemState,
    contacts: &ContactSet,
    law: &GrowthLaw,
    kappa: f64,
    dt: f64,
) -> Result<ConstraintSystem, ReactionError> {
    let psi = free_density(stem, law)?;
    assemble_with_density(stem, contacts, &psi, law.beta, kappa, dt)
}

pub(crate) fn assemble_with_density(
    stem: &StemState,
    contacts: &ContactSet,
    psi: &[Vec3],
    beta: f64,
    kappa: f64,
    dt: f64,
) -> Result<ConstraintSystem, ReactionError> {
    if contacts.is_empty() {
        return Err(ReactionError::EmptyContactSet);
    }
    let ds = stem.spacing();
    let cells = stem.tip();
    let t = stem.t();
    let positions = stem.positions()[..cells].to_vec();
    let decay = (0..cells)
        .map(|i| (-beta * (t - stem.grid().node(i))).exp())
        .collect();
    let rows = contacts
        .contacts
        .iter()
        .map(|c| {
            let point = stem.positions()[c.node];
            let n = c.normal.into_inner();
            let free = induced_velocity(psi, stem.positions(), ds, c.node.min(cells), &point);
            let tip = c.node == stem.tip();
            let mut rhs = -free.dot(&n) + kappa * (-c.distance).max(0.0) / dt;
            if tip {
                rhs -= stem.tip_tangent().dot(&n);
            }
            ConstraintRow {
                node: c.node,
                point,
                normal: n,
                rhs,
                tip,
            }
        })
        .collect();
    ConstraintSystem::new(ds, positions, decay, rows)
}

/// Reaction velocity at arclength `s`: `∫_0^s ω̄(σ) × (γ(s) - γ(σ)) dσ`.
pub fn reaction_velocity(stem: &StemState, omega: &[Vec3], s: f64) -> Vec3 {
    let grid = stem.grid();
    let ds = grid.spacing();
    let s = s.clamp(0.0, grid.last());
    let cell = ((s / ds).floor() as usize).min(grid.len() - 1);
    let frac = s / ds - cell as f64;
    let p = if cell + 1 < grid.len() {
        stem.positions()[cell] + stem.tangents()[cell] * (frac * ds)
    } else {
        stem.positions()[cell]
    };
    let mut v = Vec3::zeros();
    for (i, w) in omega.iter().enumerate() {
        let left = grid.node(i);
        if left >= s {
            break;
        }
        let width = (s - left).min(ds);
        v += w.cross(&(p - stem.positions()[i])) * width;
    }
    v
}

/// KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `max_i |ω_i - e^{-β(t-σ_i)} Σ_j μ_j a_j(σ_i)|`.
    pub stationarity: f64,
    pub min_multiplier: f64,
    pub min_slack: f64,
    /// `Σ_j |μ_j slack_j|`.
    pub complementarity: f64,
    pub rhs_norm: f64,
    pub omega_norm: f64,
}

impl KktReport {
    /// Acceptance thresholds for a reaction solve.
    pub fn certifies(&self) -> bool {
        self.stationarity <= 1e-9 * self.omega_norm.max(f64::MIN_POSITIVE)
            && self.min_multiplier >= 0.0
            && self.min_slack >= -1e-9 * (1.0 + self.rhs_norm)
            && self.complementarity <= 1e-8 * (1.0 + self.rhs_norm)
    }
}

/// Recomputes every KKT residual from scratch.
pub fn certify(system: &ConstraintSystem, sol: &ReactionSolution) -> KktReport {
    let mut stationarity: f64 = 0.0;
    for i in 0..system.cells() {
        let mut expected = Vec3::zeros();
        for (j, m) in sol.multipliers.iter().enumerate() {
            expected += system.coefficient(j, i) * *m;
        }
        expected *= system.decay()[i];
        stationarity = stationarity.max((sol.omega[i] - expected).norm());
    }
    let slack: Vec<f64> = (0..system.rows().len())
        .map(|j| system.apply_row_direct(j, &sol.omega) - system.rows()[j].rhs)
        .collect();
    let rhs_norm = system.rows().iter().map(|r| r.rhs * r.rhs).sum::<f64>().sqrt();
    let omega_norm = sol.omega.iter().map(|w| w.norm_squared()).sum::<f64>().sqrt();
    KktReport {
        stationarity,
        min_multiplier: sol.multipliers.iter().copied().fold(f64::INFINITY, f64::min),
        min_slack: slack.iter().copied().fold(f64::INFINITY, f64::min),
        complementarity: sol
            .multipliers
            .iter()
            .zip(&slack)
            .map(|(m, s)| (m * s).abs())
            .sum(),
        rhs_norm,
        omega_norm,
    }
}

#[cfg(test)]
pub(crate) mod fixtures;
