//! Time stepping of the stem under growth and obstacle reaction.
//!
//! One step evaluates the free density `Ψ` on the current stem, solves for
//! the reaction `ω̄` when nodes touch the obstacle, rotates every grown cell
//! tangent by `R[Δt Ω_i]` with `Ω_i` the cumulative total density through
//! that cell, rebuilds positions from the base and grows the tip by one
//! node. Extension tangents all receive the rotation of the last grown cell.
//!
//! The linear constraints are re-targeted until the realized displacement
//! of every active contact matches its target to round-off, and nodes that
//! would cross the boundary during the step join the contact set before
//! the step is accepted.

mod state;
#[cfg(test)]
mod tests;

pub use state::{StemState, UNIT_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::curves::{inclusive_prefix, positions_from_tangents, rodrigues, ArclengthGrid, Vec3};
use crate::error::{ReactionError, StepError};
use crate::growth::GrowthLaw;
use crate::obstacles::Scene;
use crate::reaction::{
    assemble_with_density, detect_contacts, free_density, solve_reaction_warm, Contact,
    ContactKind, ContactSet, ContactTolerances, ConstraintRow, ConstraintSystem,
    ReactionSolution, SolverOptions,
};

/// Rounds of contact promotion per step.
const MAX_SWEEPS: usize = 8;
/// Re-targeting rounds per solve.
const MAX_CORRECTIONS: usize = 40;
/// Accepted realized-displacement error, relative to `Δt`.
const CORRECTION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub contact: f64,
    pub penetration: f64,
    pub breakdown_angle: f64,
    pub breakdown_curvature: f64,
}

impl Tolerances {
    pub fn for_spacing(ds: f64) -> Self {
        let c = ContactTolerances::for_spacing(ds);
        Self {
            contact: c.contact,
            penetration: c.penetration,
            breakdown_angle: 1e-4,
            breakdown_curvature: 1e-3,
        }
    }

    pub fn contact_tolerances(&self) -> ContactTolerances {
        ContactTolerances {
            contact: self.contact,
            penetration: self.penetration,
        }
    }
}

/// Discretized initial curve: tangents of the grown cells followed by the
/// tip direction, which also seeds the straight extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCurve {
    pub tangents: Vec<Vec3>,
}

impl InitialCurve {
    pub fn straight(direction: Vec3, cells: usize) -> Self {
        Self {
            tangents: vec![direction.normalize(); cells + 1],
        }
    }

    pub fn cells(&self) -> usize {
        self.tangents.len().saturating_sub(1)
    }

    pub fn tip_tangent(&self) -> Vec3 {
        self.tangents[self.tangents.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Time step, equal to the grid spacing.
    pub dt: f64,
    pub horizon: f64,
    pub t0: f64,
    pub initial: InitialCurve,
    pub tolerances: Tolerances,
    /// Penetration recovery gain.
    pub kappa: f64,
    pub law: GrowthLaw,
    pub scene: Scene,
}

fn grid_count(value: f64, dt: f64) -> Option<usize> {
    let n = (value / dt).round();
    let snapped = n * dt;
    ((snapped - value).abs() <= 1e-9 * value.abs().max(1.0) && n >= 0.0).then_some(n as usize)
}

impl SimConfig {
    /// Default tolerances and recovery gain for the given step.
    pub fn new(
        dt: f64,
        horizon: f64,
        t0: f64,
        initial: InitialCurve,
        law: GrowthLaw,
        scene: Scene,
    ) -> Self {
        Self {
            dt,
            horizon,
            t0,
            initial,
            tolerances: Tolerances::for_spacing(dt),
            kappa: 0.2,
            law,
            scene,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.dt
    }

    pub fn validate(&self) -> Result<(), StepError> {
        let bad = |m: String| Err(StepError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t0 >= 0.0 && self.horizon > self.t0 && self.horizon.is_finite()) {
            return bad(format!(
                "need 0 <= t0 < horizon, got t0 = {} and horizon = {}",
                self.t0, self.horizon
            ));
        }
        let Some(n0) = grid_count(self.t0, self.dt) else {
            return bad(format!("t0 = {} is not a multiple of dt = {}", self.t0, self.dt));
        };
        if grid_count(self.horizon, self.dt).is_none() {
            return bad(format!(
                "horizon = {} is not a multiple of dt = {}",
                self.horizon, self.dt
            ));
        }
        if self.initial.tangents.len() != n0 + 1 {
            return bad(format!(
                "initial curve has {} tangents, expected {} cells plus the tip direction",
                self.initial.tangents.len(),
                n0
            ));
        }
        if let Some(i) = self
            .initial
            .tangents
            .iter()
            .position(|k| (k.norm() - 1.0).abs() > UNIT_TOLERANCE)
        {
            return bad(format!("initial tangent {i} is not unit length"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("contact tolerance", t.contact),
            ("penetration tolerance", t.penetration),
            ("breakdown angle tolerance", t.breakdown_angle),
            ("breakdown curvature tolerance", t.breakdown_curvature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be >= 0, got {}", self.kappa));
        }
        self.law.validate()?;
        Ok(())
    }

    /// Grid over `[0, horizon]`.
    pub fn grid(&self) -> Result<ArclengthGrid, StepError> {
        let m = grid_count(self.horizon, self.dt)
            .ok_or_else(|| StepError::InvalidConfig("horizon is not on the grid".into()))?;
        Ok(ArclengthGrid::new(self.dt, m + 1)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ContactOnset,
    ContactRelease,
    Breakdown,
    HorizonReached,
    IntegrityFailure,
}

/// Residuals of the breakdown test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub flagged: bool,
    pub tip_in_contact: bool,
    /// `1 - ⟨k_tip, -n_tip⟩`, absent without tip contact.
    pub angle_residual: Option<f64>,
    /// Largest `|k_i - k_{i-1}| / Δs` over grown nodes off the obstacle.
    pub curvature_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
    pub nodes: Vec<usize>,
    pub breakdown: Option<BreakdownReport>,
    pub message: Option<String>,
}

impl Event {
    fn new(kind: EventKind, time: f64) -> Self {
        Self {
            kind,
            time,
            nodes: Vec::new(),
            breakdown: None,
            message: None,
        }
    }
}

/// Reaction used to advance one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReaction {
    /// Touching nodes plus any promoted during the step.
    pub contacts: ContactSet,
    /// Constraint rows with their final right-hand sides.
    pub rows: Vec<ConstraintRow>,
    pub solution: ReactionSolution,
    pub corrections: usize,
    pub sweeps: usize,
}

impl StepReaction {
    /// Rebuilds the solved system on the state the step started from.
    pub fn system(&self, state: &StemState, beta: f64) -> Result<ConstraintSystem, ReactionError> {
        system_for_rows(state, beta, self.rows.clone())
    }
}

fn decay_factors(state: &StemState, beta: f64) -> Vec<f64> {
    let t = state.t();
    (0..state.tip())
        .map(|i| (-beta * (t - state.grid().node(i))).exp())
        .collect()
}

pub(crate) fn system_for_rows(
    state: &StemState,
    beta: f64,
    rows: Vec<ConstraintRow>,
) -> Result<ConstraintSystem, ReactionError> {
    ConstraintSystem::new(
        state.spacing(),
        state.positions()[..state.tip()].to_vec(),
        decay_factors(state, beta),
        rows,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: StemState,
    pub reaction: StepReaction,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Advanced(StepResult),
    /// The current state is a breakdown configuration; nothing was advanced.
    Breakdown(BreakdownReport),
}

/// Builds the stem at `t0`: grown cells from the initial curve and a
/// straight extension along its end tangent.
pub fn init_state(config: &SimConfig) -> Result<StemState, StepError> {
    config.validate()?;
    let grid = config.grid()?;
    let n0 = config.initial.cells();
    let mut tangents = config.initial.tangents.clone();
    tangents.resize(grid.len(), config.initial.tip_tangent());
    let state = StemState::from_tangents(grid, n0, tangents)?;

    let scene = &config.scene;
    let base = scene.signed_distance(&Vec3::zeros());
    if base <= config.tolerances.contact {
        return Err(StepError::InitialPenetration(format!(
            "the base must lie strictly outside the obstacle (distance {base})"
        )));
    }
    for (i, p) in state.grown_positions().iter().enumerate() {
        let d = scene.signed_distance(p);
        if d < 0.0 {
            return Err(StepError::InitialPenetration(format!(
                "node {i} is inside the obstacle (distance {d})"
            )));
        }
    }
    for (i, w) in state.grown_positions().windows(2).enumerate() {
        let d = scene.signed_distance(&((w[0] + w[1]) * 0.5));
        if d < 0.0 {
            return Err(StepError::InitialPenetration(format!(
                "segment {i} crosses the obstacle (distance {d})"
            )));
        }
    }
    let contacts = detect_contacts(&state, scene, &config.tolerances.contact_tolerances())?;
    if detect_breakdown(&state, &contacts, config).flagged {
        return Err(StepError::InitialBreakdown);
    }
    Ok(state)
}

/// Tests for the configuration in which the solution cannot be continued:
/// the tip meets the obstacle head-on and the stem is straight away from
/// the obstacle.
pub fn detect_breakdown(state: &StemState, contacts: &ContactSet, config: &SimConfig) -> BreakdownReport {
    let ds = state.spacing();
    let k = state.tangents();
    let curvature_residual = (1..=state.tip())
        .filter(|i| !contacts.contains(*i))
        .map(|i| (k[i] - k[i - 1]).norm() / ds)
        .fold(0.0, f64::max);
    let tip = contacts.tip_contact().filter(|_| contacts.tip == state.tip());
    let angle_residual = tip.map(|c| 1.0 - state.tip_tangent().dot(&(-c.normal.into_inner())));
    let tol = &config.tolerances;
    let flagged = angle_residual.is_some_and(|a| a <= tol.breakdown_angle)
        && curvature_residual <= tol.breakdown_curvature;
    BreakdownReport {
        flagged,
        tip_in_contact: tip.is_some(),
        angle_residual,
        curvature_residual,
    }
}

/// Rotates every grown tangent by `R[Δt Ω_i]` and grows the tip by one node.
fn rotate_and_grow(state: &StemState, total: &[Vec3], dt: f64) -> StemState {
    let n = state.tip();
    let ds = state.spacing();
    let prefix = inclusive_prefix(total, ds);
    let mut tangents = state.tangents().to_vec();
    for i in 0..n {
        tangents[i] = rodrigues(&(prefix[i] * dt)) * tangents[i];
    }
    if n > 0 {
        let k = rodrigues(&(prefix[n - 1] * dt)) * state.tip_tangent();
        for t in &mut tangents[n..] {
            *t = k;
        }
    }
    let positions = positions_from_tangents(&tangents, ds, Vec3::zeros());
    StemState::from_parts_unchecked(*state.grid(), n + 1, positions, tangents)
}

/// Normal displacement of each row's point over the step; the tip row
/// follows the tip.
fn realized_displacement(before: &StemState, after: &StemState, rows: &[ConstraintRow]) -> Vec<f64> {
    rows.iter()
        .map(|r| {
            let end = if r.tip { r.node + 1 } else { r.node };
            (after.positions()[end] - before.positions()[r.node]).dot(&r.normal)
        })
        .collect()
}

/// Drives steps while carrying the warm start and contact bookkeeping.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    config: &'a SimConfig,
    solver: SolverOptions,
    /// Nodes whose rows were active in the previous solve.
    warm: Vec<usize>,
    /// Nodes touching or carrying reaction after the previous step.
    engaged: Vec<usize>,
}

impl<'a> Stepper<'a> {
    pub fn new(config: &'a SimConfig) -> Self {
        Self {
            config,
            solver: SolverOptions::default(),
            warm: Vec::new(),
            engaged: Vec::new(),
        }
    }

    pub fn advance(&mut self, state: &StemState) -> Result<StepOutcome, StepError> {
        if state.at_horizon() {
            return Err(StepError::HorizonReached);
        }
        let cfg = self.config;
        let tol = cfg.tolerances.contact_tolerances();
        let mut contacts = detect_contacts(state, &cfg.scene, &tol)?;
        let report = detect_breakdown(state, &contacts, cfg);
        if report.flagged {
            return Ok(StepOutcome::Breakdown(report));
        }
        let psi = free_density(state, &cfg.law)?;

        let mut sweeps = 0;
        let (next, rows, solution, corrections) = loop {
            sweeps += 1;
            let (next, rows, solution, corrections) = if contacts.is_empty() {
                let solution = ReactionSolution {
                    omega: vec![Vec3::zeros(); state.tip()],
                    multipliers: Vec::new(),
                    energy: 0.0,
                    active: Vec::new(),
                    slack: Vec::new(),
                    iterations: 0,
                };
                (rotate_and_grow(state, &psi, cfg.dt), Vec::new(), solution, 0)
            } else {
                self.solve_contacts(state, &contacts, &psi)?
            };
            let swept = self.swept_contacts(state, &next, &contacts)?;
            if swept.is_empty() || sweeps == MAX_SWEEPS {
                break (next, rows, solution, corrections);
            }
            for c in swept {
                contacts.insert(c);
            }
            let report = detect_breakdown(state, &contacts, cfg);
            if report.flagged {
                return Ok(StepOutcome::Breakdown(report));
            }
        };

        audit_step(&next, cfg)?;

        let engaged: Vec<usize> = contacts
            .contacts
            .iter()
            .enumerate()
            .filter(|(j, c)| {
                c.kind == ContactKind::Touching
                    || solution.multipliers.get(*j).is_some_and(|m| *m > 0.0)
            })
            .map(|(_, c)| c.node)
            .collect();
        let mut events = Vec::new();
        let onset: Vec<usize> = engaged.iter().copied().filter(|n| !self.engaged.contains(n)).collect();
        let release: Vec<usize> = self.engaged.iter().copied().filter(|n| !engaged.contains(n)).collect();
        for (kind, nodes) in [(EventKind::ContactOnset, onset), (EventKind::ContactRelease, release)] {
            if !nodes.is_empty() {
                let mut e = Event::new(kind, state.t());
                e.nodes = nodes;
                events.push(e);
            }
        }
        self.engaged = engaged;
        self.warm = solution.active.iter().map(|&j| rows[j].node).collect();

        Ok(StepOutcome::Advanced(StepResult {
            state: next,
            reaction: StepReaction {
                contacts,
                rows,
                solution,
                corrections,
                sweeps,
            },
            events,
        }))
    }

    /// Solves the reaction and re-targets the rows until the realized
    /// displacement meets `κ max(0, -Φ_j)` at every active contact.
    fn solve_contacts(
        &self,
        state: &StemState,
        contacts: &ContactSet,
        psi: &[Vec3],
    ) -> Result<(StemState, Vec<ConstraintRow>, ReactionSolution, usize), StepError> {
        let cfg = self.config;
        let mut system =
            assemble_with_density(state, contacts, psi, cfg.law.beta, cfg.kappa, cfg.dt)?;
        let targets: Vec<f64> = contacts
            .contacts
            .iter()
            .map(|c| cfg.kappa * (-c.distance).max(0.0))
            .collect();
        let mut warm: Vec<usize> = (0..contacts.len())
            .filter(|&j| self.warm.contains(&contacts.contacts[j].node))
            .collect();
        let tol = CORRECTION_TOLERANCE * cfg.dt;
        let mut residual = f64::INFINITY;
        for round in 0..MAX_CORRECTIONS {
            let solution = solve_reaction_warm(&system, &self.solver, &warm)?;
            let total: Vec<Vec3> = psi.iter().zip(&solution.omega).map(|(p, w)| p + w).collect();
            let next = rotate_and_grow(state, &total, cfg.dt);
            let realized = realized_displacement(state, &next, system.rows());
            residual = 0.0;
            let mut adjust = Vec::new();
            for (j, (d, target)) in realized.iter().zip(&targets).enumerate() {
                let err = d - target;
                let active = solution.multipliers[j] > 0.0;
                if active {
                    residual = residual.max(err.abs());
                } else {
                    residual = residual.max(-err);
                }
                if active || err < -tol {
                    adjust.push((j, target - d));
                }
            }
            if residual <= tol {
                return Ok((next, system.rows().to_vec(), solution, round));
            }
            for (j, delta) in adjust {
                system.rows_mut()[j].rhs += delta / cfg.dt;
            }
            warm = solution.active;
        }
        Err(StepError::CorrectionStalled { residual })
    }

    /// Grown nodes outside the contact set that the trial step carries
    /// across the boundary, with normals taken at their current position.
    fn swept_contacts(
        &self,
        state: &StemState,
        next: &StemState,
        contacts: &ContactSet,
    ) -> Result<Vec<Contact>, StepError> {
        let scene = &self.config.scene;
        let mut swept = Vec::new();
        for node in 1..=state.tip() {
            if contacts.contains(node) {
                continue;
            }
            let moved = if node == state.tip() {
                next.positions()[node + 1]
            } else {
                next.positions()[node]
            };
            if scene.signed_distance(&moved) >= 0.0 {
                continue;
            }
            let p = state.positions()[node];
            swept.push(Contact {
                node,
                arclength: state.grid().node(node),
                normal: scene
                    .outer_normal(&p, f64::INFINITY)
                    .map_err(ReactionError::from)?,
                distance: scene.signed_distance(&p),
                kind: ContactKind::Swept,
            });
        }
        Ok(swept)
    }
}

/// Post-step audit: structural invariants and non-penetration of grown
/// nodes and segment midpoints.
fn audit_step(state: &StemState, config: &SimConfig) -> Result<(), StepError> {
    state.check_invariants()?;
    let allowed = config.tolerances.penetration;
    let scene = &config.scene;
    let grown = state.grown_positions();
    for (node, p) in grown.iter().enumerate() {
        let distance = scene.signed_distance(p);
        if distance < -allowed {
            return Err(StepError::Reaction(ReactionError::PenetrationExceeded {
                node,
                distance,
                allowed,
            }));
        }
    }
    for (node, w) in grown.windows(2).enumerate() {
        let distance = scene.signed_distance(&((w[0] + w[1]) * 0.5));
        if distance < -allowed {
            return Err(StepError::Reaction(ReactionError::PenetrationExceeded {
                node,
                distance,
                allowed,
            }));
        }
    }
    Ok(())
}

/// One step from `state` with a cold solver.
pub fn step(state: &StemState, config: &SimConfig) -> Result<(StemState, Vec<Event>), StepError> {
    match Stepper::new(config).advance(state)? {
        StepOutcome::Advanced(r) => Ok((r.state, r.events)),
        StepOutcome::Breakdown(_) => Err(StepError::BreakdownReached),
    }
}

/// Stored state and the reaction that advanced it; the last frame of a run
/// carries no reaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub state: StemState,
    pub reaction: Option<StepReaction>,
    pub min_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    HorizonReached,
    Breakdown(BreakdownReport),
    IntegrityFailure(StepError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub events: Vec<Event>,
    pub terminal: Terminal,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
    pub events: Vec<Event>,
    pub terminal: Terminal,
}

pub fn run(config: &SimConfig) -> Result<Trajectory, StepError> {
    let mut frames = Vec::new();
    let summary = run_with(config, 1, |f| frames.push(f))?;
    Ok(Trajectory {
        frames,
        events: summary.events,
        terminal: summary.terminal,
    })
}

/// Runs to the horizon or breakdown, handing every `stride`-th frame and the
/// terminal frame to `on_frame`. Only setup errors are returned; failures
/// during stepping end the run with an integrity failure.
pub fn run_with(
    config: &SimConfig,
    stride: usize,
    mut on_frame: impl FnMut(Frame),
) -> Result<RunSummary, StepError> {
    let stride = stride.max(1);
    let frame = |state: &StemState, reaction: Option<StepReaction>| Frame {
        min_distance: state.min_distance(&config.scene),
        state: state.clone(),
        reaction,
    };
    let mut events = Vec::new();
    let mut state = match init_state(config) {
        Ok(s) => s,
        Err(StepError::InitialBreakdown) => {
            let grid = config.grid()?;
            let n0 = config.initial.cells();
            let mut tangents = config.initial.tangents.clone();
            tangents.resize(grid.len(), config.initial.tip_tangent());
            let state = StemState::from_tangents(grid, n0, tangents)?;
            let contacts =
                detect_contacts(&state, &config.scene, &config.tolerances.contact_tolerances())?;
            let report = detect_breakdown(&state, &contacts, config);
            on_frame(frame(&state, None));
            let mut e = Event::new(EventKind::Breakdown, state.t());
            e.nodes = vec![state.tip()];
            e.breakdown = Some(report);
            events.push(e);
            return Ok(RunSummary {
                events,
                terminal: Terminal::Breakdown(report),
                steps: 0,
            });
        }
        Err(e) => return Err(e),
    };
    let mut stepper = Stepper::new(config);
    let mut steps = 0;
    let terminal = loop {
        if state.at_horizon() {
            on_frame(frame(&state, None));
            events.push(Event::new(EventKind::HorizonReached, state.t()));
            break Terminal::HorizonReached;
        }
        match stepper.advance(&state) {
            Ok(StepOutcome::Advanced(result)) => {
                if steps % stride == 0 {
                    on_frame(frame(&state, Some(result.reaction)));
                }
                events.extend(result.events);
                state = result.state;
                steps += 1;
            }
            Ok(StepOutcome::Breakdown(report)) => {
                log::info!("breakdown at t = {}", state.t());
                on_frame(frame(&state, None));
                let mut e = Event::new(EventKind::Breakdown, state.t());
                e.nodes = vec![state.tip()];
                e.breakdown = Some(report);
                events.push(e);
                break Terminal::Breakdown(report);
            }
            Err(err) => {
                log::warn!("step from t = {} failed: {err}", state.t());
                on_frame(frame(&state, None));
                let mut e = Event::new(EventKind::IntegrityFailure, state.t());
                e.message = Some(err.to_string());
                events.push(e);
                break Terminal::IntegrityFailure(err);
            }
        }
    };
    Ok(RunSummary {
        events,
        terminal,
        steps,
    })
}

/// Pure free step with no reaction, for comparisons.
pub fn free_step(state: &StemState, law: &GrowthLaw, dt: f64) -> Result<StemState, StepError> {
    let psi = free_density(state, law)?;
    Ok(rotate_and_grow(state, &psi, dt))
}
