//! Active-set solver for the dual of the reaction problem.
//!
//! The dual is `min ½ μᵀ(G + εI)μ - bᵀμ` over `μ ≥ 0`, solved with the
//! Lawson–Hanson pivoting scheme on the Gram matrix. The small ridge `ε`
//! picks the least-norm multipliers when contact rows are linearly
//! dependent; `ω̄` is unique either way. The dual gradient `Gμ - b` equals the
//! primal slack, which is evaluated through `ω(μ)` in `O(m N)` so only the
//! Gram block of the passive set is ever formed.

use nalgebra::{DMatrix, DVector};

use super::{ConstraintSystem, ReactionSolution};
use crate::error::ReactionError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// KKT residual tolerance, relative to `1 + ‖b‖∞`.
    pub tolerance: f64,
    /// Ridge added to the Gram block, relative to its largest diagonal entry.
    pub ridge: f64,
    pub max_iterations: usize,
    /// Primal feasibility tolerance used to flag infeasible systems.
    pub feasibility: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            ridge: 1e-12,
            max_iterations: 10_000,
            feasibility: 1e-9,
        }
    }
}

pub fn solve_reaction(system: &ConstraintSystem) -> Result<ReactionSolution, ReactionError> {
    solve_reaction_warm(system, &SolverOptions::default(), &[])
}

/// Solves starting from a guess of the active rows (indices into the rows).
pub fn solve_reaction_warm(
    system: &ConstraintSystem,
    opts: &SolverOptions,
    warm: &[usize],
) -> Result<ReactionSolution, ReactionError> {
    let m = system.rows().len();
    if m == 0 {
        return Ok(ReactionSolution::zero(system));
    }
    let b = system.rhs();
    let b_inf = b.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let tol = opts.tolerance * (1.0 + b_inf);

    let mut gram = GramCache::new(system);
    let max_diag = (0..m).map(|j| gram.get(j, j)).fold(0.0_f64, f64::max);
    let ridge = opts.ridge * max_diag.max(1.0);

    let mut mu = vec![0.0; m];
    let mut passive: Vec<usize> = Vec::new();

    let mut seed: Vec<usize> = warm.iter().copied().filter(|&j| j < m).collect();
    seed.sort_unstable();
    seed.dedup();
    // Prune the warm set until its equality solution is strictly positive.
    while !seed.is_empty() {
        let z = solve_block(&mut gram, &seed, &b, ridge);
        if z.iter().all(|v| *v > 0.0) {
            for (&j, v) in seed.iter().zip(&z) {
                mu[j] = *v;
            }
            passive = seed;
            break;
        }
        seed = seed
            .iter()
            .zip(&z)
            .filter(|(_, v)| **v > 0.0)
            .map(|(j, _)| *j)
            .collect();
    }

    let mut blocked = vec![false; m];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let omega = system.omega_from_multipliers(&mu);
        let slack = system.slack(&omega);
        let entering = (0..m)
            .filter(|j| !blocked[*j] && !passive.contains(j))
            .min_by(|&a, &b| slack[a].total_cmp(&slack[b]))
            .filter(|&j| slack[j] < -tol);
        let Some(j_in) = entering else {
            break;
        };
        if iterations > opts.max_iterations {
            return Err(ReactionError::MaxIterations {
                iterations,
                residual: -slack[j_in],
            });
        }
        passive.push(j_in);
        passive.sort_unstable();

        let mut changed = false;
        loop {
            let z = solve_block(&mut gram, &passive, &b, ridge);
            if z.iter().all(|v| *v > 0.0) {
                for (&j, v) in passive.iter().zip(&z) {
                    mu[j] = *v;
                }
                changed = true;
                break;
            }
            // Move from μ toward z until the first passive multiplier hits zero.
            let mut alpha = f64::INFINITY;
            let mut leaving = passive[0];
            for (&j, &zj) in passive.iter().zip(&z) {
                if zj <= 0.0 {
                    let denom = mu[j] - zj;
                    let a = if denom > 0.0 { mu[j] / denom } else { 0.0 };
                    if a < alpha {
                        alpha = a;
                        leaving = j;
                    }
                }
            }
            for (&j, &zj) in passive.iter().zip(&z) {
                mu[j] += alpha * (zj - mu[j]);
            }
            mu[leaving] = 0.0;
            if alpha > 0.0 {
                changed = true;
            }
            passive.retain(|&j| {
                if mu[j] > 0.0 {
                    true
                } else {
                    mu[j] = 0.0;
                    false
                }
            });
            if passive.is_empty() {
                break;
            }
        }
        if changed {
            blocked.iter_mut().for_each(|x| *x = false);
        }
        if !passive.contains(&j_in) {
            // Rounding kept the entering row from moving; do not pick it again
            // until the iterate changes.
            blocked[j_in] = true;
        }
    }

    polish(system, &mut gram, &mut mu, ridge);
    let sol = ReactionSolution::from_multipliers(system, mu, iterations);
    let worst = sol.slack.iter().copied().fold(f64::INFINITY, f64::min);
    let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if worst < -opts.feasibility * (1.0 + b_norm) {
        return Err(ReactionError::Infeasible { worst_slack: worst });
    }
    Ok(sol)
}

/// Refines the positive multipliers against the slack evaluated through
/// `ω(μ)`, which is what callers see.
fn polish(system: &ConstraintSystem, gram: &mut GramCache<'_>, mu: &mut [f64], ridge: f64) {
    let set: Vec<usize> = (0..mu.len()).filter(|&j| mu[j] > 0.0).collect();
    if set.is_empty() {
        return;
    }
    // Slack is summed directly on the active rows: the prefix form loses
    // digits when multipliers are large.
    for _ in 0..3 {
        let omega = system.omega_from_multipliers(mu);
        let mut r = vec![0.0; mu.len()];
        for &j in &set {
            r[j] = system.rows()[j].rhs - system.apply_row_direct(j, &omega);
        }
        let dz = solve_block(gram, &set, &r, ridge);
        let trial: Vec<f64> = set.iter().zip(&dz).map(|(&j, d)| mu[j] + d).collect();
        if trial.iter().any(|v| *v <= 0.0) {
            return;
        }
        for (&j, v) in set.iter().zip(trial) {
            mu[j] = v;
        }
    }
}

/// Solves `(G_PP + εI) z = b_P` with two rounds of refinement against `G_PP`.
fn solve_block(gram: &mut GramCache<'_>, set: &[usize], b: &[f64], ridge: f64) -> Vec<f64> {
    let p = set.len();
    let g = DMatrix::from_fn(p, p, |r, c| gram.get(set[r], set[c]));
    let rhs = DVector::from_iterator(p, set.iter().map(|&j| b[j]));
    let mut shift = ridge;
    let chol = loop {
        let shifted = &g + DMatrix::identity(p, p) * shift;
        if let Some(c) = shifted.cholesky() {
            break c;
        }
        shift = if shift > 0.0 { shift * 10.0 } else { 1e-300 };
    };
    let mut z = chol.solve(&rhs);
    for _ in 0..2 {
        let r = &rhs - &g * &z;
        z += chol.solve(&r);
    }
    z.iter().copied().collect()
}

struct GramCache<'a> {
    system: &'a ConstraintSystem,
    values: Vec<f64>,
    m: usize,
}

impl<'a> GramCache<'a> {
    fn new(system: &'a ConstraintSystem) -> Self {
        let m = system.rows().len();
        Self {
            system,
            values: vec![f64::NAN; m * m],
            m,
        }
    }

    fn get(&mut self, j: usize, l: usize) -> f64 {
        let (a, b) = if j <= l { (j, l) } else { (l, j) };
        let idx = a * self.m + b;
        if self.values[idx].is_nan() {
            self.values[idx] = self.system.gram_entry(a, b);
        }
        self.values[idx]
    }
}
