//! Brute-force reference solver: tries every active set.
//!
//! For each subset `S` of rows it solves the equality-constrained primal
//! KKT system `D ω = A_Sᵀ λ`, `A_S ω = b_S` on an explicitly assembled dense
//! constraint matrix (through its Schur complement, pseudo-inverted for
//! rank-deficient subsets) and keeps the first candidate that is primal
//! feasible with non-negative multipliers. Subsets are visited by size, so
//! the reported active set is a smallest one.

use nalgebra::{DMatrix, DVector};

use super::{ConstraintSystem, ReactionSolution};
use crate::curves::Vec3;
use crate::error::ReactionError;

pub const ORACLE_MAX_CONTACTS: usize = 12;

pub fn oracle_solve_reaction(system: &ConstraintSystem) -> Result<ReactionSolution, ReactionError> {
    let m = system.rows().len();
    if m > ORACLE_MAX_CONTACTS {
        return Err(ReactionError::TooManyContacts {
            found: m,
            max: ORACLE_MAX_CONTACTS,
        });
    }
    let n = system.cells();
    let ds = system.spacing();

    // Dense A (m × 3n) straight from the row definition.
    let mut a = DMatrix::<f64>::zeros(m, 3 * n);
    for (j, row) in system.rows().iter().enumerate() {
        for i in 0..row.node.min(n) {
            let coeff = (row.point - system.positions()[i]).cross(&row.normal) * ds;
            for c in 0..3 {
                a[(j, 3 * i + c)] = coeff[c];
            }
        }
    }
    let d_inv = DVector::from_fn(3 * n, |k, _| system.decay()[k / 3] / ds);
    let b = DVector::from_iterator(m, system.rows().iter().map(|r| r.rhs));
    let scale = 1.0 + b.amax();
    let tol = 1e-9 * scale;

    let mut masks: Vec<u32> = (0..(1u32 << m)).collect();
    masks.sort_by_key(|s| (s.count_ones(), *s));
    for mask in masks {
        let set: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let lambda = if set.is_empty() {
            DVector::zeros(0)
        } else {
            let a_s = a.select_rows(&set);
            let scaled = DMatrix::from_fn(a_s.nrows(), a_s.ncols(), |r, c| a_s[(r, c)] * d_inv[c]);
            let schur = &scaled * a_s.transpose();
            let b_s = DVector::from_iterator(set.len(), set.iter().map(|&j| b[j]));
            let svd = schur.clone().svd(true, true);
            let cutoff = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
            let Ok(mut l) = svd.solve(&b_s, cutoff) else {
                continue;
            };
            // refinement rounds recover accuracy lost to conditioning
            for _ in 0..3 {
                let r = &b_s - &schur * &l;
                match svd.solve(&r, cutoff) {
                    Ok(dl) => l += dl,
                    Err(_) => break,
                }
            }
            l
        };
        if lambda.iter().any(|l| *l < -tol) {
            continue;
        }
        let mut x = DVector::zeros(3 * n);
        for (k, &j) in set.iter().enumerate() {
            x += a.row(j).transpose() * lambda[k];
        }
        x.component_mul_assign(&d_inv);
        let slack = &a * &x - &b;
        let feasible = slack.iter().all(|s| *s >= -tol);
        let equalities = set.iter().all(|&j| slack[j].abs() <= tol);
        if !(feasible && equalities) {
            continue;
        }
        let mut mu = vec![0.0; m];
        for (k, &j) in set.iter().enumerate() {
            mu[j] = lambda[k].max(0.0);
        }
        let omega: Vec<Vec3> = (0..n)
            .map(|i| Vec3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]))
            .collect();
        let energy = system.energy(&omega);
        return Ok(ReactionSolution {
            omega,
            active: (0..m).filter(|&j| mu[j] > tol).collect(),
            multipliers: mu,
            energy,
            slack: slack.iter().copied().collect(),
            iterations: 0,
        });
    }
    Err(ReactionError::NoCandidateFeasible)
}
