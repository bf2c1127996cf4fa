use rand::Rng;

use super::{ConstraintRow, ConstraintSystem};
use crate::curves::Vec3;

pub(crate) fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random smooth stem with `contacts` random rows.
pub(crate) fn random_system<R: Rng>(rng: &mut R, contacts: usize, cells: usize) -> ConstraintSystem {
    let ds = 1.0 / cells as f64;
    let beta = rng.gen_range(0.0..3.0);
    let t = cells as f64 * ds;
    let mut k = random_unit(rng);
    let mut p = Vec3::zeros();
    let mut positions = Vec::with_capacity(cells + 1);
    for _ in 0..=cells {
        positions.push(p);
        p += k * ds;
        k = (k + random_unit(rng) * 0.3).normalize();
    }
    let mut nodes: Vec<usize> = Vec::new();
    while nodes.len() < contacts {
        let j = rng.gen_range(2..=cells);
        if !nodes.contains(&j) {
            nodes.push(j);
        }
    }
    nodes.sort_unstable();
    let rows = nodes
        .iter()
        .map(|&j| ConstraintRow {
            node: j,
            point: positions[j],
            normal: random_unit(rng),
            // node velocities scale with the lever arm s_j
            rhs: rng.gen_range(-1.0..1.0) * j as f64 * ds,
            tip: j == cells,
        })
        .collect();
    let decay = (0..cells)
        .map(|i| (-beta * (t - i as f64 * ds)).exp())
        .collect();
    positions.truncate(cells);
    ConstraintSystem::new(ds, positions, decay, rows).unwrap()
}
