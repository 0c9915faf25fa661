//! Reference implementations shared by the integration tests. These do not
//! call into the simulator or decoder they check.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use mkp_core::optics::SetupModel;
use mkp_core::qstate::TwoPhotonState;
use mkp_core::C64;
use rand::Rng;

/// Brute-force polynomial expansion.
///
/// Every input monomial `S_ij a_i b_j` is replaced by the product of the two
/// phased rows, all ordered detector products `u v` are enumerated, and the
/// coefficients are collected per unordered monomial. Returns probabilities
/// keyed by `(lo, hi)` detector indices, including zero-probability monomials.
pub fn expand(
    setup: &SetupModel,
    phases: &[f64],
    state: &TwoPhotonState,
) -> BTreeMap<(usize, usize), f64> {
    let d = setup.dim();
    let n = setup.detector_count();
    let dense_row = |idx: usize| {
        let row = &setup.rows()[idx];
        let (s, c) = phases[row.phase_slot].sin_cos();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for e in &row.entries {
            out[e.detector] = e.coeff * C64::new(c, s);
        }
        out
    };

    let mut poly: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    for u in 0..n {
        for v in u..n {
            poly.insert((u, v), C64::new(0.0, 0.0));
        }
    }
    for i in 0..d {
        let a = dense_row(i);
        for j in 0..d {
            let b = dense_row(d + j);
            let s = state.get(i, j);
            for u in 0..n {
                for v in 0..n {
                    let key = (u.min(v), u.max(v));
                    *poly.get_mut(&key).unwrap() += s * a[u] * b[v];
                }
            }
        }
    }
    let total: f64 = poly.values().map(|c| c.norm_sqr()).sum();
    poly.into_iter()
        .map(|(k, c)| (k, c.norm_sqr() / total))
        .collect()
}

pub fn random_state<R: Rng>(rng: &mut R, dim: usize) -> TwoPhotonState {
    let amps = (0..dim * dim)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    TwoPhotonState::from_amps(dim, amps).unwrap()
}

pub fn random_phases<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect()
}

/// Exhaustive MAP: among every assignment pattern -> state, the one with the
/// highest expected success; lexicographically smallest among equals.
/// Patterns with an all-zero likelihood column are left unassigned.
pub fn exhaustive_map(likelihood: &[Vec<f64>]) -> (Vec<Option<usize>>, f64) {
    let states = likelihood.len();
    let patterns = likelihood[0].len();
    let reachable: Vec<bool> = (0..patterns)
        .map(|p| likelihood.iter().any(|row| row[p] > 0.0))
        .collect();

    let total_assignments = states.pow(patterns as u32);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for code in 0..total_assignments {
        let mut rest = code;
        let mut assignment = vec![0; patterns];
        for slot in assignment.iter_mut().rev() {
            *slot = rest % states;
            rest /= states;
        }
        // Joint probability of (state, pattern) under a uniform prior.
        let score: f64 = (0..patterns)
            .map(|p| likelihood[assignment[p]][p] / states as f64)
            .sum();
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((assignment, score));
        }
    }
    let (assignment, score) = best.unwrap();
    let assignment = assignment
        .into_iter()
        .zip(&reachable)
        .map(|(k, &r)| r.then_some(k))
        .collect();
    (assignment, score)
}
