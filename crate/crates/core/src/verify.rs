//! Invariant suites run by `mkp verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::inference::Experiment;
use crate::optics::{cyclic_variant, reachable_patterns, shift_state, simulate};
use crate::qstate::{bell_state, collapsed_state, TwoPhotonState};
use crate::vaa::{mols_check, vaa_overlap_check};
use crate::{Result, C64};

/// One named check: the worst deviation seen and the allowed tolerance.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub deviation: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.deviation <= self.tolerance
    }
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> Result<TwoPhotonState> {
    let amps = (0..dim * dim)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    TwoPhotonState::from_amps(dim, amps)
}

fn random_phases(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect()
}

/// State-algebra, VAA and simulator invariants for `exp`; `samples` random
/// phase/state draws feed the simulator checks.
pub fn run_suites(exp: &Experiment, seed: u64, samples: usize) -> Result<Vec<SuiteResult>> {
    let d = exp.dim();
    let mubs = exp.mubs();
    let vaa = exp.vaa();
    let setup = exp.setup();
    let mut out = Vec::new();
    let mut push = |name, deviation, tolerance| {
        out.push(SuiteResult {
            name,
            deviation,
            tolerance,
        })
    };

    push("mub-orthonormality", mubs.orthonormality_deviation(), 1e-12);
    push("mub-unbiasedness", mubs.unbiasedness_deviation(), 1e-12);

    let reference = bell_state(mubs, d)?;
    let mut bell_dev: f64 = 0.0;
    let mut collapse_dev: f64 = 0.0;
    for m in 0..=d {
        bell_dev = bell_dev.max(reference.max_deviation(&bell_state(mubs, m)?));
        for j in 0..d {
            let overlap = reference.inner(&collapsed_state(mubs, m, j)?);
            collapse_dev = collapse_dev.max((overlap - 1.0 / (d as f64).sqrt()).norm());
        }
    }
    push("bell-basis-independence", bell_dev, 1e-12);
    push("bell-collapse-overlap", collapse_dev, 1e-12);

    let mapping = vaa.mapping();
    push("mols", if mols_check(mapping) { 0.0 } else { 1.0 }, 0.0);
    let mut subset_dev = 0usize;
    for m in 0..=d {
        for j in 0..d {
            subset_dev = subset_dev.max(mapping.retrodiction_subset(m, j).len().abs_diff(d));
        }
    }
    push("retrodiction-subsets", subset_dev as f64, 0.0);
    push("vaa-gram", vaa.gram_deviation(), 1e-10);
    push("vaa-overlap", vaa_overlap_check(vaa, mubs)?, 1e-10);
    push(
        "vaa-identity-resolution",
        vaa.identity_resolution_deviation(),
        1e-10,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifted = cyclic_variant(setup, 1);
    let mut norm_dev: f64 = 0.0;
    let mut equivariance_dev: f64 = 0.0;
    let mut support_leak: f64 = 0.0;
    let mut gauge_dev: f64 = 0.0;
    for _ in 0..samples {
        let phases = random_phases(&mut rng, setup.phase_count());
        let state = random_state(&mut rng, d)?;
        let dist = simulate(setup, &phases, &state)?;
        norm_dev = norm_dev.max((dist.total() - 1.0).abs());

        let moved = simulate(&shifted, &phases, &shift_state(&state, 1))?;
        for ((_, a), (_, b)) in dist.iter().zip(moved.iter()) {
            equivariance_dev = equivariance_dev.max((a - b).abs());
        }

        let reachable = reachable_patterns(setup, &state, 0.0);
        for (p, prob) in dist.iter() {
            if !reachable.contains(&p) {
                support_leak = support_leak.max(prob);
            }
        }

        let delta = rng.gen_range(0.0..std::f64::consts::TAU);
        let gauged: Vec<f64> = phases.iter().map(|p| p + delta).collect();
        for post_select in [false, true] {
            gauge_dev = gauge_dev
                .max((exp.p_v(&phases, post_select)? - exp.p_v(&gauged, post_select)?).abs());
        }
    }
    push("simulate-normalization", norm_dev, 1e-9);
    push("cyclic-equivariance", equivariance_dev, 1e-12);
    push("matching-support", support_leak, 0.0);
    push("global-phase-gauge", gauge_dev, 1e-10);

    Ok(out)
}
