//! Multi-start BFGS over phase-shifter settings.
//!
//! The loss is a negated success probability. Gradients are central finite
//! differences; the objective is only piecewise smooth (MAP arg-max
//! switches), so many random starts are used and the best kept.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::inference::{subset_mean, Experiment, Scoring};
use crate::optics::PhaseVector;
use crate::{Error, Result};

/// What the tuner maximizes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Objective {
    /// VAA identification probability `p_V`.
    PV,
    /// Mean of `p_M(m)` over every basis.
    PmAverage,
    /// Mean of `p_M(m)` over the listed bases.
    PmSubset(Vec<usize>),
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::PV => f.write_str("p_v"),
            Objective::PmAverage => f.write_str("p_m-average"),
            Objective::PmSubset(s) => {
                let list: Vec<String> = s.iter().map(ToString::to_string).collect();
                write!(f, "p_m-subset:{}", list.join(","))
            }
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_v" => Ok(Objective::PV),
            "p_m-average" => Ok(Objective::PmAverage),
            _ => {
                let list = s
                    .strip_prefix("p_m-subset:")
                    .ok_or_else(|| Error::InvalidInput(format!("unknown objective {s:?}")))?;
                let bases = list
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse()
                            .map_err(|_| Error::InvalidInput(format!("bad basis index {t:?}")))
                    })
                    .collect::<Result<Vec<usize>>>()?;
                Ok(Objective::PmSubset(bases))
            }
        }
    }
}

/// Loss `L(phases) = -score`.
pub fn loss(
    exp: &Experiment,
    phases: &[f64],
    objective: &Objective,
    scoring: Scoring,
) -> Result<f64> {
    Ok(-match objective {
        Objective::PV => exp.p_v(phases, scoring.post_select)?,
        Objective::PmAverage => exp.evaluate(phases, scoring)?.average_p_m(),
        Objective::PmSubset(bases) => subset_mean(&exp.evaluate(phases, scoring)?.p_m, bases)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once the gradient infinity-norm drops below this.
    pub grad_tol: f64,
    /// Central-difference step in radians.
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            fd_step: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Central-difference gradient with step `h`.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Fourth-order five-point stencil gradient with step `h`.
pub fn five_point_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let at = |i: usize, offset: f64, probe: &mut Vec<f64>| {
        probe[i] = x[i] + offset;
        let v = f(probe);
        probe[i] = x[i];
        v
    };
    (0..x.len())
        .map(|i| {
            let f2 = at(i, 2.0 * h, &mut probe);
            let f1 = at(i, h, &mut probe);
            let m1 = at(i, -h, &mut probe);
            let m2 = at(i, -2.0 * h, &mut probe);
            (-f2 + 8.0 * f1 - 8.0 * m1 + m2) / (12.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// BFGS with an Armijo backtracking line search and inverse-Hessian updates.
///
/// Returns [`Error::NonFiniteLoss`] if `f` produces NaN or infinity anywhere
/// along the path.
pub fn minimize_bfgs<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    opts: &BfgsOptions,
) -> Result<Minimum> {
    const ARMIJO: f64 = 1e-4;
    const MAX_BACKTRACK: usize = 40;

    let n = x0.len();
    let finite = |v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteLoss)
        }
    };
    let gradient = |x: &[f64]| -> Result<Vec<f64>> {
        let g = central_gradient(&f, x, opts.fd_step);
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(Error::NonFiniteLoss)
        }
    };

    let mut x = x0.to_vec();
    let mut fx = finite(f(&x))?;
    let mut g = gradient(&x)?;
    let mut h_inv = identity(n);
    let mut first_step = true;

    for iter in 0..opts.max_iter {
        if inf_norm(&g) < opts.grad_tol {
            return Ok(Minimum {
                x,
                value: fx,
                iterations: iter,
                converged: true,
            });
        }

        let mut dir = mat_vec(&h_inv, &g);
        dir.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            h_inv = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let ft = finite(f(&trial))?;
            if ft <= fx + ARMIJO * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return Ok(Minimum {
                x,
                value: fx,
                iterations: iter,
                converged: false,
            });
        };

        let g_new = gradient(&x_new)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if first_step {
                let scale = sy / dot(&y, &y);
                h_inv = identity(n);
                h_inv.iter_mut().flatten().for_each(|v| *v *= scale);
                first_step = false;
            }
            bfgs_update(&mut h_inv, &s, &y, sy);
        }

        x = x_new;
        fx = f_new;
        g = g_new;
    }

    Ok(Minimum {
        converged: inf_norm(&g) < opts.grad_tol,
        x,
        value: fx,
        iterations: opts.max_iter,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// `H <- (I - r s y^T) H (I - r y s^T) + r s s^T`, `r = 1 / (s.y)`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TunerConfig {
    pub restarts: usize,
    pub seed: u64,
    pub scoring: Scoring,
    pub bfgs: BfgsOptions,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            restarts: 500,
            seed: 0,
            scoring: Scoring::default(),
            bfgs: BfgsOptions::default(),
        }
    }
}

/// Outcome of a multi-start optimization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationRun {
    pub seed: u64,
    pub restarts: usize,
    pub objective: String,
    pub scoring: Scoring,
    pub best_phases: PhaseVector,
    pub best_loss: f64,
    /// Final loss of each restart; `None` where the restart hit a non-finite loss.
    pub history: Vec<Option<f64>>,
}

/// Uniform start point in `[0, 2 pi)^n` for one restart; independent of the restart count.
pub fn initial_phases(seed: u64, restart: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    (0..n).map(|_| rng.gen_range(0.0..TAU)).collect()
}

/// Runs `config.restarts` BFGS descents and keeps the lowest loss (earliest on ties).
pub fn optimize(
    exp: &Experiment,
    objective: &Objective,
    config: &TunerConfig,
) -> Result<OptimizationRun> {
    if config.restarts == 0 {
        return Err(Error::InvalidInput("restarts must be at least 1".into()));
    }
    if let Objective::PmSubset(bases) = objective {
        subset_mean(&vec![0.0; exp.dim() + 1], bases)?;
    }
    let n = exp.phase_count();
    let objective_fn = |x: &[f64]| loss(exp, x, objective, config.scoring).unwrap_or(f64::NAN);

    let outcomes: Vec<Option<Minimum>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let x0 = initial_phases(config.seed, r, n);
            match minimize_bfgs(objective_fn, &x0, &config.bfgs) {
                Ok(min) => Some(min),
                Err(err) => {
                    log::warn!("restart {r} discarded: {err}");
                    None
                }
            }
        })
        .collect();

    let mut best: Option<&Minimum> = None;
    for min in outcomes.iter().flatten() {
        if best.is_none_or(|b| min.value < b.value) {
            best = Some(min);
        }
    }
    let best = best.ok_or(Error::NonFiniteLoss)?;
    let phases: Vec<f64> = best.x.iter().map(|p| p.rem_euclid(TAU)).collect();
    let best_loss = loss(exp, &phases, objective, config.scoring)?;

    Ok(OptimizationRun {
        seed: config.seed,
        restarts: config.restarts,
        objective: objective.to_string(),
        scoring: config.scoring,
        best_phases: PhaseVector(phases),
        best_loss,
        history: outcomes
            .iter()
            .map(|m| m.as_ref().map(|m| m.value))
            .collect(),
    })
}

/// Largest gap between the minimizer's central-difference gradient and a
/// five-point reference at `phases`.
pub fn finite_difference_check(
    exp: &Experiment,
    phases: &[f64],
    objective: &Objective,
    scoring: Scoring,
    opts: &BfgsOptions,
) -> Result<f64> {
    loss(exp, phases, objective, scoring)?;
    let f = |x: &[f64]| loss(exp, x, objective, scoring).unwrap_or(f64::NAN);
    let internal = central_gradient(&f, phases, opts.fd_step);
    let reference = five_point_gradient(&f, phases, 1e-3);
    Ok(internal
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
