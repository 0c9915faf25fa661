//! Phase files, per-basis `D,m,p_M` CSV reports and per-pattern posterior dumps.

use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::inference::{best_pair, Evaluation, Experiment, Scoring, Strategy};
use crate::optics::coincidence_patterns;
use crate::tuner::OptimizationRun;
use crate::{Error, Result};

/// Optimized phases as persisted by `mkp optimize`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseFile {
    pub dim: usize,
    pub objective: String,
    pub seed: u64,
    pub phases: Vec<f64>,
    pub p_v: f64,
    /// `p_M` keyed by basis index, in basis order.
    pub p_m: IndexMap<String, f64>,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub post_select: bool,
}

impl PhaseFile {
    /// Scores the run's best phases and packages them.
    pub fn from_run(exp: &Experiment, run: &OptimizationRun) -> Result<Self> {
        let ev = exp.evaluate(run.best_phases.as_slice(), run.scoring)?;
        Ok(Self {
            dim: exp.dim(),
            objective: run.objective.clone(),
            seed: run.seed,
            phases: run.best_phases.0.clone(),
            p_v: ev.p_v,
            p_m: p_m_map(&ev.p_m),
            strategy: run.scoring.strategy,
            post_select: run.scoring.post_select,
        })
    }

    pub fn scoring(&self) -> Scoring {
        Scoring {
            strategy: self.strategy,
            post_select: self.post_select,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        if file.phases.len() != 2 * file.dim {
            return Err(Error::PhaseCountMismatch {
                expected: 2 * file.dim,
                got: file.phases.len(),
            });
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("phase file serializes")
    }
}

fn p_m_map(p_m: &[f64]) -> IndexMap<String, f64> {
    p_m.iter()
        .enumerate()
        .map(|(m, &p)| (m.to_string(), p))
        .collect()
}

/// `p_M` per basis for one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisTable {
    pub dim: usize,
    pub p_m: Vec<f64>,
}

impl BasisTable {
    pub fn average(&self) -> f64 {
        self.p_m.iter().sum::<f64>() / self.p_m.len() as f64
    }

    /// Best pair of bases and their mean.
    pub fn best_pair(&self) -> Option<(usize, usize, f64)> {
        best_pair(&self.p_m)
    }
}

/// Formats `x` with `digits` significant digits in plain decimal notation.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Serialize, Deserialize)]
struct CsvRecord {
    #[serde(rename = "D")]
    dim: usize,
    m: String,
    #[serde(rename = "p_M")]
    p_m: String,
}

/// Writes `D,m,p_M` rows, then an `avg` row and a `best2:a+b` row per dimension.
pub fn write_table_csv<W: Write>(rows: &[BasisTable], percent: bool, out: W) -> Result<()> {
    let scale = if percent { 100.0 } else { 1.0 };
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        let mut emit = |m: String, p: f64| {
            w.serialize(CsvRecord {
                dim: row.dim,
                m,
                p_m: format_sig(p * scale, 6),
            })
        };
        for (m, &p) in row.p_m.iter().enumerate() {
            emit(m.to_string(), p)?;
        }
        emit("avg".into(), row.average())?;
        if let Some((a, b, mean)) = row.best_pair() {
            emit(format!("best2:{a}+{b}"), mean)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads per-basis rows written by [`write_table_csv`] (or a hand-made fixture).
///
/// Aggregate rows are skipped; `percent` divides values by 100.
pub fn read_table_csv<R: Read>(input: R, percent: bool) -> Result<Vec<BasisTable>> {
    let scale = if percent { 0.01 } else { 1.0 };
    let mut rows: Vec<BasisTable> = Vec::new();
    for record in csv::Reader::from_reader(input).deserialize() {
        let record: CsvRecord = record?;
        let Ok(m) = record.m.parse::<usize>() else {
            continue;
        };
        let p: f64 = record
            .p_m
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad probability {:?}", record.p_m)))?;
        let row = match rows.iter_mut().find(|r| r.dim == record.dim) {
            Some(row) => row,
            None => {
                rows.push(BasisTable {
                    dim: record.dim,
                    p_m: Vec::new(),
                });
                rows.last_mut().unwrap()
            }
        };
        if m != row.p_m.len() {
            return Err(Error::InvalidInput(format!(
                "D={} rows out of order at m={m}",
                record.dim
            )));
        }
        row.p_m.push(p * scale);
    }
    Ok(rows)
}

#[derive(Serialize)]
pub struct PatternReport {
    pub pattern: String,
    pub reachable: bool,
    pub winner: Option<usize>,
    /// Total probability `P(d_i)` under the uniform prior.
    pub probability: f64,
    pub posterior: Option<Vec<f64>>,
}

/// Full JSON report: metrics plus every coincidence pattern's posterior.
#[derive(Serialize)]
pub struct EvaluationReport {
    pub dim: usize,
    pub strategy: Strategy,
    pub post_select: bool,
    pub phases: Vec<f64>,
    pub p_v: f64,
    pub p_m: IndexMap<String, f64>,
    pub average_p_m: f64,
    pub best_pair: Option<(usize, usize, f64)>,
    pub patterns: Vec<PatternReport>,
}

impl EvaluationReport {
    pub fn new(exp: &Experiment, phases: &[f64], ev: &Evaluation) -> Self {
        let detectors = exp.setup().detectors();
        let states = ev.table.state_count() as f64;
        let patterns = coincidence_patterns(detectors.len())
            .iter()
            .enumerate()
            .map(|(i, p)| PatternReport {
                pattern: p.label(detectors),
                reachable: ev.rule.is_reachable(i),
                winner: ev.rule.assignment()[i],
                probability: (0..ev.table.state_count())
                    .map(|k| ev.table.get(i, k))
                    .sum::<f64>()
                    / states,
                posterior: ev.rule.posterior(i).ok().map(<[f64]>::to_vec),
            })
            .collect();
        Self {
            dim: exp.dim(),
            strategy: ev.scoring.strategy,
            post_select: ev.scoring.post_select,
            phases: phases.to_vec(),
            p_v: ev.p_v,
            p_m: p_m_map(&ev.p_m),
            average_p_m: ev.average_p_m(),
            best_pair: best_pair(&ev.p_m),
            patterns,
        }
    }
}
