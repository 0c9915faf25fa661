//! MAP decoding of click patterns and the two success metrics.
//!
//! Alice assumes a uniform prior over the `D^2` VAA states. For a pattern
//! `d` the posterior is `P(phi_k | d) = P(d | phi_k) / sum_n P(d | phi_n)`
//! and she reports the arg-max (lowest index on ties). `p_V` is the chance
//! that this identifies the incoming VAA state; `p_M(m)` is the chance her
//! final answer matches the King's outcome when basis `m` was measured.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::optics::{build_setup, ClickDistribution, Propagator, SetupModel};
use crate::qstate::{build_mub, collapsed_state, MubFamily, TwoPhotonState};
use crate::vaa::{build_vaa_basis, VaaBasis};
use crate::{Error, Result};

/// Tolerance on likelihood row sums and posterior column sums.
pub const PROB_TOL: f64 = 1e-9;

/// Patterns whose summed likelihood falls below this are unreachable.
pub const EMPTY_TOL: f64 = 1e-20;

/// How Alice turns a click pattern into her answer once the basis is revealed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Decode the pattern to the MAP VAA state `k*`, then answer `f_{k*}(m)`.
    #[default]
    VaaMap,
    /// Answer `argmax_j P(pattern | m_j)` for the revealed basis `m`.
    BasisConditioned,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::VaaMap => "vaa-map",
            Strategy::BasisConditioned => "basis-conditioned",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vaa-map" => Ok(Strategy::VaaMap),
            "basis-conditioned" => Ok(Strategy::BasisConditioned),
            other => Err(Error::InvalidInput(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Decoding strategy plus whether to post-select on two-detector coincidences.
///
/// Without post-selection, same-detector doubles count as failures. With it,
/// every distribution is renormalized over coincidence patterns first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scoring {
    pub strategy: Strategy,
    pub post_select: bool,
}

impl Scoring {
    pub const ALL: [Scoring; 4] = [
        Scoring {
            strategy: Strategy::VaaMap,
            post_select: false,
        },
        Scoring {
            strategy: Strategy::VaaMap,
            post_select: true,
        },
        Scoring {
            strategy: Strategy::BasisConditioned,
            post_select: false,
        },
        Scoring {
            strategy: Strategy::BasisConditioned,
            post_select: true,
        },
    ];
}

impl fmt::Display for Scoring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.strategy)?;
        if self.post_select {
            f.write_str("+post-select")?;
        }
        Ok(())
    }
}

/// `P(d_i | phi_n)` over coincidence patterns, plus per-state leakage into doubles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LikelihoodTable {
    /// `entries[n][i]`.
    entries: Vec<Vec<f64>>,
    leakage: Vec<f64>,
}

impl LikelihoodTable {
    /// Validates shape, range and per-state normalization.
    pub fn new(entries: Vec<Vec<f64>>, leakage: Vec<f64>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidTable(msg));
        if entries.is_empty() {
            return bad("no states".into());
        }
        if leakage.len() != entries.len() {
            return bad(format!(
                "{} leakage values for {} states",
                leakage.len(),
                entries.len()
            ));
        }
        let width = entries[0].len();
        for (n, row) in entries.iter().enumerate() {
            if row.len() != width {
                return bad(format!(
                    "state {n} has {} patterns, expected {width}",
                    row.len()
                ));
            }
            if row
                .iter()
                .chain([&leakage[n]])
                .any(|p| !(0.0..=1.0 + PROB_TOL).contains(p))
            {
                return bad(format!("state {n} has an entry outside [0, 1]"));
            }
            let total: f64 = row.iter().sum::<f64>() + leakage[n];
            if (total - 1.0).abs() > PROB_TOL {
                return bad(format!("state {n} sums to {total}"));
            }
        }
        Ok(Self { entries, leakage })
    }

    /// A table with no leakage.
    pub fn from_rows(entries: Vec<Vec<f64>>) -> Result<Self> {
        let leakage = entries
            .iter()
            .map(|row| (1.0 - row.iter().sum::<f64>()).max(0.0))
            .collect();
        Self::new(entries, leakage)
    }

    fn from_distributions(dists: &[ClickDistribution]) -> Self {
        Self {
            entries: dists.iter().map(|d| d.coincidences().to_vec()).collect(),
            leakage: dists
                .iter()
                .map(|d| if d.total() > 0.0 { d.leakage() } else { 1.0 })
                .collect(),
        }
    }

    pub fn state_count(&self) -> usize {
        self.entries.len()
    }

    pub fn pattern_count(&self) -> usize {
        self.entries[0].len()
    }

    pub fn get(&self, pattern: usize, state: usize) -> f64 {
        self.entries[state][pattern]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.entries[state]
    }

    pub fn leakage(&self, state: usize) -> f64 {
        self.leakage[state]
    }

    /// Conditions every state on a coincidence; states without any keep leakage 1.
    pub fn post_selected(&self) -> Self {
        let mut entries = self.entries.clone();
        let mut leakage = self.leakage.clone();
        for (row, leak) in entries.iter_mut().zip(&mut leakage) {
            let kept: f64 = row.iter().sum();
            if kept > EMPTY_TOL {
                row.iter_mut().for_each(|p| *p /= kept);
                *leak = 0.0;
            } else {
                row.iter_mut().for_each(|p| *p = 0.0);
                *leak = 1.0;
            }
        }
        Self { entries, leakage }
    }
}

/// Runs each VAA state through the setup.
pub fn likelihoods(setup: &SetupModel, phases: &[f64], vaa: &VaaBasis) -> Result<LikelihoodTable> {
    if setup.dim() != vaa.dim() {
        return Err(Error::DimensionMismatch {
            expected: setup.dim(),
            got: vaa.dim(),
        });
    }
    let prop = Propagator::new(setup, phases)?;
    let dists = vaa
        .states()
        .iter()
        .map(|s| prop.distribution(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(LikelihoodTable::from_distributions(&dists))
}

/// MAP assignment and posterior per pattern; `None` marks unreachable patterns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodeRule {
    assignment: Vec<Option<usize>>,
    posterior: Vec<Option<Vec<f64>>>,
}

impl DecodeRule {
    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    /// MAP VAA index for a pattern.
    pub fn winner(&self, pattern: usize) -> Result<usize> {
        self.assignment[pattern].ok_or(Error::EmptyPattern(pattern))
    }

    pub fn posterior(&self, pattern: usize) -> Result<&[f64]> {
        self.posterior[pattern]
            .as_deref()
            .ok_or(Error::EmptyPattern(pattern))
    }

    pub fn is_reachable(&self, pattern: usize) -> bool {
        self.assignment[pattern].is_some()
    }
}

/// Index of the first maximum.
fn first_argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Bayes posterior under a uniform prior and its arg-max per pattern.
pub fn decode(table: &LikelihoodTable) -> DecodeRule {
    let mut assignment = Vec::with_capacity(table.pattern_count());
    let mut posterior = Vec::with_capacity(table.pattern_count());
    for p in 0..table.pattern_count() {
        let column: Vec<f64> = table.entries.iter().map(|row| row[p]).collect();
        let total: f64 = column.iter().sum();
        if total > EMPTY_TOL {
            assignment.push(Some(first_argmax(column.iter().copied())));
            posterior.push(Some(column.iter().map(|x| x / total).collect()));
        } else {
            assignment.push(None);
            posterior.push(None);
        }
    }
    DecodeRule {
        assignment,
        posterior,
    }
}

/// `p_V = sum_i P(d_i) max_k P(phi_k | d_i)`, evaluated as `(1/N) sum_i P(d_i | phi_k*)`.
pub fn success_v(table: &LikelihoodTable, rule: &DecodeRule) -> f64 {
    let hits: f64 = (0..table.pattern_count())
        .filter_map(|p| Some(table.entries[rule.assignment[p]?][p]))
        .sum();
    hits / table.state_count() as f64
}

/// Setup, bases and VAA states for one dimension, with the King's collapsed states cached.
#[derive(Clone, Debug)]
pub struct Experiment {
    setup: SetupModel,
    mubs: MubFamily,
    vaa: VaaBasis,
    /// `collapsed[m][j]`.
    collapsed: Vec<Vec<TwoPhotonState>>,
}

impl Experiment {
    pub fn new(setup: SetupModel) -> Result<Self> {
        let dim = setup.dim();
        let mubs = build_mub(dim)?;
        let vaa = build_vaa_basis(&mubs)?;
        let collapsed = (0..=dim)
            .map(|m| (0..dim).map(|j| collapsed_state(&mubs, m, j)).collect())
            .collect::<Result<_>>()?;
        Ok(Self {
            setup,
            mubs,
            vaa,
            collapsed,
        })
    }

    /// The built-in template setup for `dim`.
    pub fn builtin(dim: usize) -> Result<Self> {
        Self::new(build_setup(dim)?)
    }

    pub fn dim(&self) -> usize {
        self.setup.dim()
    }

    pub fn setup(&self) -> &SetupModel {
        &self.setup
    }

    pub fn mubs(&self) -> &MubFamily {
        &self.mubs
    }

    pub fn vaa(&self) -> &VaaBasis {
        &self.vaa
    }

    pub fn phase_count(&self) -> usize {
        self.setup.phase_count()
    }

    fn check_basis(&self, m: usize) -> Result<()> {
        if m > self.dim() {
            return Err(Error::BasisOutOfRange {
                index: m,
                dim: self.dim(),
            });
        }
        Ok(())
    }

    fn vaa_table(&self, prop: &Propagator, post_select: bool) -> Result<LikelihoodTable> {
        let dists = self
            .vaa
            .states()
            .iter()
            .map(|s| prop.distribution_or_empty(s))
            .collect::<Result<Vec<_>>>()?;
        let table = LikelihoodTable::from_distributions(&dists);
        Ok(if post_select {
            table.post_selected()
        } else {
            table
        })
    }

    /// Coincidence probabilities for each King outcome `j` of basis `m`.
    fn outcome_rows(
        &self,
        prop: &Propagator,
        m: usize,
        post_select: bool,
    ) -> Result<Vec<Vec<f64>>> {
        self.collapsed[m]
            .iter()
            .map(|s| {
                let dist = prop.distribution_or_empty(s)?;
                Ok(if post_select {
                    dist.post_selected()
                        .unwrap_or_else(|| vec![0.0; dist.coincidences().len()])
                } else {
                    dist.coincidences().to_vec()
                })
            })
            .collect()
    }

    fn p_m_with(
        &self,
        prop: &Propagator,
        rule: &DecodeRule,
        m: usize,
        scoring: Scoring,
    ) -> Result<f64> {
        let rows = self.outcome_rows(prop, m, scoring.post_select)?;
        let d = self.dim();
        let mapping = self.vaa.mapping();
        let hits: f64 = match scoring.strategy {
            Strategy::VaaMap => (0..rule.assignment.len())
                .filter_map(|p| {
                    let k = rule.assignment[p]?;
                    Some(rows[mapping.get(k, m)][p])
                })
                .sum(),
            Strategy::BasisConditioned => (0..rows[0].len())
                .map(|p| rows.iter().map(|r| r[p]).fold(0.0, f64::max))
                .sum(),
        };
        Ok(hits / d as f64)
    }

    /// `p_V` alone; cheaper than [`Self::evaluate`].
    pub fn p_v(&self, phases: &[f64], post_select: bool) -> Result<f64> {
        let prop = Propagator::new(&self.setup, phases)?;
        let table = self.vaa_table(&prop, post_select)?;
        Ok(success_v(&table, &decode(&table)))
    }

    /// Full scoring of a phase setting.
    pub fn evaluate(&self, phases: &[f64], scoring: Scoring) -> Result<Evaluation> {
        let prop = Propagator::new(&self.setup, phases)?;
        let table = self.vaa_table(&prop, scoring.post_select)?;
        let rule = decode(&table);
        let p_v = success_v(&table, &rule);
        let p_m = (0..=self.dim())
            .map(|m| self.p_m_with(&prop, &rule, m, scoring))
            .collect::<Result<_>>()?;
        Ok(Evaluation {
            scoring,
            p_v,
            p_m,
            table,
            rule,
        })
    }
}

/// Everything computed for one phase setting.
#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub scoring: Scoring,
    pub p_v: f64,
    /// `p_M(m)` for `m = 0..=D`.
    pub p_m: Vec<f64>,
    pub table: LikelihoodTable,
    pub rule: DecodeRule,
}

impl Evaluation {
    pub fn average_p_m(&self) -> f64 {
        self.p_m.iter().sum::<f64>() / self.p_m.len() as f64
    }
}

/// `p_M(m)`: success probability when the King measures basis `m`.
pub fn success_m(exp: &Experiment, phases: &[f64], m: usize, scoring: Scoring) -> Result<f64> {
    exp.check_basis(m)?;
    let prop = Propagator::new(&exp.setup, phases)?;
    let table = exp.vaa_table(&prop, scoring.post_select)?;
    exp.p_m_with(&prop, &decode(&table), m, scoring)
}

/// Mean of `p_m` over a non-empty subset of bases.
pub fn subset_mean(p_m: &[f64], subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut total = 0.0;
    for &m in subset {
        total += *p_m.get(m).ok_or(Error::BasisOutOfRange {
            index: m,
            dim: p_m.len().saturating_sub(1),
        })?;
    }
    Ok(total / subset.len() as f64)
}

/// The 2-subset of bases with the highest mean; first pair wins ties.
pub fn best_pair(p_m: &[f64]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for a in 0..p_m.len() {
        for b in a + 1..p_m.len() {
            let mean = (p_m[a] + p_m[b]) / 2.0;
            if best.is_none_or(|(_, _, m)| mean > m) {
                best = Some((a, b, mean));
            }
        }
    }
    best
}

/// Average `p_M` over `subset` at the given phases.
pub fn subset_report(
    exp: &Experiment,
    phases: &[f64],
    subset: &[usize],
    scoring: Scoring,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    for &m in subset {
        exp.check_basis(m)?;
    }
    subset_mean(&exp.evaluate(phases, scoring)?.p_m, subset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity(n: usize) -> LikelihoodTable {
        LikelihoodTable::from_rows(
            (0..n)
                .map(|k| (0..n).map(|p| if p == k { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_table_decodes_perfectly() {
        let table = identity(9);
        let rule = decode(&table);
        for p in 0..9 {
            assert_eq!(rule.winner(p).unwrap(), p);
            assert_eq!(rule.posterior(p).unwrap()[p], 1.0);
        }
        assert_abs_diff_eq!(success_v(&table, &rule), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_table_is_chance_level() {
        let n = 9;
        let patterns = 12;
        let table =
            LikelihoodTable::from_rows(vec![vec![1.0 / patterns as f64; patterns]; n]).unwrap();
        let rule = decode(&table);
        for p in 0..patterns {
            assert_eq!(rule.winner(p).unwrap(), 0);
            for &x in rule.posterior(p).unwrap() {
                assert_abs_diff_eq!(x, 1.0 / n as f64, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(success_v(&table, &rule), 1.0 / n as f64, epsilon = 1e-15);
    }

    #[test]
    fn two_state_bayes() {
        let table = LikelihoodTable::from_rows(vec![vec![0.2, 0.8], vec![0.1, 0.9]]).unwrap();
        let rule = decode(&table);
        let post = rule.posterior(0).unwrap();
        assert_abs_diff_eq!(post[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(post[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(rule.winner(0).unwrap(), 0);
    }

    #[test]
    fn unreachable_pattern_is_reported() {
        let table = LikelihoodTable::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let rule = decode(&table);
        assert!(!rule.is_reachable(1));
        assert!(matches!(rule.winner(1), Err(Error::EmptyPattern(1))));
        assert_abs_diff_eq!(success_v(&table, &rule), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn table_validation() {
        assert!(LikelihoodTable::new(vec![vec![0.5, 0.4]], vec![0.0]).is_err());
        assert!(LikelihoodTable::new(vec![vec![0.5, 0.4]], vec![0.1]).is_ok());
        assert!(LikelihoodTable::new(vec![vec![1.5, -0.5]], vec![0.0]).is_err());
        assert!(LikelihoodTable::new(vec![vec![0.5], vec![0.5, 0.5]], vec![0.5, 0.0]).is_err());
    }

    #[test]
    fn post_selection_renormalizes() {
        let table = LikelihoodTable::new(vec![vec![0.25, 0.25], vec![0.0, 0.0]], vec![0.5, 1.0])
            .unwrap()
            .post_selected();
        assert_eq!(table.row(0), &[0.5, 0.5]);
        assert_eq!(table.leakage(0), 0.0);
        assert_eq!(table.leakage(1), 1.0);
    }

    #[test]
    fn subsets() {
        let p = [0.833, 0.623, 0.506, 0.418];
        assert_abs_diff_eq!(subset_mean(&p, &[0, 1]).unwrap(), 0.728, epsilon = 1e-12);
        assert!(matches!(subset_mean(&p, &[]), Err(Error::EmptySubset)));
        assert!(subset_mean(&p, &[4]).is_err());
        let (a, b, mean) = best_pair(&p).unwrap();
        assert_eq!((a, b), (0, 1));
        assert_abs_diff_eq!(mean, 0.728, epsilon = 1e-12);
    }

    #[test]
    fn zero_coincidence_mass_gives_zero_success() {
        let exp = Experiment::builtin(3).unwrap();
        let table = LikelihoodTable::new(vec![vec![0.0; 15]; 9], vec![1.0; 9]).unwrap();
        let rule = decode(&table);
        assert_eq!(success_v(&table, &rule), 0.0);
        let prop = Propagator::new(exp.setup(), &[0.0; 6]).unwrap();
        for m in 0..=3 {
            let p = exp.p_m_with(&prop, &rule, m, Scoring::default()).unwrap();
            assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn metrics_are_probabilities() {
        let exp = Experiment::builtin(3).unwrap();
        let phases = [0.3, 1.7, 2.9, 0.1, 4.4, 5.0];
        for scoring in Scoring::ALL {
            let ev = exp.evaluate(&phases, scoring).unwrap();
            assert!((0.0..=1.0).contains(&ev.p_v));
            assert_eq!(ev.p_m.len(), 4);
            for (m, &p) in ev.p_m.iter().enumerate() {
                assert!((0.0..=1.0).contains(&p));
                assert_abs_diff_eq!(
                    success_m(&exp, &phases, m, scoring).unwrap(),
                    p,
                    epsilon = 1e-15
                );
            }
            assert_abs_diff_eq!(
                exp.p_v(&phases, scoring.post_select).unwrap(),
                ev.p_v,
                epsilon = 1e-15
            );
        }
        assert!(success_m(&exp, &phases, 4, Scoring::default()).is_err());
    }

    #[test]
    fn basis_conditioned_dominates_vaa_map() {
        let exp = Experiment::builtin(3).unwrap();
        let phases = [1.0, 0.2, -0.7, 2.5, 0.9, 3.3];
        for post_select in [false, true] {
            let vaa = exp
                .evaluate(
                    &phases,
                    Scoring {
                        strategy: Strategy::VaaMap,
                        post_select,
                    },
                )
                .unwrap();
            let bc = exp
                .evaluate(
                    &phases,
                    Scoring {
                        strategy: Strategy::BasisConditioned,
                        post_select,
                    },
                )
                .unwrap();
            for (a, b) in vaa.p_m.iter().zip(&bc.p_m) {
                assert!(b + 1e-12 >= *a);
            }
        }
    }

    #[test]
    fn strategy_labels() {
        for s in [Strategy::VaaMap, Strategy::BasisConditioned] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn posterior_columns_sum_to_one(raw in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 5), 4)) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| {
                let s: f64 = r.iter().sum::<f64>() + 1e-3;
                r.iter().map(|x| x / s).collect()
            }).collect();
            let table = LikelihoodTable::from_rows(rows).unwrap();
            let rule = decode(&table);
            for p in 0..table.pattern_count() {
                if let Ok(post) = rule.posterior(p) {
                    proptest::prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < PROB_TOL);
                }
            }
            let v = success_v(&table, &rule);
            proptest::prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }

        #[test]
        fn uniform_leakage_never_helps(raw in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 6), 4), keep in 0.0f64..1.0) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| {
                let s: f64 = r.iter().sum::<f64>() + 1e-3;
                r.iter().map(|x| x / s).collect()
            }).collect();
            let base = LikelihoodTable::from_rows(rows.clone()).unwrap();
            let leaky = LikelihoodTable::from_rows(
                rows.iter().map(|r| r.iter().map(|x| x * keep).collect()).collect(),
            ).unwrap();
            let v0 = success_v(&base, &decode(&base));
            let v1 = success_v(&leaky, &decode(&leaky));
            proptest::prop_assert!(v1 <= v0 + 1e-12);
        }

        #[test]
        fn assignment_invariant_under_pattern_scaling(raw in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 4), 3), scale in 0.01f64..1.0) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| {
                let s: f64 = r.iter().sum::<f64>() * 1.01;
                r.iter().map(|x| x / s).collect()
            }).collect();
            let scaled: Vec<Vec<f64>> = rows.iter().map(|r| {
                let mut r = r.clone();
                r[2] *= scale;
                r
            }).collect();
            let a = decode(&LikelihoodTable::from_rows(rows).unwrap());
            let b = decode(&LikelihoodTable::from_rows(scaled).unwrap());
            proptest::prop_assert_eq!(a.assignment(), b.assignment());
        }
    }
}
