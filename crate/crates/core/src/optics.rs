//! Graph-derived linear-optical setups and two-photon propagation.
//!
//! Each input mode `a_i` / `b_i` maps to a sparse sum of detector modes with
//! unit-modulus couplings, and every input row carries one phase shifter.
//! A two-photon input `sum S_ij a_i b_j` is expanded into a polynomial over
//! detector modes; after normalization the squared coefficients of the
//! monomials are the click-pattern probabilities.
//!
//! The built-in topology for dimension `D` uses detectors
//! `[c, d, J1..J(D-1), T1..T(D-1)]`. Mode-0 rows feed `c`, `d`, `J1`, `J2`;
//! odd modes feed `c` and even modes feed `d`, each through its own junction
//! (`J_i`) and tail (`T_i`) loss detector.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::qstate::{require_odd_prime, TwoPhotonState};
use crate::{Error, Result, C64};

/// Total output weight below which a phase setting counts as fully destructive.
pub const DEGENERATE_TOL: f64 = 1e-24;

/// Allowed deviation of a coupling modulus from 1.
const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Photon {
    A,
    B,
}

/// An input path: photon `a` or `b` in a given transverse mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InputMode {
    pub photon: Photon,
    pub mode: usize,
}

impl InputMode {
    pub fn a(mode: usize) -> Self {
        Self {
            photon: Photon::A,
            mode,
        }
    }

    pub fn b(mode: usize) -> Self {
        Self {
            photon: Photon::B,
            mode,
        }
    }

    fn row_index(&self, dim: usize) -> usize {
        match self.photon {
            Photon::A => self.mode,
            Photon::B => dim + self.mode,
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.photon {
            Photon::A => 'a',
            Photon::B => 'b',
        };
        write!(f, "{p}{}", self.mode)
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSetup(format!("bad input mode label {s:?}"));
        let mut chars = s.chars();
        let photon = match chars.next() {
            Some('a') => Photon::A,
            Some('b') => Photon::B,
            _ => return Err(bad()),
        };
        let mode = chars.as_str().parse().map_err(|_| bad())?;
        Ok(Self { photon, mode })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coupling {
    pub detector: usize,
    pub coeff: C64,
}

/// One input mode's couplings and the phase slot that scales all of them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeRow {
    pub input: InputMode,
    pub phase_slot: usize,
    pub entries: Vec<Coupling>,
}

/// Transfer description of a setup: detectors and one sparse row per input mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SetupModel {
    dim: usize,
    detectors: Vec<String>,
    /// Ordered `a_0..a_{D-1}, b_0..b_{D-1}`.
    rows: Vec<ModeRow>,
}

#[derive(Serialize, Deserialize)]
struct SetupJson {
    dim: usize,
    detectors: Vec<String>,
    rows: Vec<RowJson>,
}

#[derive(Serialize, Deserialize)]
struct RowJson {
    input: String,
    phase_slot: usize,
    entries: Vec<EntryJson>,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    det: String,
    re: f64,
    im: f64,
}

impl SetupModel {
    /// Validates and orders the rows.
    pub fn new(dim: usize, detectors: Vec<String>, rows: Vec<ModeRow>) -> Result<Self> {
        require_odd_prime(dim)?;
        if detectors.is_empty() {
            return Err(Error::InvalidSetup("no detectors".into()));
        }
        let mut names = HashSet::new();
        for name in &detectors {
            if !names.insert(name.as_str()) {
                return Err(Error::InvalidSetup(format!("duplicate detector {name:?}")));
            }
        }

        let phase_count = 2 * dim;
        let mut slots: Vec<Option<ModeRow>> = vec![None; 2 * dim];
        for row in rows {
            if row.input.mode >= dim {
                return Err(Error::InvalidSetup(format!(
                    "input {} out of range for dimension {dim}",
                    row.input
                )));
            }
            if row.phase_slot >= phase_count {
                return Err(Error::InvalidSetup(format!(
                    "row {} uses phase slot {} (have {phase_count})",
                    row.input, row.phase_slot
                )));
            }
            if row.entries.is_empty() {
                return Err(Error::InvalidSetup(format!(
                    "row {} has no entries",
                    row.input
                )));
            }
            let mut seen = HashSet::new();
            for e in &row.entries {
                if e.detector >= detectors.len() {
                    return Err(Error::InvalidSetup(format!(
                        "row {} references detector {}",
                        row.input, e.detector
                    )));
                }
                if !seen.insert(e.detector) {
                    return Err(Error::InvalidSetup(format!(
                        "row {} couples to {} twice",
                        row.input, detectors[e.detector]
                    )));
                }
                if !(e.coeff.re.is_finite() && e.coeff.im.is_finite())
                    || (e.coeff.norm() - 1.0).abs() > UNIT_TOL
                {
                    return Err(Error::InvalidSetup(format!(
                        "row {} has non-unit coefficient {}",
                        row.input, e.coeff
                    )));
                }
            }
            let idx = row.input.row_index(dim);
            if slots[idx].is_some() {
                return Err(Error::InvalidSetup(format!("duplicate row {}", row.input)));
            }
            slots[idx] = Some(row);
        }

        let rows = slots
            .into_iter()
            .enumerate()
            .map(|(idx, row)| {
                row.ok_or_else(|| {
                    let input = if idx < dim {
                        InputMode::a(idx)
                    } else {
                        InputMode::b(idx - dim)
                    };
                    Error::InvalidSetup(format!("missing row {input}"))
                })
            })
            .collect::<Result<_>>()?;

        Ok(Self {
            dim,
            detectors,
            rows,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SetupJson = serde_json::from_str(text)?;
        let index = |name: &str| {
            raw.detectors
                .iter()
                .position(|d| d == name)
                .ok_or_else(|| Error::InvalidSetup(format!("unknown detector {name:?}")))
        };
        let rows = raw
            .rows
            .iter()
            .map(|r| {
                Ok(ModeRow {
                    input: r.input.parse()?,
                    phase_slot: r.phase_slot,
                    entries: r
                        .entries
                        .iter()
                        .map(|e| {
                            Ok(Coupling {
                                detector: index(&e.det)?,
                                coeff: C64::new(e.re, e.im),
                            })
                        })
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(raw.dim, raw.detectors.clone(), rows)
    }

    pub fn to_json(&self) -> String {
        let raw = SetupJson {
            dim: self.dim,
            detectors: self.detectors.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| RowJson {
                    input: r.input.to_string(),
                    phase_slot: r.phase_slot,
                    entries: r
                        .entries
                        .iter()
                        .map(|e| EntryJson {
                            det: self.detectors[e.detector].clone(),
                            re: e.coeff.re,
                            im: e.coeff.im,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("setup serializes")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn detectors(&self) -> &[String] {
        &self.detectors
    }

    pub fn detector_count(&self) -> usize {
        self.detectors.len()
    }

    pub fn rows(&self) -> &[ModeRow] {
        &self.rows
    }

    pub fn row(&self, input: InputMode) -> &ModeRow {
        &self.rows[input.row_index(self.dim)]
    }

    pub fn phase_count(&self) -> usize {
        2 * self.dim
    }
}

/// Builds the template setup for an odd prime dimension.
pub fn build_setup(dim: usize) -> Result<SetupModel> {
    require_odd_prime(dim)?;
    let (c, d) = (0, 1);
    let junction = |i: usize| 1 + i;
    let tail = |i: usize| dim + i;

    let mut detectors = vec!["c".to_string(), "d".to_string()];
    detectors.extend((1..dim).map(|i| format!("J{i}")));
    detectors.extend((1..dim).map(|i| format!("T{i}")));

    let one = C64::new(1.0, 0.0);
    let i_ = C64::new(0.0, 1.0);
    let row = |input: InputMode, entries: &[(usize, C64)]| ModeRow {
        input,
        phase_slot: 2 * input.mode + usize::from(input.photon == Photon::B),
        entries: entries
            .iter()
            .map(|&(detector, coeff)| Coupling { detector, coeff })
            .collect(),
    };

    let mut rows = vec![
        row(
            InputMode::a(0),
            &[(c, one), (d, i_), (junction(1), i_), (junction(2), -one)],
        ),
        row(
            InputMode::b(0),
            &[(c, i_), (d, one), (junction(1), -one), (junction(2), i_)],
        ),
    ];
    for m in 1..dim {
        let (ja, jb) = (junction(m), tail(m));
        if m % 2 == 1 {
            rows.push(row(InputMode::a(m), &[(c, -one), (ja, i_), (jb, one)]));
            rows.push(row(InputMode::b(m), &[(c, i_), (ja, one), (jb, i_)]));
        } else {
            rows.push(row(InputMode::a(m), &[(d, i_), (ja, one), (jb, i_)]));
            rows.push(row(InputMode::b(m), &[(d, -one), (ja, i_), (jb, one)]));
        }
    }
    SetupModel::new(dim, detectors, rows)
}

/// Phase-shifter angles in radians, one per phase slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseVector(pub Vec<f64>);

impl PhaseVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for PhaseVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

fn check_phases(setup: &SetupModel, phases: &[f64]) -> Result<()> {
    if phases.len() != setup.phase_count() {
        return Err(Error::PhaseCountMismatch {
            expected: setup.phase_count(),
            got: phases.len(),
        });
    }
    Ok(())
}

/// Dense `2D x n_detectors` matrix, rows `a_0..a_{D-1}, b_0..b_{D-1}`.
pub fn transfer_matrix(setup: &SetupModel, phases: &[f64]) -> Result<Vec<Vec<C64>>> {
    check_phases(setup, phases)?;
    Ok(setup
        .rows
        .iter()
        .map(|row| {
            let phase = C64::from_polar(1.0, phases[row.phase_slot]);
            let mut dense = vec![C64::new(0.0, 0.0); setup.detector_count()];
            for e in &row.entries {
                dense[e.detector] = e.coeff * phase;
            }
            dense
        })
        .collect())
}

/// An unordered detector pair; `lo == hi` is a double occupation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Pattern {
    pub lo: usize,
    pub hi: usize,
}

impl Pattern {
    pub fn new(u: usize, v: usize) -> Self {
        Self {
            lo: u.min(v),
            hi: u.max(v),
        }
    }

    pub fn is_coincidence(&self) -> bool {
        self.lo != self.hi
    }

    pub fn label(&self, detectors: &[String]) -> String {
        format!("{}{}", detectors[self.lo], detectors[self.hi])
    }
}

/// Index of the coincidence `{u, v}` (`u < v`) among `n` detectors, lexicographic.
pub fn coincidence_index(u: usize, v: usize, n: usize) -> usize {
    debug_assert!(u < v && v < n);
    u * (2 * n - u - 1) / 2 + (v - u - 1)
}

/// All coincidence patterns in index order.
pub fn coincidence_patterns(n: usize) -> Vec<Pattern> {
    (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| Pattern { lo: u, hi: v }))
        .collect()
}

/// Probabilities of every two-photon click pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickDistribution {
    detectors: usize,
    /// Distinct-detector pairs in [`coincidence_index`] order.
    coincidences: Vec<f64>,
    /// Same-detector doubles, indexed by detector.
    doubles: Vec<f64>,
}

impl ClickDistribution {
    /// A distribution with all mass zero, used for degenerate inputs.
    pub fn empty(detectors: usize) -> Self {
        Self {
            detectors,
            coincidences: vec![0.0; detectors * detectors.saturating_sub(1) / 2],
            doubles: vec![0.0; detectors],
        }
    }

    pub fn detector_count(&self) -> usize {
        self.detectors
    }

    pub fn coincidences(&self) -> &[f64] {
        &self.coincidences
    }

    pub fn doubles(&self) -> &[f64] {
        &self.doubles
    }

    pub fn prob(&self, p: Pattern) -> f64 {
        if p.is_coincidence() {
            self.coincidences[coincidence_index(p.lo, p.hi, self.detectors)]
        } else {
            self.doubles[p.lo]
        }
    }

    /// Mass on same-detector doubles (non-decodable).
    pub fn leakage(&self) -> f64 {
        self.doubles.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.coincidences.iter().sum::<f64>() + self.leakage()
    }

    /// Every pattern with its probability, coincidences first.
    pub fn iter(&self) -> impl Iterator<Item = (Pattern, f64)> + '_ {
        coincidence_patterns(self.detectors)
            .into_iter()
            .zip(self.coincidences.iter().copied())
            .chain(
                self.doubles
                    .iter()
                    .enumerate()
                    .map(|(u, &p)| (Pattern::new(u, u), p)),
            )
    }

    /// Coincidence probabilities renormalized to sum to one; `None` if they all vanish.
    pub fn post_selected(&self) -> Option<Vec<f64>> {
        let kept: f64 = self.coincidences.iter().sum();
        (kept > DEGENERATE_TOL).then(|| self.coincidences.iter().map(|p| p / kept).collect())
    }
}

/// A setup with its phases folded into the couplings.
pub(crate) struct Propagator {
    dim: usize,
    detectors: usize,
    a_rows: Vec<Vec<(usize, C64)>>,
    b_rows: Vec<Vec<(usize, C64)>>,
}

impl Propagator {
    pub(crate) fn new(setup: &SetupModel, phases: &[f64]) -> Result<Self> {
        check_phases(setup, phases)?;
        let phased = |row: &ModeRow| {
            let phase = C64::from_polar(1.0, phases[row.phase_slot]);
            row.entries
                .iter()
                .map(|e| (e.detector, e.coeff * phase))
                .collect::<Vec<_>>()
        };
        let d = setup.dim;
        Ok(Self {
            dim: d,
            detectors: setup.detector_count(),
            a_rows: setup.rows[..d].iter().map(phased).collect(),
            b_rows: setup.rows[d..].iter().map(phased).collect(),
        })
    }

    /// Expands the input polynomial; `coeffs[u * n + v]` collects `a -> u, b -> v`.
    fn ordered_coefficients(&self, state: &TwoPhotonState) -> Vec<C64> {
        let n = self.detectors;
        let mut coeffs = vec![C64::new(0.0, 0.0); n * n];
        for (i, a_row) in self.a_rows.iter().enumerate() {
            for (j, b_row) in self.b_rows.iter().enumerate() {
                let s = state.get(i, j);
                if s.re == 0.0 && s.im == 0.0 {
                    continue;
                }
                for &(u, x) in a_row {
                    let sx = s * x;
                    for &(v, y) in b_row {
                        coeffs[u * n + v] += sx * y;
                    }
                }
            }
        }
        coeffs
    }

    pub(crate) fn distribution(&self, state: &TwoPhotonState) -> Result<ClickDistribution> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: state.dim(),
            });
        }
        let n = self.detectors;
        let coeffs = self.ordered_coefficients(state);
        let mut coincidences = Vec::with_capacity(n * (n - 1) / 2);
        let mut doubles = Vec::with_capacity(n);
        for u in 0..n {
            doubles.push(coeffs[u * n + u].norm_sqr());
            for v in u + 1..n {
                coincidences.push((coeffs[u * n + v] + coeffs[v * n + u]).norm_sqr());
            }
        }
        let total: f64 = coincidences.iter().sum::<f64>() + doubles.iter().sum::<f64>();
        if total.is_nan() || total <= DEGENERATE_TOL {
            return Err(Error::DegenerateOutput);
        }
        coincidences.iter_mut().for_each(|p| *p /= total);
        doubles.iter_mut().for_each(|p| *p /= total);
        Ok(ClickDistribution {
            detectors: n,
            coincidences,
            doubles,
        })
    }

    /// Like [`Self::distribution`] but maps a fully destructive output to zero mass.
    pub(crate) fn distribution_or_empty(
        &self,
        state: &TwoPhotonState,
    ) -> Result<ClickDistribution> {
        match self.distribution(state) {
            Err(Error::DegenerateOutput) => Ok(ClickDistribution::empty(self.detectors)),
            other => other,
        }
    }
}

/// Propagates a two-photon state through the setup and returns click probabilities.
pub fn simulate(
    setup: &SetupModel,
    phases: &[f64],
    state: &TwoPhotonState,
) -> Result<ClickDistribution> {
    Propagator::new(setup, phases)?.distribution(state)
}

/// Relabels input modes `i -> (i + shift) mod D` for both photons.
pub fn cyclic_variant(setup: &SetupModel, shift: usize) -> SetupModel {
    let d = setup.dim;
    let rows = setup
        .rows
        .iter()
        .map(|row| ModeRow {
            input: InputMode {
                photon: row.input.photon,
                mode: (row.input.mode + shift) % d,
            },
            ..row.clone()
        })
        .collect();
    SetupModel::new(d, setup.detectors.clone(), rows).expect("relabeling preserves validity")
}

/// Applies the same mode relabeling to a two-photon state.
pub fn shift_state(state: &TwoPhotonState, shift: usize) -> TwoPhotonState {
    let d = state.dim();
    let mut amps = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            amps[((i + shift) % d) * d + (j + shift) % d] = state.get(i, j);
        }
    }
    TwoPhotonState::from_amps_unchecked(d, amps)
}

/// Patterns realizable by some perfect matching: an `a_i`-edge and a `b_j`-edge
/// for a ket `|ij>` present in the state.
pub fn reachable_patterns(
    setup: &SetupModel,
    state: &TwoPhotonState,
    tol: f64,
) -> BTreeSet<Pattern> {
    let d = setup.dim;
    let mut out = BTreeSet::new();
    for i in 0..d {
        for j in 0..d {
            if state.get(i, j).norm() <= tol {
                continue;
            }
            for ea in &setup.rows[i].entries {
                for eb in &setup.rows[d + j].entries {
                    out.insert(Pattern::new(ea.detector, eb.detector));
                }
            }
        }
    }
    out
}
