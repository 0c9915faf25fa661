//! Latin-square mapping function and the VAA measurement basis.
//!
//! Index `k` in `0..D^2` decomposes as `k = j D + i`. The mapping
//! `f_k(m)` gives, for each King basis `m`, the outcome Alice announces
//! after finding the pair in VAA state `k`.

use serde::Serialize;

use crate::qstate::{bell_state, collapsed_state, require_odd_prime, MubFamily, TwoPhotonState};
use crate::{Error, Result, C64};

/// Gram-matrix tolerance for an accepted VAA basis.
pub const CONSISTENCY_TOL: f64 = 1e-8;

/// `(i, j)` with `k = j D + i`.
pub fn decompose(k: usize, dim: usize) -> (usize, usize) {
    (k % dim, k / dim)
}

/// `f_k(m) = (m i - j) mod D` for `m < D`, and `i` for `m = D`.
pub fn mapping_function(k: usize, m: usize, dim: usize) -> Result<usize> {
    if k >= dim * dim {
        return Err(Error::IndexOutOfRange {
            what: "VAA state",
            index: k,
            limit: dim * dim,
        });
    }
    if m > dim {
        return Err(Error::BasisOutOfRange { index: m, dim });
    }
    let (i, j) = decompose(k, dim);
    Ok(if m < dim { (m * i + dim - j) % dim } else { i })
}

/// `f_k(m)` tabulated for every `k` and every basis `m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MappingTable {
    dim: usize,
    /// `table[k][m] = f_k(m)`.
    table: Vec<Vec<usize>>,
}

impl MappingTable {
    pub fn new(dim: usize) -> Result<Self> {
        require_odd_prime(dim)?;
        let table = (0..dim * dim)
            .map(|k| {
                (0..=dim)
                    .map(|m| mapping_function(k, m, dim))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self { dim, table })
    }

    /// Wraps an arbitrary table; used to check hand-edited or corrupted tables.
    pub fn from_rows(dim: usize, table: Vec<Vec<usize>>) -> Result<Self> {
        if table.len() != dim * dim || table.iter().any(|row| row.len() != dim + 1) {
            return Err(Error::InvalidInput(format!(
                "mapping table must be {} x {}",
                dim * dim,
                dim + 1
            )));
        }
        Ok(Self { dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, m: usize) -> usize {
        self.table[k][m]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.table
    }

    /// `{k : f_k(m) = j}`: the VAA states after which Alice answers `j` for basis `m`.
    pub fn retrodiction_subset(&self, m: usize, j: usize) -> Vec<usize> {
        (0..self.table.len())
            .filter(|&k| self.table[k][m] == j)
            .collect()
    }
}

/// True iff every column is balanced and every pair of columns is orthogonal.
pub fn mols_check(table: &MappingTable) -> bool {
    let d = table.dim;
    let cols = d + 1;
    if table.table.iter().flatten().any(|&v| v >= d) {
        return false;
    }
    for m in 0..cols {
        let mut counts = vec![0usize; d];
        for row in &table.table {
            counts[row[m]] += 1;
        }
        if counts.iter().any(|&c| c != d) {
            return false;
        }
    }
    for m in 0..cols {
        for n in m + 1..cols {
            let mut seen = vec![false; d * d];
            for row in &table.table {
                let cell = row[m] * d + row[n];
                if seen[cell] {
                    return false;
                }
                seen[cell] = true;
            }
        }
    }
    true
}

/// The D² VAA states together with their mapping table.
#[derive(Clone, Debug, Serialize)]
pub struct VaaBasis {
    dim: usize,
    states: Vec<TwoPhotonState>,
    mapping: MappingTable,
}

/// `|phi_k> = -|B00> + (1/sqrt D) sum_m |conj(m_f)>|m_f>` with `f = f_k(m)`.
pub fn build_vaa_basis(mubs: &MubFamily) -> Result<VaaBasis> {
    let d = mubs.dim();
    let mapping = MappingTable::new(d)?;
    let bell = bell_state(mubs, d)?;
    let collapsed: Vec<Vec<TwoPhotonState>> = (0..=d)
        .map(|m| (0..d).map(|j| collapsed_state(mubs, m, j)).collect())
        .collect::<Result<_>>()?;

    let scale = 1.0 / (d as f64).sqrt();
    let states = (0..d * d)
        .map(|k| {
            let mut amps: Vec<C64> = bell.amps().iter().map(|a| -a).collect();
            for (m, row) in collapsed.iter().enumerate() {
                let term = &row[mapping.get(k, m)];
                for (acc, a) in amps.iter_mut().zip(term.amps()) {
                    *acc += a * scale;
                }
            }
            TwoPhotonState::from_amps_unchecked(d, amps)
        })
        .collect();

    let basis = VaaBasis {
        dim: d,
        states,
        mapping,
    };
    let deviation = basis.gram_deviation();
    if deviation > CONSISTENCY_TOL {
        return Err(Error::ConstructionInconsistent { deviation });
    }
    Ok(basis)
}

impl VaaBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[TwoPhotonState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &TwoPhotonState {
        &self.states[k]
    }

    pub fn mapping(&self) -> &MappingTable {
        &self.mapping
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Largest entry of `|G - I|` for the Gram matrix of the states.
    pub fn gram_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, u) in self.states.iter().enumerate() {
            for (l, v) in self.states.iter().enumerate().skip(k) {
                let want = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((u.inner(v) - want).norm());
            }
        }
        worst
    }

    /// Largest entry of `|sum_k |phi_k><phi_k| - I|` on the two-photon space.
    pub fn identity_resolution_deviation(&self) -> f64 {
        let n = self.dim * self.dim;
        let mut worst: f64 = 0.0;
        let mut row = vec![C64::new(0.0, 0.0); n];
        for r in 0..n {
            row.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            for state in &self.states {
                let a = state.amps();
                let ar = a[r];
                for (slot, ac) in row.iter_mut().zip(a) {
                    *slot += ar * ac.conj();
                }
            }
            for (c, x) in row.iter().enumerate() {
                let want = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((x - want).norm());
            }
        }
        worst
    }
}

/// Largest deviation of `|<phi_k|conj(m_j) m_j>|` from `delta(j, f_k(m)) / sqrt D`.
pub fn vaa_overlap_check(basis: &VaaBasis, mubs: &MubFamily) -> Result<f64> {
    let d = basis.dim;
    if mubs.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mubs.dim(),
        });
    }
    let target = 1.0 / (d as f64).sqrt();
    let mut worst: f64 = 0.0;
    for m in 0..=d {
        for j in 0..d {
            let c = collapsed_state(mubs, m, j)?;
            for (k, phi) in basis.states.iter().enumerate() {
                let want = if basis.mapping.get(k, m) == j {
                    target
                } else {
                    0.0
                };
                worst = worst.max((phi.inner(&c).norm() - want).abs());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::build_mub;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mapping_examples() {
        assert_eq!(mapping_function(3, 0, 3).unwrap(), 2);
        assert_eq!(mapping_function(7, 3, 3).unwrap(), 1);
        for m in 0..=5 {
            assert_eq!(mapping_function(0, m, 5).unwrap(), 0);
        }
        assert!(mapping_function(9, 0, 3).is_err());
        assert!(mapping_function(0, 4, 3).is_err());
    }

    #[test]
    fn mols_holds_for_small_primes() {
        for d in [3, 5, 7, 11] {
            let table = MappingTable::new(d).unwrap();
            assert!(mols_check(&table), "d={d}");
            for m in 0..=d {
                for j in 0..d {
                    assert_eq!(table.retrodiction_subset(m, j).len(), d);
                }
            }
        }
    }

    #[test]
    fn corrupted_table_fails_mols() {
        let table = MappingTable::new(3).unwrap();
        let mut rows = table.rows().to_vec();
        rows[4][1] = (rows[4][1] + 1) % 3;
        assert!(!mols_check(&MappingTable::from_rows(3, rows).unwrap()));
    }

    #[test]
    fn vaa_basis_is_orthonormal() {
        for d in [3, 5] {
            let mubs = build_mub(d).unwrap();
            let basis = build_vaa_basis(&mubs).unwrap();
            assert_eq!(basis.len(), d * d);
            assert!(basis.gram_deviation() < 1e-10);
            for phi in basis.states() {
                assert_abs_diff_eq!(phi.norm(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn overlap_with_bell_state_is_one_over_d() {
        let mubs = build_mub(3).unwrap();
        let basis = build_vaa_basis(&mubs).unwrap();
        let bell = bell_state(&mubs, 3).unwrap();
        for phi in basis.states() {
            let o = bell.inner(phi);
            assert_abs_diff_eq!(o.re, 1.0 / 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(o.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn overlap_property_spot_values() {
        let mubs = build_mub(3).unwrap();
        let basis = build_vaa_basis(&mubs).unwrap();
        let on = collapsed_state(&mubs, 0, 2).unwrap();
        let off = collapsed_state(&mubs, 0, 0).unwrap();
        assert_abs_diff_eq!(
            basis.state(3).inner(&on).norm(),
            1.0 / 3f64.sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(basis.state(3).inner(&off).norm(), 0.0, epsilon = 1e-12);
        assert!(vaa_overlap_check(&basis, &mubs).unwrap() < 1e-10);
    }

    #[test]
    fn identity_resolution() {
        let mubs = build_mub(3).unwrap();
        let basis = build_vaa_basis(&mubs).unwrap();
        assert!(basis.identity_resolution_deviation() < 1e-10);
    }
}
