//! Single-qudit kets, MUB families and two-photon states.
//!
//! For an odd prime `D` the bases `m = 0..D` are built from quadratic phases,
//! `<k|m_j> = w^(m k^2 + j k) / sqrt(D)` with `w = exp(2 pi i / D)`, and basis
//! `m = D` is the computational basis.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Tolerance used for analytic identities on states.
pub const STATE_TOL: f64 = 1e-12;

/// Returns true when `d` is an odd prime (trial division).
pub fn is_odd_prime(d: usize) -> bool {
    if d < 3 || d.is_multiple_of(2) {
        return false;
    }
    let mut f = 3;
    while f * f <= d {
        if d.is_multiple_of(f) {
            return false;
        }
        f += 2;
    }
    true
}

pub(crate) fn require_odd_prime(d: usize) -> Result<()> {
    if is_odd_prime(d) {
        Ok(())
    } else {
        Err(Error::NotOddPrime(d))
    }
}

/// `exp(2 pi i n / d)` with the exponent reduced mod `d` first.
pub(crate) fn root_of_unity(n: usize, d: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * (n % d) as f64 / d as f64)
}

fn norm_sqr(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

fn normalized(mut amps: Vec<C64>) -> Result<Vec<C64>> {
    let n = norm_sqr(&amps).sqrt();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidInput(
            "state has zero or non-finite norm".into(),
        ));
    }
    amps.iter_mut().for_each(|a| *a /= n);
    Ok(amps)
}

/// Serde adapter writing complex vectors as `[[re, im], ...]`.
pub(crate) mod complex_pairs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::C64;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|c| [c.re, c.im])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

/// A single-qudit pure state in the computational basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ket {
    dim: usize,
    #[serde(with = "complex_pairs")]
    amps: Vec<C64>,
}

impl Ket {
    /// Builds a normalized ket from raw amplitudes.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let amps = normalized(amps)?;
        Ok(Self {
            dim: amps.len(),
            amps,
        })
    }

    /// Computational basis vector `|j>`.
    pub fn basis(dim: usize, j: usize) -> Result<Self> {
        if j >= dim {
            return Err(Error::IndexOutOfRange {
                what: "basis vector",
                index: j,
                limit: dim,
            });
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[j] = C64::new(1.0, 0.0);
        Ok(Self { dim, amps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Ket) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Componentwise conjugate in the computational basis.
    pub fn conjugate(&self) -> Ket {
        Ket {
            dim: self.dim,
            amps: self.amps.iter().map(|a| a.conj()).collect(),
        }
    }
}

/// `sum_j |j><j|psi>*`.
pub fn conjugate_ket(psi: &Ket) -> Ket {
    psi.conjugate()
}

/// The `D + 1` mutually unbiased bases of an odd prime dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MubFamily {
    dim: usize,
    bases: Vec<Vec<Ket>>,
}

/// Builds the MUB family for an odd prime `dim`.
pub fn build_mub(dim: usize) -> Result<MubFamily> {
    require_odd_prime(dim)?;
    let scale = 1.0 / (dim as f64).sqrt();
    let mut bases = Vec::with_capacity(dim + 1);
    for m in 0..dim {
        let basis = (0..dim)
            .map(|j| Ket {
                dim,
                amps: (0..dim)
                    .map(|k| root_of_unity(m * k * k + j * k, dim) * scale)
                    .collect(),
            })
            .collect();
        bases.push(basis);
    }
    bases.push(
        (0..dim)
            .map(|j| Ket::basis(dim, j))
            .collect::<Result<_>>()?,
    );
    Ok(MubFamily { dim, bases })
}

impl MubFamily {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of bases, `D + 1`.
    pub fn basis_count(&self) -> usize {
        self.bases.len()
    }

    pub fn basis(&self, m: usize) -> Result<&[Ket]> {
        self.bases
            .get(m)
            .map(Vec::as_slice)
            .ok_or(Error::BasisOutOfRange {
                index: m,
                dim: self.dim,
            })
    }

    /// The state `|m_j>`.
    pub fn state(&self, m: usize, j: usize) -> Result<&Ket> {
        self.basis(m)?.get(j).ok_or(Error::IndexOutOfRange {
            what: "outcome",
            index: j,
            limit: self.dim,
        })
    }

    /// Largest deviation of any within-basis Gram matrix from the identity.
    pub fn orthonormality_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for basis in &self.bases {
            for (j, u) in basis.iter().enumerate() {
                for (l, v) in basis.iter().enumerate() {
                    let want = if j == l { 1.0 } else { 0.0 };
                    worst = worst.max((u.inner(v) - want).norm());
                }
            }
        }
        worst
    }

    /// Largest deviation of `|<m_j|m'_l>|^2` from `1/D` over distinct bases.
    pub fn unbiasedness_deviation(&self) -> f64 {
        let target = 1.0 / self.dim as f64;
        let mut worst: f64 = 0.0;
        for (m, bm) in self.bases.iter().enumerate() {
            for bn in &self.bases[m + 1..] {
                for u in bm {
                    for v in bn {
                        worst = worst.max((u.inner(v).norm_sqr() - target).abs());
                    }
                }
            }
        }
        worst
    }
}

/// A two-photon amplitude tensor, indexed `[mode of a][mode of b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPhotonState {
    dim: usize,
    /// Row-major `dim x dim` amplitudes.
    #[serde(with = "complex_pairs")]
    amps: Vec<C64>,
}

impl TwoPhotonState {
    /// Builds a normalized state from row-major amplitudes.
    pub fn from_amps(dim: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: amps.len(),
            });
        }
        Ok(Self {
            dim,
            amps: normalized(amps)?,
        })
    }

    /// Builds a state without renormalizing; callers guarantee the norm.
    pub(crate) fn from_amps_unchecked(dim: usize, amps: Vec<C64>) -> Self {
        debug_assert_eq!(amps.len(), dim * dim);
        Self { dim, amps }
    }

    /// `|a>|b>` for photons a and b.
    pub fn product(a: &Ket, b: &Ket) -> Result<Self> {
        if a.dim != b.dim {
            return Err(Error::DimensionMismatch {
                expected: a.dim,
                got: b.dim,
            });
        }
        let amps = a
            .amps
            .iter()
            .flat_map(|x| b.amps.iter().map(move |y| x * y))
            .collect();
        Self::from_amps(a.dim, amps)
    }

    /// Computational basis ket `|i j>`.
    pub fn basis(dim: usize, i: usize, j: usize) -> Result<Self> {
        Self::product(&Ket::basis(dim, i)?, &Ket::basis(dim, j)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.amps[a * self.dim + b]
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &TwoPhotonState) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Largest elementwise distance to another state of the same dimension.
    pub fn max_deviation(&self, other: &TwoPhotonState) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `|conj(m_j)>_a |m_j>_b`, the state left after the King measures `|m_j>`.
pub fn collapsed_state(mubs: &MubFamily, m: usize, j: usize) -> Result<TwoPhotonState> {
    let ket = mubs.state(m, j)?;
    TwoPhotonState::product(&ket.conjugate(), ket)
}

/// Generalized Bell state `(1/sqrt D) sum_j |conj(m_j)>|m_j>`, built from basis `m`.
pub fn bell_state(mubs: &MubFamily, m: usize) -> Result<TwoPhotonState> {
    let d = mubs.dim();
    let scale = 1.0 / (d as f64).sqrt();
    let mut amps = vec![C64::new(0.0, 0.0); d * d];
    for ket in mubs.basis(m)? {
        for (a, x) in ket.amps.iter().enumerate() {
            for (b, y) in ket.amps.iter().enumerate() {
                amps[a * d + b] += x.conj() * y * scale;
            }
        }
    }
    TwoPhotonState::from_amps(d, amps)
}
