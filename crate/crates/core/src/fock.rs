//! Truncated Fock bases for three atomic momentum modes plus one cavity mode,
//! ladder operators on them, and the reduced-state operations (partial trace,
//! partial transpose) used by the entanglement analysis.
//!
//! A basis is an ordered set of occupation tuples `(n0, n1, n2, n)`, sorted
//! lexicographically. Operators are dense matrices in that order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, ONE, ZERO};

/// Occupation numbers `[n0, n1, n2, n]` of the three atomic modes and the
/// cavity photon mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Occupation(pub [usize; 4]);

impl Occupation {
    pub const fn atomic(n0: usize, n1: usize, n2: usize) -> Self {
        Occupation([n0, n1, n2, 0])
    }

    pub const fn new(n0: usize, n1: usize, n2: usize, n: usize) -> Self {
        Occupation([n0, n1, n2, n])
    }

    pub fn get(&self, mode: Mode) -> usize {
        self.0[mode.slot()]
    }

    pub fn with(mut self, mode: Mode, value: usize) -> Self {
        self.0[mode.slot()] = value;
        self
    }

    pub fn atoms(&self) -> usize {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn photons(&self) -> usize {
        self.0[3]
    }

    /// `Q = 2 n0 + n1 + n`, conserved by the cascade Hamiltonian.
    pub fn excitation(&self) -> usize {
        2 * self.0[0] + self.0[1] + self.0[3]
    }
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, n] = self.0;
        write!(f, "|{a},{b},{c},{n}>")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    C0,
    C1,
    C2,
    Photon,
}

impl Mode {
    pub const ATOMIC: [Mode; 3] = [Mode::C0, Mode::C1, Mode::C2];
    pub const ALL: [Mode; 4] = [Mode::C0, Mode::C1, Mode::C2, Mode::Photon];

    pub fn slot(self) -> usize {
        match self {
            Mode::C0 => 0,
            Mode::C1 => 1,
            Mode::C2 => 2,
            Mode::Photon => 3,
        }
    }

    pub fn from_slot(slot: usize) -> Result<Self> {
        Mode::ALL
            .get(slot)
            .copied()
            .ok_or_else(|| Error::InvalidMode(slot.to_string()))
    }

    pub fn is_atomic(self) -> bool {
        self != Mode::Photon
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "c0" => Ok(Mode::C0),
            "1" | "c1" => Ok(Mode::C1),
            "2" | "c2" => Ok(Mode::C2),
            "a" | "photon" => Ok(Mode::Photon),
            other => Err(Error::InvalidMode(other.to_string())),
        }
    }
}

/// How a basis was generated. Only used for descriptors and validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    /// Fixed atom number with a photon slot truncated at `n_max`.
    Cascade { atoms: usize, n_max: usize },
    /// Fixed atom number, photon slot pinned to zero.
    Atomic { atoms: usize },
    /// Independent cutoffs per mode (not number conserving).
    Product { cutoffs: [usize; 4] },
    /// Arbitrary tuple set, e.g. the support of a partial transpose.
    Custom,
}

#[derive(Clone, Debug)]
pub struct FockBasis {
    kind: BasisKind,
    states: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
}

impl PartialEq for FockBasis {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
    }
}

impl FockBasis {
    /// All `|n0,n1,n2,n>` with `n0+n1+n2 = atoms` and `n <= n_max`.
    pub fn cascade(atoms: usize, n_max: usize) -> Result<Self> {
        if atoms == 0 {
            return Err(Error::InvalidBasis("atom number must be at least 1".into()));
        }
        let mut states = Vec::with_capacity(atomic_dimension(atoms) * (n_max + 1));
        for n0 in 0..=atoms {
            for n1 in 0..=atoms - n0 {
                for n in 0..=n_max {
                    states.push(Occupation::new(n0, n1, atoms - n0 - n1, n));
                }
            }
        }
        states.sort();
        Ok(Self::from_sorted(
            BasisKind::Cascade { atoms, n_max },
            states,
        ))
    }

    /// The atomic restriction: all `|n0,n1,n2>` with `n0+n1+n2 = atoms`.
    pub fn atomic(atoms: usize) -> Result<Self> {
        if atoms == 0 {
            return Err(Error::InvalidBasis("atom number must be at least 1".into()));
        }
        let mut states = Vec::with_capacity(atomic_dimension(atoms));
        for n0 in 0..=atoms {
            for n1 in 0..=atoms - n0 {
                states.push(Occupation::atomic(n0, n1, atoms - n0 - n1));
            }
        }
        states.sort();
        Ok(Self::from_sorted(BasisKind::Atomic { atoms }, states))
    }

    /// Product basis with `n_j <= cutoffs[j]` in every slot.
    pub fn product(cutoffs: [usize; 4]) -> Self {
        let mut states = Vec::new();
        for a in 0..=cutoffs[0] {
            for b in 0..=cutoffs[1] {
                for c in 0..=cutoffs[2] {
                    for n in 0..=cutoffs[3] {
                        states.push(Occupation::new(a, b, c, n));
                    }
                }
            }
        }
        Self::from_sorted(BasisKind::Product { cutoffs }, states)
    }

    /// Basis over an arbitrary set of tuples (sorted, duplicates removed).
    pub fn custom(states: impl IntoIterator<Item = Occupation>) -> Self {
        let set: BTreeSet<Occupation> = states.into_iter().collect();
        Self::from_sorted(BasisKind::Custom, set.into_iter().collect())
    }

    fn from_sorted(kind: BasisKind, states: Vec<Occupation>) -> Self {
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        FockBasis {
            kind,
            states,
            index,
        }
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Occupation] {
        &self.states
    }

    pub fn state(&self, i: usize) -> Occupation {
        self.states[i]
    }

    pub fn index_of(&self, occ: &Occupation) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Atom number if the basis is a fixed-number sector.
    pub fn atoms(&self) -> Option<usize> {
        match self.kind {
            BasisKind::Cascade { atoms, .. } | BasisKind::Atomic { atoms } => Some(atoms),
            _ => {
                let first = self.states.first()?.atoms();
                self.states
                    .iter()
                    .all(|s| s.atoms() == first)
                    .then_some(first)
            }
        }
    }

    pub fn n_max(&self) -> usize {
        self.states
            .iter()
            .map(Occupation::photons)
            .max()
            .unwrap_or(0)
    }

    pub fn has_photons(&self) -> bool {
        self.n_max() > 0
    }

    /// Matrix of the annihilation operator of `mode`: `<..m-1..| c |..m..> = sqrt(m)`.
    ///
    /// Atomic annihilators leave a fixed-number sector, so on a cascade or
    /// atomic basis they are identically zero; use [`FockBasis::transition`]
    /// there, or a product basis.
    pub fn annihilator(&self, mode: Mode) -> CMatrix {
        let slot = mode.slot();
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        for (col, s) in self.states.iter().enumerate() {
            let occ = s.0[slot];
            if occ == 0 {
                continue;
            }
            if let Some(row) = self.index_of(&s.with(mode, occ - 1)) {
                m[(row, col)] = Complex64::new((occ as f64).sqrt(), 0.0);
            }
        }
        m
    }

    pub fn creator(&self, mode: Mode) -> CMatrix {
        self.annihilator(mode).adjoint()
    }

    /// `c_to† c_from`, assembled directly so it stays exact on number-conserving bases.
    pub fn transition(&self, from: Mode, to: Mode) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        for (col, s) in self.states.iter().enumerate() {
            if from == to {
                m[(col, col)] = Complex64::new(s.get(from) as f64, 0.0);
                continue;
            }
            let nf = s.get(from);
            if nf == 0 {
                continue;
            }
            let nt = s.get(to);
            let target = s.with(from, nf - 1).with(to, nt + 1);
            if let Some(row) = self.index_of(&target) {
                m[(row, col)] = Complex64::new(((nf * (nt + 1)) as f64).sqrt(), 0.0);
            }
        }
        m
    }

    pub fn number(&self, mode: Mode) -> CMatrix {
        self.diagonal(|s| s.get(mode) as f64)
    }

    pub fn diagonal(&self, f: impl Fn(&Occupation) -> f64) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            self.states.iter().map(|s| Complex64::new(f(s), 0.0)),
        ))
    }

    pub fn identity(&self) -> CMatrix {
        CMatrix::identity(self.dim(), self.dim())
    }

    /// Unit vector on a basis tuple.
    pub fn ket(&self, occ: Occupation) -> Result<CVector> {
        let i = self
            .index_of(&occ)
            .ok_or_else(|| Error::InvalidBasis(format!("{occ} is not in the basis")))?;
        let mut v = CVector::zeros(self.dim());
        v[i] = ONE;
        Ok(v)
    }

    /// Embeds `v ⊗ |photon>` from a smaller basis (typically atomic) into this one.
    pub fn embed(&self, from: &FockBasis, v: &CVector, photon: usize) -> Result<CVector> {
        let mut out = CVector::zeros(self.dim());
        for (i, s) in from.states.iter().enumerate() {
            if v[i] == ZERO {
                continue;
            }
            let target = s.with(Mode::Photon, photon);
            let j = self.index_of(&target).ok_or_else(|| {
                Error::InvalidBasis(format!("{target} is not in the target basis"))
            })?;
            out[j] = v[i];
        }
        Ok(out)
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            kind: self.kind.clone(),
            states: self.states.clone(),
        }
    }
}

/// Dimension of the fixed-`N` atomic sector, `C(N+2, 2)`.
pub fn atomic_dimension(atoms: usize) -> usize {
    (atoms + 2) * (atoms + 1) / 2
}

/// Convenience constructor mirroring the operation name used in the docs.
pub fn build_basis(atoms: usize, n_max: usize) -> Result<FockBasis> {
    FockBasis::cascade(atoms, n_max)
}

/// Serialized basis: generator plus the explicit ordered tuple list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    #[serde(flatten)]
    pub kind: BasisKind,
    pub states: Vec<Occupation>,
}

impl From<BasisDescriptor> for FockBasis {
    fn from(d: BasisDescriptor) -> Self {
        let mut states = d.states;
        states.sort();
        states.dedup();
        FockBasis::from_sorted(d.kind, states)
    }
}

/// A dense operator together with the basis it acts on.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub basis: Arc<FockBasis>,
    pub entries: CMatrix,
}

impl OperatorMatrix {
    pub fn new(basis: Arc<FockBasis>, entries: CMatrix) -> Result<Self> {
        if entries.nrows() != basis.dim() || entries.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: entries.nrows(),
            });
        }
        Ok(OperatorMatrix { basis, entries })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.entries)
    }

    pub fn to_record(&self) -> MatrixRecord {
        MatrixRecord::new(&self.basis, &self.entries)
    }

    pub fn from_record(record: MatrixRecord) -> Result<Self> {
        let (basis, entries) = record.into_parts()?;
        Self::new(Arc::new(basis), entries)
    }
}

/// JSON form of an operator or density matrix: basis descriptor followed by
/// the entries in row-major order as `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub basis: BasisDescriptor,
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixRecord {
    pub fn new(basis: &FockBasis, m: &CMatrix) -> Self {
        let dim = basis.dim();
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                let z = m[(r, c)];
                entries.push([z.re, z.im]);
            }
        }
        MatrixRecord {
            basis: basis.descriptor(),
            dim,
            entries,
        }
    }

    pub fn into_parts(self) -> Result<(FockBasis, CMatrix)> {
        let basis = FockBasis::from(self.basis);
        let dim = basis.dim();
        if self.dim != dim || self.entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: self.entries.len(),
            });
        }
        let m = DMatrix::from_fn(dim, dim, |r, c| {
            let [re, im] = self.entries[r * dim + c];
            Complex64::new(re, im)
        });
        Ok((basis, m))
    }
}

/// Hermitian, unit-trace, positive operator on a Fock basis.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    basis: Arc<FockBasis>,
    entries: CMatrix,
}

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-10;

impl DensityMatrix {
    /// Wraps a matrix without checking the density-matrix invariants.
    pub fn from_matrix(basis: Arc<FockBasis>, entries: CMatrix) -> Result<Self> {
        if entries.nrows() != basis.dim() || entries.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: entries.nrows(),
            });
        }
        Ok(DensityMatrix { basis, entries })
    }

    /// `|psi><psi|` for a normalized vector.
    pub fn pure(basis: Arc<FockBasis>, psi: &CVector) -> Result<Self> {
        if psi.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: psi.len(),
            });
        }
        let entries = psi * psi.adjoint();
        Ok(DensityMatrix { basis, entries })
    }

    pub fn fock(basis: Arc<FockBasis>, occ: Occupation) -> Result<Self> {
        let psi = basis.ket(occ)?;
        Self::pure(basis, &psi)
    }

    /// Convex combination `Σ w_i |psi_i><psi_i|`.
    pub fn mixture(basis: Arc<FockBasis>, terms: &[(f64, &CVector)]) -> Result<Self> {
        let mut entries = CMatrix::zeros(basis.dim(), basis.dim());
        for (w, psi) in terms {
            if psi.len() != basis.dim() {
                return Err(Error::DimensionMismatch {
                    expected: basis.dim(),
                    found: psi.len(),
                });
            }
            entries += (*psi * psi.adjoint()).scale(*w);
        }
        Ok(DensityMatrix { basis, entries })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.entries).re
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.entries, &self.entries).re
    }

    /// `Tr[rho O]`, real part (O Hermitian).
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        linalg::trace_product(&self.entries, op).re
    }

    /// `<psi| rho |psi>`.
    pub fn population(&self, psi: &CVector) -> f64 {
        (psi.adjoint() * &self.entries * psi)[(0, 0)].re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.entries)
            .first()
            .copied()
            .unwrap_or(0.0)
    }

    /// Checks Hermiticity, unit trace and positivity at the standard tolerances.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(HERMITIAN_TOL, TRACE_TOL, POSITIVITY_TOL)
    }

    pub fn validate_with(&self, herm_tol: f64, trace_tol: f64, pos_tol: f64) -> Result<()> {
        let herm = linalg::hermiticity_defect(&self.entries);
        if herm > herm_tol {
            return Err(Error::InvalidState(format!("hermiticity defect {herm:e}")));
        }
        let tr = linalg::trace(&self.entries);
        if (tr - ONE).norm() > trace_tol {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -pos_tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn to_record(&self) -> MatrixRecord {
        MatrixRecord::new(&self.basis, &self.entries)
    }

    pub fn from_record(record: MatrixRecord) -> Result<Self> {
        let (basis, entries) = record.into_parts()?;
        Self::from_matrix(Arc::new(basis), entries)
    }
}

/// Traces out every slot not listed in `keep`. The reduced basis holds the
/// projections of the input tuples with the traced slots set to zero.
pub fn partial_trace(rho: &DensityMatrix, keep: &[Mode]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidMode("empty keep set".into()));
    }
    let kept = |s: &Occupation| {
        let mut out = [0usize; 4];
        for m in keep {
            out[m.slot()] = s.get(*m);
        }
        Occupation(out)
    };
    let traced = |s: &Occupation| {
        let mut out = s.0;
        for m in keep {
            out[m.slot()] = 0;
        }
        out
    };

    let basis = rho.basis();
    let reduced_states: Vec<Occupation> = basis.states().iter().map(kept).collect();
    let reduced = match (basis.kind(), keep_is_atomic(keep)) {
        (BasisKind::Cascade { atoms, .. } | BasisKind::Atomic { atoms }, true) => {
            FockBasis::atomic(*atoms)?
        }
        _ => FockBasis::custom(reduced_states.iter().copied()),
    };

    // Group input indices by their traced-out part; only pairs sharing it contribute.
    let mut groups: HashMap<[usize; 4], Vec<usize>> = HashMap::new();
    for (i, s) in basis.states().iter().enumerate() {
        groups.entry(traced(s)).or_default().push(i);
    }
    let mut out = CMatrix::zeros(reduced.dim(), reduced.dim());
    for members in groups.values() {
        for &i in members {
            let ri = reduced
                .index_of(&reduced_states[i])
                .expect("projection in reduced basis");
            for &j in members {
                let rj = reduced
                    .index_of(&reduced_states[j])
                    .expect("projection in reduced basis");
                out[(ri, rj)] += rho.matrix()[(i, j)];
            }
        }
    }
    DensityMatrix::from_matrix(Arc::new(reduced), out)
}

fn keep_is_atomic(keep: &[Mode]) -> bool {
    Mode::ATOMIC.iter().all(|m| keep.contains(m)) && !keep.contains(&Mode::Photon)
}

/// Partial transpose with respect to one atomic mode, computed tuple by tuple:
/// `<x,m| rho^T |y,m'> = <y,m| rho |x,m'>`.
///
/// The transposed operator generally leaves the fixed-`N` sector, so the
/// result lives on the closure of the input basis under exchanging the chosen
/// slot between bra and ket.
pub fn partial_transpose(rho: &DensityMatrix, mode: Mode) -> Result<OperatorMatrix> {
    if !mode.is_atomic() {
        return Err(Error::InvalidMode(
            "partial transpose is defined on atomic modes 0, 1, 2".into(),
        ));
    }
    partial_transpose_matrix(rho.basis(), rho.matrix(), mode)
}

pub(crate) fn partial_transpose_matrix(
    basis: &FockBasis,
    m: &CMatrix,
    mode: Mode,
) -> Result<OperatorMatrix> {
    let values: BTreeSet<usize> = basis.states().iter().map(|s| s.get(mode)).collect();
    let rests: BTreeSet<Occupation> = basis.states().iter().map(|s| s.with(mode, 0)).collect();
    let closure = FockBasis::custom(
        rests
            .iter()
            .flat_map(|r| values.iter().map(move |&v| r.with(mode, v))),
    );
    let mut out = CMatrix::zeros(closure.dim(), closure.dim());
    for (i, s) in basis.states().iter().enumerate() {
        for (j, t) in basis.states().iter().enumerate() {
            let z = m[(i, j)];
            if z == ZERO {
                continue;
            }
            let ket = s.with(mode, t.get(mode));
            let bra = t.with(mode, s.get(mode));
            let r = closure
                .index_of(&ket)
                .expect("closure contains swapped ket");
            let c = closure
                .index_of(&bra)
                .expect("closure contains swapped bra");
            out[(r, c)] = z;
        }
    }
    OperatorMatrix::new(Arc::new(closure), out)
}
