//! Small dense linear-algebra helpers shared by the physics modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Eigenvalues of a Hermitian matrix in ascending order.
///
/// The input is symmetrized first so rounding-level anti-Hermitian noise does
/// not leak into the spectrum. Partial transposes and cascade states are very
/// sparse, so the matrix is split into the connected blocks of its non-zero
/// pattern and each block is diagonalized on its own.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let h = hermitian_part(m);
    let mut ev: Vec<f64> = connected_blocks(&h)
        .iter()
        .flat_map(|b| block_eigenvalues(&h, b))
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Index sets of the connected components of the non-zero pattern.
fn connected_blocks(h: &CMatrix) -> Vec<Vec<usize>> {
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let n = h.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    for c in 0..n {
        for r in 0..c {
            if h[(r, c)] != ZERO {
                let (a, b) = (root(&mut parent, r), root(&mut parent, c));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[slot[r]].push(i);
    }
    blocks
}

fn block_eigenvalues(h: &CMatrix, idx: &[usize]) -> Vec<f64> {
    let k = idx.len();
    if k == 1 {
        return vec![h[(idx[0], idx[0])].re];
    }
    let at = |r: usize, c: usize| h[(idx[r], idx[c])];
    let real = (0..k).all(|r| (0..k).all(|c| at(r, c).im == 0.0));
    let ev: Vec<f64> = if real {
        SymmetricEigen::new(DMatrix::from_fn(k, k, |r, c| at(r, c).re))
            .eigenvalues
            .iter()
            .copied()
            .collect()
    } else {
        SymmetricEigen::new(CMatrix::from_fn(k, k, at))
            .eigenvalues
            .iter()
            .copied()
            .collect()
    };
    if ev.iter().all(|v| v.is_finite()) {
        return ev;
    }
    // The complex QR iteration occasionally breaks down on matrices with many
    // exact zeros. The real form [[A, -B], [B, A]] of A + iB has the same
    // spectrum with every eigenvalue doubled.
    let embedded = DMatrix::from_fn(2 * k, 2 * k, |r, c| {
        let z = at(r % k, c % k);
        match (r < k, c < k) {
            (true, false) => -z.im,
            (false, true) => z.im,
            _ => z.re,
        }
    });
    let mut doubled: Vec<f64> = SymmetricEigen::new(embedded)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    doubled.sort_by(f64::total_cmp);
    doubled.into_iter().step_by(2).collect()
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entry of |M − M†|.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Tr[A B] without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn real_vector(v: &DVector<f64>) -> CVector {
    v.map(|x| Complex64::new(x, 0.0))
}
