//! Entanglement and nonGaussianity of the three atomic modes.
//!
//! Discrete variables: spectra of the three single-mode partial transposes.
//! Continuous variables: quadratures `q = (c + c†)/√2`, `p = i(c† - c)/√2`,
//! so the vacuum variance is 1/2 and a thermal mode has `σ = (n + 1/2) I`.
//! The CV separability test is `Λ_j σ Λ_j + (i/2) Ω >= 0`. NonGaussianity is
//! the normalized Hilbert-Schmidt distance to the Gaussian state with the
//! same first and second moments, which for every state handled here is a
//! product of thermal modes.

use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{partial_transpose, DensityMatrix, FockBasis, Mode, Occupation};
use crate::linalg::{self, CMatrix};
use crate::subradiance::{
    analytic_p1_n2, beta_ln, inverse_norm_squared, mean_k_hypergeometric, DarkPair, SubradiantState,
};

/// PT eigenvalues below this count as negative.
pub const NEGATIVITY_TOL: f64 = 1e-12;

/// Tolerance for the CM structure checks (symmetry, diagonal form, zero mean).
pub const CM_TOL: f64 = 1e-10;

fn atomic_only(basis: &FockBasis) -> Result<()> {
    if basis.states().iter().any(|s| s.photons() > 0) {
        return Err(Error::InvalidBasis(
            "expected a state of the atomic modes only".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativityReport {
    /// Ascending spectrum of `rho^{T_j}` for `j = 0, 1, 2`.
    pub eigenvalues: [Vec<f64>; 3],
    pub min_per_slot: [f64; 3],
    /// Every eigenvalue below `-NEGATIVITY_TOL`, per slot.
    pub negative: [Vec<f64>; 3],
    pub min_eigenvalue: f64,
    /// All three transposes have a negative eigenvalue.
    pub fully_inseparable: bool,
}

pub fn ppt_report(rho: &DensityMatrix) -> Result<NegativityReport> {
    atomic_only(rho.basis())?;
    let mut eigenvalues: [Vec<f64>; 3] = Default::default();
    for (j, mode) in Mode::ATOMIC.iter().enumerate() {
        eigenvalues[j] = partial_transpose(rho, *mode)?.eigenvalues();
        if eigenvalues[j].iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!(
                "non-finite spectrum after transposing slot {j}"
            )));
        }
    }
    let min_per_slot = [0, 1, 2].map(|j| eigenvalues[j].first().copied().unwrap_or(0.0));
    let negative = [0, 1, 2].map(|j| {
        eigenvalues[j]
            .iter()
            .copied()
            .filter(|v| *v < -NEGATIVITY_TOL)
            .collect::<Vec<_>>()
    });
    let min_eigenvalue = min_per_slot.iter().copied().fold(f64::INFINITY, f64::min);
    let fully_inseparable = negative.iter().all(|n| !n.is_empty());
    Ok(NegativityReport {
        eigenvalues,
        min_per_slot,
        negative,
        min_eigenvalue,
        fully_inseparable,
    })
}

/// Closed forms for the negative PT eigenvalue of the two-atom stationary
/// state with the bad-cavity `P_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NegativityClosedForm {
    pub epsilon: f64,
    /// `-(√2/2) ε (ε² - 1)² / ((1/2 + ε²)² (2 + ε²))`.
    pub closed_form: f64,
    /// The same quantity written through `<N_0><N_1>`.
    pub moment_form: f64,
    pub discrepancy: f64,
}

pub fn analytic_negativity_n2(epsilon: f64) -> Result<NegativityClosedForm> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be >= 0"
        )));
    }
    let e2 = epsilon * epsilon;
    let closed_form =
        -SQRT_2 / 2.0 * epsilon * (e2 - 1.0).powi(2) / ((0.5 + e2).powi(2) * (2.0 + e2));
    // <N_0><N_1> = P_1^2 4 eps^2 / (1 + 2 eps^2)^2. P_1 carries (1 - eps^2)^2, so
    // the division by (eps^2 - 1)^2 is done symbolically to stay finite at eps = 1.
    let d = 9.0 * e2 + 2.0 * (1.0 - e2).powi(2);
    let p1_sq_over = 4.0 * (1.0 - e2).powi(2) / (d * d);
    let n0n1_over = p1_sq_over * 4.0 * e2 / (1.0 + 2.0 * e2).powi(2);
    let moment_form = -(e2 * (2.0 * e2 + 3.0).powi(2) + 2.0) / (4.0 * SQRT_2) * n0n1_over;
    Ok(NegativityClosedForm {
        epsilon,
        closed_form,
        moment_form,
        discrepancy: (closed_form - moment_form).abs(),
    })
}

/// Second moments of the quadratures `R = (q_0, p_0, q_1, p_1, q_2, p_2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub sigma: [[f64; 6]; 6],
    pub mean: [f64; 6],
}

#[derive(Clone, Copy)]
enum Ladder {
    Lower(usize),
    Raise(usize),
}

fn act(occ: Occupation, op: Ladder) -> Option<(Occupation, f64)> {
    match op {
        Ladder::Lower(j) => {
            let m = occ.0[j];
            (m > 0).then(|| {
                let mut o = occ;
                o.0[j] -= 1;
                (o, (m as f64).sqrt())
            })
        }
        Ladder::Raise(j) => {
            let mut o = occ;
            o.0[j] += 1;
            Some((o, (o.0[j] as f64).sqrt()))
        }
    }
}

/// `Tr[rho L_1 L_2 ...]`, evaluated by acting on basis tuples. Intermediate
/// tuples may leave the basis; only the final one has to be in it.
fn ladder_expectation(rho: &DensityMatrix, ops: &[Ladder]) -> Complex64 {
    let basis = rho.basis();
    let m = rho.matrix();
    let mut acc = Complex64::new(0.0, 0.0);
    for (s, occ) in basis.states().iter().enumerate() {
        let mut cur = Some((*occ, 1.0));
        for op in ops.iter().rev() {
            cur = cur.and_then(|(o, c)| act(o, *op).map(|(o2, c2)| (o2, c * c2)));
        }
        if let Some((t, c)) = cur {
            if let Some(i) = basis.index_of(&t) {
                acc += m[(s, i)] * c;
            }
        }
    }
    acc
}

fn quadrature(a: usize) -> [(Ladder, Complex64); 2] {
    let j = a / 2;
    let h = 1.0 / SQRT_2;
    if a % 2 == 0 {
        [
            (Ladder::Lower(j), Complex64::new(h, 0.0)),
            (Ladder::Raise(j), Complex64::new(h, 0.0)),
        ]
    } else {
        [
            (Ladder::Raise(j), Complex64::new(0.0, h)),
            (Ladder::Lower(j), Complex64::new(0.0, -h)),
        ]
    }
}

/// `Ω = ⊕_j [[0, 1], [-1, 0]]`.
pub fn symplectic_form() -> DMatrix<f64> {
    let mut w = DMatrix::zeros(6, 6);
    for j in 0..3 {
        w[(2 * j, 2 * j + 1)] = 1.0;
        w[(2 * j + 1, 2 * j)] = -1.0;
    }
    w
}

impl CovarianceMatrix {
    pub fn from_matrix(sigma: &DMatrix<f64>, mean: [f64; 6]) -> Result<Self> {
        if sigma.shape() != (6, 6) {
            return Err(Error::DimensionMismatch {
                expected: 6,
                found: sigma.nrows(),
            });
        }
        let mut s = [[0.0; 6]; 6];
        for (r, row) in s.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = sigma[(r, c)];
            }
        }
        Ok(CovarianceMatrix { sigma: s, mean })
    }

    /// Product of thermal modes with mean occupations `n`.
    pub fn thermal(n: [f64; 3]) -> Self {
        let mut sigma = [[0.0; 6]; 6];
        for j in 0..3 {
            sigma[2 * j][2 * j] = n[j] + 0.5;
            sigma[2 * j + 1][2 * j + 1] = n[j] + 0.5;
        }
        CovarianceMatrix {
            sigma,
            mean: [0.0; 6],
        }
    }

    /// Two-mode squeezed vacuum on modes 0 and 1 with squeezing `r`, mode 2 in vacuum.
    pub fn two_mode_squeezed(r: f64) -> Self {
        let (c, s) = ((2.0 * r).cosh() / 2.0, (2.0 * r).sinh() / 2.0);
        let mut sigma = [[0.0; 6]; 6];
        for i in 0..4 {
            sigma[i][i] = c;
        }
        sigma[0][2] = s;
        sigma[2][0] = s;
        sigma[1][3] = -s;
        sigma[3][1] = -s;
        sigma[4][4] = 0.5;
        sigma[5][5] = 0.5;
        CovarianceMatrix {
            sigma,
            mean: [0.0; 6],
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(6, 6, |r, c| self.sigma[r][c])
    }

    pub fn symmetry_defect(&self) -> f64 {
        let m = self.matrix();
        (&m - m.transpose()).amax()
    }

    /// Largest off-diagonal entry.
    pub fn off_diagonal(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..6 {
            for c in 0..6 {
                if r != c {
                    worst = worst.max(self.sigma[r][c].abs());
                }
            }
        }
        worst
    }

    /// Minimum eigenvalue of `σ + (i/2) Ω`; non-negative for physical states.
    pub fn physicality(&self) -> f64 {
        uncertainty_min(&self.matrix())
    }

    pub fn validate(&self) -> Result<()> {
        if self.symmetry_defect() > CM_TOL {
            return Err(Error::InvalidState(format!(
                "CM not symmetric ({:e})",
                self.symmetry_defect()
            )));
        }
        let min_eigenvalue = self.physicality();
        if min_eigenvalue < -CM_TOL {
            return Err(Error::Unphysical { min_eigenvalue });
        }
        Ok(())
    }

    /// `<n_j>` for zero-mean states: `(σ_qq + σ_pp - 1) / 2`.
    pub fn occupations(&self) -> [f64; 3] {
        [0, 1, 2].map(|j| (self.sigma[2 * j][2 * j] + self.sigma[2 * j + 1][2 * j + 1] - 1.0) / 2.0)
    }

    /// Diagonal entries `σ_{q_j q_j}`.
    pub fn diagonal(&self) -> [f64; 6] {
        [0, 1, 2, 3, 4, 5].map(|a| self.sigma[a][a])
    }
}

fn uncertainty_min(sigma: &DMatrix<f64>) -> f64 {
    let w = symplectic_form();
    let m = CMatrix::from_fn(6, 6, |r, c| Complex64::new(sigma[(r, c)], 0.5 * w[(r, c)]));
    linalg::hermitian_eigenvalues(&m)[0]
}

/// Covariance matrix from the assembled quadratures, for any state of the
/// atomic modes.
pub fn covariance_matrix(rho: &DensityMatrix) -> Result<CovarianceMatrix> {
    atomic_only(rho.basis())?;
    let mut mean = [0.0; 6];
    for (a, x) in mean.iter_mut().enumerate() {
        *x = quadrature(a)
            .iter()
            .map(|(op, w)| w * ladder_expectation(rho, &[*op]))
            .sum::<Complex64>()
            .re;
    }
    let mut sigma = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in a..6 {
            let mut second = Complex64::new(0.0, 0.0);
            for (op_a, w_a) in quadrature(a) {
                for (op_b, w_b) in quadrature(b) {
                    second += w_a * w_b * ladder_expectation(rho, &[op_a, op_b]);
                }
            }
            // (1/2)<{R_a, R_b}> = Re <R_a R_b> for Hermitian R.
            let v = second.re - mean[a] * mean[b];
            sigma[a][b] = v;
            sigma[b][a] = v;
        }
    }
    Ok(CovarianceMatrix { sigma, mean })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CvPptReport {
    /// Minimum eigenvalue of `Λ_j σ Λ_j + (i/2) Ω` for `j = 0, 1, 2`.
    pub min_eigenvalues: [f64; 3],
    /// `true` where no entanglement is detected for that mode.
    pub satisfied: [bool; 3],
}

pub fn cv_ppt_test(cm: &CovarianceMatrix) -> Result<CvPptReport> {
    cm.validate()?;
    let sigma = cm.matrix();
    let mut min_eigenvalues = [0.0; 3];
    for (j, out) in min_eigenvalues.iter_mut().enumerate() {
        let mut lambda = DMatrix::<f64>::identity(6, 6);
        lambda[(2 * j + 1, 2 * j + 1)] = -1.0;
        *out = uncertainty_min(&(&lambda * &sigma * &lambda));
    }
    Ok(CvPptReport {
        min_eigenvalues,
        satisfied: min_eigenvalues.map(|v| v >= -NEGATIVITY_TOL),
    })
}

/// Product of three thermal modes, `ν_j = (1 - y_j) Σ_s y_j^s |s><s|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalReference {
    pub occupations: [f64; 3],
    /// `y_j = N_j / (1 + N_j)`.
    pub y: [f64; 3],
}

impl ThermalReference {
    pub fn new(occupations: [f64; 3]) -> Result<Self> {
        let mut n = occupations;
        for v in n.iter_mut() {
            if !v.is_finite() || *v < -CM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "thermal occupation {v} must be >= 0"
                )));
            }
            *v = v.max(0.0);
        }
        Ok(ThermalReference {
            occupations: n,
            y: n.map(|v| v / (1.0 + v)),
        })
    }

    /// `Tr[τ²] = Π (1 - y_j)/(1 + y_j)`.
    pub fn purity(&self) -> f64 {
        self.y.iter().map(|y| (1.0 - y) / (1.0 + y)).product()
    }

    /// `<n|τ|n>`.
    pub fn weight(&self, occ: &Occupation) -> f64 {
        (0..3)
            .map(|j| (1.0 - self.y[j]) * self.y[j].powi(occ.0[j] as i32))
            .product()
    }

    /// `Tr[rho τ]`; τ is diagonal, so only the populations of `rho` enter.
    pub fn overlap(&self, rho: &DensityMatrix) -> f64 {
        rho.basis()
            .states()
            .iter()
            .enumerate()
            .map(|(i, s)| rho.matrix()[(i, i)].re * self.weight(s))
            .sum()
    }

    pub fn covariance(&self) -> CovarianceMatrix {
        CovarianceMatrix::thermal(self.occupations)
    }

    /// Smallest per-mode cutoffs for which the neglected population, and
    /// with it the neglected part of `Tr[τ²]`, is below `tail`.
    pub fn cutoffs(&self, tail: f64) -> [usize; 3] {
        self.y.map(|y| {
            let mut s = 0usize;
            // Σ_{n > s} (1 - y) y^n = y^{s+1}.
            while y > 0.0 && y.powi(s as i32 + 1) >= tail / 3.0 {
                s += 1;
            }
            s
        })
    }

    /// `Tr[τ²]` summed term by term up to `cutoffs`.
    pub fn truncated_purity(&self, cutoffs: [usize; 3]) -> f64 {
        (0..3)
            .map(|j| {
                (0..=cutoffs[j])
                    .map(|n| ((1.0 - self.y[j]) * self.y[j].powi(n as i32)).powi(2))
                    .sum::<f64>()
            })
            .product()
    }

    /// τ truncated to `n_j <= cutoffs[j]` on a product basis. The trace is
    /// short of 1 by the neglected tail.
    pub fn truncated_state(&self, cutoffs: [usize; 3]) -> Result<DensityMatrix> {
        let basis =
            std::sync::Arc::new(FockBasis::product([cutoffs[0], cutoffs[1], cutoffs[2], 0]));
        let m = CMatrix::from_fn(basis.dim(), basis.dim(), |r, c| {
            if r == c {
                Complex64::new(self.weight(&basis.state(r)), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        DensityMatrix::from_matrix(basis, m)
    }
}

/// Reference Gaussian state of `rho`: a thermal product with the same
/// occupations. Requires a zero mean and a diagonal CM with equal `q` and
/// `p` variances per mode.
pub fn reference_gaussian(rho: &DensityMatrix) -> Result<ThermalReference> {
    let cm = covariance_matrix(rho)?;
    reference_from_cm(&cm)
}

pub fn reference_from_cm(cm: &CovarianceMatrix) -> Result<ThermalReference> {
    let mean = cm.mean.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if mean > CM_TOL {
        return Err(Error::NotThermal(format!(
            "non-zero first moments ({mean:e})"
        )));
    }
    if cm.off_diagonal() > CM_TOL {
        return Err(Error::NotThermal(format!(
            "CM has off-diagonal entries ({:e})",
            cm.off_diagonal()
        )));
    }
    for j in 0..3 {
        let (q, p) = (cm.sigma[2 * j][2 * j], cm.sigma[2 * j + 1][2 * j + 1]);
        if (q - p).abs() > CM_TOL {
            return Err(Error::NotThermal(format!(
                "mode {j} has unequal variances {q} and {p}"
            )));
        }
    }
    ThermalReference::new(cm.occupations())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NonGaussianity {
    pub delta: f64,
    pub mu_rho: f64,
    pub mu_tau: f64,
    pub kappa: f64,
}

/// `δ = (μ_ρ + μ_τ - 2 κ_ρτ) / (2 μ_ρ)`.
pub fn nong_measure(rho: &DensityMatrix, tau: &ThermalReference) -> Result<NonGaussianity> {
    atomic_only(rho.basis())?;
    let mu_rho = rho.purity();
    if !(mu_rho > 0.0) {
        return Err(Error::InvalidState(format!("purity {mu_rho}")));
    }
    let mu_tau = tau.purity();
    let kappa = tau.overlap(rho);
    Ok(NonGaussianity {
        delta: (mu_rho + mu_tau - 2.0 * kappa) / (2.0 * mu_rho),
        mu_rho,
        mu_tau,
        kappa,
    })
}

/// δ of `rho` against its own reference Gaussian state.
pub fn nong_direct(rho: &DensityMatrix) -> Result<NonGaussianity> {
    nong_measure(rho, &reference_gaussian(rho)?)
}

/// Closed-form δ of the pure state `|sr>_p`:
/// `1/2 + μ_τ/2 - |C_p|² Π(1 - y_j) Σ_k β_k² y_0^{p-k} y_1^{2k} y_2^{N-p-k}`.
pub fn nong_subradiant_closed_form(atoms: usize, p: usize, epsilon: f64) -> Result<f64> {
    if atoms == 0 || atoms % 2 == 1 || 2 * p > atoms {
        return Err(Error::InvalidParameter(format!(
            "need even N >= 2 and p <= N/2 (N = {atoms}, p = {p})"
        )));
    }
    if p == 0 {
        let tau = ThermalReference::new([0.0, 0.0, atoms as f64])?;
        let weight = tau.weight(&Occupation::atomic(0, 0, atoms));
        return Ok(0.5 + 0.5 * tau.purity() - weight);
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be > 0 for p >= 1"
        )));
    }
    let kbar = mean_k_hypergeometric(atoms, p, epsilon)?;
    let tau = ThermalReference::new([p as f64 - kbar, 2.0 * kbar, (atoms - p) as f64 - kbar])?;
    let ln_norm = inverse_norm_squared(atoms, p, epsilon)?.ln();
    let y = tau.y;
    let sum: f64 = (0..=p)
        .map(|k| {
            let (ln_beta, _) = beta_ln(atoms, p, epsilon, k);
            (2.0 * ln_beta - ln_norm).exp()
                * y[0].powi((p - k) as i32)
                * y[1].powi(2 * k as i32)
                * y[2].powi((atoms - p - k) as i32)
        })
        .sum();
    let prod: f64 = y.iter().map(|v| 1.0 - v).product();
    Ok(0.5 + 0.5 * tau.purity() - prod * sum)
}

/// δ of a pure subradiant state computed from the state itself.
pub fn nong_subradiant_direct(state: &SubradiantState) -> Result<NonGaussianity> {
    nong_direct(&DensityMatrix::pure(state.basis.clone(), &state.vector())?)
}

/// Overlaps `Tr[ρ_0 τ]`, `Tr[ρ_1 τ]` of the two stationary components with a
/// thermal reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StationaryOverlaps {
    pub ground: f64,
    pub excited: f64,
}

fn check_small_n(atoms: usize) -> Result<()> {
    if atoms == 2 || atoms == 3 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "stationary closed forms exist for N = 2, 3 (got {atoms})"
        )))
    }
}

/// Closed-form overlaps for `N = 2, 3`, `Π_j (1 - y_j)` times the
/// population-weighted `Π_j y_j^{n_j}`.
pub fn overlaps_closed_form(
    atoms: usize,
    epsilon: f64,
    tau: &ThermalReference,
) -> Result<StationaryOverlaps> {
    check_small_n(atoms)?;
    let [y0, y1, y2] = tau.y;
    let prod: f64 = tau.y.iter().map(|v| 1.0 - v).product();
    let e2 = epsilon * epsilon;
    let (ground, excited) = if atoms == 2 {
        (y2 * y2, (y1 * y1 + 2.0 * e2 * y0 * y2) / (1.0 + 2.0 * e2))
    } else {
        (
            y2 * y2 * y2,
            y2 * (y1 * y1 + 4.0 * e2 * y0 * y2) / (1.0 + 4.0 * e2),
        )
    };
    Ok(StationaryOverlaps {
        ground: ground * prod,
        excited: excited * prod,
    })
}

/// The same overlaps with the prefactor `Π (1 - y_j)/(1 + y_j)` and the
/// ground-state power `y_2²` used for both `N`, as they are sometimes quoted.
/// Kept for comparison only.
pub fn overlaps_as_printed(
    atoms: usize,
    epsilon: f64,
    tau: &ThermalReference,
) -> Result<StationaryOverlaps> {
    check_small_n(atoms)?;
    let [y0, y1, y2] = tau.y;
    let mu = tau.purity();
    let e2 = epsilon * epsilon;
    let excited = if atoms == 2 {
        (y1 * y1 + 2.0 * e2 * y0 * y2) / (1.0 + 2.0 * e2)
    } else {
        y2 * (y1 * y1 + 4.0 * e2 * y0 * y2) / (1.0 + 4.0 * e2)
    };
    Ok(StationaryOverlaps {
        ground: y2 * y2 * mu,
        excited: excited * mu,
    })
}

/// Direct overlaps `Tr[ρ_j τ]` from the dark-pair states.
pub fn overlaps_direct(pair: &DarkPair, tau: &ThermalReference) -> Result<StationaryOverlaps> {
    let ground = DensityMatrix::pure(pair.ground.basis.clone(), &pair.ground.vector())?;
    let excited = DensityMatrix::pure(pair.excited.basis.clone(), &pair.excited.vector())?;
    Ok(StationaryOverlaps {
        ground: tau.overlap(&ground),
        excited: tau.overlap(&excited),
    })
}

/// NonGaussianity of `ρ_s = P_1 ρ_1 + (1 - P_1) ρ_0` for `N = 2, 3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StationaryNonG {
    pub atoms: usize,
    pub epsilon: f64,
    pub p1: f64,
    /// `D²_HS / μ_ρ`, the same normalization as [`nong_measure`].
    pub delta: f64,
    /// `P_1(P_1 - 1) + (1 + μ_τ)/2 - (1 - P_1) κ_0 - P_1 κ_1`, i.e. `D²_HS`.
    pub distance_squared: f64,
    /// The unnormalized expression evaluated with [`overlaps_as_printed`].
    pub printed: f64,
    pub mu_rho: f64,
    pub mu_tau: f64,
    pub reference: ThermalReference,
    pub overlaps: StationaryOverlaps,
    pub printed_overlaps: StationaryOverlaps,
}

pub fn nong_stationary(atoms: usize, epsilon: f64, p1: f64) -> Result<StationaryNonG> {
    check_small_n(atoms)?;
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::InvalidParameter(format!("P1 = {p1} outside [0, 1]")));
    }
    let pair = DarkPair::new(atoms, epsilon)?;
    let (n0, n1) = (pair.ground.occupations(), pair.excited.occupations());
    let tau = ThermalReference::new([0, 1, 2].map(|j| (1.0 - p1) * n0[j] + p1 * n1[j]))?;
    let mu_tau = tau.purity();
    let overlaps = overlaps_closed_form(atoms, epsilon, &tau)?;
    let printed_overlaps = overlaps_as_printed(atoms, epsilon, &tau)?;
    let expr = |k: &StationaryOverlaps| {
        p1 * (p1 - 1.0) + (1.0 + mu_tau) / 2.0 - (1.0 - p1) * k.ground - p1 * k.excited
    };
    let distance_squared = expr(&overlaps);
    let mu_rho = p1 * p1 + (1.0 - p1) * (1.0 - p1);
    Ok(StationaryNonG {
        atoms,
        epsilon,
        p1,
        delta: distance_squared / mu_rho,
        distance_squared,
        printed: expr(&printed_overlaps),
        mu_rho,
        mu_tau,
        reference: tau,
        overlaps,
        printed_overlaps,
    })
}

/// Diagonal CM entries of a closed-form dark state, three ways.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubradiantCm {
    /// `σ_{q_j q_j}` from the assembled quadratures.
    pub direct: [f64; 3],
    /// `Σ_k |C_p β_k|² (n_j(k) + 1/2)` rescaled to this convention.
    pub from_sums: [f64; 3],
    /// `p - <k> - 1/2`, `2<k> + 1/2`, `N - p - <k> + 1/2`: the simplified
    /// forms as often quoted, including the sign slip in the first one.
    pub quoted: [f64; 3],
    /// Factor between the half-variance convention and this one.
    pub convention_factor: f64,
}

pub fn subradiant_cm(state: &SubradiantState) -> Result<SubradiantCm> {
    let rho = DensityMatrix::pure(state.basis.clone(), &state.vector())?;
    let cm = covariance_matrix(&rho)?;
    let direct = [cm.sigma[0][0], cm.sigma[2][2], cm.sigma[4][4]];
    let (n, p) = (state.atoms as f64, state.p as f64);
    let mut from_sums = [0.0; 3];
    for (k, a) in state.components() {
        let w = a * a;
        let k = k as f64;
        from_sums[0] += w * (p - k + 0.5);
        from_sums[1] += w * (2.0 * k + 0.5);
        from_sums[2] += w * (n - p - k + 0.5);
    }
    let kbar = state.mean_k();
    Ok(SubradiantCm {
        direct,
        from_sums,
        quoted: [p - kbar - 0.5, 2.0 * kbar + 0.5, n - p - kbar + 0.5],
        convention_factor: 2.0,
    })
}

/// The two-atom stationary state with the bad-cavity `P_1`.
pub fn stationary_n2(epsilon: f64) -> Result<DensityMatrix> {
    DarkPair::new(2, epsilon)?.mixture(analytic_p1_n2(epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subradiance::{subradiant_state, subradiant_state_n3};
    use std::sync::Arc;

    #[test]
    fn diagonal_mixture_is_ppt() {
        let b = Arc::new(FockBasis::atomic(2).unwrap());
        let psi0 = b.ket(Occupation::atomic(2, 0, 0)).unwrap();
        let psi1 = b.ket(Occupation::atomic(0, 1, 1)).unwrap();
        let rho = DensityMatrix::mixture(b, &[(0.4, &psi0), (0.6, &psi1)]).unwrap();
        let r = ppt_report(&rho).unwrap();
        assert!(r.min_eigenvalue >= -NEGATIVITY_TOL);
        assert!(!r.fully_inseparable);
    }

    #[test]
    fn n2_negativity_matches_closed_form() {
        for eps in [0.2, 0.5, 0.9, 1.7] {
            let r = ppt_report(&stationary_n2(eps).unwrap()).unwrap();
            let a = analytic_negativity_n2(eps).unwrap().closed_form;
            assert!(r.fully_inseparable);
            for m in r.min_per_slot {
                assert!((m - a).abs() < 1e-10, "eps {eps}: {m} vs {a}");
            }
            for (j, e) in r.eigenvalues.iter().enumerate() {
                assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-12, "slot {j}");
            }
        }
    }

    #[test]
    fn closed_form_values() {
        let a = analytic_negativity_n2(0.5).unwrap();
        assert!((a.closed_form + 0.157135).abs() < 5e-6);
        assert_eq!(analytic_negativity_n2(1.0).unwrap().closed_form, 0.0);
        assert_eq!(analytic_negativity_n2(1.0).unwrap().moment_form, 0.0);
        assert!(analytic_negativity_n2(0.0).unwrap().closed_form.abs() < 1e-15);
        assert!(a.discrepancy > 1e-3);
        assert!(analytic_negativity_n2(-0.1).is_err());
    }

    #[test]
    fn ppt_rejects_photons() {
        let b = Arc::new(FockBasis::cascade(2, 1).unwrap());
        let rho = DensityMatrix::fock(b, Occupation::new(2, 0, 0, 0)).unwrap();
        assert!(ppt_report(&rho).is_err());
    }

    #[test]
    fn vacuum_variances() {
        let b = Arc::new(FockBasis::product([1, 1, 1, 0]));
        let rho = DensityMatrix::fock(b, Occupation::atomic(0, 0, 0)).unwrap();
        let cm = covariance_matrix(&rho).unwrap();
        for a in 0..6 {
            assert!((cm.sigma[a][a] - 0.5).abs() < 1e-15);
        }
        assert!(cm.off_diagonal() < 1e-15);
        assert!(cm.physicality().abs() < 1e-12);
    }

    #[test]
    fn coherent_superposition_has_mean_and_correlations() {
        // (|0> + |1>)/√2 on mode 0: <q> = 1/√2 · √2 · ... = 1/√2, <p> = 0.
        let b = Arc::new(FockBasis::product([1, 0, 0, 0]));
        let psi = (b.ket(Occupation::atomic(0, 0, 0)).unwrap()
            + b.ket(Occupation::atomic(1, 0, 0)).unwrap())
        .scale(1.0 / SQRT_2);
        let cm = covariance_matrix(&DensityMatrix::pure(b, &psi).unwrap()).unwrap();
        assert!((cm.mean[0] - 1.0 / SQRT_2).abs() < 1e-14);
        assert!(cm.mean[1].abs() < 1e-14);
        // <q²> = 1, <p²> = 1/2 + ... ; check the uncertainty relation holds.
        assert!(cm.physicality() > -1e-12);
        assert!(reference_from_cm(&cm).is_err());
    }

    #[test]
    fn subradiant_cm_is_diagonal_thermal_like() {
        for (n, p, eps) in [(2, 1, 0.5), (4, 2, 0.7), (6, 2, 1.5), (8, 3, 0.4)] {
            let s = subradiant_state(n, p, eps).unwrap();
            let rho = DensityMatrix::pure(s.basis.clone(), &s.vector()).unwrap();
            let cm = covariance_matrix(&rho).unwrap();
            assert!(cm.off_diagonal() < 1e-12);
            let occ = s.occupations();
            let kbar = s.mean_k();
            assert!((occ[0] - (p as f64 - kbar)).abs() < 1e-12);
            assert!((occ[1] - 2.0 * kbar).abs() < 1e-12);
            for j in 0..3 {
                assert!((cm.sigma[2 * j][2 * j] - (occ[j] + 0.5)).abs() < 1e-12);
                assert!((cm.sigma[2 * j + 1][2 * j + 1] - (occ[j] + 0.5)).abs() < 1e-12);
            }
            let report = subradiant_cm(&s).unwrap();
            for j in 0..3 {
                assert!((report.direct[j] - report.from_sums[j]).abs() < 1e-12);
            }
            assert!((report.quoted[0] - report.direct[0] + 1.0).abs() < 1e-12);
            assert!((report.quoted[1] - report.direct[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn cv_test_cannot_see_subradiant_entanglement() {
        let s = subradiant_state_n3(0.5).unwrap();
        let rho = DensityMatrix::pure(s.basis.clone(), &s.vector()).unwrap();
        let cv = cv_ppt_test(&covariance_matrix(&rho).unwrap()).unwrap();
        assert!(cv.satisfied.iter().all(|v| *v));
        assert!(ppt_report(&rho).unwrap().fully_inseparable);
    }

    #[test]
    fn cv_test_detects_two_mode_squeezing() {
        let cm = CovarianceMatrix::two_mode_squeezed(0.5);
        cm.validate().unwrap();
        let r = cv_ppt_test(&cm).unwrap();
        assert!(!r.satisfied[0] && !r.satisfied[1]);
        assert!(r.satisfied[2]);
        // Smallest PT symplectic eigenvalue is e^{-2r}/2, so the violation is
        // e^{-2r}/2 - 1/2.
        assert!((r.min_eigenvalues[0] - ((-1.0_f64).exp() - 1.0) / 2.0).abs() < 1e-12);
        let thermal = cv_ppt_test(&CovarianceMatrix::thermal([0.3, 1.2, 0.0])).unwrap();
        assert!(thermal.satisfied.iter().all(|v| *v));
    }

    #[test]
    fn unphysical_cm_is_rejected() {
        let mut cm = CovarianceMatrix::thermal([0.0; 3]);
        cm.sigma[0][0] = 0.1;
        assert!(matches!(cv_ppt_test(&cm), Err(Error::Unphysical { .. })));
    }

    #[test]
    fn reference_of_ground_state() {
        let pair = DarkPair::new(3, 0.4).unwrap();
        let rho = DensityMatrix::pure(pair.ground.basis.clone(), &pair.ground.vector()).unwrap();
        let tau = reference_gaussian(&rho).unwrap();
        assert!(tau.occupations[0].abs() < 1e-14 && tau.occupations[1].abs() < 1e-14);
        assert!((tau.occupations[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn mixture_cm_is_convex() {
        let pair = DarkPair::new(2, 0.6).unwrap();
        let p1 = 0.37;
        let cm = |s: &SubradiantState| {
            covariance_matrix(&DensityMatrix::pure(s.basis.clone(), &s.vector()).unwrap())
                .unwrap()
                .matrix()
        };
        let mix = covariance_matrix(&pair.mixture(p1).unwrap())
            .unwrap()
            .matrix();
        let convex = cm(&pair.excited) * p1 + cm(&pair.ground) * (1.0 - p1);
        assert!((mix - convex).amax() < 1e-12);
    }

    #[test]
    fn thermal_purity_truncation() {
        let tau = ThermalReference::new([0.4, 1.3, 2.0]).unwrap();
        let cut = tau.cutoffs(1e-12);
        assert!((tau.truncated_purity(cut) - tau.purity()).abs() < 1e-10);
    }

    #[test]
    fn thermal_input_is_gaussian() {
        let tau = ThermalReference::new([0.3, 0.15, 0.0]).unwrap();
        let cut = tau.cutoffs(1e-13);
        let rho = tau.truncated_state(cut).unwrap();
        let ng = nong_measure(&rho, &tau).unwrap();
        assert!(ng.delta.abs() < 1e-10, "{}", ng.delta);
        // The truncated state has the same reference up to the tail.
        let reference = reference_gaussian(&rho).unwrap();
        for j in 0..3 {
            assert!((reference.occupations[j] - tau.occupations[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_nong_matches_direct() {
        for (n, p, eps) in [
            (2, 1, 0.5),
            (2, 0, 0.5),
            (4, 1, 0.3),
            (4, 2, 0.5),
            (4, 2, 1.8),
        ] {
            let s = subradiant_state(n, p, eps).unwrap();
            let direct = nong_subradiant_direct(&s).unwrap();
            let closed = nong_subradiant_closed_form(n, p, eps).unwrap();
            assert!((direct.delta - closed).abs() < 1e-10, "{n} {p} {eps}");
            assert!((direct.mu_rho - 1.0).abs() < 1e-12);
            assert!(closed > 0.0);
        }
    }

    #[test]
    fn stationary_overlaps_and_delta() {
        for (n, eps, p1) in [
            (2, 0.5, 0.4285),
            (3, 0.5, 0.45),
            (3, 1.4, 0.2),
            (2, 0.3, 0.0),
            (2, 0.3, 1.0),
        ] {
            let pair = DarkPair::new(n, eps).unwrap();
            let rep = nong_stationary(n, eps, p1).unwrap();
            let direct = overlaps_direct(&pair, &rep.reference).unwrap();
            assert!((direct.ground - rep.overlaps.ground).abs() < 1e-12);
            assert!((direct.excited - rep.overlaps.excited).abs() < 1e-12);
            let rho = pair.mixture(p1).unwrap();
            let oracle = nong_direct(&rho).unwrap();
            assert!((oracle.delta - rep.delta).abs() < 1e-10, "{n} {eps} {p1}");
            assert!(rep.delta >= 0.0);
        }
    }

    #[test]
    fn stationary_at_zero_p1_is_ground_state() {
        let rep = nong_stationary(2, 0.7, 0.0).unwrap();
        let expected = (1.0 + rep.mu_tau) / 2.0 - rep.overlaps.ground;
        assert!((rep.delta - expected).abs() < 1e-15);
    }

    #[test]
    fn report_serializes() {
        let r = ppt_report(&stationary_n2(0.5).unwrap()).unwrap();
        let back: NegativityReport =
            serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let cm = CovarianceMatrix::thermal([1.0, 0.5, 0.0]);
        let back: CovarianceMatrix =
            serde_json::from_str(&serde_json::to_string(&cm).unwrap()).unwrap();
        assert_eq!(back, cm);
    }
}
