//! Subradiant (dark) states of the degenerate cascade.
//!
//! For even `N` the closed-form states `|sr>_p` are supported on the tuples
//! `|p-k, 2k, N-p-k>`, `k = 0..=p`, with amplitudes
//! `beta_k = (-1/(2 eps))^k / k! * sqrt((2k)! (N-p-k)! / (p-k)!)` and norm
//! `|C_p|^-2 = (N-p)!/p! * 2F1(-p, 1/2; p-N; eps^-2)`. Amplitudes are built in
//! log space so `N` in the hundreds does not overflow.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FockBasis, Mode, Occupation};
use crate::linalg::{self, CMatrix, CVector};

/// Singular values below this are treated as zero when extracting the dark space.
pub const KERNEL_TOL: f64 = 1e-10;

/// `sqrt(2) + 1`, upper edge of the large-`N` existence window.
pub const EPSILON_MAX: f64 = 1.0 + std::f64::consts::SQRT_2;

const DOMAIN_SLACK: f64 = 1e-12;

/// `2F1(-p, b; c; z)` as the finite sum `Σ_{k=0}^{p} (-p)_k (b)_k / (c)_k z^k / k!`.
pub fn hyp2f1_terminating(p: usize, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..p {
        let ck = c + k as f64;
        if ck == 0.0 {
            return Err(Error::DegenerateSeries { k: k + 1 });
        }
        term *= (k as f64 - p as f64) * (b + k as f64) / (ck * (k + 1) as f64) * z;
        sum += term;
    }
    Ok(sum)
}

/// `S⁻ = c1† c0 + eps c2† c1` on any basis.
pub fn lowering_operator(basis: &FockBasis, epsilon: f64) -> CMatrix {
    basis.transition(Mode::C0, Mode::C1) + basis.transition(Mode::C1, Mode::C2).scale(epsilon)
}

/// `(ln |beta_k|, sign)` for the closed-form amplitude of `|p-k, 2k, N-p-k>`.
pub fn beta_ln(atoms: usize, p: usize, epsilon: f64, k: usize) -> (f64, f64) {
    let ln = -(k as f64) * (2.0 * epsilon).ln() - ln_factorial(k as u64)
        + 0.5
            * (ln_factorial(2 * k as u64) + ln_factorial((atoms - p - k) as u64)
                - ln_factorial((p - k) as u64));
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    (ln, sign)
}

pub fn beta(atoms: usize, p: usize, epsilon: f64, k: usize) -> f64 {
    let (ln, sign) = beta_ln(atoms, p, epsilon, k);
    sign * ln.exp()
}

/// `|C_p|^-2` from the hypergeometric closed form.
pub fn inverse_norm_squared(atoms: usize, p: usize, epsilon: f64) -> Result<f64> {
    let f = hyp2f1_terminating(p, 0.5, p as f64 - atoms as f64, epsilon.powi(-2))?;
    if f <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "2F1 = {f} <= 0, C_p undefined at N = {atoms}, p = {p}, eps = {epsilon}"
        )));
    }
    Ok((ln_factorial((atoms - p) as u64) - ln_factorial(p as u64)).exp() * f)
}

/// A dark state on the atomic basis, with real amplitudes.
#[derive(Clone, Debug)]
pub struct SubradiantState {
    pub atoms: usize,
    pub p: usize,
    pub epsilon: f64,
    pub basis: Arc<FockBasis>,
    pub amplitudes: DVector<f64>,
}

impl SubradiantState {
    pub fn vector(&self) -> CVector {
        linalg::real_vector(&self.amplitudes)
    }

    pub fn amplitude(&self, occ: Occupation) -> f64 {
        self.basis
            .index_of(&occ)
            .map_or(0.0, |i| self.amplitudes[i])
    }

    /// `(k, amplitude)` on the closed-form support `|p-k, 2k, N-p-k>`.
    pub fn components(&self) -> Vec<(usize, f64)> {
        (0..=self.p)
            .filter(|k| self.p + k <= self.atoms)
            .map(|k| (k, self.amplitude(self.support_tuple(k))))
            .collect()
    }

    pub fn support_tuple(&self, k: usize) -> Occupation {
        Occupation::atomic(self.p - k, 2 * k, self.atoms - self.p - k)
    }

    /// `<k>_p` from the amplitudes.
    pub fn mean_k(&self) -> f64 {
        self.components()
            .iter()
            .map(|(k, a)| a * a * *k as f64)
            .sum()
    }

    /// Mean occupations `<n_0>, <n_1>, <n_2>`.
    pub fn occupations(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, s) in self.basis.states().iter().enumerate() {
            let w = self.amplitudes[i] * self.amplitudes[i];
            for (j, o) in out.iter_mut().enumerate() {
                *o += w * s.0[j] as f64;
            }
        }
        out
    }

    pub fn lowering_residual(&self) -> f64 {
        (lowering_operator(&self.basis, self.epsilon) * self.vector()).norm()
    }

    pub fn overlap(&self, other: &SubradiantState) -> f64 {
        self.amplitudes.dot(&other.amplitudes)
    }

    pub fn to_record(&self) -> StateRecord {
        StateRecord {
            atoms: self.atoms,
            p: self.p,
            epsilon: self.epsilon,
            amplitudes: self
                .basis
                .states()
                .iter()
                .zip(self.amplitudes.iter())
                .filter(|(_, a)| **a != 0.0)
                .map(|(s, a)| ([s.0[0], s.0[1], s.0[2]], [*a, 0.0]))
                .collect(),
        }
    }
}

/// JSON form of a state: tuple → `[re, im]`.
#[derive(Clone, Debug, Serialize)]
pub struct StateRecord {
    pub atoms: usize,
    pub p: usize,
    pub epsilon: f64,
    pub amplitudes: Vec<([usize; 3], [f64; 2])>,
}

/// The closed-form `|sr>_p` for even `N`. The `k = 0` amplitude is real positive.
pub fn subradiant_state(atoms: usize, p: usize, epsilon: f64) -> Result<SubradiantState> {
    if atoms == 0 || atoms % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "closed form needs even N >= 2 (got {atoms}); use dark_space or subradiant_state_n3"
        )));
    }
    if p > atoms / 2 {
        return Err(Error::InvalidParameter(format!(
            "p = {p} exceeds N/2 = {}",
            atoms / 2
        )));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
    }
    if epsilon == 0.0 && p > 0 {
        return Err(Error::InvalidParameter(
            "epsilon = 0 with p >= 1: amplitudes diverge".into(),
        ));
    }
    let basis = Arc::new(FockBasis::atomic(atoms)?);
    let mut amplitudes = DVector::zeros(basis.dim());
    if p == 0 {
        amplitudes[basis.index_of(&Occupation::atomic(0, 0, atoms)).unwrap()] = 1.0;
    } else {
        let logs: Vec<(f64, f64)> = (0..=p).map(|k| beta_ln(atoms, p, epsilon, k)).collect();
        let top = logs.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
        let norm = logs
            .iter()
            .map(|l| (2.0 * (l.0 - top)).exp())
            .sum::<f64>()
            .sqrt();
        for (k, (ln, sign)) in logs.iter().enumerate() {
            let occ = Occupation::atomic(p - k, 2 * k, atoms - p - k);
            amplitudes[basis.index_of(&occ).unwrap()] = sign * (ln - top).exp() / norm;
        }
    }
    Ok(SubradiantState {
        atoms,
        p,
        epsilon,
        basis,
        amplitudes,
    })
}

/// The three-atom dark state `(|0,2,1> - 2 eps |1,0,2>) / sqrt(1 + 4 eps^2)`.
pub fn subradiant_state_n3(epsilon: f64) -> Result<SubradiantState> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be > 0 (got {epsilon})"
        )));
    }
    Ok(n3_state(epsilon))
}

fn n3_state(epsilon: f64) -> SubradiantState {
    let basis = Arc::new(FockBasis::atomic(3).expect("N = 3"));
    let norm = (1.0 + 4.0 * epsilon * epsilon).sqrt();
    let mut amplitudes = DVector::zeros(basis.dim());
    amplitudes[basis.index_of(&Occupation::atomic(0, 2, 1)).unwrap()] = 1.0 / norm;
    amplitudes[basis.index_of(&Occupation::atomic(1, 0, 2)).unwrap()] = -2.0 * epsilon / norm;
    SubradiantState {
        atoms: 3,
        p: 1,
        epsilon,
        basis,
        amplitudes,
    }
}

fn n2_state(epsilon: f64) -> SubradiantState {
    let basis = Arc::new(FockBasis::atomic(2).expect("N = 2"));
    let norm = (1.0 + 2.0 * epsilon * epsilon).sqrt();
    let mut amplitudes = DVector::zeros(basis.dim());
    amplitudes[basis.index_of(&Occupation::atomic(0, 2, 0)).unwrap()] = 1.0 / norm;
    amplitudes[basis.index_of(&Occupation::atomic(1, 0, 1)).unwrap()] =
        -std::f64::consts::SQRT_2 * epsilon / norm;
    SubradiantState {
        atoms: 2,
        p: 1,
        epsilon,
        basis,
        amplitudes,
    }
}

fn ground_state(atoms: usize, epsilon: f64) -> Result<SubradiantState> {
    let basis = Arc::new(FockBasis::atomic(atoms)?);
    let mut amplitudes = DVector::zeros(basis.dim());
    amplitudes[basis.index_of(&Occupation::atomic(0, 0, atoms)).unwrap()] = 1.0;
    Ok(SubradiantState {
        atoms,
        p: 0,
        epsilon,
        basis,
        amplitudes,
    })
}

/// The two states populated at stationarity for `N = 2, 3`: the ground
/// state `|0,0,N>` and `|sr>_1`, written with the `|0,2,.>` amplitude
/// positive. Valid down to `eps = 0` (continuous limit).
#[derive(Clone, Debug)]
pub struct DarkPair {
    pub ground: SubradiantState,
    pub excited: SubradiantState,
}

impl DarkPair {
    pub fn new(atoms: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
        }
        let excited = match atoms {
            2 => n2_state(epsilon),
            3 => n3_state(epsilon),
            n if n % 2 == 0 => subradiant_state(n, 1, epsilon)?,
            n => {
                return Err(Error::InvalidParameter(format!(
                    "no closed-form |sr>_1 for odd N = {n} > 3"
                )))
            }
        };
        Ok(DarkPair {
            ground: ground_state(atoms, epsilon)?,
            excited,
        })
    }

    /// `P_1 |sr>_1<sr| + (1 - P_1) |sr>_0<sr|` on the atomic basis.
    pub fn mixture(&self, p1: f64) -> Result<DensityMatrix> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::InvalidParameter(format!("P1 = {p1} outside [0, 1]")));
        }
        DensityMatrix::mixture(
            self.ground.basis.clone(),
            &[
                (1.0 - p1, &self.ground.vector()),
                (p1, &self.excited.vector()),
            ],
        )
    }
}

/// Orthonormal basis of the numerical kernel of `S⁻` on an atomic basis.
pub fn dark_space(basis: &FockBasis, epsilon: f64) -> Vec<CVector> {
    let s = lowering_operator(basis, epsilon);
    let svd = s.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, sv)| **sv < KERNEL_TOL)
        .map(|(i, _)| v_t.row(i).adjoint())
        .collect()
}

/// Stationary `P_1` of the effective superradiant equation for `N = 2`.
pub fn analytic_p1_n2(epsilon: f64) -> f64 {
    let a = 1.0 - epsilon * epsilon;
    2.0 * a * a / (9.0 * epsilon * epsilon + 2.0 * a * a)
}

/// Large-`N` relation between the subradiance index and `eps`, as a real number.
pub fn p_from_epsilon(atoms: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) || epsilon > EPSILON_MAX + DOMAIN_SLACK {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} outside [0, 1 + sqrt 2]"
        )));
    }
    let e2 = epsilon * epsilon;
    if epsilon <= 1.0 / 3f64.sqrt() {
        Ok(0.5 * atoms * (1.0 - 2.0 * e2) / (1.0 - e2))
    } else {
        let r = (1.0 - e2) / (1.0 + e2);
        Ok(atoms * r * r)
    }
}

/// The two roots `eps0 < eps1` of the upper branch sharing index `p`.
pub fn epsilon_pair(atoms: f64, p: f64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p <= atoms / 4.0 * (1.0 + DOMAIN_SLACK)) {
        return Err(Error::InvalidParameter(format!(
            "p = {p} outside the two-root range (0, N/4] for N = {atoms}"
        )));
    }
    let r = (p / atoms).sqrt().min(0.5);
    let e0 = ((1.0 - r) / (1.0 + r)).sqrt();
    let e1 = ((1.0 + r) / (1.0 - r)).sqrt();
    Ok((e0, e1))
}

/// Two orthonormal superpositions of the dark states sharing index `p`.
#[derive(Clone, Debug)]
pub struct QubitPair {
    pub atoms: usize,
    pub p: usize,
    pub eps0: f64,
    pub eps1: f64,
    pub alpha: f64,
    pub sr0: SubradiantState,
    pub sr1: SubradiantState,
    pub phi_plus: DVector<f64>,
    pub phi_minus: DVector<f64>,
}

pub const COINCIDENCE_TOL: f64 = 1e-12;

pub fn qubit_pair(atoms: usize, p: usize) -> Result<QubitPair> {
    let (eps0, eps1) = epsilon_pair(atoms as f64, p as f64)?;
    let sr0 = subradiant_state(atoms, p, eps0)?;
    let sr1 = subradiant_state(atoms, p, eps1)?;
    let alpha = sr0.overlap(&sr1);
    if alpha.abs() >= 1.0 - COINCIDENCE_TOL {
        return Err(Error::CoincidentStates { alpha });
    }
    let phi_plus = (&sr0.amplitudes + &sr1.amplitudes) / (2.0 * (1.0 + alpha)).sqrt();
    let phi_minus = (&sr0.amplitudes - &sr1.amplitudes) / (2.0 * (1.0 - alpha)).sqrt();
    Ok(QubitPair {
        atoms,
        p,
        eps0,
        eps1,
        alpha,
        sr0,
        sr1,
        phi_plus,
        phi_minus,
    })
}

/// Kinetic energy `<n_1 + 4 n_2>` in units of the recoil energy.
pub fn kinetic_energy(basis: &FockBasis, amplitudes: &DVector<f64>) -> f64 {
    basis
        .states()
        .iter()
        .zip(amplitudes.iter())
        .map(|(s, a)| a * a * (s.0[1] + 4 * s.0[2]) as f64)
        .sum()
}

/// `k̄` via the ratio of terminating hypergeometric series.
pub fn mean_k_hypergeometric(atoms: usize, p: usize, epsilon: f64) -> Result<f64> {
    if p == 0 {
        return Ok(0.0);
    }
    let z = epsilon.powi(-2);
    let n = atoms as u64;
    let q = p as u64;
    let prefactor =
        (ln_factorial(q) + ln_factorial(n - q - 1) - ln_factorial(n - q) - ln_factorial(q - 1))
            .exp()
            / (2.0 * epsilon * epsilon);
    let num = hyp2f1_terminating(p - 1, 1.5, 1.0 + p as f64 - atoms as f64, z)?;
    let den = hyp2f1_terminating(p, 0.5, p as f64 - atoms as f64, z)?;
    Ok(prefactor * num / den)
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingReport {
    #[serde(rename = "N")]
    pub atoms: usize,
    pub p: usize,
    pub eps0: f64,
    pub eps1: f64,
    pub alpha: f64,
    pub energy_plus: f64,
    pub energy_minus: f64,
    pub kbar0: f64,
    pub kbar1: f64,
    /// `|E+ - E-|` from expectation values.
    pub delta_direct: f64,
    /// The closed-form splitting expression evaluated with hypergeometric `k̄`.
    pub delta_printed: f64,
    pub discrepancy: f64,
}

/// Energy splitting of the qubit pair, computed directly and from the closed form.
pub fn delta_p(pair: &QubitPair) -> Result<SplittingReport> {
    let basis = &pair.sr0.basis;
    let energy_plus = kinetic_energy(basis, &pair.phi_plus);
    let energy_minus = kinetic_energy(basis, &pair.phi_minus);
    let delta_direct = (energy_plus - energy_minus).abs();

    let kbar0 = mean_k_hypergeometric(pair.atoms, pair.p, pair.eps0)?;
    let kbar1 = mean_k_hypergeometric(pair.atoms, pair.p, pair.eps1)?;
    let ksum = kbar0 + kbar1;
    let n = pair.atoms as f64;
    let p = pair.p as f64;
    let a = pair.alpha;
    let delta_printed = (4.0 * (2.0 * n - 2.0 * p - 2.0 * ksum) / (2.0 * (1.0 + a)).sqrt()
        - 2.0 * ksum / (2.0 * (1.0 - a)).sqrt())
    .abs();

    Ok(SplittingReport {
        atoms: pair.atoms,
        p: pair.p,
        eps0: pair.eps0,
        eps1: pair.eps1,
        alpha: a,
        energy_plus,
        energy_minus,
        kbar0,
        kbar1,
        delta_direct,
        delta_printed,
        discrepancy: delta_printed - delta_direct,
    })
}
