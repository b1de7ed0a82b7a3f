//! Cascade Hamiltonian, the cavity-damped master equation and its
//! bad-cavity reduction, and a fixed-step RK4 integrator for them.
//!
//! Units: `hbar = 1`, times in `1/g`, energies in `g`.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{BasisKind, DensityMatrix, FockBasis, Mode, Occupation};
use crate::linalg::{self, CMatrix, CVector, I, ZERO};
use crate::subradiance::{lowering_operator, DarkPair};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    pub g: f64,
    pub epsilon: f64,
    pub kappa: f64,
}

impl CascadeParams {
    pub fn new(g: f64, epsilon: f64, kappa: f64) -> Result<Self> {
        let p = CascadeParams { g, epsilon, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0) || !self.g.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "g = {} must be > 0",
                self.g
            )));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa = {} must be >= 0",
                self.kappa
            )));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} must be >= 0",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Effective superradiant rate `g^2 / kappa`.
    pub fn gamma(&self) -> Option<f64> {
        (self.kappa > 0.0).then(|| self.g * self.g / self.kappa)
    }

    /// `0.005 / max(g, kappa, g eps)`.
    pub fn default_dt(&self) -> f64 {
        0.005 / self.g.max(self.kappa).max(self.g * self.epsilon)
    }
}

/// `H = -i g [a S⁺ - a† S⁻]` with `S⁻ = c1† c0 + eps c2† c1`.
pub fn build_hamiltonian(basis: &FockBasis, params: &CascadeParams) -> Result<CMatrix> {
    params.validate()?;
    if !matches!(basis.kind(), BasisKind::Cascade { .. }) {
        return Err(Error::InvalidBasis(
            "the Hamiltonian needs a basis with a photon slot".into(),
        ));
    }
    let a = basis.annihilator(Mode::Photon);
    let s_minus = lowering_operator(basis, params.epsilon);
    let s_plus = s_minus.adjoint();
    let bracket = &a * &s_plus - a.adjoint() * &s_minus;
    Ok(bracket * Complex64::new(0.0, -params.g))
}

/// Triplet form of a dense operator, used on the hot path.
#[derive(Clone, Debug)]
struct Sparse {
    entries: Vec<(usize, usize, Complex64)>,
}

impl Sparse {
    fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)] != ZERO {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Sparse { entries }
    }

    /// `out = A x` for column-major `x` of size `d × d`.
    fn left_mul(&self, x: &[Complex64], out: &mut [Complex64], d: usize) {
        out.fill(ZERO);
        for &(r, k, a) in &self.entries {
            for j in 0..d {
                out[r + j * d] += a * x[k + j * d];
            }
        }
    }

    /// `out = x A`.
    fn right_mul(&self, x: &[Complex64], out: &mut [Complex64], d: usize) {
        out.fill(ZERO);
        for &(k, c, a) in &self.entries {
            let (src, dst) = (k * d, c * d);
            for i in 0..d {
                out[dst + i] += x[src + i] * a;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Jump {
    pub rate: f64,
    pub operator: CMatrix,
}

/// Generator `L(rho) = -i[H, rho] + Σ γ (J rho J† - {J†J, rho}/2)`.
///
/// Kept in operator form; [`Liouvillian::superoperator`] assembles the
/// column-stacked matrix on demand.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    basis: Arc<FockBasis>,
    hamiltonian: CMatrix,
    jumps: Vec<Jump>,
    h_eff: Sparse,
    h_eff_adj: Sparse,
    jump_ops: Vec<(f64, Sparse)>,
}

impl Liouvillian {
    pub fn new(basis: Arc<FockBasis>, hamiltonian: CMatrix, jumps: Vec<Jump>) -> Result<Self> {
        let d = basis.dim();
        if hamiltonian.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: hamiltonian.nrows(),
            });
        }
        let mut h_eff = hamiltonian.clone();
        for j in &jumps {
            if j.operator.nrows() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: j.operator.nrows(),
                });
            }
            h_eff -= (j.operator.adjoint() * &j.operator) * Complex64::new(0.0, 0.5 * j.rate);
        }
        let jump_ops = jumps
            .iter()
            .map(|j| (j.rate, Sparse::from_dense(&j.operator)))
            .collect();
        Ok(Liouvillian {
            h_eff_adj: Sparse::from_dense(&h_eff.adjoint()),
            h_eff: Sparse::from_dense(&h_eff),
            basis,
            hamiltonian,
            jumps,
            jump_ops,
        })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `L(x)` for an arbitrary (not necessarily Hermitian) matrix.
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        let mut scratch = Workspace::new(d);
        self.apply_general(x.as_slice(), out.as_mut_slice(), &mut scratch);
        out
    }

    fn apply_general(&self, x: &[Complex64], out: &mut [Complex64], w: &mut Workspace) {
        let d = self.dim();
        self.h_eff.left_mul(x, &mut w.a, d);
        self.h_eff_adj.right_mul(x, &mut w.b, d);
        for i in 0..d * d {
            out[i] = -I * w.a[i] + I * w.b[i];
        }
        for (rate, j) in &self.jump_ops {
            // J x J† = J (x J†) with x J† = (J x†)†.
            adjoint_into(x, &mut w.c, d);
            j.left_mul(&w.c, &mut w.a, d);
            adjoint_into(&w.a, &mut w.b, d);
            j.left_mul(&w.b, &mut w.a, d);
            for i in 0..d * d {
                out[i] += w.a[i] * *rate;
            }
        }
    }

    /// Bound on the spectral radius of the generator (row-sum norms).
    pub fn norm_bound(&self) -> f64 {
        let d = self.dim();
        let (mut rows, mut cols) = (vec![0.0; d], vec![0.0; d]);
        for &(r, c, v) in &self.h_eff.entries {
            rows[r] += v.norm();
            cols[c] += v.norm();
        }
        let h = rows.iter().chain(&cols).fold(0.0_f64, |m, v| m.max(*v));
        let mut bound = 2.0 * h;
        for (rate, j) in &self.jump_ops {
            let (mut rows, mut cols) = (vec![0.0; d], vec![0.0; d]);
            for &(r, c, v) in &j.entries {
                rows[r] += v.norm();
                cols[c] += v.norm();
            }
            let max = |x: &[f64]| x.iter().fold(0.0_f64, |m, v| m.max(*v));
            bound += rate * max(&rows) * max(&cols);
        }
        bound
    }

    /// Largest RK4 step that is comfortably inside the stability region.
    pub fn stable_dt(&self) -> f64 {
        2.0 / self.norm_bound().max(f64::MIN_POSITIVE)
    }

    /// Column-stacked superoperator matrix, `vec(L(rho)) = S vec(rho)`.
    pub fn superoperator(&self) -> CMatrix {
        let d = self.dim();
        let n = d * d;
        let mut s = CMatrix::zeros(n, n);
        let mut w = Workspace::new(d);
        let mut e = vec![ZERO; n];
        let mut col = vec![ZERO; n];
        for k in 0..n {
            e[k] = linalg::ONE;
            self.apply_general(&e, &mut col, &mut w);
            s.column_mut(k).copy_from_slice(&col);
            e[k] = ZERO;
        }
        s
    }

    /// Frobenius norm of `L(rho)`.
    pub fn residual(&self, rho: &CMatrix) -> f64 {
        self.apply(rho).norm()
    }

    /// Dimension of the stationary manifold (singular values of the
    /// superoperator below `tol`).
    pub fn null_space_dimension(&self, tol: f64) -> usize {
        let s = self.superoperator();
        s.singular_values().iter().filter(|v| **v < tol).count()
    }
}

fn adjoint_into(x: &[Complex64], out: &mut [Complex64], d: usize) {
    for c in 0..d {
        for r in 0..d {
            out[c + r * d] = x[r + c * d].conj();
        }
    }
}

struct Workspace {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        Workspace {
            a: vec![ZERO; d * d],
            b: vec![ZERO; d * d],
            c: vec![ZERO; d * d],
        }
    }
}

/// Full master equation: Hamiltonian part plus cavity damping `2 kappa L[a]`.
pub fn build_liouvillian(basis: Arc<FockBasis>, params: &CascadeParams) -> Result<Liouvillian> {
    let h = build_hamiltonian(&basis, params)?;
    let mut jumps = Vec::new();
    if params.kappa > 0.0 {
        jumps.push(Jump {
            rate: 2.0 * params.kappa,
            operator: basis.annihilator(Mode::Photon),
        });
    }
    Liouvillian::new(basis, h, jumps)
}

/// Bad-cavity equation on the atoms alone: `Γ L[S⁻]`, `Γ = g^2/kappa`.
pub fn build_effective_liouvillian(
    atomic: Arc<FockBasis>,
    params: &CascadeParams,
) -> Result<Liouvillian> {
    params.validate()?;
    let gamma = params
        .gamma()
        .ok_or_else(|| Error::InvalidParameter("kappa = 0: effective rate undefined".into()))?;
    if atomic.has_photons() {
        return Err(Error::InvalidBasis(
            "effective equation acts on the atomic basis".into(),
        ));
    }
    let s_minus = lowering_operator(&atomic, params.epsilon);
    let d = atomic.dim();
    Liouvillian::new(
        atomic,
        CMatrix::zeros(d, d),
        vec![Jump {
            rate: gamma,
            operator: s_minus,
        }],
    )
}

/// Populations and dark-state probabilities of one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Observables {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    pub nph: f64,
    pub p0: f64,
    pub p1: f64,
    pub purity: f64,
}

/// Measures `<N_i>`, `<N>`, `P_0`, `P_1` and the purity. `P_i` are the
/// populations of the dark states in the photon-traced atomic state.
#[derive(Clone, Debug)]
pub struct Observer {
    basis: Arc<FockBasis>,
    /// For each atomic tuple, the full-basis indices with photon number n.
    layers: Vec<Vec<usize>>,
    ground: Vec<Complex64>,
    excited: Vec<Complex64>,
}

impl Observer {
    pub fn new(basis: Arc<FockBasis>, pair: &DarkPair) -> Result<Self> {
        let atomic = &pair.ground.basis;
        if basis.atoms() != Some(pair.ground.atoms) {
            return Err(Error::InvalidBasis(
                "dark pair and basis differ in atom number".into(),
            ));
        }
        let n_max = basis.n_max();
        let layers = atomic
            .states()
            .iter()
            .map(|s| {
                (0..=n_max)
                    .filter_map(|n| basis.index_of(&s.with(Mode::Photon, n)))
                    .collect()
            })
            .collect();
        Ok(Observer {
            basis,
            layers,
            ground: pair.ground.vector().iter().copied().collect(),
            excited: pair.excited.vector().iter().copied().collect(),
        })
    }

    pub fn measure(&self, rho: &CMatrix) -> Observables {
        let mut occ = [0.0; 4];
        for (i, s) in self.basis.states().iter().enumerate() {
            let w = rho[(i, i)].re;
            for (k, o) in occ.iter_mut().enumerate() {
                *o += w * s.0[k] as f64;
            }
        }
        let population = |psi: &[Complex64]| {
            let mut acc = ZERO;
            let n_layers = self.layers.first().map_or(0, Vec::len);
            for layer in 0..n_layers {
                for (a, ia) in self.layers.iter().enumerate() {
                    if psi[a] == ZERO {
                        continue;
                    }
                    for (b, ib) in self.layers.iter().enumerate() {
                        if psi[b] == ZERO {
                            continue;
                        }
                        acc += psi[a].conj() * rho[(ia[layer], ib[layer])] * psi[b];
                    }
                }
            }
            acc.re
        };
        Observables {
            n0: occ[0],
            n1: occ[1],
            n2: occ[2],
            nph: occ[3],
            p0: population(&self.ground),
            p1: population(&self.excited),
            purity: linalg::trace_product(rho, rho).re,
        }
    }
}

/// One-shot measurement of a density matrix against the dark pair.
pub fn measure(rho: &DensityMatrix, pair: &DarkPair) -> Result<Observables> {
    Ok(Observer::new(rho.basis().clone(), pair)?.measure(rho.matrix()))
}

/// Trace drift beyond this aborts an integration.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Spacing of recorded samples; rounded to a whole number of steps.
    pub sample_interval: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub observables: Vec<Observables>,
    /// Smallest eigenvalue of the state at each sample.
    pub min_eigenvalues: Vec<f64>,
    pub final_state: DensityMatrix,
    pub max_trace_drift: f64,
}

impl Trajectory {
    /// CSV with header `t,N0,N1,N2,Nph,P0,P1,purity`, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,N0,N1,N2,Nph,P0,P1,purity\n");
        for (t, o) in self.times.iter().zip(&self.observables) {
            let row = [*t, o.n0, o.n1, o.n2, o.nph, o.p0, o.p1, o.purity];
            out.push_str(
                &row.iter()
                    .map(|v| fmt_sig(*v))
                    .collect::<Vec<_>>()
                    .join(","),
            );
            out.push('\n');
        }
        out
    }
}

/// Fixed 12-significant-digit scientific formatting used in all CSV output.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        // Avoid "-0" differences between runs.
        return format!("{:.11e}", 0.0);
    }
    format!("{v:.11e}")
}

type Columns = Vec<Vec<(usize, Complex64)>>;

/// The generator as a sparse matrix on the smallest set of matrix
/// positions that contains the support of the initial state and is closed
/// under `L`. For the cascade model this keeps only blocks of equal `Q`.
struct Restricted {
    d: usize,
    /// Column-major flat indices `r + c d` of the retained positions.
    positions: Vec<usize>,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl Restricted {
    fn new(l: &Liouvillian, rho0: &CMatrix) -> Self {
        let d = l.dim();
        let mut by_col: Columns = vec![Vec::new(); d];
        for &(r, c, v) in &l.h_eff.entries {
            by_col[c].push((r, v));
        }
        let jump_cols: Vec<(f64, Columns)> = l
            .jump_ops
            .iter()
            .map(|(rate, j)| {
                let mut cols = vec![Vec::new(); d];
                for &(r, c, v) in &j.entries {
                    cols[c].push((r, v));
                }
                (*rate, cols)
            })
            .collect();

        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut positions = Vec::new();
        let mut queue = VecDeque::new();
        let visit = |p: usize,
                     slot: &mut HashMap<usize, usize>,
                     positions: &mut Vec<usize>,
                     queue: &mut VecDeque<usize>| {
            slot.entry(p).or_insert_with(|| {
                positions.push(p);
                queue.push_back(p);
                positions.len() - 1
            });
        };
        for (p, v) in rho0.as_slice().iter().enumerate() {
            if *v != ZERO {
                visit(p, &mut slot, &mut positions, &mut queue);
            }
        }
        // Image of |i><j| under L, column by column.
        let mut triplets: Vec<(usize, usize, Complex64)> = Vec::new();
        let mut image: HashMap<usize, Complex64> = HashMap::new();
        while let Some(p) = queue.pop_front() {
            let (i, j) = (p % d, p / d);
            image.clear();
            for &(r, v) in &by_col[i] {
                *image.entry(r + j * d).or_insert(ZERO) += -I * v;
            }
            // (E H_eff†)_{i c} = conj(H_eff[c, j]).
            for &(c, v) in &by_col[j] {
                *image.entry(i + c * d).or_insert(ZERO) += I * v.conj();
            }
            for (rate, cols) in &jump_cols {
                for &(r, u) in &cols[i] {
                    for &(c, w) in &cols[j] {
                        *image.entry(r + c * d).or_insert(ZERO) += u * w.conj() * *rate;
                    }
                }
            }
            let col = slot[&p];
            let mut keys: Vec<usize> = image.keys().copied().collect();
            keys.sort_unstable();
            for q in keys {
                let v = image[&q];
                if v != ZERO {
                    visit(q, &mut slot, &mut positions, &mut queue);
                    triplets.push((slot[&q], col, v));
                }
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let n = positions.len();
        let mut row_start = vec![0; n + 1];
        for t in &triplets {
            row_start[t.0 + 1] += 1;
        }
        for r in 0..n {
            row_start[r + 1] += row_start[r];
        }
        Restricted {
            d,
            positions,
            row_start,
            cols: triplets.iter().map(|t| t.1).collect(),
            vals: triplets.iter().map(|t| t.2).collect(),
        }
    }

    fn len(&self) -> usize {
        self.positions.len()
    }

    fn compress(&self, m: &CMatrix) -> Vec<Complex64> {
        let s = m.as_slice();
        self.positions.iter().map(|&p| s[p]).collect()
    }

    fn expand(&self, x: &[Complex64]) -> CMatrix {
        let mut m = CMatrix::zeros(self.d, self.d);
        let s = m.as_mut_slice();
        for (&p, v) in self.positions.iter().zip(x) {
            s[p] = *v;
        }
        m
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_start[r]..self.row_start[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    fn dense(&self) -> CMatrix {
        let n = self.len();
        let mut m = CMatrix::zeros(n, n);
        for r in 0..n {
            for k in self.row_start[r]..self.row_start[r + 1] {
                m[(r, self.cols[k])] = self.vals[k];
            }
        }
        m
    }

    fn trace(&self, x: &[Complex64]) -> f64 {
        let d = self.d;
        self.positions
            .iter()
            .zip(x)
            .filter(|(p, _)| *p % d == *p / d)
            .map(|(_, v)| v.re)
            .sum()
    }
}

struct Rk4 {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

/// Entries this small cannot influence anything at double precision. Letting
/// decaying entries reach the subnormal range slows arithmetic by an order
/// of magnitude on common hardware.
const FLUSH_BELOW: f64 = 1e-200;

fn flush(z: Complex64) -> Complex64 {
    let f = |v: f64| if v.abs() < FLUSH_BELOW { 0.0 } else { v };
    Complex64::new(f(z.re), f(z.im))
}

impl Rk4 {
    fn new(n: usize) -> Self {
        let z = || vec![ZERO; n];
        Rk4 {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            tmp: z(),
        }
    }

    fn step(&mut self, s: &Restricted, x: &mut [Complex64], h: f64) {
        let n = x.len();
        s.apply(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + self.k1[i] * (0.5 * h);
        }
        s.apply(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + self.k2[i] * (0.5 * h);
        }
        s.apply(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + self.k3[i] * h;
        }
        s.apply(&self.tmp, &mut self.k4);
        let h6 = h / 6.0;
        for i in 0..n {
            x[i] += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * h6;
            x[i] = flush(x[i]);
        }
    }

    /// Frobenius norm of `L(x)`, reusing `k1`.
    fn residual(&mut self, s: &Restricted, x: &[Complex64]) -> f64 {
        s.apply(x, &mut self.k1);
        self.k1.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn health_check(s: &Restricted, x: &[Complex64], t: f64) -> Result<f64> {
    let tr = s.trace(x);
    let drift = (tr - 1.0).abs();
    if !drift.is_finite() || drift > TRACE_DRIFT_LIMIT {
        return Err(Error::Unstable {
            time: t,
            reason: format!("trace drift {drift:e}"),
        });
    }
    // Any density matrix has ‖rho‖_F <= 1; growth past that means the step is unstable.
    let frob = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !frob.is_finite() || frob > 1.0 + TRACE_DRIFT_LIMIT {
        return Err(Error::Unstable {
            time: t,
            reason: format!("Frobenius norm {frob:e} > 1"),
        });
    }
    Ok(drift)
}

fn check_input(l: &Liouvillian, rho0: &DensityMatrix, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    if **rho0.basis() != **l.basis() {
        return Err(Error::InvalidBasis(
            "initial state and generator use different bases".into(),
        ));
    }
    rho0.validate()
}

/// Integrates `d rho/dt = L(rho)` with fixed-step RK4, sampling the
/// observables every `sample_interval`. No trace renormalization is applied.
pub fn evolve(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    opts: &EvolveOptions,
    observer: &Observer,
) -> Result<Trajectory> {
    check_input(l, rho0, opts.dt)?;
    if !(opts.t_end > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "t_end = {} must be > 0",
            opts.t_end
        )));
    }
    let steps = (opts.t_end / opts.dt).round().max(1.0) as usize;
    let every = ((opts.sample_interval / opts.dt).round() as usize).clamp(1, steps);
    let gen = Restricted::new(l, rho0.matrix());
    let mut x = gen.compress(rho0.matrix());
    let mut rk = Rk4::new(gen.len());
    let m0 = rho0.matrix();
    let mut traj = Trajectory {
        times: vec![0.0],
        observables: vec![observer.measure(m0)],
        min_eigenvalues: vec![linalg::hermitian_eigenvalues(m0)[0]],
        final_state: rho0.clone(),
        max_trace_drift: 0.0,
    };
    for step in 1..=steps {
        rk.step(&gen, &mut x, opts.dt);
        let t = step as f64 * opts.dt;
        if step % every == 0 || step == steps {
            traj.max_trace_drift = traj.max_trace_drift.max(health_check(&gen, &x, t)?);
            let m = gen.expand(&x);
            traj.times.push(t);
            traj.observables.push(observer.measure(&m));
            traj.min_eigenvalues
                .push(linalg::hermitian_eigenvalues(&m)[0]);
        }
    }
    traj.final_state = DensityMatrix::from_matrix(l.basis().clone(), gen.expand(&x))?;
    Ok(traj)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SteadyOptions {
    pub dt: f64,
    /// Stop once `‖L(rho)‖_F` falls below this.
    pub tolerance: f64,
    /// Give up after this much simulated time.
    pub horizon: f64,
    /// Steps between residual evaluations.
    pub check_every: usize,
}

pub const STEADY_TOLERANCE: f64 = 1e-10;

impl SteadyOptions {
    pub fn new(dt: f64, horizon: f64) -> Self {
        SteadyOptions {
            dt,
            tolerance: STEADY_TOLERANCE,
            horizon,
            check_every: 200,
        }
    }

    /// Uses the largest stable step of `l`. The limit state does not depend
    /// on the step, so there is no reason to take small ones here.
    pub fn for_generator(l: &Liouvillian, horizon: f64) -> Self {
        Self::new(l.stable_dt(), horizon)
    }
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub state: DensityMatrix,
    /// Simulated time at which the residual first fell below tolerance.
    pub time: f64,
    pub residual: f64,
    pub trace_drift: f64,
}

/// Integrates from `rho0` until the state stops moving.
///
/// The stationary manifold is degenerate (every dark state is stationary), so
/// the result depends on `rho0`; RK4 preserves every conserved quantity of the
/// generator exactly, so the limit does not depend on `dt` as long as the
/// step is stable.
pub fn steady_state(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    opts: &SteadyOptions,
) -> Result<SteadyState> {
    check_input(l, rho0, opts.dt)?;
    if l.jumps().is_empty() {
        return Err(Error::InvalidParameter(
            "no dissipation: there is no attracting stationary state".into(),
        ));
    }
    let gen = Restricted::new(l, rho0.matrix());
    let mut x = gen.compress(rho0.matrix());
    let mut rk = Rk4::new(gen.len());
    let check_every = opts.check_every.max(1);
    let max_steps = (opts.horizon / opts.dt).ceil() as usize;
    let mut residual = rk.residual(&gen, &x);
    let mut step = 0usize;
    let mut drift = 0.0;
    while residual >= opts.tolerance {
        if step >= max_steps {
            return Err(Error::NotConverged {
                horizon: opts.horizon,
                residual,
            });
        }
        let n = check_every.min(max_steps - step);
        for _ in 0..n {
            rk.step(&gen, &mut x, opts.dt);
        }
        step += n;
        drift = health_check(&gen, &x, step as f64 * opts.dt)?;
        residual = rk.residual(&gen, &x);
    }
    Ok(SteadyState {
        state: DensityMatrix::from_matrix(l.basis().clone(), gen.expand(&x))?,
        time: step as f64 * opts.dt,
        residual,
        trace_drift: drift,
    })
}

/// Singular values of the restricted generator below this (relative to the
/// largest) count as zero modes.
pub const NULL_TOL: f64 = 1e-11;

/// Infinite-time limit computed from the zero-eigenvalue projector.
#[derive(Clone, Debug)]
pub struct StationaryLimit {
    pub state: DensityMatrix,
    pub residual: f64,
    /// Number of zero modes reachable from the initial state.
    pub null_dimension: usize,
    /// Smallest non-zero singular value of the restricted generator.
    pub gap: f64,
}

/// `lim_{t→∞} exp(L t) rho0` without integrating.
///
/// With `S = U Σ V†` the generator restricted to the support closure of
/// `rho0`, the zero modes give right null vectors `R` (columns of `V`) and
/// conserved quantities `C` (columns of `U`), and the limit is
/// `R (C† R)⁻¹ C† rho0`. This is exact when the relaxation rates are well
/// separated from zero, which is reported through `gap`.
pub fn stationary_limit(l: &Liouvillian, rho0: &DensityMatrix) -> Result<StationaryLimit> {
    check_input(l, rho0, 1.0)?;
    let gen = Restricted::new(l, rho0.matrix());
    let n = gen.len();
    let s = gen.dense();
    let svd = s.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let sigma_max = svd.singular_values.max();
    let tol = NULL_TOL * sigma_max.max(1.0);
    let zero: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] < tol).collect();
    let gap = (0..n)
        .map(|k| svd.singular_values[k])
        .filter(|&v| v >= tol)
        .fold(f64::INFINITY, f64::min);
    if gap < 1e2 * tol {
        return Err(Error::SmallGap { gap });
    }
    let m = zero.len();
    let r = CMatrix::from_fn(n, m, |i, k| v_t[(zero[k], i)].conj());
    let c = CMatrix::from_fn(n, m, |i, k| u[(i, zero[k])]);
    let x0 = CVector::from_vec(gen.compress(rho0.matrix()));
    let overlap = c.adjoint() * &r;
    let coeffs = overlap
        .lu()
        .solve(&(c.adjoint() * x0))
        .ok_or_else(|| Error::InvalidState("zero modes are not semisimple".into()))?;
    let x = r * coeffs;
    let mut out = vec![ZERO; n];
    gen.apply(x.as_slice(), &mut out);
    let residual = out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let state = gen.expand(x.as_slice());
    Ok(StationaryLimit {
        state: DensityMatrix::from_matrix(l.basis().clone(), linalg::hermitian_part(&state))?,
        residual,
        null_dimension: m,
        gap,
    })
}

/// `|N,0,0,0><N,0,0,0|` on a cascade basis.
pub fn initial_state(basis: Arc<FockBasis>) -> Result<DensityMatrix> {
    let atoms = basis
        .atoms()
        .ok_or_else(|| Error::InvalidBasis("initial state needs a fixed atom number".into()))?;
    DensityMatrix::fock(basis, Occupation::new(atoms, 0, 0, 0))
}

/// Population of the `n = n_max` photon layer; the truncation is adequate
/// when this stays below [`TRUNCATION_LIMIT`].
pub fn top_layer_population(rho: &DensityMatrix) -> f64 {
    let n_max = rho.basis().n_max();
    rho.basis()
        .states()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.photons() == n_max && n_max > 0)
        .map(|(i, _)| rho.matrix()[(i, i)].re)
        .sum()
}

pub const TRUNCATION_LIMIT: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::partial_trace;
    use crate::subradiance::{subradiant_state, subradiant_state_n3};

    fn cascade(atoms: usize, n_max: usize) -> Arc<FockBasis> {
        Arc::new(FockBasis::cascade(atoms, n_max).unwrap())
    }

    #[test]
    fn params_validation() {
        assert!(CascadeParams::new(1.0, 0.3, 0.2).is_ok());
        assert!(CascadeParams::new(0.0, 0.3, 0.2).is_err());
        assert!(CascadeParams::new(1.0, -0.1, 0.2).is_err());
        assert!(CascadeParams::new(1.0, 0.3, -1.0).is_err());
        assert_eq!(
            CascadeParams::new(2.0, 0.3, 0.5).unwrap().gamma(),
            Some(8.0)
        );
        assert_eq!(CascadeParams::new(2.0, 0.3, 0.0).unwrap().gamma(), None);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_conserves_q() {
        let b = cascade(3, 6);
        let h = build_hamiltonian(&b, &CascadeParams::new(1.0, 0.7, 0.3).unwrap()).unwrap();
        assert!(linalg::hermiticity_defect(&h) < 1e-15);
        let q = b.diagonal(|s| s.excitation() as f64);
        assert!((&h * &q - &q * &h).norm() < 1e-13);
        let total = b.diagonal(|s| s.atoms() as f64);
        assert!((&h * &total - &total * &h).norm() < 1e-13);
    }

    #[test]
    fn hamiltonian_annihilates_dark_states() {
        let b = cascade(2, 4);
        let params = CascadeParams::new(1.0, 0.3, 0.2).unwrap();
        let h = build_hamiltonian(&b, &params).unwrap();
        let sr = subradiant_state(2, 1, 0.3).unwrap();
        let v = b.embed(&sr.basis, &sr.vector(), 0).unwrap();
        assert!((&h * v).norm() < 1e-14);
        let ground = b.ket(Occupation::new(0, 0, 2, 0)).unwrap();
        assert!((&h * ground).norm() < 1e-15);
    }

    #[test]
    fn hamiltonian_matrix_element() {
        // a S⁺ takes |1,1,0,1> to sqrt(2) |2,0,0,0>, so the element is -i g sqrt 2.
        let b = cascade(2, 4);
        let h = build_hamiltonian(&b, &CascadeParams::new(1.0, 0.3, 0.2).unwrap()).unwrap();
        let r = b.index_of(&Occupation::new(2, 0, 0, 0)).unwrap();
        let c = b.index_of(&Occupation::new(1, 1, 0, 1)).unwrap();
        assert!((h[(r, c)] - Complex64::new(0.0, -2f64.sqrt())).norm() < 1e-15);
        assert!((h[(c, r)] - Complex64::new(0.0, 2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn hamiltonian_needs_photon_slot() {
        let b = FockBasis::atomic(2).unwrap();
        assert!(build_hamiltonian(&b, &CascadeParams::new(1.0, 0.3, 0.2).unwrap()).is_err());
    }

    #[test]
    fn superoperator_matches_operator_form() {
        let b = cascade(1, 2);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.6, 0.4).unwrap()).unwrap();
        let s = l.superoperator();
        let d = b.dim();
        let x = CMatrix::from_fn(d, d, |i, j| {
            Complex64::new((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.2)
        });
        let vec_x = nalgebra::DVector::from_column_slice(x.as_slice());
        let lhs = &s * vec_x;
        let rhs = l.apply(&x);
        assert!((lhs - nalgebra::DVector::from_column_slice(rhs.as_slice())).norm() < 1e-12);

        // Direct textbook form.
        let h = l.hamiltonian();
        let a = b.annihilator(Mode::Photon);
        let ad = a.adjoint();
        let n = &ad * &a;
        let direct = (h * &x - &x * h) * Complex64::new(0.0, -1.0)
            + (&a * &x * &ad - (&n * &x).scale(0.5) - (&x * &n).scale(0.5)).scale(0.8);
        assert!((rhs - direct).norm() < 1e-12);
    }

    #[test]
    fn liouvillian_preserves_trace() {
        let b = cascade(2, 4);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.3, 0.2).unwrap()).unwrap();
        let d = b.dim();
        let x = CMatrix::from_fn(d, d, |i, j| {
            Complex64::new(((i * 5 + j * 11) % 7) as f64, ((i + j) % 3) as f64)
        });
        let x = linalg::hermitian_part(&x);
        assert!(linalg::trace(&l.apply(&x)).norm() < 1e-12);
    }

    #[test]
    fn zero_kappa_is_pure_commutator() {
        let b = cascade(2, 2);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.5, 0.0).unwrap()).unwrap();
        assert!(l.jumps().is_empty());
        let s = l.superoperator();
        // -i (I⊗H - H^T⊗I) is anti-Hermitian.
        assert!((&s + s.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn dark_states_are_stationary() {
        for (atoms, eps) in [(2usize, 0.3), (3, 0.5)] {
            let b = cascade(atoms, 2 * atoms);
            let l =
                build_liouvillian(b.clone(), &CascadeParams::new(1.0, eps, 0.4).unwrap()).unwrap();
            let sr = if atoms == 2 {
                subradiant_state(2, 1, eps).unwrap()
            } else {
                subradiant_state_n3(eps).unwrap()
            };
            let v = b.embed(&sr.basis, &sr.vector(), 0).unwrap();
            let rho = DensityMatrix::pure(b.clone(), &v).unwrap();
            assert!(l.residual(rho.matrix()) < 1e-12);
        }
    }

    #[test]
    fn generator_conserves_atoms_and_loses_q() {
        // Adjoint action on observables: Tr[O L(rho)] for random states.
        let b = cascade(2, 4);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.4, 0.3).unwrap()).unwrap();
        let total = b.diagonal(|s| s.atoms() as f64);
        let q = b.diagonal(|s| s.excitation() as f64);
        for seed in 0..5u64 {
            let d = b.dim();
            let psi = nalgebra::DVector::from_fn(d, |i, _| {
                let x = ((i as u64 + 1) * (seed + 3) * 2654435761 % 1000) as f64 / 1000.0;
                Complex64::new(x - 0.5, (x * 7.0).sin())
            });
            let psi = &psi / Complex64::new(psi.norm(), 0.0);
            let rho = DensityMatrix::pure(b.clone(), &psi).unwrap();
            let drho = l.apply(rho.matrix());
            assert!(linalg::trace_product(&total, &drho).norm() < 1e-12);
            assert!(linalg::trace_product(&q, &drho).re <= 1e-12);
        }
    }

    #[test]
    fn effective_equation() {
        let atomic = Arc::new(FockBasis::atomic(2).unwrap());
        let params = CascadeParams::new(1.0, 0.3, 10.0).unwrap();
        let l = build_effective_liouvillian(atomic.clone(), &params).unwrap();
        let ground = DensityMatrix::fock(atomic.clone(), Occupation::atomic(0, 0, 2)).unwrap();
        assert!(l.residual(ground.matrix()) < 1e-15);
        let sr = DensityMatrix::pure(
            atomic.clone(),
            &subradiant_state(2, 1, 0.3).unwrap().vector(),
        )
        .unwrap();
        assert!(l.residual(sr.matrix()) < 1e-14);
        assert!(
            build_effective_liouvillian(atomic, &CascadeParams::new(1.0, 0.3, 0.0).unwrap())
                .is_err()
        );
    }

    #[test]
    fn unitary_evolution_keeps_purity() {
        let b = cascade(2, 4);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.3, 0.0).unwrap()).unwrap();
        let obs = Observer::new(b.clone(), &DarkPair::new(2, 0.3).unwrap()).unwrap();
        let rho0 = initial_state(b).unwrap();
        let opts = EvolveOptions {
            t_end: 10.0,
            dt: 0.005,
            sample_interval: 1.0,
        };
        let traj = evolve(&l, &rho0, &opts, &obs).unwrap();
        for o in &traj.observables {
            assert!((o.purity - 1.0).abs() < 1e-8);
            assert!((o.n0 + o.n1 + o.n2 - 2.0).abs() < 1e-8);
        }
        assert_eq!(traj.times.len(), 11);
    }

    #[test]
    fn unstable_step_is_detected() {
        let b = cascade(2, 4);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.3, 10.0).unwrap()).unwrap();
        let obs = Observer::new(b.clone(), &DarkPair::new(2, 0.3).unwrap()).unwrap();
        let rho0 = initial_state(b).unwrap();
        let opts = EvolveOptions {
            t_end: 50.0,
            dt: 0.5,
            sample_interval: 0.5,
        };
        assert!(matches!(
            evolve(&l, &rho0, &opts, &obs),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn measure_examples() {
        let b = Arc::new(FockBasis::atomic(2).unwrap());
        let pair = DarkPair::new(2, 0.4).unwrap();
        let rho = DensityMatrix::fock(b.clone(), Occupation::atomic(2, 0, 0)).unwrap();
        let o = measure(&rho, &pair).unwrap();
        assert_eq!(
            (o.n0, o.n1, o.n2, o.nph, o.p0, o.p1),
            (2.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        );
        let rho = DensityMatrix::pure(b, &pair.excited.vector()).unwrap();
        assert!((measure(&rho, &pair).unwrap().p1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn steady_state_short_case() {
        // N = 2, eps = 0.5, kappa = g: fast enough for a unit test.
        let b = cascade(2, 4);
        let params = CascadeParams::new(1.0, 0.5, 1.0).unwrap();
        let l = build_liouvillian(b.clone(), &params).unwrap();
        let rho0 = initial_state(b.clone()).unwrap();
        let ss = steady_state(&l, &rho0, &SteadyOptions::new(0.02, 5000.0)).unwrap();
        ss.state.validate().unwrap();
        let pair = DarkPair::new(2, 0.5).unwrap();
        let o = measure(&ss.state, &pair).unwrap();
        assert!(o.nph < 1e-6);
        assert!((o.p0 + o.p1 - 1.0).abs() < 1e-8);
        let red = partial_trace(&ss.state, &Mode::ATOMIC).unwrap();
        red.validate_with(1e-12, 1e-10, 1e-10).unwrap();
        assert!(top_layer_population(&ss.state) < TRUNCATION_LIMIT);
    }

    #[test]
    fn steady_state_does_not_depend_on_step() {
        let b = cascade(2, 4);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.3, 2.0).unwrap()).unwrap();
        let rho0 = initial_state(b).unwrap();
        let pair = DarkPair::new(2, 0.3).unwrap();
        let coarse = steady_state(&l, &rho0, &SteadyOptions::for_generator(&l, 1e4)).unwrap();
        let fine = steady_state(&l, &rho0, &SteadyOptions::new(l.stable_dt() / 4.0, 1e4)).unwrap();
        let p1 = |s: &SteadyState| measure(&s.state, &pair).unwrap().p1;
        assert!((p1(&coarse) - p1(&fine)).abs() < 1e-9);
    }

    #[test]
    fn stationary_limit_matches_integration() {
        let b = cascade(3, 6);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.5, 0.8).unwrap()).unwrap();
        let rho0 = initial_state(b).unwrap();
        let ss = steady_state(&l, &rho0, &SteadyOptions::for_generator(&l, 1e4)).unwrap();
        let lim = stationary_limit(&l, &rho0).unwrap();
        assert!(lim.residual < 1e-12);
        // Only the two dark-state populations are reachable from |3,0,0,0>.
        assert_eq!(lim.null_dimension, 2);
        let diff = (ss.state.matrix() - lim.state.matrix()).norm();
        assert!(diff < 1e-8, "{diff:e}");
    }

    #[test]
    fn restricted_evolution_matches_full_generator() {
        // One explicit Euler step through the public operator form against
        // a tiny RK4 step of the restricted form.
        let b = cascade(2, 4);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.7, 0.4).unwrap()).unwrap();
        let rho0 = initial_state(b.clone()).unwrap();
        let pair = DarkPair::new(2, 0.7).unwrap();
        let obs = Observer::new(b, &pair).unwrap();
        let h = 1e-6;
        let tr = evolve(
            &l,
            &rho0,
            &EvolveOptions {
                t_end: h,
                dt: h,
                sample_interval: h,
            },
            &obs,
        )
        .unwrap();
        let euler = rho0.matrix() + l.apply(rho0.matrix()) * Complex64::new(h, 0.0);
        assert!((tr.final_state.matrix() - euler).norm() < 1e-10);
    }

    #[test]
    fn steady_state_needs_dissipation() {
        let b = cascade(2, 2);
        let l = build_liouvillian(b.clone(), &CascadeParams::new(1.0, 0.5, 0.0).unwrap()).unwrap();
        let rho0 = initial_state(b).unwrap();
        assert!(steady_state(&l, &rho0, &SteadyOptions::new(0.01, 10.0)).is_err());
    }

    #[test]
    fn csv_format() {
        assert_eq!(fmt_sig(0.5), "5.00000000000e-1");
        assert_eq!(fmt_sig(-0.0), "0.00000000000e0");
    }
}
