//! Per-frequency component error budgets.
//!
//! An assembly requirement `‖V_c E_c W_c‖ < 1` is split into component sets
//! `‖W_j⁻¹ E_j V_j⁻¹‖ ≤ 1` by maximizing the weights subject to a scaled
//! small-gain LMI on the interconnection transfer `N`. With
//! `X_j = W_j⁻²/d_j` and `Y_j = V_j⁻² d_j` (and `d_c = 1`) the constraint
//!
//! ```text
//!     [ diag(X, W_c⁻²)   Nᴴ            ]
//!     [ N                diag(Y, V_c⁻²) ]  ≻ 0
//! ```
//!
//! is linear; the objective `Σ_j d_j tr X_j + tr Y_j / d_j` is minimized for
//! fixed `d`, then `d_j = √(tr Y_j / tr X_j)`, and the two steps alternate.
//! Scaling every `d` (including `d_c`) by the same factor is a congruence of
//! the LMI, so fixing `d_c = 1` loses nothing.

use nalgebra::{ComplexField, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::assembly::{coupled_at, Interconnection};
use crate::error::{Error, Result};
use crate::linalg::{self, spectral_norm};
use crate::model::FrfSamples;
use crate::scalar::{cx, Cx, Real};
use crate::sdp::{self, DiagonalLmiProblem, Placement, SdpOptions, SdpStatus};

/// Slack used when comparing weighted norms against 1.
pub const COMPARE_MARGIN: f64 = 1e-12;

/// A weight within this relative distance of the cap counts as capped.
pub const CAP_ACTIVE_TOL: f64 = 1e-6;

/// Diagonal assembly weights per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyRequirement<T: Real> {
    pub omegas: Vec<T>,
    /// Diagonal of `V_c` (`p_c`).
    pub v_c: Vec<DVector<T>>,
    /// Diagonal of `W_c` (`m_c`).
    pub w_c: Vec<DVector<T>>,
}

impl<T: Real> AssemblyRequirement<T> {
    pub fn new(omegas: Vec<T>, v_c: Vec<DVector<T>>, w_c: Vec<DVector<T>>) -> Result<Self> {
        if v_c.len() != omegas.len() || w_c.len() != omegas.len() {
            return Err(Error::GridMismatch("requirement weights do not match the grid".into()));
        }
        let positive = v_c.iter().chain(&w_c).all(|d| d.iter().all(|v| *v > T::zero() && v.is_finite()));
        let fixed = v_c.windows(2).all(|w| w[0].len() == w[1].len()) && w_c.windows(2).all(|w| w[0].len() == w[1].len());
        if !positive || !fixed {
            return Err(Error::InvalidModel("requirement weights must be positive with fixed sizes".into()));
        }
        Ok(Self { omegas, v_c, w_c })
    }

    /// Stricter requirement: both weights multiplied by `alpha`.
    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            omegas: self.omegas.clone(),
            v_c: self.v_c.iter().map(|v| v * alpha).collect(),
            w_c: self.w_c.iter().map(|v| v * alpha).collect(),
        }
    }

    /// `‖V_c E_c W_c‖` per grid point.
    pub fn weighted_norms(&self, e_c: &FrfSamples<T>) -> Result<Vec<T>> {
        self.check_grid(&e_c.omegas)?;
        Ok(e_c
            .values
            .iter()
            .enumerate()
            .map(|(k, e)| spectral_norm(&scale_rows_cols(e, &self.v_c[k], &self.w_c[k])))
            .collect())
    }

    fn check_grid(&self, omegas: &[T]) -> Result<()> {
        if omegas.len() != self.omegas.len()
            || omegas
                .iter()
                .zip(&self.omegas)
                .any(|(a, b)| (*a - *b).abs() > T::eps() * T::lit(64.0) * a.abs())
        {
            return Err(Error::GridMismatch("error samples and requirement use different grids".into()));
        }
        Ok(())
    }
}

/// `diag(l) A diag(r)`.
fn scale_rows_cols<T: Real>(a: &DMatrix<Cx<T>>, l: &DVector<T>, r: &DVector<T>) -> DMatrix<Cx<T>> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * cx(l[i] * r[j], T::zero()))
}

/// `V_c = W_c = I (γ‖H_c‖)^(−1/2)`: with these weights the requirement reads
/// `‖E_c‖ < γ‖H_c‖`.
pub fn relative_error_requirement<T: Real>(h_c: &FrfSamples<T>, gamma: T) -> Result<AssemblyRequirement<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::InvalidModel(format!("gamma must be positive, got {}", gamma.as_f64())));
    }
    let (p, m) = h_c.shape();
    let mut v_c = Vec::with_capacity(h_c.len());
    let mut w_c = Vec::with_capacity(h_c.len());
    for (w, h) in h_c.omegas.iter().zip(&h_c.values) {
        let nrm = spectral_norm(h);
        if !(nrm > T::zero()) {
            return Err(Error::ZeroResponse { omega: w.as_f64() });
        }
        let s = T::one() / (gamma * nrm).sqrt();
        v_c.push(DVector::from_element(p, s));
        w_c.push(DVector::from_element(m, s));
    }
    AssemblyRequirement::new(h_c.omegas.clone(), v_c, w_c)
}

/// Budget of every component at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBudget<T: Real> {
    pub omega: T,
    /// Diagonal of `W_j` (`p_j`) per component.
    pub w: Vec<DVector<T>>,
    /// Diagonal of `V_j` (`m_j`) per component.
    pub v: Vec<DVector<T>>,
    pub d: Vec<T>,
    pub d_c: T,
    /// Smallest eigenvalue of the diagonally normalized LMI at `(W, V, d)`.
    pub lmi_min_eig: T,
    /// Components with at least one weight at the cap.
    pub capped: Vec<bool>,
    /// `Σ tr W⁻² + tr V⁻²` after each alternation round.
    pub history: Vec<T>,
}

impl<T: Real> FrequencyBudget<T> {
    pub fn objective(&self) -> T {
        self.w
            .iter()
            .chain(&self.v)
            .flat_map(|d| d.iter())
            .fold(T::zero(), |a, x| a + T::one() / (*x * *x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentBudget<T: Real> {
    /// `(m_j, p_j)` per component.
    pub signature: Vec<(usize, usize)>,
    pub frequencies: Vec<FrequencyBudget<T>>,
}

impl<T: Real> ComponentBudget<T> {
    pub fn omegas(&self) -> Vec<T> {
        self.frequencies.iter().map(|f| f.omega).collect()
    }

    /// Every output weight multiplied by `factor`: admits `factor`-times larger errors.
    pub fn inflated(&self, factor: T) -> Self {
        let mut out = self.clone();
        for f in &mut out.frequencies {
            for w in &mut f.w {
                *w *= factor;
            }
        }
        out
    }

    fn check_component(&self, j: usize) -> Result<()> {
        if j >= self.signature.len() {
            return Err(Error::DimensionMismatch(format!(
                "component {j} out of range 0..{}",
                self.signature.len()
            )));
        }
        Ok(())
    }

    /// `‖W_j⁻¹ E V_j⁻¹‖` per grid point.
    pub fn weighted_norms(&self, e: &FrfSamples<T>, j: usize) -> Result<Vec<T>> {
        self.check_component(j)?;
        if e.omegas.len() != self.frequencies.len()
            || e.omegas
                .iter()
                .zip(&self.frequencies)
                .any(|(a, f)| (*a - f.omega).abs() > T::eps() * T::lit(64.0) * a.abs())
        {
            return Err(Error::GridMismatch("error samples and budget use different grids".into()));
        }
        let (m, p) = self.signature[j];
        if e.shape() != (p, m) {
            return Err(Error::DimensionMismatch(format!(
                "component {j} error is {:?}, budget expects ({p}, {m})",
                e.shape()
            )));
        }
        Ok(e
            .values
            .iter()
            .zip(&self.frequencies)
            .map(|(x, f)| {
                let wi = f.w[j].map(|v| T::one() / v);
                let vi = f.v[j].map(|v| T::one() / v);
                spectral_norm(&scale_rows_cols(x, &wi, &vi))
            })
            .collect())
    }
}

/// `‖W_j⁻¹ E_j V_j⁻¹‖ ≤ 1` per grid point.
pub fn check_component_requirement<T: Real>(e: &FrfSamples<T>, budget: &ComponentBudget<T>, j: usize) -> Result<Vec<bool>> {
    Ok(budget
        .weighted_norms(e, j)?
        .into_iter()
        .map(|v| v <= T::one() + T::lit(COMPARE_MARGIN))
        .collect())
}

/// `‖V_c E_c W_c‖ < 1` per grid point (strict).
pub fn check_assembly_requirement<T: Real>(e_c: &FrfSamples<T>, req: &AssemblyRequirement<T>) -> Result<Vec<bool>> {
    Ok(req
        .weighted_norms(e_c)?
        .into_iter()
        .map(|v| v < T::one() - T::lit(COMPARE_MARGIN))
        .collect())
}

/// `S_j = ‖W_j⁻¹ J V_j⁻¹‖`, `J` all ones; rows are grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCurve<T: Real> {
    pub omegas: Vec<T>,
    pub values: Vec<Vec<T>>,
}

pub fn sensitivity<T: Real>(budget: &ComponentBudget<T>) -> SensitivityCurve<T> {
    let values = budget
        .frequencies
        .iter()
        .map(|f| {
            f.w.iter()
                .zip(&f.v)
                .map(|(w, v)| {
                    let j = DMatrix::from_fn(w.len(), v.len(), |r, c| cx(T::one() / (w[r] * v[c]), T::zero()));
                    spectral_norm(&j)
                })
                .collect()
        })
        .collect();
    SensitivityCurve {
        omegas: budget.omegas(),
        values,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SynthesisOptions {
    /// Upper limit on any weight entry.
    pub cap: f64,
    /// Relative duality gap of each inner SDP.
    pub sdp_tol: f64,
    pub max_rounds: usize,
    /// Relative objective change that ends the alternation.
    pub round_tol: f64,
    /// Strictness margin relative to `‖N‖` after normalization.
    pub margin: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            cap: 1e6,
            sdp_tol: 1e-8,
            max_rounds: 50,
            round_tol: 1e-6,
            margin: 1e-9,
        }
    }
}

/// Row and column offsets of each component within `N`.
fn offsets(signature: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut om = vec![0];
    let mut op = vec![0];
    for &(m, p) in signature {
        om.push(om.last().unwrap() + m);
        op.push(op.last().unwrap() + p);
    }
    (om, op)
}

/// Symmetric Ruiz equilibration of the component rows and columns of `a`
/// (the first `rows` rows and `cols` columns); the remaining ones keep unit
/// scale. Returns `(row_scale, col_scale)`.
fn ruiz<T: Real>(a: &DMatrix<Cx<T>>, rows: usize, cols: usize) -> (Vec<T>, Vec<T>) {
    let mut r = vec![T::one(); rows];
    let mut c = vec![T::one(); cols];
    let val = |i: usize, j: usize, r: &[T], c: &[T]| {
        let ri = if i < rows { r[i] } else { T::one() };
        let cj = if j < cols { c[j] } else { T::one() };
        a[(i, j)].modulus() * ri * cj
    };
    for _ in 0..30 {
        let mut changed = false;
        for i in 0..rows {
            let mx = (0..a.ncols()).fold(T::zero(), |m, j| m.max(val(i, j, &r, &c)));
            if mx > T::zero() {
                let f = T::one() / mx.sqrt();
                if (f - T::one()).abs() > T::lit(1e-3) {
                    changed = true;
                }
                r[i] *= f;
            }
        }
        for j in 0..cols {
            let mx = (0..a.nrows()).fold(T::zero(), |m, i| m.max(val(i, j, &r, &c)));
            if mx > T::zero() {
                let f = T::one() / mx.sqrt();
                if (f - T::one()).abs() > T::lit(1e-3) {
                    changed = true;
                }
                c[j] *= f;
            }
        }
        if !changed {
            break;
        }
    }
    (r, c)
}

/// Normalized LMI data at one frequency; owns everything the inner SDP needs.
struct ScaledLmi<T: Real> {
    /// Hermitian constant (component diagonals zero, `c` diagonals one).
    g0: DMatrix<Cx<T>>,
    /// Row scale of the `V`-side component channels (`m_b`).
    a: Vec<T>,
    /// Column scale of the `W`-side component channels (`p_b`).
    b: Vec<T>,
    p_b: usize,
    m_b: usize,
    m_c: usize,
    margin: T,
}

impl<T: Real> ScaledLmi<T> {
    fn new(n: &DMatrix<Cx<T>>, v_c: &DVector<T>, w_c: &DVector<T>, m_b: usize, p_b: usize, rel_margin: T) -> Self {
        let (pc, mc) = (v_c.len(), w_c.len());
        // diag(I, V_c) N diag(I, W_c) turns the fixed blocks into identities
        let left = DVector::from_iterator(m_b + pc, std::iter::repeat_n(T::one(), m_b).chain(v_c.iter().copied()));
        let right = DVector::from_iterator(p_b + mc, std::iter::repeat_n(T::one(), p_b).chain(w_c.iter().copied()));
        let nt = scale_rows_cols(n, &left, &right);
        let (a, b) = ruiz(&nt, m_b, p_b);
        let a_full = DVector::from_iterator(m_b + pc, a.iter().copied().chain(std::iter::repeat_n(T::one(), pc)));
        let b_full = DVector::from_iterator(p_b + mc, b.iter().copied().chain(std::iter::repeat_n(T::one(), mc)));
        let ns = scale_rows_cols(&nt, &a_full, &b_full);
        let top = p_b + mc;
        let dim = top + m_b + pc;
        let mut g0 = DMatrix::from_element(dim, dim, cx(T::zero(), T::zero()));
        for i in 0..mc {
            g0[(p_b + i, p_b + i)] = cx(T::one(), T::zero());
        }
        for i in 0..pc {
            g0[(top + m_b + i, top + m_b + i)] = cx(T::one(), T::zero());
        }
        for i in 0..ns.nrows() {
            for j in 0..ns.ncols() {
                g0[(top + i, j)] = ns[(i, j)];
                g0[(j, top + i)] = ns[(i, j)].conj();
            }
        }
        let margin = rel_margin * spectral_norm(&ns);
        Self {
            g0,
            a,
            b,
            p_b,
            m_b,
            m_c: mc,
            margin,
        }
    }

    /// Variables: `x'` for each `W`-side channel, then `y'` for each `V`-side one.
    fn placements(&self) -> Vec<Placement<T>> {
        let top = self.p_b + self.m_c;
        (0..self.p_b)
            .map(|i| vec![(i, T::one())])
            .chain((0..self.m_b).map(|k| vec![(top + k, T::one())]))
            .collect()
    }
}

/// Component index of each `W`-side and `V`-side channel.
fn owners(signature: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut wp = Vec::new();
    let mut vm = Vec::new();
    for (j, &(m, p)) in signature.iter().enumerate() {
        wp.extend(std::iter::repeat_n(j, p));
        vm.extend(std::iter::repeat_n(j, m));
    }
    (wp, vm)
}

/// Solves the budget problem at one frequency.
pub fn synthesize_at<T: Real>(
    n: &DMatrix<Cx<T>>,
    v_c: &DVector<T>,
    w_c: &DVector<T>,
    signature: &[(usize, usize)],
    omega: T,
    opts: &SynthesisOptions,
) -> Result<FrequencyBudget<T>> {
    let (om, op) = offsets(signature);
    let (m_b, p_b) = (*om.last().unwrap(), *op.last().unwrap());
    let (pc, mc) = (v_c.len(), w_c.len());
    if n.shape() != (m_b + pc, p_b + mc) {
        return Err(Error::DimensionMismatch(format!(
            "N is {:?}, expected ({}, {})",
            n.shape(),
            m_b + pc,
            p_b + mc
        )));
    }
    if n.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::InvalidModel(format!("N is not finite at omega = {}", omega.as_f64())));
    }
    let k = signature.len();
    let (w_owner, v_owner) = owners(signature);
    let lmi = ScaledLmi::new(n, v_c, w_c, m_b, p_b, T::lit(opts.margin));
    let placements = lmi.placements();
    let cap2 = T::one() / (T::lit(opts.cap) * T::lit(opts.cap));
    let sdp_opts = SdpOptions {
        tol: opts.sdp_tol,
        ..SdpOptions::default()
    };

    let mut d = vec![T::one(); k];
    let mut history: Vec<T> = Vec::new();
    let mut x = vec![T::zero(); p_b];
    let mut y = vec![T::zero(); m_b];
    for _round in 0..opts.max_rounds.max(1) {
        let mut cost: Vec<T> = (0..p_b)
            .map(|i| d[w_owner[i]] / (lmi.b[i] * lmi.b[i]))
            .chain((0..m_b).map(|kk| T::one() / (lmi.a[kk] * lmi.a[kk] * d[v_owner[kk]])))
            .collect();
        let top = cost.iter().fold(T::zero(), |a, &c| a.max(c));
        for c in &mut cost {
            *c /= top;
        }
        let lb: Vec<T> = (0..p_b)
            .map(|i| lmi.b[i] * lmi.b[i] * cap2 / d[w_owner[i]])
            .chain((0..m_b).map(|kk| lmi.a[kk] * lmi.a[kk] * cap2 * d[v_owner[kk]]))
            .collect();
        let problem = DiagonalLmiProblem::from_hermitian(cost, &lmi.g0, &placements, lmi.margin, lb)?;
        let sol = sdp::solve_with(&problem, &sdp_opts)?;
        match sol.status {
            SdpStatus::Optimal => {}
            SdpStatus::Infeasible => return Err(Error::InfeasibleAtFrequency { omega: omega.as_f64() }),
            SdpStatus::MaxIterations => {
                return Err(Error::MaxIterations {
                    iterations: sol.iterations,
                })
            }
        }
        for i in 0..p_b {
            x[i] = sol.x[i] / (lmi.b[i] * lmi.b[i]);
        }
        for kk in 0..m_b {
            y[kk] = sol.x[p_b + kk] / (lmi.a[kk] * lmi.a[kk]);
        }
        let mut tx = vec![T::zero(); k];
        let mut ty = vec![T::zero(); k];
        for i in 0..p_b {
            tx[w_owner[i]] += x[i];
        }
        for kk in 0..m_b {
            ty[v_owner[kk]] += y[kk];
        }
        let obj = (0..k).fold(T::zero(), |a, j| a + d[j] * tx[j] + ty[j] / d[j]);
        history.push(obj);
        for j in 0..k {
            if tx[j] > T::zero() && ty[j] > T::zero() {
                d[j] = (ty[j] / tx[j]).sqrt();
            }
        }
        if history.len() >= 2 {
            let prev = history[history.len() - 2];
            if (prev - obj).abs() <= T::lit(opts.round_tol) * obj.abs() {
                break;
            }
        }
    }

    let cap = T::lit(opts.cap);
    let mut capped = vec![false; k];
    let w: Vec<DVector<T>> = (0..k)
        .map(|j| {
            DVector::from_iterator(
                signature[j].1,
                (op[j]..op[j + 1]).map(|i| {
                    let v = T::one() / (d[j] * x[i]).sqrt();
                    if v >= cap * (T::one() - T::lit(CAP_ACTIVE_TOL)) {
                        capped[j] = true;
                        cap
                    } else {
                        v
                    }
                }),
            )
        })
        .collect();
    let v: Vec<DVector<T>> = (0..k)
        .map(|j| {
            DVector::from_iterator(
                signature[j].0,
                (om[j]..om[j + 1]).map(|kk| {
                    let v = (d[j] / y[kk]).sqrt();
                    if v >= cap * (T::one() - T::lit(CAP_ACTIVE_TOL)) {
                        capped[j] = true;
                        cap
                    } else {
                        v
                    }
                }),
            )
        })
        .collect();
    let mut fb = FrequencyBudget {
        omega,
        w,
        v,
        d,
        d_c: T::one(),
        lmi_min_eig: T::zero(),
        capped,
        history,
    };
    fb.lmi_min_eig = lmi_certificate(n, &fb, v_c, w_c)?;
    if !(fb.lmi_min_eig > T::zero()) {
        log::warn!(
            "budget certificate at omega = {} rad/s is not positive ({:e})",
            omega.as_f64(),
            fb.lmi_min_eig.as_f64()
        );
    }
    Ok(fb)
}

/// The LMI at stored `(W, V, d, d_c)` in physical units.
pub fn lmi_matrix<T: Real>(
    n: &DMatrix<Cx<T>>,
    budget: &FrequencyBudget<T>,
    v_c: &DVector<T>,
    w_c: &DVector<T>,
) -> DMatrix<Cx<T>> {
    let mut top: Vec<T> = Vec::new();
    let mut bottom: Vec<T> = Vec::new();
    for (j, w) in budget.w.iter().enumerate() {
        top.extend(w.iter().map(|x| T::one() / (*x * *x * budget.d[j])));
    }
    top.extend(w_c.iter().map(|x| T::one() / (*x * *x * budget.d_c)));
    for (j, v) in budget.v.iter().enumerate() {
        bottom.extend(v.iter().map(|x| budget.d[j] / (*x * *x)));
    }
    bottom.extend(v_c.iter().map(|x| budget.d_c / (*x * *x)));
    let (nt, nb) = (top.len(), bottom.len());
    let mut g = DMatrix::from_element(nt + nb, nt + nb, cx(T::zero(), T::zero()));
    for (i, v) in top.iter().enumerate() {
        g[(i, i)] = cx(*v, T::zero());
    }
    for (i, v) in bottom.iter().enumerate() {
        g[(nt + i, nt + i)] = cx(*v, T::zero());
    }
    for i in 0..nb {
        for j in 0..nt {
            g[(nt + i, j)] = n[(i, j)];
            g[(j, nt + i)] = n[(i, j)].conj();
        }
    }
    g
}

/// Smallest eigenvalue of the LMI after unit-diagonal normalization.
pub fn lmi_certificate<T: Real>(
    n: &DMatrix<Cx<T>>,
    budget: &FrequencyBudget<T>,
    v_c: &DVector<T>,
    w_c: &DVector<T>,
) -> Result<T> {
    let g = lmi_matrix(n, budget, v_c, w_c);
    let s = DVector::from_iterator(g.nrows(), (0..g.nrows()).map(|i| T::one() / g[(i, i)].re.sqrt()));
    let gn = scale_rows_cols(&g, &s, &s);
    linalg::min_eigenvalue(&sdp::embed_hermitian(&gn)?)
}

/// Budgets on the whole grid from the per-frequency transfers `N`.
pub fn synthesize_budgets<T: Real>(
    transfers: &[DMatrix<Cx<T>>],
    req: &AssemblyRequirement<T>,
    signature: &[(usize, usize)],
    opts: &SynthesisOptions,
) -> Result<ComponentBudget<T>> {
    if transfers.len() != req.omegas.len() {
        return Err(Error::GridMismatch(format!(
            "{} transfer matrices for {} grid points",
            transfers.len(),
            req.omegas.len()
        )));
    }
    let frequencies = (0..transfers.len())
        .into_par_iter()
        .map(|k| synthesize_at(&transfers[k], &req.v_c[k], &req.w_c[k], signature, req.omegas[k], opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComponentBudget {
        signature: signature.to_vec(),
        frequencies,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationReport<T: Real> {
    pub samples: usize,
    pub passed: usize,
    /// Largest `‖V_c E_c W_c‖` seen, with its grid index and sample number.
    pub worst: T,
    pub worst_at: (usize, usize),
}

impl<T: Real> PropagationReport<T> {
    pub fn violations(&self) -> usize {
        self.samples - self.passed
    }
}

/// Complex Gaussian `p × m` matrix scaled to unit spectral norm.
fn unit_sample<T: Real>(rng: &mut ChaCha8Rng, p: usize, m: usize) -> DMatrix<Cx<T>> {
    let mut u = DMatrix::from_fn(p, m, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        cx(T::lit(re), T::lit(im))
    });
    let nrm = spectral_norm(&u);
    if nrm > T::zero() {
        u /= cx(nrm, T::zero());
    }
    u
}

/// Draws admissible component errors `E_j = W_j U_j V_j` with `‖U_j‖ = 1`,
/// closes the perturbed loop and measures the assembly requirement.
/// `h_b[k]` is the stacked reference FRF at grid index `k`; `indices` picks
/// grid points.
pub fn propagation_scan<T: Real>(
    h_b: &[DMatrix<Cx<T>>],
    ic: &Interconnection<T>,
    budget: &ComponentBudget<T>,
    req: &AssemblyRequirement<T>,
    indices: &[usize],
    samples: usize,
    seed: u64,
) -> Result<PropagationReport<T>> {
    let results = indices
        .par_iter()
        .map(|&k| -> Result<(usize, T, usize)> {
            let omega = req.omegas[k];
            let fb = &budget.frequencies[k];
            let nominal = coupled_at(&h_b[k], ic, omega)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut passed = 0;
            let mut worst = (T::zero(), 0);
            for s in 0..samples {
                let blocks: Vec<DMatrix<Cx<T>>> = budget
                    .signature
                    .iter()
                    .enumerate()
                    .map(|(j, &(m, p))| scale_rows_cols(&unit_sample(&mut rng, p, m), &fb.w[j], &fb.v[j]))
                    .collect();
                let e = linalg::block_diag(&blocks.iter().collect::<Vec<_>>());
                let perturbed = coupled_at(&(&h_b[k] + e), ic, omega)?;
                let ec = perturbed - &nominal;
                let val = spectral_norm(&scale_rows_cols(&ec, &req.v_c[k], &req.w_c[k]));
                if val < T::one() + T::lit(1e-8) {
                    passed += 1;
                }
                if val > worst.0 {
                    worst = (val, s);
                }
            }
            Ok((passed, worst.0, worst.1))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = PropagationReport {
        samples: samples * indices.len(),
        passed: 0,
        worst: T::zero(),
        worst_at: (0, 0),
    };
    for (&k, (passed, worst, s)) in indices.iter().zip(results) {
        report.passed += passed;
        if worst > report.worst {
            report.worst = worst;
            report.worst_at = (k, s);
        }
    }
    Ok(report)
}

/// As [`propagation_scan`], failing on the first violation.
pub fn propagation_check<T: Real>(
    h_b: &[DMatrix<Cx<T>>],
    ic: &Interconnection<T>,
    budget: &ComponentBudget<T>,
    req: &AssemblyRequirement<T>,
    indices: &[usize],
    samples: usize,
    seed: u64,
) -> Result<PropagationReport<T>> {
    let report = propagation_scan(h_b, ic, budget, req, indices, samples, seed)?;
    if report.violations() > 0 {
        return Err(Error::PropagationViolation {
            omega: req.omegas[report.worst_at.0].as_f64(),
            sample: report.worst_at.1,
            margin: report.worst.as_f64(),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(v: f64) -> Cx<f64> {
        cx(v, 0.0)
    }

    fn scalar_samples(v: f64) -> FrfSamples<f64> {
        FrfSamples::new(vec![1.0], vec![DMatrix::from_element(1, 1, c(v))]).unwrap()
    }

    #[test]
    fn relative_requirement_weights() {
        let req = relative_error_requirement(&scalar_samples(1.0), 0.05).unwrap();
        assert_relative_eq!(req.v_c[0][0], 4.47213595499958, epsilon = 1e-12);
        assert_eq!(req.v_c, req.w_c);
        let req = relative_error_requirement(&scalar_samples(1.0), 1.0).unwrap();
        assert_eq!(req.v_c[0][0], 1.0);
        assert!(matches!(
            relative_error_requirement(&scalar_samples(0.0), 0.05),
            Err(Error::ZeroResponse { .. })
        ));
    }

    #[test]
    fn relative_requirement_reads_as_relative_error() {
        let h = scalar_samples(3.0);
        let req = relative_error_requirement(&h, 0.05).unwrap();
        let half = scalar_samples(3.0 * 0.025);
        assert_eq!(check_assembly_requirement(&half, &req).unwrap(), vec![true]);
        let over = scalar_samples(3.0 * 0.0501);
        assert_eq!(check_assembly_requirement(&over, &req).unwrap(), vec![false]);
        let zero = scalar_samples(0.0);
        assert_eq!(check_assembly_requirement(&zero, &req).unwrap(), vec![true]);
        // boundary is excluded
        let one = AssemblyRequirement::new(vec![1.0], vec![DVector::from_element(1, 1.0)], vec![DVector::from_element(1, 1.0)]).unwrap();
        assert_eq!(check_assembly_requirement(&scalar_samples(1.0), &one).unwrap(), vec![false]);
    }

    fn scalar_budget(w: f64, v: f64) -> ComponentBudget<f64> {
        ComponentBudget {
            signature: vec![(1, 1)],
            frequencies: vec![FrequencyBudget {
                omega: 1.0,
                w: vec![DVector::from_element(1, w)],
                v: vec![DVector::from_element(1, v)],
                d: vec![1.0],
                d_c: 1.0,
                lmi_min_eig: 1.0,
                capped: vec![false],
                history: vec![],
            }],
        }
    }

    #[test]
    fn component_check_cases() {
        let b = scalar_budget(1.0, 1.0);
        assert_eq!(check_component_requirement(&scalar_samples(0.0), &b, 0).unwrap(), vec![true]);
        assert_eq!(check_component_requirement(&scalar_samples(2.0), &b, 0).unwrap(), vec![false]);
        let b = scalar_budget(2.0, 2.0);
        assert_eq!(check_component_requirement(&scalar_samples(4.0), &b, 0).unwrap(), vec![true]);
        let other = FrfSamples::new(vec![2.0], vec![DMatrix::from_element(1, 1, c(0.0))]).unwrap();
        assert!(matches!(check_component_requirement(&other, &b, 0), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn sensitivity_cases() {
        assert_relative_eq!(sensitivity(&scalar_budget(1.0, 1.0)).values[0][0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(sensitivity(&scalar_budget(2.0, 2.0)).values[0][0], 0.25, epsilon = 1e-15);
        let mut b = scalar_budget(1.0, 1.0);
        b.signature = vec![(3, 2)];
        b.frequencies[0].w = vec![DVector::from_element(2, 1.0)];
        b.frequencies[0].v = vec![DVector::from_element(3, 1.0)];
        assert_relative_eq!(sensitivity(&b).values[0][0], 6f64.sqrt(), epsilon = 1e-14);
    }

    /// Brute-force optimum of the scalar problem N = [[0, 1], [1, 0]] with
    /// V_c = W_c = v: minimize w⁻² + u⁻² subject to the LMI with free d.
    fn scalar_oracle(v: f64) -> f64 {
        let n = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let feasible = |w: f64, u: f64, d: f64| {
            let fb = FrequencyBudget {
                omega: 1.0,
                w: vec![DVector::from_element(1, w)],
                v: vec![DVector::from_element(1, u)],
                d: vec![d],
                d_c: 1.0,
                lmi_min_eig: 0.0,
                capped: vec![false],
                history: vec![],
            };
            let vc = DVector::from_element(1, v);
            let g = lmi_matrix(&n, &fb, &vc, &vc);
            linalg::min_eigenvalue(&sdp::embed_hermitian(&g).unwrap()).unwrap() > 0.0
        };
        // the objective depends on w⁻² and u⁻²: search log-spaced, 1e-3 steps in log10
        let mut best = f64::INFINITY;
        let grid = |lo: f64, hi: f64| {
            let n = ((hi - lo) / 1e-3) as usize;
            (0..=n).map(move |i| 10f64.powf(lo + i as f64 * 1e-3))
        };
        // with N11 = 0 the constraint is a product bound on w·u/(v²)... scan d
        // coarsely and w finely, solving for the smallest admissible u⁻²
        for d in grid(-2.0, 2.0).step_by(50) {
            for w in grid(-3.0, 1.0).step_by(10) {
                // bisection on u for fixed (w, d): larger u is harder
                let (mut lo, mut hi) = (1e-6, 1e3);
                if !feasible(w, lo, d) {
                    continue;
                }
                for _ in 0..60 {
                    let mid = (lo * hi).sqrt();
                    if feasible(w, mid, d) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                best = best.min(1.0 / (w * w) + 1.0 / (lo * lo));
            }
        }
        best
    }

    #[test]
    fn scalar_synthesis_matches_oracle() {
        let v = 2.0;
        let n = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let vc = DVector::from_element(1, v);
        let fb = synthesize_at(&n, &vc, &vc, &[(1, 1)], 1.0, &SynthesisOptions::default()).unwrap();
        let oracle = scalar_oracle(v);
        let got = fb.objective();
        assert!((got - oracle).abs() <= 0.02 * oracle, "{got} vs {oracle}");
        assert!(fb.lmi_min_eig > 0.0);
    }

    #[test]
    fn decoupled_channels_reach_the_cap() {
        let n = DMatrix::from_element(3, 3, c(0.0));
        let vc = DVector::from_element(1, 1.0);
        let fb = synthesize_at(&n, &vc, &vc, &[(1, 1), (1, 1)], 1.0, &SynthesisOptions::default()).unwrap();
        for x in fb.w.iter().chain(&fb.v).flat_map(|d| d.iter()) {
            assert!(*x >= 1e6 * (1.0 - 1e-6), "{x}");
        }
        assert!(fb.capped.iter().all(|c| *c));
    }

    #[test]
    fn alternation_is_monotone() {
        let n = DMatrix::from_row_slice(
            3,
            3,
            &[c(0.1), cx(0.0, 0.2), c(1.0), c(0.3), c(-0.2), c(0.5), c(2.0), c(0.7), c(0.0)],
        );
        let vc = DVector::from_element(1, 3.0);
        let fb = synthesize_at(&n, &vc, &vc, &[(1, 1), (1, 1)], 1.0, &SynthesisOptions::default()).unwrap();
        for w in fb.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6), "{:?}", fb.history);
        }
        assert!(fb.lmi_min_eig > 0.0);
    }

    #[test]
    fn fixed_dc_loses_nothing() {
        // the LMI at (W, V, α d, α d_c) is a congruence of the one at (W, V, d, d_c)
        let n = DMatrix::from_row_slice(2, 2, &[c(0.2), c(1.0), c(1.5), c(0.0)]);
        let vc = DVector::from_element(1, 2.0);
        let fb = synthesize_at(&n, &vc, &vc, &[(1, 1)], 1.0, &SynthesisOptions::default()).unwrap();
        for alpha in [1e-3, 0.5, 7.0, 1e4] {
            let mut scaled = fb.clone();
            scaled.d = fb.d.iter().map(|d| d * alpha).collect();
            scaled.d_c = alpha;
            let g = lmi_matrix(&n, &scaled, &vc, &vc);
            let s = DVector::from_iterator(g.nrows(), (0..g.nrows()).map(|i| 1.0 / g[(i, i)].re.sqrt()));
            let gn = scale_rows_cols(&g, &s, &s);
            let eig = linalg::min_eigenvalue(&sdp::embed_hermitian(&gn).unwrap()).unwrap();
            // unit diagonal, so an absolute tolerance is the natural one
            assert!((eig - fb.lmi_min_eig).abs() < 1e-12, "{eig:e} vs {:e}", fb.lmi_min_eig);
        }
    }

    #[test]
    fn propagation_on_a_scalar_loop() {
        // single component with spring feedback, one external channel
        let ic = Interconnection::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            vec![(1, 1)],
        )
        .unwrap();
        let hb = vec![DMatrix::from_element(1, 1, cx(0.5, -0.1))];
        let n = crate::assembly::transfer_at(&hb[0], &ic, 1.0).unwrap();
        let hc = coupled_at(&hb[0], &ic, 1.0).unwrap();
        let hcs = FrfSamples::new(vec![1.0], vec![hc]).unwrap();
        let req = relative_error_requirement(&hcs, 0.05).unwrap();
        let fb = synthesize_at(&n, &req.v_c[0], &req.w_c[0], &[(1, 1)], 1.0, &SynthesisOptions::default()).unwrap();
        let budget = ComponentBudget {
            signature: vec![(1, 1)],
            frequencies: vec![fb],
        };
        let rep = propagation_check(&hb, &ic, &budget, &req, &[0], 200, 7).unwrap();
        assert_eq!(rep.passed, 200);
        let bad = propagation_scan(&hb, &ic, &budget.inflated(10.0), &req, &[0], 200, 7).unwrap();
        assert!(bad.violations() > 0);
        let zero = budget.inflated(0.0);
        let rep = propagation_scan(&hb, &ic, &zero, &req, &[0], 3, 1).unwrap();
        assert_eq!(rep.worst, 0.0);
    }
}
