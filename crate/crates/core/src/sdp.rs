//! Small dense semidefinite programs whose variables sit on diagonal
//! entries of the constraint matrix.
//!
//! ```text
//!     minimize    cᵀx
//!     subject to  G(x) = G₀ + Σᵢ xᵢ Gᵢ ⪰ εI,   x > lb
//! ```
//!
//! Every `Gᵢ` is diagonal: it places `xᵢ` (times a coefficient) on a fixed
//! set of diagonal entries. That makes the barrier gradient and Hessian cheap:
//! `tr(S⁻¹Gᵢ)` reads diagonal entries of `S⁻¹` and `tr(S⁻¹GᵢS⁻¹Gⱼ)` reads
//! squared entries. Hermitian data is handled through the real embedding
//! `[[Re, −Im], [Im, Re]]`.

use nalgebra::{Cholesky, ComplexField, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{Cx, Real};

/// Diagonal entries (index, coefficient) occupied by one variable.
pub type Placement<T> = Vec<(usize, T)>;

/// Real symmetric `[[Re H, −Im H], [Im H, Re H]]` of a Hermitian `H`.
pub fn embed_hermitian<T: Real>(h: &DMatrix<Cx<T>>) -> Result<DMatrix<T>> {
    let d = h.nrows();
    if !h.is_square() {
        return Err(Error::DimensionMismatch(format!("{}×{} is not square", h.nrows(), h.ncols())));
    }
    let mut scale = T::zero();
    let mut asym = T::zero();
    for j in 0..d {
        for i in 0..d {
            let a = h[(i, j)];
            let b = h[(j, i)].conj();
            scale = scale.max(a.modulus());
            asym = asym.max((a - b).modulus());
        }
    }
    if asym > T::lit(1e-12) * scale.max(T::eps() * T::eps()) {
        let rel = if scale > T::zero() { asym / scale } else { asym };
        return Err(Error::NotHermitian { asymmetry: rel.as_f64() });
    }
    let mut e = DMatrix::zeros(2 * d, 2 * d);
    let half = T::lit(0.5);
    for j in 0..d {
        for i in 0..d {
            // average with the conjugate transpose so the result is exactly symmetric
            let v = (h[(i, j)] + h[(j, i)].conj()) * Cx::new(half, T::zero());
            e[(i, j)] = v.re;
            e[(i + d, j + d)] = v.re;
            e[(i, j + d)] = -v.im;
            e[(i + d, j)] = v.im;
        }
    }
    Ok(e)
}

/// Placement of a complex-diagonal entry after embedding: both copies.
pub fn embed_placement<T: Real>(placement: &[(usize, T)], complex_dim: usize) -> Placement<T> {
    placement
        .iter()
        .flat_map(|&(r, a)| [(r, a), (r + complex_dim, a)])
        .collect()
}

/// `minimize cᵀx  s.t.  G₀ + Σ xᵢGᵢ ⪰ εI, x > lb` with diagonal `Gᵢ`.
#[derive(Debug, Clone)]
pub struct DiagonalLmiProblem<T: Real> {
    pub objective: Vec<T>,
    /// Real symmetric `G₀`.
    pub constant: DMatrix<T>,
    pub placements: Vec<Placement<T>>,
    /// Strictness margin `ε ≥ 0`.
    pub margin: T,
    pub lower_bounds: Vec<T>,
}

impl<T: Real> DiagonalLmiProblem<T> {
    pub fn new(
        objective: Vec<T>,
        constant: DMatrix<T>,
        placements: Vec<Placement<T>>,
        margin: T,
        lower_bounds: Vec<T>,
    ) -> Result<Self> {
        let p = Self {
            objective,
            constant,
            placements,
            margin,
            lower_bounds,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds the embedded problem from Hermitian data; placements index the
    /// complex diagonal.
    pub fn from_hermitian(
        objective: Vec<T>,
        constant: &DMatrix<Cx<T>>,
        placements: &[Placement<T>],
        margin: T,
        lower_bounds: Vec<T>,
    ) -> Result<Self> {
        let d = constant.nrows();
        let g0 = embed_hermitian(constant)?;
        let pl = placements.iter().map(|p| embed_placement(p, d)).collect();
        Self::new(objective, g0, pl, margin, lower_bounds)
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.constant.nrows();
        let s = self.objective.len();
        if d == 0 || !self.constant.is_square() {
            return Err(Error::DimensionMismatch("constraint matrix must be square and non-empty".into()));
        }
        if self.placements.len() != s || self.lower_bounds.len() != s {
            return Err(Error::DimensionMismatch(format!(
                "{s} objective entries, {} placements, {} bounds",
                self.placements.len(),
                self.lower_bounds.len()
            )));
        }
        if self.objective.iter().chain(&self.lower_bounds).any(|v| !v.is_finite())
            || self.constant.iter().any(|v| !v.is_finite())
            || !(self.margin >= T::zero())
        {
            return Err(Error::InvalidModel("non-finite LMI data or negative margin".into()));
        }
        if linalg::relative_asymmetry(&self.constant) > T::lit(1e-12) {
            return Err(Error::NotHermitian {
                asymmetry: linalg::relative_asymmetry(&self.constant).as_f64(),
            });
        }
        for (i, p) in self.placements.iter().enumerate() {
            if p.is_empty() || p.iter().any(|&(r, a)| r >= d || !a.is_finite()) {
                return Err(Error::DimensionMismatch(format!("placement of variable {i} is empty or out of range")));
            }
        }
        Ok(())
    }

    /// `G(x) = G₀ + Σ xᵢGᵢ`.
    pub fn evaluate(&self, x: &[T]) -> DMatrix<T> {
        let mut g = self.constant.clone();
        for (xi, p) in x.iter().zip(&self.placements) {
            for &(r, a) in p {
                g[(r, r)] += *xi * a;
            }
        }
        g
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        x.iter().zip(&self.objective).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
    }

    pub fn to_json(&self) -> String {
        let doc = LmiDump {
            objective: self.objective.iter().map(|v| v.as_f64()).collect(),
            constant: (0..self.dim())
                .map(|i| (0..self.dim()).map(|j| self.constant[(i, j)].as_f64()).collect())
                .collect(),
            placements: self
                .placements
                .iter()
                .map(|p| p.iter().map(|&(r, a)| (r, a.as_f64())).collect())
                .collect(),
            margin: self.margin.as_f64(),
            lower_bounds: self.lower_bounds.iter().map(|v| v.as_f64()).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("plain numbers serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LmiDump = serde_json::from_str(text)?;
        let n = doc.constant.len();
        let mut g0 = DMatrix::zeros(n, n);
        for (i, row) in doc.constant.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch("constant matrix rows differ in length".into()));
            }
            for (j, v) in row.iter().enumerate() {
                g0[(i, j)] = T::lit(*v);
            }
        }
        Self::new(
            doc.objective.into_iter().map(T::lit).collect(),
            g0,
            doc.placements
                .into_iter()
                .map(|p| p.into_iter().map(|(r, a)| (r, T::lit(a))).collect())
                .collect(),
            T::lit(doc.margin),
            doc.lower_bounds.into_iter().map(T::lit).collect(),
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LmiDump {
    objective: Vec<f64>,
    constant: Vec<Vec<f64>>,
    placements: Vec<Vec<(usize, f64)>>,
    margin: f64,
    lower_bounds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SdpSolution<T: Real> {
    pub x: Vec<T>,
    pub objective_value: T,
    /// Smallest eigenvalue of `G(x)`.
    pub min_eigenvalue: T,
    /// Newton steps over both phases.
    pub iterations: usize,
    pub status: SdpStatus,
    /// `cᵀx` after each outer (barrier) iteration of the second phase.
    pub history: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    /// Relative duality-gap target.
    pub tol: f64,
    pub max_newton: usize,
    pub mu0: f64,
    pub mu_factor: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_newton: 2000,
            mu0: 1.0,
            mu_factor: 0.2,
        }
    }
}

/// Relative size of the box on `x` during the first phase. Feasible points
/// beyond it are reported as infeasible, so callers should scale their data.
const PHASE_ONE_BOX: f64 = 1e8;

/// Newton steps allowed for one centering.
const MAX_CENTERING_STEPS: usize = 100;

/// Internal barrier problem: variables with optional lower bounds, a
/// shift `−τI` applied to `G(x)`.
struct Barrier<'a, T: Real> {
    problem: &'a DiagonalLmiProblem<T>,
    cost: Vec<T>,
    /// Extra variable `t` entering as `−tI` (first phase only).
    with_t: bool,
    /// Box `x < upper` keeping the first phase bounded when the LMI admits
    /// arbitrarily large variables.
    upper: Option<T>,
}

impl<'a, T: Real> Barrier<'a, T> {
    fn n(&self) -> usize {
        self.problem.n_vars() + usize::from(self.with_t)
    }

    fn slack(&self, z: &[T]) -> DMatrix<T> {
        let p = self.problem;
        let s = p.n_vars();
        let mut g = p.evaluate(&z[..s]);
        let shift = p.margin + if self.with_t { z[s] } else { T::zero() };
        for i in 0..p.dim() {
            g[(i, i)] -= shift;
        }
        g
    }

    fn in_domain(&self, z: &[T]) -> Option<Cholesky<T, Dyn>> {
        let lb = &self.problem.lower_bounds;
        if z.iter().zip(lb).any(|(x, l)| !(*x > *l)) || z.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if let Some(u) = self.upper {
            if z[..self.problem.n_vars()].iter().any(|x| !(*x < u)) {
                return None;
            }
        }
        Cholesky::new(self.slack(z))
    }

    /// `φ(z) = costᵀz/μ − log det S − Σ log(xᵢ − lbᵢ)`.
    fn value(&self, z: &[T], chol: &Cholesky<T, Dyn>, mu: T) -> T {
        let lin = z.iter().zip(&self.cost).fold(T::zero(), |a, (x, c)| a + *x * *c) / mu;
        let logdet = chol.l_dirty().diagonal().iter().take(self.problem.dim()).fold(T::zero(), |a, v| a + v.ln())
            * T::lit(2.0);
        let bnd = z
            .iter()
            .zip(&self.problem.lower_bounds)
            .fold(T::zero(), |a, (x, l)| a + (*x - *l).ln());
        let top = match self.upper {
            Some(u) => z[..self.problem.n_vars()].iter().fold(T::zero(), |a, x| a + (u - *x).ln()),
            None => T::zero(),
        };
        lin - logdet - bnd - top
    }

    fn grad_hess(&self, z: &[T], chol: &Cholesky<T, Dyn>, mu: T) -> (DVector<T>, DMatrix<T>) {
        let p = self.problem;
        let s = p.n_vars();
        let n = self.n();
        let sinv = chol.inverse();
        let d = p.dim();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        // placements with the t column: −1 on every diagonal entry
        let t_place: Placement<T> = if self.with_t { (0..d).map(|r| (r, -T::one())).collect() } else { Vec::new() };
        let place = |i: usize| -> &Placement<T> {
            if i < s {
                &p.placements[i]
            } else {
                &t_place
            }
        };
        for i in 0..n {
            let tr = place(i).iter().fold(T::zero(), |a, &(r, c)| a + c * sinv[(r, r)]);
            g[i] = self.cost[i] / mu - tr;
            if i < s {
                let gap = z[i] - p.lower_bounds[i];
                g[i] -= T::one() / gap;
                h[(i, i)] += T::one() / (gap * gap);
                if let Some(u) = self.upper {
                    let room = u - z[i];
                    g[i] += T::one() / room;
                    h[(i, i)] += T::one() / (room * room);
                }
            }
        }
        for i in 0..n {
            for j in i..n {
                let mut v = T::zero();
                for &(r, a) in place(i) {
                    for &(q, b) in place(j) {
                        let e = sinv[(r, q)];
                        v += a * b * e * e;
                    }
                }
                h[(i, j)] += v;
                if i != j {
                    h[(j, i)] += v;
                }
            }
        }
        (g, h)
    }

    /// Damped Newton centering at fixed `μ`. Returns the number of steps;
    /// `stop` is checked after every step.
    fn center(
        &self,
        z: &mut Vec<T>,
        mu: T,
        budget: &mut usize,
        stop: &dyn Fn(&[T]) -> bool,
    ) -> Result<(usize, bool)> {
        let mut steps = 0;
        loop {
            if *budget == 0 {
                return Err(Error::MaxIterations { iterations: steps });
            }
            let chol = self.in_domain(z).expect("iterate kept strictly feasible");
            let (g, mut h) = self.grad_hess(z, &chol, mu);
            let dir = match Cholesky::new(h.clone()) {
                Some(c) => -c.solve(&g),
                None => {
                    let reg = h.diagonal().amax() * T::lit(1e-12) + (T::eps() * T::eps());
                    for i in 0..h.nrows() {
                        h[(i, i)] += reg;
                    }
                    match Cholesky::new(h) {
                        Some(c) => -c.solve(&g),
                        None => -g.clone(),
                    }
                }
            };
            let slope = g.dot(&dir);
            let decrement = -slope;
            if !(decrement > T::lit(1e-10)) {
                return Ok((steps, false));
            }
            let f0 = self.value(z, &chol, mu);
            let mut step = T::one();
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<T> = z.iter().zip(dir.iter()).map(|(a, b)| *a + step * *b).collect();
                if let Some(c) = self.in_domain(&trial) {
                    let f1 = self.value(&trial, &c, mu);
                    if f1 <= f0 + T::lit(1e-4) * step * slope {
                        accepted = Some((trial, f1));
                        break;
                    }
                }
                step *= T::lit(0.5);
            }
            *budget -= 1;
            steps += 1;
            let f1 = match accepted {
                Some((t, f1)) => {
                    *z = t;
                    f1
                }
                None => return Ok((steps, false)),
            };
            if stop(z) {
                return Ok((steps, true));
            }
            // at small mu the barrier value carries O(1/mu) roundoff and the
            // decrement stalls above any absolute threshold
            let stalled = f0 - f1 <= T::eps() * T::lit(64.0) * (T::one() + f0.abs());
            if decrement < T::lit(1e-9) || stalled || steps >= MAX_CENTERING_STEPS {
                return Ok((steps, false));
            }
        }
    }
}

/// Solves with default options; non-optimal outcomes become errors.
pub fn solve<T: Real>(problem: &DiagonalLmiProblem<T>, tol: T) -> Result<SdpSolution<T>> {
    let opts = SdpOptions {
        tol: tol.as_f64(),
        ..SdpOptions::default()
    };
    let sol = solve_with(problem, &opts)?;
    match sol.status {
        SdpStatus::Optimal => Ok(sol),
        SdpStatus::Infeasible => Err(Error::Infeasible {
            best_margin: sol.min_eigenvalue.as_f64() - problem.margin.as_f64(),
        }),
        SdpStatus::MaxIterations => Err(Error::MaxIterations {
            iterations: sol.iterations,
        }),
    }
}

/// Two-phase barrier method; reports the final status in the solution.
pub fn solve_with<T: Real>(problem: &DiagonalLmiProblem<T>, opts: &SdpOptions) -> Result<SdpSolution<T>> {
    problem.validate()?;
    let s = problem.n_vars();
    let dim = problem.dim();
    let nu = T::from_usize(dim + s).unwrap();
    let mut budget = opts.max_newton;
    let mut iterations = 0;
    let min_eig = |x: &[T]| linalg::min_eigenvalue(&problem.evaluate(x));

    // phase I: maximize t subject to G(x) − εI − tI ≻ 0
    let mut x0: Vec<T> = problem
        .lower_bounds
        .iter()
        .map(|&l| l + l.abs().max(T::one()))
        .collect();
    let phase1 = Barrier {
        problem,
        cost: {
            let mut c = vec![T::zero(); s];
            c.push(-T::one());
            c
        },
        with_t: true,
        upper: Some(
            x0.iter()
                .fold(T::one(), |a, v| a.max(v.abs()))
                * T::lit(PHASE_ONE_BOX),
        ),
    };
    let lam0 = min_eig(&x0)? - problem.margin;
    if !(lam0 > T::zero()) {
        let mut z = x0.clone();
        z.push(lam0 - T::one());
        let mut mu = T::lit(opts.mu0);
        let feasible = |z: &[T]| z[s] > T::zero();
        loop {
            let (steps, hit) = match phase1.center(&mut z, mu, &mut budget, &feasible) {
                Ok(v) => v,
                Err(_) => {
                    return Ok(status_only(problem, &z[..s], opts.max_newton, SdpStatus::MaxIterations));
                }
            };
            iterations += steps;
            if hit || z[s] > T::zero() {
                break;
            }
            // t* ≤ t + νμ on the central path
            if z[s] + nu * mu < T::zero() {
                let mut sol = status_only(problem, &z[..s], iterations, SdpStatus::Infeasible);
                sol.min_eigenvalue = z[s] + problem.margin;
                return Ok(sol);
            }
            if nu * mu < T::eps() * (T::one() + z[s].abs()) {
                let mut sol = status_only(problem, &z[..s], iterations, SdpStatus::Infeasible);
                sol.min_eigenvalue = z[s] + problem.margin;
                return Ok(sol);
            }
            mu *= T::lit(opts.mu_factor);
        }
        z.truncate(s);
        x0 = z;
    }

    // phase II: barrier path following on cᵀx
    let phase2 = Barrier {
        problem,
        cost: problem.objective.clone(),
        with_t: false,
        upper: None,
    };
    let mut x = x0;
    let mut mu = T::lit(opts.mu0);
    let mut history = Vec::new();
    let never = |_: &[T]| false;
    loop {
        match phase2.center(&mut x, mu, &mut budget, &never) {
            Ok((steps, _)) => iterations += steps,
            Err(_) => {
                let mut sol = status_only(problem, &x, opts.max_newton, SdpStatus::MaxIterations);
                sol.history = history;
                return Ok(sol);
            }
        }
        let obj = problem.objective_value(&x);
        history.push(obj);
        let gap = nu * mu;
        if gap <= T::lit(opts.tol) * obj.abs() || mu < T::eps() * T::eps() {
            break;
        }
        mu *= T::lit(opts.mu_factor);
    }
    Ok(SdpSolution {
        objective_value: problem.objective_value(&x),
        min_eigenvalue: min_eig(&x)?,
        x,
        iterations,
        status: SdpStatus::Optimal,
        history,
    })
}

fn status_only<T: Real>(problem: &DiagonalLmiProblem<T>, x: &[T], iterations: usize, status: SdpStatus) -> SdpSolution<T> {
    SdpSolution {
        x: x.to_vec(),
        objective_value: problem.objective_value(x),
        min_eigenvalue: linalg::min_eigenvalue(&problem.evaluate(x)).unwrap_or(T::zero()),
        iterations,
        status,
        history: Vec::new(),
    }
}
