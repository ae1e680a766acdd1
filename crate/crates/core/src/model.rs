//! Second-order component models and their frequency response functions.
//!
//! A component is `M q̈ + C q̇ + K q = B u`, `y = F q`. Its FRF from `u` to
//! `y` is `H(iω) = F (−ω² M + iω C + K)⁻¹ B`.

use nalgebra::{ComplexField, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexLu};
use crate::scalar::{cx, Cx, Real};

pub use crate::linalg::spectral_norm;

/// Condition number above which an FRF solve is reported as suspicious.
pub const COND_WARN: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct SecondOrderModel<T: Real> {
    mass: DMatrix<T>,
    damping: DMatrix<T>,
    stiffness: DMatrix<T>,
    input_map: DMatrix<T>,
    output_map: DMatrix<T>,
    dof_labels: Vec<String>,
}

impl<T: Real> SecondOrderModel<T> {
    /// Builds and validates a model: symmetric `M, C, K`, positive definite
    /// `M`, positive semidefinite `K`, conforming maps.
    pub fn new(
        mass: DMatrix<T>,
        damping: DMatrix<T>,
        stiffness: DMatrix<T>,
        input_map: DMatrix<T>,
        output_map: DMatrix<T>,
    ) -> Result<Self> {
        let model = Self::new_unchecked(mass, damping, stiffness, input_map, output_map)?;
        model.validate()?;
        Ok(model)
    }

    /// Shape checks only; symmetry and definiteness are not verified.
    pub fn new_unchecked(
        mass: DMatrix<T>,
        damping: DMatrix<T>,
        stiffness: DMatrix<T>,
        input_map: DMatrix<T>,
        output_map: DMatrix<T>,
    ) -> Result<Self> {
        let n = mass.nrows();
        for (name, mat) in [("mass", &mass), ("damping", &damping), ("stiffness", &stiffness)] {
            if mat.shape() != (n, n) {
                return Err(Error::InvalidModel(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        if input_map.nrows() != n {
            return Err(Error::InvalidModel(format!(
                "input map has {} rows, expected {n}",
                input_map.nrows()
            )));
        }
        if output_map.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "output map has {} columns, expected {n}",
                output_map.ncols()
            )));
        }
        let all_finite = [&mass, &damping, &stiffness, &input_map, &output_map]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::InvalidModel("non-finite matrix entry".into()));
        }
        Ok(Self {
            dof_labels: (0..n).map(|i| format!("q{i}")).collect(),
            mass,
            damping,
            stiffness,
            input_map,
            output_map,
        })
    }

    /// A model without inputs or outputs.
    pub fn unloaded(mass: DMatrix<T>, damping: DMatrix<T>, stiffness: DMatrix<T>) -> Result<Self> {
        let n = mass.nrows();
        Self::new(mass, damping, stiffness, DMatrix::zeros(n, 0), DMatrix::zeros(0, n))
    }

    pub fn validate(&self) -> Result<()> {
        let tol = symmetry_tol::<T>();
        for (name, mat) in [
            ("mass", &self.mass),
            ("damping", &self.damping),
            ("stiffness", &self.stiffness),
        ] {
            let asym = linalg::relative_asymmetry(mat);
            if asym > tol {
                return Err(Error::InvalidModel(format!(
                    "{name} matrix is not symmetric (relative asymmetry {:e})",
                    asym.as_f64()
                )));
            }
        }
        if !linalg::is_positive_definite(&self.mass) {
            return Err(Error::InvalidModel("mass matrix is not positive definite".into()));
        }
        if self.n() > 0 {
            let scale = (0..self.n())
                .map(|i| self.stiffness[(i, i)].abs())
                .fold(T::zero(), |a, b| if b > a { b } else { a });
            let shift = if scale > T::zero() { scale * T::lit(1e-9) } else { T::one() };
            let shifted = &self.stiffness + DMatrix::identity(self.n(), self.n()) * shift;
            if !linalg::is_positive_definite(&shifted) {
                return Err(Error::InvalidModel(
                    "stiffness matrix is not positive semidefinite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::InvalidModel(format!(
                "{} labels for {} DOF",
                labels.len(),
                self.n()
            )));
        }
        self.dof_labels = labels;
        Ok(self)
    }

    /// Same structural matrices with new input and output maps.
    pub fn with_maps(&self, input_map: DMatrix<T>, output_map: DMatrix<T>) -> Result<Self> {
        let mut out = Self::new_unchecked(
            self.mass.clone(),
            self.damping.clone(),
            self.stiffness.clone(),
            input_map,
            output_map,
        )?;
        out.dof_labels = self.dof_labels.clone();
        Ok(out)
    }

    pub fn with_damping(&self, damping: DMatrix<T>) -> Result<Self> {
        let mut out = Self::new_unchecked(
            self.mass.clone(),
            damping,
            self.stiffness.clone(),
            self.input_map.clone(),
            self.output_map.clone(),
        )?;
        out.dof_labels = self.dof_labels.clone();
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.mass.nrows()
    }
    /// Number of inputs.
    pub fn m(&self) -> usize {
        self.input_map.ncols()
    }
    /// Number of outputs.
    pub fn p(&self) -> usize {
        self.output_map.nrows()
    }
    pub fn mass(&self) -> &DMatrix<T> {
        &self.mass
    }
    pub fn damping(&self) -> &DMatrix<T> {
        &self.damping
    }
    pub fn stiffness(&self) -> &DMatrix<T> {
        &self.stiffness
    }
    pub fn input_map(&self) -> &DMatrix<T> {
        &self.input_map
    }
    pub fn output_map(&self) -> &DMatrix<T> {
        &self.output_map
    }
    pub fn dof_labels(&self) -> &[String] {
        &self.dof_labels
    }

    /// `K − ω² M + iω C`.
    pub fn dynamic_stiffness(&self, omega: T) -> DMatrix<Cx<T>> {
        let w2 = omega * omega;
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            cx(
                self.stiffness[(i, j)] - w2 * self.mass[(i, j)],
                omega * self.damping[(i, j)],
            )
        })
    }

    /// Direct FRF evaluation at a single angular frequency (any sign).
    pub fn frf_at(&self, omega: T) -> Result<DMatrix<Cx<T>>> {
        if self.m() == 0 || self.p() == 0 {
            return Ok(DMatrix::from_element(self.p(), self.m(), cx(T::zero(), T::zero())));
        }
        // symmetric Jacobi scaling: generalized coordinates of very
        // different magnitude would otherwise spoil the condition estimate
        let w2 = omega * omega;
        let scale: Vec<T> = (0..self.n())
            .map(|i| {
                let d = self.stiffness[(i, i)].abs() + w2 * self.mass[(i, i)].abs() + (omega * self.damping[(i, i)]).abs();
                if d > T::zero() {
                    T::one() / d.sqrt()
                } else {
                    T::one()
                }
            })
            .collect();
        let mut z = self.dynamic_stiffness(omega);
        for j in 0..z.ncols() {
            for i in 0..z.nrows() {
                z[(i, j)] = z[(i, j)] * cx(scale[i] * scale[j], T::zero());
            }
        }
        let lu = ComplexLu::new(&z);
        let rcond = lu.rcond();
        if lu.is_singular() || rcond <= T::eps() {
            return Err(Error::SingularDynamicStiffness {
                omega: omega.as_f64(),
                rcond: rcond.as_f64(),
            });
        }
        if rcond.as_f64() < 1.0 / COND_WARN {
            log::warn!(
                "dynamic stiffness ill-conditioned at omega = {} rad/s (cond ~ {:e})",
                omega.as_f64(),
                1.0 / rcond.as_f64()
            );
        }
        let b = DMatrix::from_fn(self.n(), self.m(), |i, j| cx(self.input_map[(i, j)] * scale[i], T::zero()));
        let f = DMatrix::from_fn(self.p(), self.n(), |i, j| cx(self.output_map[(i, j)] * scale[j], T::zero()));
        Ok(f * lu.solve(&b))
    }
}

fn symmetry_tol<T: Real>() -> T {
    let t = T::lit(1e-12);
    let e = T::eps() * T::lit(16.0);
    if e > t {
        e
    } else {
        t
    }
}

/// Strictly increasing positive angular frequencies in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid<T: Real> {
    omegas: Vec<T>,
}

impl<T: Real> FrequencyGrid<T> {
    pub fn new(omegas: Vec<T>) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::InvalidModel("frequency grid is empty".into()));
        }
        if omegas.iter().any(|w| !(*w > T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidModel("grid frequencies must be positive and finite".into()));
        }
        if omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidModel("grid must be strictly increasing".into()));
        }
        Ok(Self { omegas })
    }

    /// `n` points `f_max·k/n`, k = 1..n, excluding zero.
    pub fn linear_hz(f_max_hz: T, n: usize) -> Result<Self> {
        let two_pi = T::two_pi();
        let nn = T::from_usize(n).unwrap();
        Self::new(
            (1..=n)
                .map(|k| two_pi * f_max_hz * T::from_usize(k).unwrap() / nn)
                .collect(),
        )
    }

    /// `n` logarithmically spaced points from `f_min` to `f_max` (Hz).
    pub fn log_hz(f_min_hz: T, f_max_hz: T, n: usize) -> Result<Self> {
        if n == 1 {
            return Self::new(vec![T::two_pi() * f_max_hz]);
        }
        let (a, b) = (f_min_hz.ln(), f_max_hz.ln());
        let den = T::from_usize(n - 1).unwrap();
        Self::new(
            (0..n)
                .map(|k| T::two_pi() * (a + (b - a) * T::from_usize(k).unwrap() / den).exp())
                .collect(),
        )
    }

    pub fn omegas(&self) -> &[T] {
        &self.omegas
    }

    pub fn hz(&self) -> Vec<T> {
        self.omegas.iter().map(|w| *w / T::two_pi()).collect()
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omega_max(&self) -> T {
        *self.omegas.last().unwrap()
    }
}

/// One complex response matrix per grid frequency.
#[derive(Debug, Clone)]
pub struct FrfSamples<T: Real> {
    pub omegas: Vec<T>,
    pub values: Vec<DMatrix<Cx<T>>>,
}

impl<T: Real> FrfSamples<T> {
    pub fn new(omegas: Vec<T>, values: Vec<DMatrix<Cx<T>>>) -> Result<Self> {
        if omegas.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} frequencies but {} matrices",
                omegas.len(),
                values.len()
            )));
        }
        if let Some(first) = values.first() {
            if values.iter().any(|v| v.shape() != first.shape()) {
                return Err(Error::GridMismatch("response dimensions vary over the grid".into()));
            }
        }
        Ok(Self { omegas, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.first().map(|v| v.shape()).unwrap_or((0, 0))
    }

    /// Errors unless both sample sets share the frequency grid.
    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.omegas.len() != other.omegas.len()
            || self
                .omegas
                .iter()
                .zip(&other.omegas)
                .any(|(a, b)| (*a - *b).abs() > T::eps() * T::lit(64.0) * a.abs())
        {
            return Err(Error::GridMismatch("frequency grids differ".into()));
        }
        Ok(())
    }

    /// Errors unless both sample sets share grid and dimensions.
    pub fn check_aligned(&self, other: &Self) -> Result<()> {
        self.check_same_grid(other)?;
        if self.shape() != other.shape() {
            return Err(Error::GridMismatch(format!(
                "response shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Pointwise `self − other`.
    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.check_aligned(other)?;
        Ok(Self {
            omegas: self.omegas.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Spectral norm per grid point.
    pub fn norms(&self) -> Vec<T> {
        self.values.iter().map(spectral_norm).collect()
    }
}

/// FRF by dense complex factorization at every grid frequency.
pub fn frf_direct<T: Real>(model: &SecondOrderModel<T>, grid: &FrequencyGrid<T>) -> Result<FrfSamples<T>> {
    let values = grid
        .omegas()
        .par_iter()
        .map(|&w| model.frf_at(w))
        .collect::<Result<Vec<_>>>()?;
    FrfSamples::new(grid.omegas().to_vec(), values)
}

/// Mass-normalized undamped modes of a model, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct ModalBasis<T: Real> {
    /// Squared angular eigenfrequencies `ω_ℓ²`.
    pub omega_sq: DVector<T>,
    /// Mass-normalized mode shapes as columns.
    pub modes: DMatrix<T>,
}

impl<T: Real> ModalBasis<T> {
    pub fn of(model: &SecondOrderModel<T>) -> Result<Self> {
        let (omega_sq, modes) = linalg::generalized_sym_eigen(model.stiffness(), model.mass())?;
        Ok(Self { omega_sq, modes })
    }

    /// Angular eigenfrequencies, negative round-off clamped to zero.
    pub fn omegas(&self) -> Vec<T> {
        self.omega_sq
            .iter()
            .map(|&l| if l > T::zero() { l.sqrt() } else { T::zero() })
            .collect()
    }

    /// Modal superposition with uniform modal damping ratio `zeta`.
    pub fn frf_at(&self, model: &SecondOrderModel<T>, omega: T, zeta: T) -> DMatrix<Cx<T>> {
        let fphi = model.output_map() * &self.modes;
        let phitb = self.modes.transpose() * model.input_map();
        let (p, m) = (model.p(), model.m());
        let mut h = DMatrix::from_element(p, m, cx(T::zero(), T::zero()));
        for (l, wl) in self.omegas().into_iter().enumerate() {
            let den = cx(
                wl * wl - omega * omega,
                T::lit(2.0) * zeta * wl * omega,
            );
            let inv = cx(T::one(), T::zero()) / den;
            for j in 0..m {
                let b = phitb[(l, j)];
                if b == T::zero() {
                    continue;
                }
                for i in 0..p {
                    h[(i, j)] += inv * cx(fphi[(i, l)] * b, T::zero());
                }
            }
        }
        h
    }
}

/// FRF by modal superposition over all `n` modes with damping ratio `zeta`.
pub fn frf_modal<T: Real>(
    model: &SecondOrderModel<T>,
    grid: &FrequencyGrid<T>,
    damping_ratio: T,
) -> Result<FrfSamples<T>> {
    let basis = ModalBasis::of(model)?;
    let values = grid
        .omegas()
        .par_iter()
        .map(|&w| basis.frf_at(model, w, damping_ratio))
        .collect();
    FrfSamples::new(grid.omegas().to_vec(), values)
}

/// Replaces the damping matrix by `M Φ diag(2ζω_ℓ) Φᵀ M`, giving every
/// mode the damping ratio `ζ`.
pub fn apply_modal_damping<T: Real>(
    model: &SecondOrderModel<T>,
    damping_ratio: T,
) -> Result<SecondOrderModel<T>> {
    if !(damping_ratio >= T::zero() && damping_ratio < T::one()) {
        return Err(Error::InvalidModel(format!(
            "modal damping ratio {} outside [0, 1)",
            damping_ratio.as_f64()
        )));
    }
    let basis = ModalBasis::of(model)?;
    modal_damping_from_basis(model, &basis, damping_ratio)
}

pub(crate) fn modal_damping_from_basis<T: Real>(
    model: &SecondOrderModel<T>,
    basis: &ModalBasis<T>,
    damping_ratio: T,
) -> Result<SecondOrderModel<T>> {
    let two = T::lit(2.0);
    let diag = DVector::from_iterator(
        model.n(),
        basis.omegas().into_iter().map(|w| two * damping_ratio * w),
    );
    let m_phi = model.mass() * &basis.modes;
    let mut scaled = m_phi.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= diag[j];
    }
    let c = linalg::symmetrize(&(scaled * m_phi.transpose()));
    model.with_damping(c)
}

/// Ordered internal and boundary DOF index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofPartition {
    n: usize,
    internal: Vec<usize>,
    boundary: Vec<usize>,
}

impl DofPartition {
    pub fn new(n: usize, internal: Vec<usize>, boundary: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in internal.iter().chain(&boundary) {
            if i >= n {
                return Err(Error::InvalidPartition(format!("index {i} out of range 0..{n}")));
            }
            if seen[i] {
                return Err(Error::InvalidPartition(format!("index {i} listed twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidPartition("partition does not cover every DOF".into()));
        }
        Ok(Self { n, internal, boundary })
    }

    /// Boundary set as given (sorted, deduplicated), the rest internal.
    pub fn from_boundary(n: usize, boundary: &[usize]) -> Result<Self> {
        let mut b = boundary.to_vec();
        b.sort_unstable();
        b.dedup();
        let mut is_b = vec![false; n];
        for &i in &b {
            if i >= n {
                return Err(Error::InvalidPartition(format!("index {i} out of range 0..{n}")));
            }
            is_b[i] = true;
        }
        let internal = (0..n).filter(|&i| !is_b[i]).collect();
        Self::new(n, internal, b)
    }

    /// Boundary = every DOF touched by the input or output map.
    pub fn from_maps<T: Real>(model: &SecondOrderModel<T>) -> Self {
        Self::from_maps_and(model, &[]).expect("indices from the model are in range")
    }

    /// Boundary = `extra` plus every DOF touched by the maps.
    pub fn from_maps_and<T: Real>(model: &SecondOrderModel<T>, extra: &[usize]) -> Result<Self> {
        let mut b: Vec<usize> = extra.to_vec();
        b.extend(touched_dofs(model));
        Self::from_boundary(model.n(), &b)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn internal(&self) -> &[usize] {
        &self.internal
    }
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }
    pub fn n_internal(&self) -> usize {
        self.internal.len()
    }
    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    /// Internal indices followed by boundary indices.
    pub fn ordering(&self) -> Vec<usize> {
        self.internal.iter().chain(&self.boundary).copied().collect()
    }
}

fn touched_dofs<T: Real>(model: &SecondOrderModel<T>) -> Vec<usize> {
    let b = model.input_map();
    let f = model.output_map();
    (0..model.n())
        .filter(|&i| {
            b.row(i).iter().any(|v| *v != T::zero()) || f.column(i).iter().any(|v| *v != T::zero())
        })
        .collect()
}

/// The four blocks of a matrix under an (internal, boundary) partition.
#[derive(Debug, Clone)]
pub struct Blocks<T: Real> {
    pub ii: DMatrix<T>,
    pub ib: DMatrix<T>,
    pub bi: DMatrix<T>,
    pub bb: DMatrix<T>,
}

impl<T: Real> Blocks<T> {
    fn split(a: &DMatrix<T>, p: &DofPartition) -> Self {
        Self {
            ii: a.select_rows(p.internal()).select_columns(p.internal()),
            ib: a.select_rows(p.internal()).select_columns(p.boundary()),
            bi: a.select_rows(p.boundary()).select_columns(p.internal()),
            bb: a.select_rows(p.boundary()).select_columns(p.boundary()),
        }
    }

    fn reassemble(&self, p: &DofPartition) -> DMatrix<T> {
        let mut a = DMatrix::zeros(p.n(), p.n());
        for (r, &i) in p.internal().iter().enumerate() {
            for (c, &j) in p.internal().iter().enumerate() {
                a[(i, j)] = self.ii[(r, c)];
            }
            for (c, &j) in p.boundary().iter().enumerate() {
                a[(i, j)] = self.ib[(r, c)];
            }
        }
        for (r, &i) in p.boundary().iter().enumerate() {
            for (c, &j) in p.internal().iter().enumerate() {
                a[(i, j)] = self.bi[(r, c)];
            }
            for (c, &j) in p.boundary().iter().enumerate() {
                a[(i, j)] = self.bb[(r, c)];
            }
        }
        a
    }
}

/// Model matrices split into internal/boundary blocks; `B = [O; B_b]`,
/// `Fᵀ = [O; F_bᵀ]`.
#[derive(Debug, Clone)]
pub struct PartitionedBlocks<T: Real> {
    pub partition: DofPartition,
    pub mass: Blocks<T>,
    pub damping: Blocks<T>,
    pub stiffness: Blocks<T>,
    pub input_b: DMatrix<T>,
    pub output_b: DMatrix<T>,
}

impl<T: Real> PartitionedBlocks<T> {
    /// Rebuilds `(M, C, K, B, F)` in the original DOF ordering.
    pub fn reassemble(&self) -> (DMatrix<T>, DMatrix<T>, DMatrix<T>, DMatrix<T>, DMatrix<T>) {
        let p = &self.partition;
        let m_in = self.input_b.ncols();
        let p_out = self.output_b.nrows();
        let mut b = DMatrix::zeros(p.n(), m_in);
        for (r, &i) in p.boundary().iter().enumerate() {
            b.set_row(i, &self.input_b.row(r));
        }
        let mut f = DMatrix::zeros(p_out, p.n());
        for (c, &j) in p.boundary().iter().enumerate() {
            f.set_column(j, &self.output_b.column(c));
        }
        (
            self.mass.reassemble(p),
            self.damping.reassemble(p),
            self.stiffness.reassemble(p),
            b,
            f,
        )
    }
}

pub fn partition_blocks<T: Real>(
    model: &SecondOrderModel<T>,
    partition: &DofPartition,
) -> Result<PartitionedBlocks<T>> {
    if partition.n() != model.n() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} DOF, model has {}",
            partition.n(),
            model.n()
        )));
    }
    for &i in partition.internal() {
        if model.input_map().row(i).iter().any(|v| *v != T::zero()) {
            return Err(Error::NonBoundaryLoading { map: "input", dof: i });
        }
        if model.output_map().column(i).iter().any(|v| *v != T::zero()) {
            return Err(Error::NonBoundaryLoading { map: "output", dof: i });
        }
    }
    Ok(PartitionedBlocks {
        partition: partition.clone(),
        mass: Blocks::split(model.mass(), partition),
        damping: Blocks::split(model.damping(), partition),
        stiffness: Blocks::split(model.stiffness(), partition),
        input_b: model.input_map().select_rows(partition.boundary()),
        output_b: model.output_map().select_columns(partition.boundary()),
    })
}

/// Damping description in the JSON matrix format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum DampingSpec {
    Matrix(Vec<Vec<f64>>),
    Modal { modal_zeta: f64 },
}

/// Origin of a reduced model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub component_id: String,
    pub f_cut_hz: f64,
    pub n_hat: usize,
}

/// JSON document for dense models: row-major arrays of finite doubles.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub n: usize,
    pub mass: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<DampingSpec>,
    pub stiffness: Vec<Vec<f64>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub input_map: Option<Vec<Vec<f64>>>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub output_map: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn rows_to_matrix<T: Real>(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: Option<usize>) -> Result<DMatrix<T>> {
    if rows.len() != nrows {
        return Err(Error::InvalidModel(format!("{name} has {} rows, expected {nrows}", rows.len())));
    }
    let ncols = match ncols {
        Some(c) => c,
        None => rows.first().map(|r| r.len()).unwrap_or(0),
    };
    let mut out = DMatrix::zeros(nrows, ncols);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::InvalidModel(format!(
                "{name} row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
        for (j, v) in r.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidModel(format!("{name}[{i}][{j}] is not finite")));
            }
            out[(i, j)] = T::lit(*v);
        }
    }
    Ok(out)
}

fn matrix_to_rows<T: Real>(a: &DMatrix<T>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].as_f64()).collect())
        .collect()
}

impl ModelDocument {
    pub fn from_model<T: Real>(
        model: &SecondOrderModel<T>,
        boundary: Option<&DofPartition>,
        provenance: Option<Provenance>,
    ) -> Self {
        Self {
            n: model.n(),
            mass: matrix_to_rows(model.mass()),
            damping: Some(DampingSpec::Matrix(matrix_to_rows(model.damping()))),
            stiffness: matrix_to_rows(model.stiffness()),
            input_map: Some(matrix_to_rows(model.input_map())),
            output_map: Some(matrix_to_rows(model.output_map())),
            boundary: boundary.map(|p| p.boundary().to_vec()),
            dof_labels: Some(model.dof_labels().to_vec()),
            provenance,
        }
    }

    /// Builds the model (applying modal damping when requested) and the
    /// partition implied by `boundary` together with the maps.
    pub fn to_model<T: Real>(&self) -> Result<(SecondOrderModel<T>, DofPartition)> {
        let n = self.n;
        let mass = rows_to_matrix("mass", &self.mass, n, Some(n))?;
        let stiffness = rows_to_matrix("stiffness", &self.stiffness, n, Some(n))?;
        let input_map = match &self.input_map {
            Some(b) => rows_to_matrix("B", b, n, None)?,
            None => DMatrix::zeros(n, 0),
        };
        let output_map = match &self.output_map {
            Some(f) if !f.is_empty() => rows_to_matrix("F", f, f.len(), Some(n))?,
            _ => DMatrix::zeros(0, n),
        };
        let (damping, zeta) = match &self.damping {
            Some(DampingSpec::Matrix(c)) => (rows_to_matrix("damping", c, n, Some(n))?, None),
            Some(DampingSpec::Modal { modal_zeta }) => (DMatrix::zeros(n, n), Some(*modal_zeta)),
            None => (DMatrix::zeros(n, n), None),
        };
        let mut model = SecondOrderModel::new(mass, damping, stiffness, input_map, output_map)?;
        if let Some(labels) = &self.dof_labels {
            model = model.with_labels(labels.clone())?;
        }
        if let Some(z) = zeta {
            model = apply_modal_damping(&model, T::lit(z))?;
        }
        let partition = DofPartition::from_maps_and(&model, self.boundary.as_deref().unwrap_or(&[]))?;
        Ok((model, partition))
    }
}
