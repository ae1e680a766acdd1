//! Hintz-Herting component mode synthesis.
//!
//! The reduction basis combines inertia-relief modes, free-interface elastic
//! modes made independent of the boundary motion, and static constraint
//! modes:
//!
//! ```text
//!     [q_i]   [Φ_ir  Φ_ue  Ψ] [η_ir]
//!     [q_b] = [ O     O    I] [η_ue]
//!                             [q_b ]
//! ```
//!
//! Rows of every basis matrix here follow the partition ordering (internal
//! DOF first, then boundary DOF).

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    partition_blocks, DofPartition, FrfSamples, ModelDocument, PartitionedBlocks, Provenance, SecondOrderModel,
};
use crate::scalar::Real;

/// Relative threshold on `ω²` below which a mode counts as rigid.
pub const RIGID_TOL: f64 = 1e-8;
/// Relative singular-value threshold of the basis rank test.
pub const RANK_TOL: f64 = 1e-10;

/// Pointwise component error `Ĥ − H`.
pub type ErrorSamples<T> = FrfSamples<T>;

fn two_pi<T: Real>() -> T {
    T::lit(2.0 * PI)
}

fn factor_internal<T: Real>(blocks: &PartitionedBlocks<T>) -> Result<Option<Cholesky<T, nalgebra::Dyn>>> {
    if blocks.partition.n_internal() == 0 {
        return Ok(None);
    }
    Cholesky::new(linalg::symmetrize(&blocks.stiffness.ii))
        .map(Some)
        .ok_or(Error::SingularInternalStiffness)
}

/// `Ψ = −K_ii⁻¹ K_ib`.
pub fn static_constraint_modes<T: Real>(blocks: &PartitionedBlocks<T>) -> Result<DMatrix<T>> {
    let (ni, nb) = (blocks.partition.n_internal(), blocks.partition.n_boundary());
    match factor_internal(blocks)? {
        None => Ok(DMatrix::zeros(ni, nb)),
        Some(ch) => Ok(-ch.solve(&blocks.stiffness.ib)),
    }
}

/// Free-interface modes split into rigid and retained elastic sets.
#[derive(Debug, Clone)]
pub struct FreeInterfaceModes<T: Real> {
    /// `n × r`, mass-normalized, partition-ordered rows.
    pub rigid: DMatrix<T>,
    /// `n × e`, mass-normalized, ascending frequency, partition-ordered rows.
    pub elastic: DMatrix<T>,
    /// All `n` angular eigenfrequencies (rad/s), ascending, rigid ones first.
    pub omegas: Vec<T>,
    pub n_rigid: usize,
}

/// Full spectrum of `(K − ω²M)φ = 0` in partition ordering.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Real> {
    pub omega_sq: DVector<T>,
    /// Mass-normalized, partition-ordered rows.
    pub modes: DMatrix<T>,
    pub n_rigid: usize,
}

impl<T: Real> Spectrum<T> {
    pub fn of(model: &SecondOrderModel<T>, partition: &DofPartition) -> Result<Self> {
        let order = partition.ordering();
        let k = model.stiffness().select_rows(&order).select_columns(&order);
        let m = model.mass().select_rows(&order).select_columns(&order);
        let (omega_sq, modes) = linalg::generalized_sym_eigen(&k, &m)?;
        if omega_sq.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigenSolveFailure("non-finite eigenvalue".into()));
        }
        let top = omega_sq.iter().fold(T::zero(), |a, &b| if b > a { b } else { a });
        let n_rigid = omega_sq.iter().filter(|&&l| l < T::lit(RIGID_TOL) * top).count();
        Ok(Self {
            omega_sq,
            modes,
            n_rigid,
        })
    }

    pub fn omegas(&self) -> Vec<T> {
        self.omega_sq
            .iter()
            .map(|&l| if l > T::zero() { l.sqrt() } else { T::zero() })
            .collect()
    }

    /// Elastic modes with `ω ≤ ω_cut` (inclusive).
    pub fn elastic_count(&self, omega_cut: T) -> usize {
        let w2 = omega_cut * omega_cut;
        self.omega_sq
            .iter()
            .skip(self.n_rigid)
            .take_while(|&&l| l <= w2)
            .count()
    }

    /// Elastic angular eigenfrequencies, ascending.
    pub fn elastic_omegas(&self) -> Vec<T> {
        self.omegas().split_off(self.n_rigid)
    }
}

/// Rigid modes and the elastic modes up to `f_cut_hz` (inclusive).
pub fn free_interface_modes<T: Real>(
    model: &SecondOrderModel<T>,
    partition: &DofPartition,
    f_cut_hz: T,
) -> Result<FreeInterfaceModes<T>> {
    if !(f_cut_hz > T::zero()) {
        return Err(Error::InvalidModel(format!("cut-off must be positive, got {}", f_cut_hz.as_f64())));
    }
    let s = Spectrum::of(model, partition)?;
    let e = s.elastic_count(two_pi::<T>() * f_cut_hz);
    Ok(FreeInterfaceModes {
        rigid: s.modes.columns(0, s.n_rigid).into_owned(),
        elastic: s.modes.columns(s.n_rigid, e).into_owned(),
        omegas: s.omegas(),
        n_rigid: s.n_rigid,
    })
}

/// `Φ_ue = Φ_e,i − Ψ Φ_e,b` for partition-ordered `Φ_e` with `n_i` internal rows.
pub fn uncoupled_elastic_modes<T: Real>(elastic: &DMatrix<T>, psi: &DMatrix<T>) -> Result<DMatrix<T>> {
    let ni = psi.nrows();
    let nb = psi.ncols();
    if elastic.nrows() != ni + nb {
        return Err(Error::DimensionMismatch(format!(
            "elastic modes have {} rows, partition has {}",
            elastic.nrows(),
            ni + nb
        )));
    }
    Ok(elastic.rows(0, ni) - psi * elastic.rows(ni, nb))
}

/// `Φ_ir = −K_ii⁻¹ (M_ib + M_ii Ψ) Φ_r,b`.
pub fn inertia_relief_modes<T: Real>(
    blocks: &PartitionedBlocks<T>,
    psi: &DMatrix<T>,
    rigid: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let (ni, nb) = (blocks.partition.n_internal(), blocks.partition.n_boundary());
    if rigid.nrows() != ni + nb || psi.shape() != (ni, nb) {
        return Err(Error::DimensionMismatch("rigid modes or Ψ do not match the partition".into()));
    }
    let r = rigid.ncols();
    match factor_internal(blocks)? {
        None => Ok(DMatrix::zeros(0, r)),
        Some(ch) => {
            let load = (&blocks.mass.ib + &blocks.mass.ii * psi) * rigid.rows(ni, nb);
            Ok(-ch.solve(&load))
        }
    }
}

/// Assembles `T = [[Φ_ir, Φ_ue, Ψ], [O, O, I]]` and checks full column rank.
pub fn build_transformation<T: Real>(
    phi_ir: &DMatrix<T>,
    phi_ue: &DMatrix<T>,
    psi: &DMatrix<T>,
    n_b: usize,
) -> Result<DMatrix<T>> {
    let ni = psi.nrows();
    if phi_ir.nrows() != ni || phi_ue.nrows() != ni || psi.ncols() != n_b {
        return Err(Error::DimensionMismatch(format!(
            "basis blocks have rows ({}, {}, {}) and Ψ is {}×{}, boundary size {n_b}",
            phi_ir.nrows(),
            phi_ue.nrows(),
            psi.nrows(),
            psi.nrows(),
            psi.ncols()
        )));
    }
    let (r, e) = (phi_ir.ncols(), phi_ue.ncols());
    let cols = r + e + n_b;
    let mut t = DMatrix::zeros(ni + n_b, cols);
    t.view_mut((0, 0), (ni, r)).copy_from(phi_ir);
    t.view_mut((0, r), (ni, e)).copy_from(phi_ue);
    t.view_mut((0, r + e), (ni, n_b)).copy_from(psi);
    for k in 0..n_b {
        t[(ni + k, r + e + k)] = T::one();
    }
    check_rank(&t)?;
    Ok(t)
}

/// Numerical rank of the column-normalized basis; columns are scaled first
/// so that physically small (but independent) directions are not flagged.
fn check_rank<T: Real>(t: &DMatrix<T>) -> Result<()> {
    let cols = t.ncols();
    if cols == 0 {
        return Ok(());
    }
    if cols > t.nrows() {
        return Err(Error::RankDeficientBasis {
            rank: t.nrows(),
            columns: cols,
            offending: (t.nrows()..cols).collect(),
        });
    }
    let mut u = t.clone();
    for mut c in u.column_iter_mut() {
        let nrm = c.norm();
        if nrm > T::zero() {
            c /= nrm;
        }
    }
    let sv = u.clone().singular_values();
    let top = sv.max();
    let tol = T::lit(RANK_TOL) * top;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank == cols {
        return Ok(());
    }
    // greedy Gram-Schmidt names the columns that add least to the span
    let mut accepted: Vec<DVector<T>> = Vec::new();
    let mut residuals: Vec<(usize, T)> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut v = u.column(j).into_owned();
        for _ in 0..2 {
            for q in &accepted {
                let c = q.dot(&v);
                v.axpy(-c, q, T::one());
            }
        }
        let nrm = v.norm();
        residuals.push((j, nrm));
        if nrm > T::lit(1e-8) {
            accepted.push(v / nrm);
        }
    }
    residuals.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut offending: Vec<usize> = residuals.iter().take(cols - rank).map(|(j, _)| *j).collect();
    offending.sort_unstable();
    Err(Error::RankDeficientBasis {
        rank,
        columns: cols,
        offending,
    })
}

/// All mode sets of one reduction.
#[derive(Debug, Clone)]
pub struct HhBasis<T: Real> {
    pub partition: DofPartition,
    /// `n_i × n_b`.
    pub static_constraint_modes: DMatrix<T>,
    /// `n × r`.
    pub rigid_modes: DMatrix<T>,
    /// `n × e`.
    pub elastic_modes: DMatrix<T>,
    /// `n_i × e`.
    pub uncoupled_elastic_modes: DMatrix<T>,
    /// `n_i × r`.
    pub inertia_relief_modes: DMatrix<T>,
    /// `n × (r + e + n_b)`, partition-ordered rows.
    pub transformation: DMatrix<T>,
    /// Angular eigenfrequencies of the rigid and retained elastic modes.
    pub eigenfrequencies: Vec<T>,
}

impl<T: Real> HhBasis<T> {
    pub fn n_rigid(&self) -> usize {
        self.rigid_modes.ncols()
    }
    pub fn n_elastic(&self) -> usize {
        self.elastic_modes.ncols()
    }
    pub fn n_hat(&self) -> usize {
        self.transformation.ncols()
    }

    /// `T` with rows in the model's original DOF ordering.
    pub fn transformation_physical(&self) -> DMatrix<T> {
        let mut tp = DMatrix::zeros(self.transformation.nrows(), self.transformation.ncols());
        for (r, &i) in self.partition.ordering().iter().enumerate() {
            tp.set_row(i, &self.transformation.row(r));
        }
        tp
    }
}

/// Reduced component with its origin.
#[derive(Debug, Clone)]
pub struct ReducedModel<T: Real> {
    pub model: SecondOrderModel<T>,
    pub component_id: String,
    /// Cut-off frequency in Hz the reduction was requested with.
    pub f_cut_hz: T,
    pub n_rigid: usize,
    pub n_elastic: usize,
    pub n_boundary: usize,
}

impl<T: Real> ReducedModel<T> {
    pub fn n_hat(&self) -> usize {
        self.n_rigid + self.n_elastic + self.n_boundary
    }

    /// Generalized modal coordinates internal, physical boundary DOF last.
    pub fn partition(&self) -> DofPartition {
        let split = self.n_rigid + self.n_elastic;
        DofPartition::new(self.n_hat(), (0..split).collect(), (split..self.n_hat()).collect())
            .expect("contiguous split is a valid partition")
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            component_id: self.component_id.clone(),
            f_cut_hz: self.f_cut_hz.as_f64(),
            n_hat: self.n_hat(),
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument::from_model(&self.model, Some(&self.partition()), Some(self.provenance()))
    }

    /// Keeps only the first `n_elastic` elastic coordinates. The HH bases for
    /// nested mode sets are nested, so this equals reducing afresh with the
    /// smaller set.
    pub fn truncate_elastic(&self, n_elastic: usize, f_cut_hz: T) -> Result<Self> {
        if n_elastic > self.n_elastic {
            return Err(Error::InvalidModel(format!(
                "cannot keep {n_elastic} of {} elastic modes",
                self.n_elastic
            )));
        }
        let r = self.n_rigid;
        let keep: Vec<usize> = (0..r + n_elastic)
            .chain(r + self.n_elastic..self.n_hat())
            .collect();
        let m = &self.model;
        let sub = |a: &DMatrix<T>| a.select_rows(&keep).select_columns(&keep);
        let labels = keep.iter().map(|&i| m.dof_labels()[i].clone()).collect();
        let model = SecondOrderModel::new_unchecked(
            sub(m.mass()),
            sub(m.damping()),
            sub(m.stiffness()),
            m.input_map().select_rows(&keep),
            m.output_map().select_columns(&keep),
        )?
        .with_labels(labels)?;
        Ok(Self {
            model,
            component_id: self.component_id.clone(),
            f_cut_hz,
            n_rigid: r,
            n_elastic,
            n_boundary: self.n_boundary,
        })
    }
}

/// Projects a model onto a partition-ordered basis `T`: `TᵀMT`, `TᵀCT`,
/// `TᵀKT`, `TᵀB`, `FT`.
pub fn project<T: Real>(
    model: &SecondOrderModel<T>,
    partition: &DofPartition,
    t: &DMatrix<T>,
    labels: Vec<String>,
) -> Result<SecondOrderModel<T>> {
    let order = partition.ordering();
    let sq = |a: &DMatrix<T>| {
        let ap = a.select_rows(&order).select_columns(&order);
        linalg::symmetrize(&(t.transpose() * ap * t))
    };
    let b = t.transpose() * model.input_map().select_rows(&order);
    let f = model.output_map().select_columns(&order) * t;
    SecondOrderModel::new_unchecked(sq(model.mass()), sq(model.damping()), sq(model.stiffness()), b, f)?
        .with_labels(labels)
}

fn reduced_labels<T: Real>(model: &SecondOrderModel<T>, partition: &DofPartition, r: usize, e: usize) -> Vec<String> {
    (0..r)
        .map(|k| format!("ir{k}"))
        .chain((0..e).map(|k| format!("ue{k}")))
        .chain(partition.boundary().iter().map(|&i| model.dof_labels()[i].clone()))
        .collect()
}

/// Caches the partition blocks, `Ψ` and the full free-interface spectrum of
/// one component so that reductions at many cut-offs are cheap.
#[derive(Debug, Clone)]
pub struct HhReducer<T: Real> {
    pub component_id: String,
    model: SecondOrderModel<T>,
    blocks: PartitionedBlocks<T>,
    psi: DMatrix<T>,
    spectrum: Spectrum<T>,
    phi_ir: DMatrix<T>,
}

impl<T: Real> HhReducer<T> {
    pub fn new(component_id: impl Into<String>, model: SecondOrderModel<T>, partition: &DofPartition) -> Result<Self> {
        let blocks = partition_blocks(&model, partition)?;
        let psi = static_constraint_modes(&blocks)?;
        let spectrum = Spectrum::of(&model, partition)?;
        let rigid = spectrum.modes.columns(0, spectrum.n_rigid).into_owned();
        let phi_ir = if partition.n_internal() == 0 {
            DMatrix::zeros(0, 0)
        } else {
            inertia_relief_modes(&blocks, &psi, &rigid)?
        };
        Ok(Self {
            component_id: component_id.into(),
            model,
            blocks,
            psi,
            spectrum,
            phi_ir,
        })
    }

    pub fn model(&self) -> &SecondOrderModel<T> {
        &self.model
    }
    pub fn partition(&self) -> &DofPartition {
        &self.blocks.partition
    }
    pub fn spectrum(&self) -> &Spectrum<T> {
        &self.spectrum
    }
    /// Rigid modes in the basis; none when there are no internal DOF, as
    /// the boundary coordinates then already span everything.
    pub fn n_rigid(&self) -> usize {
        if self.partition().n_internal() == 0 {
            0
        } else {
            self.spectrum.n_rigid
        }
    }
    /// Largest elastic mode count a reduction can keep.
    pub fn max_elastic(&self) -> usize {
        if self.partition().n_internal() == 0 {
            0
        } else {
            self.model.n() - self.spectrum.n_rigid
        }
    }

    /// Elastic modes retained for a cut-off in Hz (inclusive).
    pub fn elastic_count(&self, f_cut_hz: T) -> usize {
        self.spectrum
            .elastic_count(two_pi::<T>() * f_cut_hz)
            .min(self.max_elastic())
    }

    /// Frequency in Hz of the `e`-th elastic mode (1-based); 0 for `e = 0`.
    pub fn elastic_frequency_hz(&self, e: usize) -> T {
        if e == 0 {
            return T::zero();
        }
        self.spectrum.elastic_omegas()[e - 1] / two_pi::<T>()
    }

    /// Basis with the first `e` elastic modes.
    pub fn basis(&self, e: usize) -> Result<HhBasis<T>> {
        let r = self.n_rigid();
        if self.spectrum.n_rigid + e > self.model.n() {
            return Err(Error::RankDeficientBasis {
                rank: self.model.n(),
                columns: r + e + self.partition().n_boundary(),
                offending: (self.model.n()..r + e).collect(),
            });
        }
        let rigid = self.spectrum.modes.columns(0, r).into_owned();
        let elastic = self.spectrum.modes.columns(self.spectrum.n_rigid, e).into_owned();
        let phi_ue = uncoupled_elastic_modes(&elastic, &self.psi)?;
        let t = build_transformation(&self.phi_ir, &phi_ue, &self.psi, self.partition().n_boundary())?;
        let omegas = self.spectrum.omegas();
        Ok(HhBasis {
            partition: self.partition().clone(),
            static_constraint_modes: self.psi.clone(),
            rigid_modes: rigid,
            elastic_modes: elastic,
            uncoupled_elastic_modes: phi_ue,
            inertia_relief_modes: self.phi_ir.clone(),
            transformation: t,
            eigenfrequencies: omegas[..r]
                .iter()
                .chain(&omegas[self.spectrum.n_rigid..self.spectrum.n_rigid + e])
                .copied()
                .collect(),
        })
    }

    /// Reduction keeping the first `e` elastic modes, labelled with `f_cut_hz`.
    pub fn reduce_elastic(&self, e: usize, f_cut_hz: T) -> Result<ReducedModel<T>> {
        let basis = self.basis(e)?;
        let r = basis.n_rigid();
        let labels = reduced_labels(&self.model, self.partition(), r, e);
        let model = project(&self.model, self.partition(), &basis.transformation, labels)?;
        Ok(ReducedModel {
            model,
            component_id: self.component_id.clone(),
            f_cut_hz,
            n_rigid: r,
            n_elastic: e,
            n_boundary: self.partition().n_boundary(),
        })
    }

    /// Reduction keeping every elastic mode up to `f_cut_hz` (inclusive).
    pub fn reduce(&self, f_cut_hz: T) -> Result<ReducedModel<T>> {
        if !(f_cut_hz > T::zero()) {
            return Err(Error::InvalidModel(format!("cut-off must be positive, got {}", f_cut_hz.as_f64())));
        }
        self.reduce_elastic(self.elastic_count(f_cut_hz), f_cut_hz)
    }
}

/// One-shot HH reduction of `model` at `f_cut_hz`.
pub fn reduce<T: Real>(
    model: &SecondOrderModel<T>,
    partition: &DofPartition,
    f_cut_hz: T,
    component_id: &str,
) -> Result<ReducedModel<T>> {
    HhReducer::new(component_id, model.clone(), partition)?.reduce(f_cut_hz)
}

/// `E = Ĥ − H` on a common grid.
pub fn component_error<T: Real>(reference: &FrfSamples<T>, reduced: &FrfSamples<T>) -> Result<ErrorSamples<T>> {
    reduced.minus(reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{frf_direct, FrequencyGrid};
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    /// ground -k1- [q0] -k2- [q1], q1 is the boundary.
    fn chain(k1: f64, k2: f64) -> (SecondOrderModel<f64>, DofPartition) {
        let model = SecondOrderModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            m(2, 2, &[k1 + k2, -k2, -k2, k2]),
            m(2, 1, &[0.0, 1.0]),
            m(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        (model, DofPartition::new(2, vec![0], vec![1]).unwrap())
    }

    /// free two-mass chain, masses `mass`, spring `k`, q1 boundary.
    fn free_pair(mass: f64, k: f64) -> (SecondOrderModel<f64>, DofPartition) {
        let model = SecondOrderModel::new(
            DMatrix::identity(2, 2) * mass,
            DMatrix::zeros(2, 2),
            m(2, 2, &[k, -k, -k, k]),
            m(2, 1, &[0.0, 1.0]),
            m(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        (model, DofPartition::new(2, vec![0], vec![1]).unwrap())
    }

    #[test]
    fn constraint_mode_of_chain() {
        let (model, part) = chain(2.0, 1.0);
        let psi = static_constraint_modes(&partition_blocks(&model, &part).unwrap()).unwrap();
        assert_relative_eq!(psi[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
        let (model, part) = free_pair(1.0, 1.0);
        let psi = static_constraint_modes(&partition_blocks(&model, &part).unwrap()).unwrap();
        assert_relative_eq!(psi[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_constraint_mode_is_zero() {
        let model = SecondOrderModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            m(2, 1, &[0.0, 1.0]),
            m(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        let part = DofPartition::new(2, vec![0], vec![1]).unwrap();
        let psi = static_constraint_modes(&partition_blocks(&model, &part).unwrap()).unwrap();
        assert_eq!(psi[(0, 0)], 0.0);
    }

    #[test]
    fn singular_internal_stiffness_is_reported() {
        // internal DOF 0 is attached to nothing
        let model = SecondOrderModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            m(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            m(2, 1, &[0.0, 1.0]),
            m(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        let part = DofPartition::new(2, vec![0], vec![1]).unwrap();
        let blocks = partition_blocks(&model, &part).unwrap();
        assert!(matches!(static_constraint_modes(&blocks), Err(Error::SingularInternalStiffness)));
    }

    #[test]
    fn free_pair_modes() {
        let (model, part) = free_pair(1.0, 1.0);
        let modes = free_interface_modes(&model, &part, 1.0).unwrap();
        assert_eq!(modes.n_rigid, 1);
        assert_eq!(modes.elastic.ncols(), 1);
        assert_relative_eq!(modes.omegas[1], 2f64.sqrt(), epsilon = 1e-12);
        // below the first elastic frequency only the rigid mode is left
        let low = free_interface_modes(&model, &part, 0.1).unwrap();
        assert_eq!(low.elastic.ncols(), 0);
        // inclusive cut-off
        let exact = free_interface_modes(&model, &part, 2f64.sqrt() / (2.0 * PI) * (1.0 + 1e-12)).unwrap();
        assert_eq!(exact.elastic.ncols(), 1);
    }

    #[test]
    fn inertia_relief_of_free_pair() {
        let (model, part) = free_pair(1.0, 1.0);
        let blocks = partition_blocks(&model, &part).unwrap();
        let psi = static_constraint_modes(&blocks).unwrap();
        let modes = free_interface_modes(&model, &part, 0.1).unwrap();
        let phi_ir = inertia_relief_modes(&blocks, &psi, &modes.rigid).unwrap();
        // −(1/k)(M_ib + M_ii Ψ) Φ_r,b with Φ_r = ±1/√2 on both DOF
        let phi_rb = modes.rigid[(1, 0)];
        assert_relative_eq!(phi_ir[(0, 0)], -phi_rb, epsilon = 1e-14);
        assert_relative_eq!(phi_rb.abs(), 1.0 / 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn constrained_component_has_no_inertia_relief() {
        let (model, part) = chain(2.0, 1.0);
        let blocks = partition_blocks(&model, &part).unwrap();
        let psi = static_constraint_modes(&blocks).unwrap();
        let modes = free_interface_modes(&model, &part, 1e3).unwrap();
        assert_eq!(modes.n_rigid, 0);
        assert_eq!(inertia_relief_modes(&blocks, &psi, &modes.rigid).unwrap().ncols(), 0);
    }

    #[test]
    fn uncoupled_modes_of_chain_by_hand() {
        let (model, part) = chain(2.0, 1.0);
        let modes = free_interface_modes(&model, &part, 1e3).unwrap();
        let psi = DMatrix::from_element(1, 1, 1.0 / 3.0);
        let ue = uncoupled_elastic_modes(&modes.elastic, &psi).unwrap();
        for j in 0..2 {
            assert_relative_eq!(ue[(0, j)], modes.elastic[(0, j)] - modes.elastic[(1, j)] / 3.0, epsilon = 1e-15);
        }
        let zero = DMatrix::zeros(1, 1);
        assert_eq!(uncoupled_elastic_modes(&modes.elastic, &zero).unwrap(), modes.elastic.rows(0, 1));
    }

    #[test]
    fn transformation_shapes() {
        let empty = DMatrix::<f64>::zeros(0, 0);
        let t = build_transformation(&empty, &empty, &DMatrix::zeros(0, 3), 3).unwrap();
        assert_eq!(t, DMatrix::identity(3, 3));
        let psi = DMatrix::from_element(1, 1, 1.0 / 3.0);
        let t = build_transformation(&DMatrix::zeros(1, 0), &DMatrix::zeros(1, 0), &psi, 1).unwrap();
        assert_eq!(t, m(2, 1, &[1.0 / 3.0, 1.0]));
    }

    #[test]
    fn over_complete_basis_is_rejected() {
        let (model, part) = free_pair(1.0, 1.0);
        let reducer = HhReducer::new("pair", model, &part).unwrap();
        // r + e + n_b = 1 + 1 + 1 > n = 2
        match reducer.basis(1) {
            Err(Error::RankDeficientBasis { columns, .. }) => assert_eq!(columns, 3),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        assert!(reducer.basis(0).is_ok());
    }

    #[test]
    fn dependent_columns_are_named() {
        let psi = m(2, 1, &[1.0, 2.0]);
        let ue = m(2, 2, &[1.0, 2.0, 0.0, 0.0]);
        // column 1 of Φ_ue is zero, column 0 duplicates Ψ's internal part
        match build_transformation(&DMatrix::zeros(2, 0), &ue, &psi, 1) {
            Err(Error::RankDeficientBasis { rank, columns, offending }) => {
                assert_eq!((rank, columns), (2, 3));
                assert_eq!(offending, vec![1]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_internal_dof_is_identity_reduction() {
        let (model, _) = chain(2.0, 1.0);
        let all = DofPartition::new(2, vec![], vec![0, 1]).unwrap();
        let model = model.with_maps(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let red = reduce(&model, &all, 10.0, "c").unwrap();
        assert_eq!(red.model.stiffness(), model.stiffness());
        assert_eq!(red.model.mass(), model.mass());
        assert_eq!(red.n_hat(), 2);
    }

    fn beam(n: usize) -> (SecondOrderModel<f64>, DofPartition) {
        // fixed-free spring chain of n masses, loaded and observed at the tip
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] += 1000.0;
            if i + 1 < n {
                k[(i, i)] += 1000.0;
                k[(i + 1, i + 1)] += 0.0;
                k[(i, i + 1)] -= 1000.0;
                k[(i + 1, i)] -= 1000.0;
            }
        }
        let mut b = DMatrix::zeros(n, 1);
        b[(n - 1, 0)] = 1.0;
        let model = SecondOrderModel::new(DMatrix::identity(n, n), DMatrix::zeros(n, n), k, b.clone(), b.transpose())
            .unwrap();
        let model = crate::model::apply_modal_damping(&model, 0.02).unwrap();
        let part = DofPartition::from_maps(&model);
        (model, part)
    }

    #[test]
    fn static_response_is_exact() {
        let (model, part) = beam(12);
        let red = reduce(&model, &part, 1.0, "beam").unwrap();
        let full = model.stiffness().clone().lu().solve(model.input_map()).unwrap();
        let full = (model.output_map() * full)[(0, 0)];
        let r = &red.model;
        let rs = r.stiffness().clone().lu().solve(r.input_map()).unwrap();
        let rs = (r.output_map() * rs)[(0, 0)];
        assert_relative_eq!(rs, full, max_relative = 1e-9);
    }

    #[test]
    fn boundary_rows_are_preserved() {
        let (model, part) = beam(8);
        let reducer = HhReducer::new("beam", model.clone(), &part).unwrap();
        let basis = reducer.basis(3).unwrap();
        let t = &basis.transformation;
        let ni = part.n_internal();
        let tail = t.rows(ni, part.n_boundary());
        for (j, v) in tail.iter().enumerate() {
            let (r, c) = (j % tail.nrows(), j / tail.nrows());
            let expect = if c >= basis.n_rigid() + basis.n_elastic() && c - basis.n_rigid() - basis.n_elastic() == r {
                1.0
            } else {
                0.0
            };
            assert_eq!(*v, expect);
        }
        let red = reducer.reduce_elastic(3, 1.0).unwrap();
        let nb = part.n_boundary();
        let tail_b = red.model.input_map().rows(red.n_hat() - nb, nb).into_owned();
        assert_eq!(tail_b, model.input_map().select_rows(part.boundary()));
    }

    #[test]
    fn retained_frequencies_are_reproduced() {
        let (model, part) = beam(15);
        let reducer = HhReducer::new("beam", model, &part).unwrap();
        let f_cut = reducer.elastic_frequency_hz(4) * 1.0001;
        let red = reducer.reduce(f_cut).unwrap();
        assert_eq!(red.n_elastic, 4);
        let (full, _) = linalg::generalized_sym_eigen(reducer.model().stiffness(), reducer.model().mass()).unwrap();
        let (vals, _) = linalg::generalized_sym_eigen(red.model.stiffness(), red.model.mass()).unwrap();
        let w_cut = 2.0 * PI * f_cut;
        for v in vals.iter().filter(|v| v.sqrt() <= w_cut) {
            let w = v.sqrt();
            let near = full
                .iter()
                .map(|f| (f.sqrt() - w).abs() / f.sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(near < 1e-3, "{w}");
        }
    }

    #[test]
    fn truncation_equals_fresh_reduction() {
        let (model, part) = beam(10);
        let reducer = HhReducer::new("beam", model, &part).unwrap();
        let big = reducer.reduce_elastic(6, 1.0).unwrap();
        let small = reducer.reduce_elastic(2, 0.5).unwrap();
        let cut = big.truncate_elastic(2, 0.5).unwrap();
        assert!((cut.model.stiffness() - small.model.stiffness()).amax() < 1e-9 * small.model.stiffness().amax());
        assert!((cut.model.mass() - small.model.mass()).amax() < 1e-12);
        assert_eq!(cut.model.input_map(), small.model.input_map());
        assert_eq!(cut.n_hat(), small.n_hat());
    }

    #[test]
    fn error_grows_from_zero_without_elastic_modes() {
        let (model, part) = beam(10);
        let red = reduce(&model, &part, 1e-6, "beam").unwrap();
        assert_eq!(red.n_elastic, 0);
        let grid = FrequencyGrid::new(vec![1e-3, 0.5, 1.0, 2.0]).unwrap();
        let full = frf_direct(&model, &grid).unwrap();
        let approx = frf_direct(&red.model, &grid).unwrap();
        let err = component_error(&full, &approx).unwrap().norms();
        let base = full.norms()[0];
        assert!(err[0] < 1e-6 * base);
        assert!(err.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn component_error_basics() {
        let (model, part) = beam(6);
        let _ = part;
        let grid = FrequencyGrid::new(vec![1.0, 2.0]).unwrap();
        let h = frf_direct(&model, &grid).unwrap();
        assert!(component_error(&h, &h).unwrap().norms().iter().all(|v| *v == 0.0));
        let twice = FrfSamples::new(h.omegas.clone(), h.values.iter().map(|v| v * crate::scalar::cx_re(2.0)).collect()).unwrap();
        let e = component_error(&h, &twice).unwrap();
        for (a, b) in e.values.iter().zip(&h.values) {
            assert_eq!(a, b);
        }
        let other = FrequencyGrid::new(vec![1.0, 3.0]).unwrap();
        let g = frf_direct(&model, &other).unwrap();
        assert!(matches!(component_error(&h, &g), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn document_carries_provenance() {
        let (model, part) = beam(6);
        let red = reduce(&model, &part, 3.0, "beam").unwrap();
        let doc = red.to_document();
        let p = doc.provenance.clone().unwrap();
        assert_eq!((p.component_id.as_str(), p.n_hat), ("beam", red.n_hat()));
        let (back, bp) = doc.to_model::<f64>().unwrap();
        assert_eq!(bp.n_boundary(), 1);
        assert_eq!(back.stiffness(), red.model.stiffness());
    }
}
