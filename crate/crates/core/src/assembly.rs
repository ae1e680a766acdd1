//! Coupling of components through a static interconnection.
//!
//! Component inputs and outputs are stacked into `u_b`, `y_b`; external
//! inputs `u_c` and outputs `y_c` close the loop through
//!
//! ```text
//!     [u_b]   [K_bb  K_bc] [y_b]
//!     [y_c] = [K_cb   O  ] [u_c]
//! ```

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem2d::{DofSelector, FeComponent};
use crate::linalg::{self, ComplexLu};
use crate::model::{frf_direct, FrequencyGrid, FrfSamples, SecondOrderModel};
use crate::scalar::{cx, Cx, Real};

/// Condition number above which a feedback inverse is reported.
pub const INTERCONNECTION_COND_WARN: f64 = 1e13;

#[derive(Debug, Clone, PartialEq)]
pub struct Interconnection<T: Real> {
    /// `m_b × p_b`.
    pub k_bb: DMatrix<T>,
    /// `m_b × m_c`.
    pub k_bc: DMatrix<T>,
    /// `p_c × p_b`.
    pub k_cb: DMatrix<T>,
    /// `(m_j, p_j)` per component, in order.
    pub signature: Vec<(usize, usize)>,
}

impl<T: Real> Interconnection<T> {
    pub fn new(k_bb: DMatrix<T>, k_bc: DMatrix<T>, k_cb: DMatrix<T>, signature: Vec<(usize, usize)>) -> Result<Self> {
        let ic = Self {
            k_bb,
            k_bc,
            k_cb,
            signature,
        };
        ic.validate()?;
        Ok(ic)
    }

    pub fn validate(&self) -> Result<()> {
        if self.signature.is_empty() {
            return Err(Error::DimensionMismatch("an assembly needs at least one component".into()));
        }
        let (mb, pb) = (self.m_b(), self.p_b());
        let ok = self.k_bb.shape() == (mb, pb) && self.k_bc.nrows() == mb && self.k_cb.ncols() == pb;
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "K_bb {:?}, K_bc {:?}, K_cb {:?} do not fit m_b = {mb}, p_b = {pb}",
                self.k_bb.shape(),
                self.k_bc.shape(),
                self.k_cb.shape()
            )));
        }
        if self.k_bb.iter().chain(self.k_bc.iter()).chain(self.k_cb.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("interconnection has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn m_b(&self) -> usize {
        self.signature.iter().map(|s| s.0).sum()
    }
    pub fn p_b(&self) -> usize {
        self.signature.iter().map(|s| s.1).sum()
    }
    pub fn m_c(&self) -> usize {
        self.k_bc.ncols()
    }
    pub fn p_c(&self) -> usize {
        self.k_cb.nrows()
    }

    /// Offsets of each component's input and output channels in `u_b`, `y_b`.
    pub fn offsets(&self) -> Vec<(usize, usize)> {
        let mut acc = (0, 0);
        self.signature
            .iter()
            .map(|&(m, p)| {
                let o = acc;
                acc = (acc.0 + m, acc.1 + p);
                o
            })
            .collect()
    }

    /// The full `(m_b + p_c) × (p_b + m_c)` interconnection matrix.
    pub fn matrix(&self) -> DMatrix<T> {
        let (mb, pb, mc, pc) = (self.m_b(), self.p_b(), self.m_c(), self.p_c());
        let mut k = DMatrix::zeros(mb + pc, pb + mc);
        k.view_mut((0, 0), (mb, pb)).copy_from(&self.k_bb);
        k.view_mut((0, pb), (mb, mc)).copy_from(&self.k_bc);
        k.view_mut((mb, 0), (pc, pb)).copy_from(&self.k_cb);
        k
    }

    fn check_models(&self, models: &[&SecondOrderModel<T>]) -> Result<()> {
        if models.len() != self.signature.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} components for an interconnection of {}",
                models.len(),
                self.signature.len()
            )));
        }
        for (j, (m, s)) in models.iter().zip(&self.signature).enumerate() {
            if (m.m(), m.p()) != *s {
                return Err(Error::DimensionMismatch(format!(
                    "component {j} has (m, p) = ({}, {}), interconnection expects {s:?}",
                    m.m(),
                    m.p()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AssemblyModel<T: Real> {
    pub components: Vec<SecondOrderModel<T>>,
    pub interconnection: Interconnection<T>,
    pub grid: FrequencyGrid<T>,
}

impl<T: Real> AssemblyModel<T> {
    pub fn new(
        components: Vec<SecondOrderModel<T>>,
        interconnection: Interconnection<T>,
        grid: FrequencyGrid<T>,
    ) -> Result<Self> {
        interconnection.check_models(&components.iter().collect::<Vec<_>>())?;
        Ok(Self {
            components,
            interconnection,
            grid,
        })
    }

    /// Direct FRF of every component on the grid.
    pub fn component_frfs(&self) -> Result<Vec<FrfSamples<T>>> {
        self.components.iter().map(|m| frf_direct(m, &self.grid)).collect()
    }

    pub fn coupled_frf(&self) -> Result<FrfSamples<T>> {
        coupled_frf_from(&self.component_frfs()?, &self.interconnection)
    }

    pub fn interconnection_transfer(&self) -> Result<Vec<DMatrix<Cx<T>>>> {
        transfer_from(&self.component_frfs()?, &self.interconnection)
    }

    pub fn monolithic(&self) -> Result<SecondOrderModel<T>> {
        monolithic_assemble(self)
    }
}

/// Block-diagonal `H_b` at grid index `k`.
pub fn stack_at<T: Real>(frfs: &[FrfSamples<T>], k: usize) -> DMatrix<Cx<T>> {
    let blocks: Vec<&DMatrix<Cx<T>>> = frfs.iter().map(|f| &f.values[k]).collect();
    linalg::block_diag(&blocks)
}

fn check_frfs<T: Real>(frfs: &[FrfSamples<T>], ic: &Interconnection<T>) -> Result<()> {
    if frfs.len() != ic.signature.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} component FRFs for {} components",
            frfs.len(),
            ic.signature.len()
        )));
    }
    for (j, (f, &(m, p))) in frfs.iter().zip(&ic.signature).enumerate() {
        if f.shape() != (p, m) {
            return Err(Error::DimensionMismatch(format!(
                "component {j} FRF is {:?}, expected ({p}, {m})",
                f.shape()
            )));
        }
        frfs[0].check_same_grid(f).map_err(|_| {
            Error::GridMismatch(format!("component {j} FRF is on a different grid"))
        })?;
    }
    Ok(())
}

fn complex<T: Real>(a: &DMatrix<T>) -> DMatrix<Cx<T>> {
    linalg::complexify(a)
}

fn feedback_lu<T: Real>(a: &DMatrix<Cx<T>>, omega: T) -> Result<ComplexLu<T>> {
    let lu = ComplexLu::new(a);
    let rcond = lu.rcond();
    if lu.is_singular() || !(rcond > T::eps()) {
        return Err(Error::IllPosedInterconnection {
            omega: omega.as_f64(),
            cond: if rcond > T::zero() { 1.0 / rcond.as_f64() } else { f64::INFINITY },
        });
    }
    if rcond.as_f64() < 1.0 / INTERCONNECTION_COND_WARN {
        log::warn!(
            "interconnection feedback ill-conditioned at omega = {} rad/s (cond ~ {:e})",
            omega.as_f64(),
            1.0 / rcond.as_f64()
        );
    }
    Ok(lu)
}

fn identity_minus<T: Real>(a: DMatrix<Cx<T>>) -> DMatrix<Cx<T>> {
    let n = a.nrows();
    DMatrix::<Cx<T>>::identity(n, n) - a
}

/// `H_c = K_cb H_b (I − K_bb H_b)⁻¹ K_bc` for one stacked `H_b`.
pub fn coupled_at<T: Real>(h_b: &DMatrix<Cx<T>>, ic: &Interconnection<T>, omega: T) -> Result<DMatrix<Cx<T>>> {
    let kbb = complex(&ic.k_bb);
    let lu = feedback_lu(&identity_minus(&kbb * h_b), omega)?;
    let x = lu.solve(&complex(&ic.k_bc));
    Ok(complex(&ic.k_cb) * h_b * x)
}

/// Coupled FRF from per-component FRF samples.
pub fn coupled_frf_from<T: Real>(frfs: &[FrfSamples<T>], ic: &Interconnection<T>) -> Result<FrfSamples<T>> {
    check_frfs(frfs, ic)?;
    let omegas = frfs[0].omegas.clone();
    let values = (0..omegas.len())
        .into_par_iter()
        .map(|k| coupled_at(&stack_at(frfs, k), ic, omegas[k]))
        .collect::<Result<Vec<_>>>()?;
    FrfSamples::new(omegas, values)
}

/// `N = [[K_bb(I − H_b K_bb)⁻¹, (I − K_bb H_b)⁻¹K_bc], [K_cb(I − H_b K_bb)⁻¹, O]]`.
pub fn transfer_at<T: Real>(h_b: &DMatrix<Cx<T>>, ic: &Interconnection<T>, omega: T) -> Result<DMatrix<Cx<T>>> {
    let (mb, pb, mc, pc) = (ic.m_b(), ic.p_b(), ic.m_c(), ic.p_c());
    let kbb = complex(&ic.k_bb);
    let left = feedback_lu(&identity_minus(&kbb * h_b), omega)?;
    let right = feedback_lu(&identity_minus(h_b * &kbb), omega)?;
    // X (I − H_b K_bb) = K  ⇔  (I − H_b K_bb)ᴴ Xᴴ = Kᴴ
    let solve_right = |k: &DMatrix<Cx<T>>| -> DMatrix<Cx<T>> {
        let mut x = DMatrix::zeros(k.nrows(), k.ncols());
        for r in 0..k.nrows() {
            let rhs = DVector::from_iterator(k.ncols(), k.row(r).iter().map(|v| v.conj()));
            let sol = right.solve_adjoint(&rhs);
            for c in 0..k.ncols() {
                x[(r, c)] = sol[c].conj();
            }
        }
        x
    };
    let n11 = solve_right(&kbb);
    let n12 = left.solve(&complex(&ic.k_bc));
    let n21 = solve_right(&complex(&ic.k_cb));
    let mut n = DMatrix::from_element(mb + pc, pb + mc, cx(T::zero(), T::zero()));
    n.view_mut((0, 0), (mb, pb)).copy_from(&n11);
    n.view_mut((0, pb), (mb, mc)).copy_from(&n12);
    n.view_mut((mb, 0), (pc, pb)).copy_from(&n21);
    Ok(n)
}

/// `N(iω)` on the grid, from reference (never reduced) component FRFs.
pub fn transfer_from<T: Real>(frfs: &[FrfSamples<T>], ic: &Interconnection<T>) -> Result<Vec<DMatrix<Cx<T>>>> {
    check_frfs(frfs, ic)?;
    let omegas = &frfs[0].omegas;
    (0..omegas.len())
        .into_par_iter()
        .map(|k| transfer_at(&stack_at(frfs, k), ic, omegas[k]))
        .collect()
}

/// Closes the interconnection inside one second-order model:
/// `K = blockdiag(K_j) − B_b K_bb F_b`, inputs `B_b K_bc`, outputs `K_cb F_b`.
pub fn monolithic_assemble<T: Real>(assembly: &AssemblyModel<T>) -> Result<SecondOrderModel<T>> {
    let comps = &assembly.components;
    let ic = &assembly.interconnection;
    ic.check_models(&comps.iter().collect::<Vec<_>>())?;
    let m = linalg::block_diag(&comps.iter().map(|c| c.mass()).collect::<Vec<_>>());
    let c = linalg::block_diag(&comps.iter().map(|c| c.damping()).collect::<Vec<_>>());
    let k = linalg::block_diag(&comps.iter().map(|c| c.stiffness()).collect::<Vec<_>>());
    let b = linalg::block_diag(&comps.iter().map(|c| c.input_map()).collect::<Vec<_>>());
    let f = linalg::block_diag(&comps.iter().map(|c| c.output_map()).collect::<Vec<_>>());
    let coupling = &b * &ic.k_bb * &f;
    let asym = linalg::relative_asymmetry(&coupling);
    if asym > T::lit(1e-12) {
        log::warn!("asymmetric coupling stiffness (relative asymmetry {:e})", asym.as_f64());
    }
    let labels = comps
        .iter()
        .enumerate()
        .flat_map(|(j, c)| c.dof_labels().iter().map(move |l| format!("c{j}.{l}")))
        .collect();
    SecondOrderModel::new_unchecked(m, c, k - coupling, &b * &ic.k_bc, &ic.k_cb * &f)?.with_labels(labels)
}

/// `E_c = Ĥ_c − H_c`.
pub fn assembly_error<T: Real>(full: &FrfSamples<T>, reduced: &FrfSamples<T>) -> Result<FrfSamples<T>> {
    reduced.minus(full)
}

/// Anything that can turn a DOF selector into a selection vector.
pub trait ChannelSource<T: Real> {
    fn n_dof(&self) -> usize;
    fn channel(&self, selector: &DofSelector) -> Result<DVector<T>>;
}

impl<T: Real> ChannelSource<T> for FeComponent<T> {
    fn n_dof(&self) -> usize {
        self.model.n()
    }
    fn channel(&self, selector: &DofSelector) -> Result<DVector<T>> {
        FeComponent::channel(self, selector)
    }
}

impl<T: Real> ChannelSource<T> for SecondOrderModel<T> {
    fn n_dof(&self) -> usize {
        self.n()
    }
    fn channel(&self, selector: &DofSelector) -> Result<DVector<T>> {
        match selector {
            DofSelector::Dof { index } if *index < self.n() => {
                let mut g = DVector::zeros(self.n());
                g[*index] = T::one();
                Ok(g)
            }
            DofSelector::Dof { index } => Err(Error::Config(format!("DOF index {index} out of range 0..{}", self.n()))),
            other => Err(Error::Config(format!(
                "matrix components only accept DOF selectors, got {other:?}"
            ))),
        }
    }
}

/// A component (by position) and a point on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRef {
    pub component: usize,
    pub selector: DofSelector,
}

/// Spring of stiffness `k` between two channels, or to ground when `b` is
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringRecord {
    pub a: ChannelRef,
    pub b: Option<ChannelRef>,
    pub stiffness: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterconnectionRecords {
    pub springs: Vec<SpringRecord>,
    /// External force inputs `u_c`, in order.
    pub inputs: Vec<ChannelRef>,
    /// External measured outputs `y_c`, in order.
    pub outputs: Vec<ChannelRef>,
}

/// Component maps and interconnection produced from records.
#[derive(Debug, Clone)]
pub struct BuiltInterconnection<T: Real> {
    /// `B^(j)` per component (`n_j × m_j`).
    pub input_maps: Vec<DMatrix<T>>,
    /// `F^(j)` per component (`p_j × n_j`).
    pub output_maps: Vec<DMatrix<T>>,
    pub interconnection: Interconnection<T>,
}

/// Expands records into channels. Per component, spring channels come first
/// in record order, then external inputs (or outputs) in record order. A
/// spring channel is collocated: its load vector equals its measurement
/// vector, so a spring adds `k (g_a − g_b)(g_a − g_b)ᵀ` once closed.
pub fn build_interconnection<T: Real>(
    sources: &[&dyn ChannelSource<T>],
    records: &InterconnectionRecords,
) -> Result<BuiltInterconnection<T>> {
    let k = sources.len();
    if k == 0 {
        return Err(Error::Config("no components".into()));
    }
    let check = |r: &ChannelRef| -> Result<()> {
        if r.component >= k {
            Err(Error::Config(format!("component index {} out of range 0..{k}", r.component)))
        } else {
            Ok(())
        }
    };
    let mut ins: Vec<Vec<DVector<T>>> = vec![Vec::new(); k];
    let mut outs: Vec<Vec<DVector<T>>> = vec![Vec::new(); k];
    // (component, local input, local output) per spring end
    let mut ends: Vec<((usize, usize, usize), Option<(usize, usize, usize)>, T)> = Vec::new();
    let add_end = |r: &ChannelRef, ins: &mut Vec<Vec<DVector<T>>>, outs: &mut Vec<Vec<DVector<T>>>| -> Result<(usize, usize, usize)> {
        check(r)?;
        let g = sources[r.component].channel(&r.selector)?;
        ins[r.component].push(g.clone());
        outs[r.component].push(g);
        Ok((r.component, ins[r.component].len() - 1, outs[r.component].len() - 1))
    };
    for s in &records.springs {
        if !(s.stiffness.is_finite() && s.stiffness > 0.0) {
            return Err(Error::Config(format!("spring stiffness must be positive, got {}", s.stiffness)));
        }
        let a = add_end(&s.a, &mut ins, &mut outs)?;
        let b = match &s.b {
            Some(r) => Some(add_end(r, &mut ins, &mut outs)?),
            None => None,
        };
        ends.push((a, b, T::lit(s.stiffness)));
    }
    let mut ext_in = Vec::new();
    for r in &records.inputs {
        check(r)?;
        ins[r.component].push(sources[r.component].channel(&r.selector)?);
        ext_in.push((r.component, ins[r.component].len() - 1));
    }
    let mut ext_out = Vec::new();
    for r in &records.outputs {
        check(r)?;
        outs[r.component].push(sources[r.component].channel(&r.selector)?);
        ext_out.push((r.component, outs[r.component].len() - 1));
    }
    let signature: Vec<(usize, usize)> = (0..k).map(|j| (ins[j].len(), outs[j].len())).collect();
    let mut off_in = vec![0; k];
    let mut off_out = vec![0; k];
    for j in 1..k {
        off_in[j] = off_in[j - 1] + signature[j - 1].0;
        off_out[j] = off_out[j - 1] + signature[j - 1].1;
    }
    let mb: usize = signature.iter().map(|s| s.0).sum();
    let pb: usize = signature.iter().map(|s| s.1).sum();
    let mut k_bb = DMatrix::zeros(mb, pb);
    for (a, b, kk) in &ends {
        let ia = (off_in[a.0] + a.1, off_out[a.0] + a.2);
        k_bb[(ia.0, ia.1)] -= *kk;
        if let Some(b) = b {
            let ib = (off_in[b.0] + b.1, off_out[b.0] + b.2);
            k_bb[(ia.0, ib.1)] += *kk;
            k_bb[(ib.0, ib.1)] -= *kk;
            k_bb[(ib.0, ia.1)] += *kk;
        }
    }
    let mut k_bc = DMatrix::zeros(mb, ext_in.len());
    for (c, &(j, l)) in ext_in.iter().enumerate() {
        k_bc[(off_in[j] + l, c)] = T::one();
    }
    let mut k_cb = DMatrix::zeros(ext_out.len(), pb);
    for (r, &(j, l)) in ext_out.iter().enumerate() {
        k_cb[(r, off_out[j] + l)] = T::one();
    }
    let input_maps = (0..k)
        .map(|j| {
            let n = sources[j].n_dof();
            DMatrix::from_fn(n, ins[j].len(), |r, c| ins[j][c][r])
        })
        .collect();
    let output_maps = (0..k)
        .map(|j| {
            let n = sources[j].n_dof();
            DMatrix::from_fn(outs[j].len(), n, |r, c| outs[j][r][c])
        })
        .collect();
    Ok(BuiltInterconnection {
        input_maps,
        output_maps,
        interconnection: Interconnection::new(k_bb, k_bc, k_cb, signature)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{frf_direct, FrequencyGrid};
    use approx::assert_relative_eq;

    fn scalar(mass: f64, k: f64, c: f64) -> SecondOrderModel<f64> {
        let one = DMatrix::from_element(1, 1, 1.0);
        SecondOrderModel::new(
            DMatrix::from_element(1, 1, mass),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, k),
            one.clone(),
            one,
        )
        .unwrap()
    }

    fn two_oscillators(k: f64) -> AssemblyModel<f64> {
        let ic = Interconnection::new(
            DMatrix::from_row_slice(2, 2, &[-k, k, k, -k]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            vec![(1, 1), (1, 1)],
        )
        .unwrap();
        let grid = FrequencyGrid::new(vec![0.1, 0.7, 1.3, 2.9]).unwrap();
        AssemblyModel::new(vec![scalar(1.0, 2.0, 0.05), scalar(2.0, 3.0, 0.02)], ic, grid).unwrap()
    }

    #[test]
    fn passthrough_without_feedback() {
        let ic = Interconnection::new(
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            vec![(1, 1)],
        )
        .unwrap();
        let grid = FrequencyGrid::new(vec![0.5, 2.0]).unwrap();
        let asm = AssemblyModel::new(vec![scalar(1.0, 1.0, 0.1)], ic, grid.clone()).unwrap();
        let hc = asm.coupled_frf().unwrap();
        let h1 = frf_direct(&asm.components[0], &grid).unwrap();
        assert_eq!(hc.values, h1.values);
    }

    #[test]
    fn two_oscillators_match_monolithic() {
        let asm = two_oscillators(1.0);
        let mono = monolithic_assemble(&asm).unwrap();
        assert_eq!(mono.stiffness(), &DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 4.0]));
        let a = asm.coupled_frf().unwrap();
        let b = frf_direct(&mono, &asm.grid).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(linalg::rel_frobenius(x, y) < 1e-12);
        }
    }

    #[test]
    fn no_feedback_keeps_block_stiffness() {
        let mut asm = two_oscillators(1.0);
        asm.interconnection.k_bb.fill(0.0);
        let mono = monolithic_assemble(&asm).unwrap();
        assert_eq!(mono.stiffness(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn transfer_structure() {
        let asm = two_oscillators(1.5);
        let frfs = asm.component_frfs().unwrap();
        let ns = transfer_from(&frfs, &asm.interconnection).unwrap();
        let kbb = complex(&asm.interconnection.k_bb);
        for (k, n) in ns.iter().enumerate() {
            let hb = stack_at(&frfs, k);
            // push-through identity
            let lhs = n.view((0, 0), (2, 2)).into_owned();
            let a = identity_minus(&kbb * &hb);
            let rhs = a.clone().lu().solve(&kbb).unwrap();
            assert!(linalg::rel_frobenius(&lhs, &rhs) < 1e-10);
            assert_eq!(n[(2, 2)], cx(0.0, 0.0));
        }
        let mut open = asm.clone();
        open.interconnection.k_bb.fill(0.0);
        let ns = open.interconnection_transfer().unwrap();
        let expect = complex(&open.interconnection.matrix());
        assert_eq!(ns[0], expect);
    }

    #[test]
    fn transfer_reproduces_perturbed_loop() {
        // E_c = N21 Δ (I − N11 Δ)⁻¹ N12 for a block-diagonal perturbation Δ
        let asm = two_oscillators(2.0);
        let frfs = asm.component_frfs().unwrap();
        let ic = &asm.interconnection;
        let w = asm.grid.omegas()[1];
        let hb = stack_at(&frfs, 1);
        let n = transfer_at(&hb, ic, w).unwrap();
        let delta = DMatrix::from_row_slice(2, 2, &[cx(0.01, 0.02), cx(0.0, 0.0), cx(0.0, 0.0), cx(-0.03, 0.01)]);
        let hc = coupled_at(&hb, ic, w).unwrap();
        let hc_pert = coupled_at(&(&hb + &delta), ic, w).unwrap();
        let n11 = n.view((0, 0), (2, 2)).into_owned();
        let n12 = n.view((0, 2), (2, 1)).into_owned();
        let n21 = n.view((2, 0), (1, 2)).into_owned();
        let inner = identity_minus(&n11 * &delta).lu().solve(&n12).unwrap();
        let ec = n21 * &delta * inner;
        assert!(linalg::rel_frobenius(&(hc_pert - hc), &ec) < 1e-10);
    }

    #[test]
    fn singular_feedback_is_reported() {
        // K_bb H_b = 1 at the grid point
        let ic = Interconnection::new(
            DMatrix::from_element(1, 1, 3.0),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            vec![(1, 1)],
        )
        .unwrap();
        // static FRF of k = 3 is 1/3
        let h = FrfSamples::new(vec![1.0], vec![DMatrix::from_element(1, 1, cx(1.0 / 3.0, 0.0))]).unwrap();
        assert!(matches!(
            coupled_frf_from(&[h], &ic),
            Err(Error::IllPosedInterconnection { .. })
        ));
    }

    #[test]
    fn assembly_error_is_difference() {
        let asm = two_oscillators(1.0);
        let h = asm.coupled_frf().unwrap();
        assert!(assembly_error(&h, &h).unwrap().norms().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn signature_mismatch_is_rejected() {
        let ic = Interconnection::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), vec![(2, 2)])
            .unwrap();
        let grid = FrequencyGrid::new(vec![1.0]).unwrap();
        assert!(AssemblyModel::new(vec![scalar(1.0, 1.0, 0.0)], ic, grid).is_err());
        assert!(Interconnection::<f64>::new(DMatrix::zeros(1, 2), DMatrix::zeros(1, 0), DMatrix::zeros(0, 1), vec![(1, 1)]).is_err());
    }

    #[test]
    fn records_build_spring_coupling() {
        let a = SecondOrderModel::unloaded(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), DMatrix::identity(2, 2) * 5.0).unwrap();
        let b = SecondOrderModel::unloaded(DMatrix::identity(1, 1), DMatrix::zeros(1, 1), DMatrix::identity(1, 1) * 4.0).unwrap();
        let rec = InterconnectionRecords {
            springs: vec![SpringRecord {
                a: ChannelRef { component: 0, selector: DofSelector::Dof { index: 1 } },
                b: Some(ChannelRef { component: 1, selector: DofSelector::Dof { index: 0 } }),
                stiffness: 7.0,
            }],
            inputs: vec![ChannelRef { component: 0, selector: DofSelector::Dof { index: 0 } }],
            outputs: vec![ChannelRef { component: 1, selector: DofSelector::Dof { index: 0 } }],
        };
        let built = build_interconnection(&[&a as &dyn ChannelSource<f64>, &b], &rec).unwrap();
        let ic = &built.interconnection;
        assert_eq!(ic.signature, vec![(2, 1), (1, 2)]);
        assert_eq!(ic.k_bb, DMatrix::from_row_slice(3, 3, &[-7.0, 7.0, 0.0, 0.0, 0.0, 0.0, 7.0, -7.0, 0.0]));
        let comps = vec![
            a.with_maps(built.input_maps[0].clone(), built.output_maps[0].clone()).unwrap(),
            b.with_maps(built.input_maps[1].clone(), built.output_maps[1].clone()).unwrap(),
        ];
        let asm = AssemblyModel::new(comps, ic.clone(), FrequencyGrid::new(vec![0.3]).unwrap()).unwrap();
        let mono = monolithic_assemble(&asm).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[5.0, 0.0, 0.0, 0.0, 12.0, -7.0, 0.0, -7.0, 11.0]);
        assert_eq!(mono.stiffness(), &expect);
        let hc = asm.coupled_frf().unwrap();
        let direct = frf_direct(&mono, &asm.grid).unwrap();
        assert_relative_eq!(hc.values[0][(0, 0)].re, direct.values[0][(0, 0)].re, max_relative = 1e-12);
        let bad = InterconnectionRecords {
            inputs: vec![ChannelRef { component: 3, selector: DofSelector::Dof { index: 0 } }],
            ..Default::default()
        };
        assert!(build_interconnection(&[&a as &dyn ChannelSource<f64>], &bad).is_err());
    }
}
