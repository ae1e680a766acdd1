//! Structural invariants checked on randomized inputs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cms_cutoff::assembly::{monolithic_assemble, AssemblyModel, Interconnection};
use cms_cutoff::budget::{lmi_certificate, synthesize_at, SynthesisOptions};
use cms_cutoff::cms::HhReducer;
use cms_cutoff::fem2d::{assemble_plane_stress, mesh_rectangle, FeComponent, Material};
use cms_cutoff::linalg::{generalized_sym_eigen, min_eigenvalue, rel_frobenius, relative_asymmetry};
use cms_cutoff::model::{apply_modal_damping, frf_direct, frf_modal, partition_blocks, DofPartition, FrequencyGrid, SecondOrderModel};
use cms_cutoff::pipeline::fmt_float;
use cms_cutoff::sdp::{self, DiagonalLmiProblem};

type Cx = Complex<f64>;

fn spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * shift
}

/// Collocated component on the last `b` DOF with Rayleigh damping.
fn component(seed: u64, n: usize, b: usize) -> SecondOrderModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = spd(&mut rng, n, 0.5);
    let k = spd(&mut rng, n, 0.1) * 50.0;
    let c = &m * 0.01 + &k * 2e-3;
    let sel = DMatrix::from_fn(n, b, |r, c| if r == n - b + c { 1.0 } else { 0.0 });
    SecondOrderModel::new(m, c, k, sel.clone(), sel.transpose()).unwrap()
}

/// Random `N` for `m_b = p_b = 3` and one assembly channel each way; the
/// assembly-to-assembly block is zero as for every spring interconnection.
fn random_transfer(seed: u64) -> DMatrix<Cx> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = DMatrix::from_fn(4, 4, |_, _| Cx::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    n[(3, 3)] = Cx::new(0.0, 0.0);
    n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frf_is_conjugate_symmetric_and_reciprocal(seed in any::<u64>(), n in 2usize..12, b in 1usize..3, w in 0.1f64..20.0) {
        let model = component(seed, n, b.min(n));
        let plus = model.frf_at(w).unwrap();
        let minus = model.frf_at(-w).unwrap();
        prop_assert!(rel_frobenius(&minus, &plus.map(|z| z.conj())) < 1e-12);
        prop_assert!(rel_frobenius(&plus, &plus.transpose()) < 1e-10);
    }

    #[test]
    fn modal_and_direct_frf_agree_under_modal_damping(seed in any::<u64>(), n in 2usize..12, zeta in 0.001f64..0.2) {
        let model = apply_modal_damping(&component(seed, n, 1), zeta).unwrap();
        let grid = FrequencyGrid::log_hz(0.05, 3.0, 15).unwrap();
        let direct = frf_direct(&model, &grid).unwrap();
        let modal = frf_modal(&model, &grid, zeta).unwrap();
        for (a, b) in direct.values.iter().zip(&modal.values) {
            prop_assert!(rel_frobenius(b, a) < 1e-8);
        }
    }

    #[test]
    fn partition_round_trip_is_exact(seed in any::<u64>(), n in 2usize..12, b in 1usize..4) {
        let model = component(seed, n, b.min(n));
        let part = DofPartition::from_maps(&model);
        let (m, c, k, bm, f) = partition_blocks(&model, &part).unwrap().reassemble();
        prop_assert_eq!(&m, model.mass());
        prop_assert_eq!(&c, model.damping());
        prop_assert_eq!(&k, model.stiffness());
        prop_assert_eq!(&bm, model.input_map());
        prop_assert_eq!(&f, model.output_map());
    }

    #[test]
    fn plane_stress_matrices_are_symmetric_and_definite(nx in 1usize..5, ny in 1usize..4, order in 1u8..3, w in 0.1f64..2.0, h in 0.1f64..1.0) {
        let mesh = mesh_rectangle(w, h, nx, ny, order).unwrap();
        let model = assemble_plane_stress(&mesh, &Material::new(70e9, 0.33, 2700.0, 0.01).unwrap()).unwrap();
        prop_assert!(relative_asymmetry(model.mass()) < 1e-12);
        prop_assert!(relative_asymmetry(model.stiffness()) < 1e-12);
        prop_assert!(min_eigenvalue(model.mass()).unwrap() > 0.0);
        let kmax = model.stiffness().amax();
        prop_assert!(min_eigenvalue(model.stiffness()).unwrap() > -1e-9 * kmax);
    }

    #[test]
    fn quadratic_elements_are_not_stiffer(nx in 2usize..5, ny in 1usize..3, w in 0.3f64..1.5, h in 0.1f64..0.4) {
        let first = |order: u8| {
            let mesh = mesh_rectangle(w, h, nx, ny, order).unwrap();
            let clamped = mesh.nodes_in_box([-1e-9, -1e-9, 1e-9, h + 1e-9]);
            let fe = FeComponent::new(mesh, Material::new(210e9, 0.3, 7800.0, 0.01).unwrap(), &clamped).unwrap();
            generalized_sym_eigen(fe.model.stiffness(), fe.model.mass()).unwrap().0[0]
        };
        prop_assert!(first(2) <= first(1) * (1.0 + 1e-12));
    }

    #[test]
    fn reduction_is_statically_exact_and_keeps_boundary_rows(seed in any::<u64>(), n in 3usize..14, b in 1usize..3, frac in 0.0f64..1.0) {
        let model = component(seed, n, b);
        let part = DofPartition::from_maps(&model);
        let reducer = HhReducer::new("c", model.clone(), &part).unwrap();
        let e = ((reducer.max_elastic().min(part.n_internal())) as f64 * frac) as usize;
        let basis = reducer.basis(e).unwrap();
        let red = reducer.reduce_elastic(e, 1.0).unwrap();
        prop_assert!(rel_frobenius(&red.model.frf_at(0.0).unwrap(), &model.frf_at(0.0).unwrap()) < 1e-9);
        let ni = part.n_internal();
        let modal = basis.n_rigid() + basis.n_elastic();
        let tail = basis.transformation.rows(ni, b);
        for r in 0..b {
            for c in 0..basis.n_hat() {
                let expect = if c >= modal && c - modal == r { 1.0 } else { 0.0 };
                prop_assert_eq!(tail[(r, c)], expect);
            }
        }
    }

    #[test]
    fn coupled_frf_matches_monolithic(seed in any::<u64>(), na in 2usize..10, nb in 2usize..10, k in 0.5f64..40.0) {
        let a = component(seed, na, 1);
        let b = component(seed ^ 0x9e37, nb, 1);
        let ic = Interconnection::new(
            DMatrix::from_row_slice(2, 2, &[-k, k, k, -k]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            vec![(1, 1), (1, 1)],
        ).unwrap();
        let asm = AssemblyModel::new(vec![a, b], ic, FrequencyGrid::log_hz(0.05, 3.0, 12).unwrap()).unwrap();
        let mono = monolithic_assemble(&asm).unwrap();
        prop_assert!(relative_asymmetry(mono.stiffness()) < 1e-12);
        let direct = frf_direct(&mono, &asm.grid).unwrap();
        for (x, y) in asm.coupled_frf().unwrap().values.iter().zip(&direct.values) {
            prop_assert!(rel_frobenius(x, y) < 1e-8);
        }
    }

    #[test]
    fn sdp_argmin_ignores_cost_scale(n01 in -0.9f64..0.9, n02 in -0.9f64..0.9, n12 in -0.9f64..0.9, c1 in 0.5f64..2.0, alpha in 0.1f64..10.0) {
        let g0 = DMatrix::from_row_slice(3, 3, &[0.0, n01, n02, n01, 0.0, n12, n02, n12, 0.0]);
        let diag = vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)]];
        let solve = |scale: f64| {
            let p = DiagonalLmiProblem::new(vec![scale, scale * c1, scale], g0.clone(), diag.clone(), 0.0, vec![0.0; 3]).unwrap();
            sdp::solve(&p, 1e-10).unwrap()
        };
        let (a, b) = (solve(1.0), solve(alpha));
        for (x, y) in a.x.iter().zip(&b.x) {
            prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-3), "{x} vs {y}");
        }
        for sol in [&a, &b] {
            prop_assert!(sol.min_eigenvalue >= -1e-9 * sol.x.iter().fold(1.0f64, |m, v| m.max(v.abs())));
            for pair in sol.history.windows(2) {
                prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn budgets_are_certified_and_alternation_descends(seed in any::<u64>(), gain in 0.05f64..3.0) {
        // two components with signatures (1, 2) and (2, 1); one assembly channel each way
        let signature = [(1, 2), (2, 1)];
        let n = random_transfer(seed) * Cx::new(gain, 0.0);
        let v_c = DVector::from_element(1, 20.0);
        let w_c = DVector::from_element(1, 1.0);
        let fb = synthesize_at(&n, &v_c, &w_c, &signature, 1.0, &SynthesisOptions::default()).unwrap();
        prop_assert!(fb.lmi_min_eig > 0.0);
        let again = lmi_certificate(&n, &fb, &v_c, &w_c).unwrap();
        prop_assert!(again > 0.0);
        for pair in fb.history.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-6));
        }
    }

    #[test]
    fn floats_survive_formatting(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
    }
}

/// A stricter assembly demand never loosens a component weight.
#[test]
fn tighter_requirement_never_enlarges_weights() {
    let signature = [(1, 2), (2, 1)];
    let opts = SynthesisOptions::default();
    for seed in 0..8 {
        let n = random_transfer(seed);
        let w_c = DVector::from_element(1, 1.0);
        let loose = synthesize_at(&n, &DVector::from_element(1, 5.0), &w_c, &signature, 1.0, &opts).unwrap();
        let tight = synthesize_at(&n, &DVector::from_element(1, 10.0), &w_c, &signature, 1.0, &opts).unwrap();
        for (a, b) in loose.w.iter().chain(&loose.v).zip(tight.w.iter().chain(&tight.v)) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(*y <= x * (1.0 + 1e-6), "seed {seed}: {y} > {x}");
            }
        }
    }
}
