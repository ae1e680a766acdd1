//! End-to-end cut-off selection: reference models, budgets, uniform and
//! budget-driven reduction plans, verification and file output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{ComplexField, DMatrix};
use rayon::prelude::*;

use crate::assembly::{
    assembly_error, build_interconnection, coupled_frf_from, transfer_from, ChannelSource, Interconnection,
};
use crate::budget::{
    check_assembly_requirement, check_component_requirement, relative_error_requirement, sensitivity,
    synthesize_budgets, AssemblyRequirement, ComponentBudget, FrequencyBudget, SynthesisOptions, CAP_ACTIVE_TOL,
    COMPARE_MARGIN,
};
use crate::cms::{component_error, HhReducer, ReducedModel};
use crate::config::{resolve_source, ComponentSource, MeshSpec, Method, RunConfig, Spacing};
use crate::error::{Error, Result};
use crate::fem2d::{mesh_rectangle, mesh_right_triangle, FeComponent, Material};
use crate::linalg::spectral_norm;
use crate::model::{apply_modal_damping, frf_direct, DofPartition, FrequencyGrid, FrfSamples, ModelDocument, SecondOrderModel};
use crate::scalar::{Cx, Real};

/// Everything a run needs, with channels attached and damping applied.
#[derive(Debug, Clone)]
pub struct PreparedRun<T: Real> {
    pub ids: Vec<String>,
    pub models: Vec<SecondOrderModel<T>>,
    pub partitions: Vec<DofPartition>,
    pub interconnection: Interconnection<T>,
    pub grid: FrequencyGrid<T>,
    pub f_max_hz: T,
    pub gamma: T,
    pub reference_multiplier: T,
    pub methods: Vec<Method>,
    pub options: SynthesisOptions,
    pub seed: u64,
}

enum Built<T: Real> {
    Fe(Box<FeComponent<T>>),
    Matrix(SecondOrderModel<T>, Vec<usize>),
}

impl<T: Real> Built<T> {
    fn source(&self) -> &dyn ChannelSource<T> {
        match self {
            Built::Fe(c) => c.as_ref(),
            Built::Matrix(m, _) => m,
        }
    }
}

fn build_source<T: Real>(source: &ComponentSource, base: &Path) -> Result<Built<T>> {
    match resolve_source(source, base)? {
        ComponentSource::Fe {
            mesh,
            material,
            mirror_x,
            origin,
            fixed,
        } => {
            let l = T::lit;
            let mut mesh = match mesh {
                MeshSpec::Rectangle {
                    width,
                    height,
                    nx,
                    ny,
                    order,
                } => mesh_rectangle(l(width), l(height), nx, ny, order)?,
                MeshSpec::RightTriangle { base, height, n, order } => mesh_right_triangle(l(base), l(height), n, order)?,
            };
            if mirror_x {
                mesh = mesh.mirrored_x();
            }
            let mesh = mesh.translated(l(origin[0]), l(origin[1]));
            let mut nodes: Vec<usize> = fixed
                .iter()
                .flat_map(|b| mesh.nodes_in_box([l(b[0]), l(b[1]), l(b[2]), l(b[3])]))
                .collect();
            nodes.sort_unstable();
            nodes.dedup();
            let material = Material::new(
                l(material.youngs_modulus),
                l(material.poisson_ratio),
                l(material.density),
                l(material.thickness),
            )?;
            Ok(Built::Fe(Box::new(FeComponent::new(mesh, material, &nodes)?)))
        }
        ComponentSource::Matrices { document } => {
            let (model, _) = document.to_model::<T>()?;
            Ok(Built::Matrix(model, document.boundary.clone().unwrap_or_default()))
        }
        ComponentSource::File { .. } => unreachable!("resolved above"),
    }
}

/// Builds components and the interconnection from a validated config;
/// `base` resolves relative paths.
pub fn prepare<T: Real>(cfg: &RunConfig, base: &Path) -> Result<PreparedRun<T>> {
    cfg.validate()?;
    let built = cfg
        .components
        .iter()
        .map(|c| build_source::<T>(&c.source, base))
        .collect::<Result<Vec<_>>>()?;
    let sources: Vec<&dyn ChannelSource<T>> = built.iter().map(|b| b.source()).collect();
    let bi = build_interconnection(&sources, &cfg.interconnection)?;
    let mut models = Vec::with_capacity(built.len());
    let mut partitions = Vec::with_capacity(built.len());
    for (j, b) in built.iter().enumerate() {
        let (base_model, extra) = match b {
            Built::Fe(c) => (&c.model, &[][..]),
            Built::Matrix(m, extra) => (m, extra.as_slice()),
        };
        let mut model = base_model.with_maps(bi.input_maps[j].clone(), bi.output_maps[j].clone())?;
        if let Some(z) = cfg.components[j].damping_ratio {
            model = apply_modal_damping(&model, T::lit(z))?;
        }
        partitions.push(DofPartition::from_maps_and(&model, extra)?);
        models.push(model);
    }
    let g = &cfg.grid;
    let grid = match g.spacing {
        Spacing::Linear => FrequencyGrid::linear_hz(T::lit(g.f_max_hz), g.n_points)?,
        Spacing::Log => FrequencyGrid::log_hz(T::lit(g.f_min_hz.unwrap_or(g.f_max_hz)), T::lit(g.f_max_hz), g.n_points)?,
    };
    Ok(PreparedRun {
        ids: cfg.components.iter().map(|c| c.id.clone()).collect(),
        models,
        partitions,
        interconnection: bi.interconnection,
        grid,
        f_max_hz: T::lit(g.f_max_hz),
        gamma: T::lit(cfg.gamma),
        reference_multiplier: T::lit(cfg.reference_multiplier),
        methods: cfg.methods.clone(),
        options: cfg.tolerances.into(),
        seed: cfg.seed,
    })
}

/// Reference components (HH at `reference_multiplier · f_max`) and their
/// responses; they stand in for the full models from here on.
#[derive(Debug, Clone)]
pub struct Reference<T: Real> {
    pub reducers: Vec<HhReducer<T>>,
    pub models: Vec<ReducedModel<T>>,
    pub frfs: Vec<FrfSamples<T>>,
    pub coupled: FrfSamples<T>,
}

pub fn build_reference<T: Real>(run: &PreparedRun<T>) -> Result<Reference<T>> {
    let f_ref = run.reference_multiplier * run.f_max_hz;
    let pieces = (0..run.models.len())
        .into_par_iter()
        .map(|j| -> Result<_> {
            let reducer = HhReducer::new(run.ids[j].clone(), run.models[j].clone(), &run.partitions[j])?;
            let model = reducer.reduce(f_ref)?;
            let frf = frf_direct(&model.model, &run.grid)?;
            log::info!(
                "reference '{}': {} DOF -> {} ({} rigid, {} elastic, {} boundary)",
                run.ids[j],
                run.models[j].n(),
                model.n_hat(),
                model.n_rigid,
                model.n_elastic,
                model.n_boundary
            );
            Ok((reducer, model, frf))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reducers = Vec::new();
    let mut models = Vec::new();
    let mut frfs = Vec::new();
    for (r, m, f) in pieces {
        reducers.push(r);
        models.push(m);
        frfs.push(f);
    }
    let coupled = coupled_frf_from(&frfs, &run.interconnection)?;
    Ok(Reference {
        reducers,
        models,
        frfs,
        coupled,
    })
}

/// Requirement and budgets derived from the reference assembly.
pub fn synthesize<T: Real>(run: &PreparedRun<T>, reference: &Reference<T>) -> Result<(AssemblyRequirement<T>, ComponentBudget<T>)> {
    let req = relative_error_requirement(&reference.coupled, run.gamma)?;
    let transfers = transfer_from(&reference.frfs, &run.interconnection)?;
    let budget = synthesize_budgets(&transfers, &req, &run.interconnection.signature, &run.options)?;
    Ok((req, budget))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPlan {
    pub id: String,
    pub f_cut_hz: f64,
    pub n_rigid: usize,
    pub n_elastic: usize,
    pub n_boundary: usize,
    pub n_hat: usize,
    /// Component requirement met at every grid point; `None` without budgets.
    pub satisfied: Option<bool>,
    /// Largest `‖W⁻¹ E V⁻¹‖` on the grid.
    pub max_weighted_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionPlan {
    pub method: Method,
    pub components: Vec<ComponentPlan>,
    pub total_n_hat: usize,
    pub assembly_satisfied: bool,
    /// Largest `‖V_c E_c W_c‖` on the grid.
    pub max_assembly_weighted: f64,
    pub max_relative_error: f64,
}

/// A plan together with the models and responses it was judged on.
#[derive(Debug, Clone)]
pub struct PlanResult<T: Real> {
    pub plan: ReductionPlan,
    pub models: Vec<ReducedModel<T>>,
    pub coupled: FrfSamples<T>,
    /// `‖E_c‖ / ‖H_c‖` per grid point.
    pub relative_error: Vec<T>,
}

/// Uniform cut-off `multiplier · f_max` for every component.
pub fn standard_models<T: Real>(run: &PreparedRun<T>, reference: &Reference<T>, multiplier: u32) -> Result<Vec<ReducedModel<T>>> {
    let f_cut = T::from_u32(multiplier).unwrap() * run.f_max_hz;
    reference
        .models
        .iter()
        .zip(&reference.reducers)
        .map(|(m, r)| m.truncate_elastic(r.elastic_count(f_cut).min(m.n_elastic), f_cut))
        .collect()
}

fn passes_budget<T: Real>(
    candidate: &SecondOrderModel<T>,
    reference: &FrfSamples<T>,
    budget: &ComponentBudget<T>,
    j: usize,
) -> Result<bool> {
    // high frequencies fail first in practice, so check them first
    for k in (0..reference.len()).rev() {
        let f = &budget.frequencies[k];
        let h = candidate.frf_at(reference.omegas[k])?;
        let e = h - &reference.values[k];
        let scaled = DMatrix::from_fn(e.nrows(), e.ncols(), |r, c| e[(r, c)] / Cx::new(f.w[j][r] * f.v[j][c], T::zero()));
        if spectral_norm(&scaled) > T::one() + T::lit(COMPARE_MARGIN) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Per component, the smallest elastic count (scanning upward one mode at a
/// time) whose error meets the component budget on the whole grid. The
/// reported cut-off is the frequency of the last retained mode.
pub fn proposed_models<T: Real>(reference: &Reference<T>, budget: &ComponentBudget<T>) -> Result<Vec<ReducedModel<T>>> {
    (0..reference.models.len())
        .into_par_iter()
        .map(|j| {
            let full = &reference.models[j];
            for e in 0..=full.n_elastic {
                let f_cut = reference.reducers[j].elastic_frequency_hz(e);
                let candidate = full.truncate_elastic(e, f_cut)?;
                if passes_budget(&candidate.model, &reference.frfs[j], budget, j)? {
                    log::info!("'{}': {e} of {} elastic modes meet the budget", full.component_id, full.n_elastic);
                    return Ok(candidate);
                }
            }
            Err(Error::BudgetUnreachable {
                component: full.component_id.clone(),
            })
        })
        .collect()
}

/// Evaluates a set of reduced components against the reference; all flags
/// are computed here from the responses.
pub fn evaluate_plan<T: Real>(
    method: Method,
    models: Vec<ReducedModel<T>>,
    run: &PreparedRun<T>,
    reference: &Reference<T>,
    req: &AssemblyRequirement<T>,
    budget: Option<&ComponentBudget<T>>,
) -> Result<PlanResult<T>> {
    let frfs = models
        .par_iter()
        .map(|m| frf_direct(&m.model, &run.grid))
        .collect::<Result<Vec<_>>>()?;
    let mut components = Vec::with_capacity(models.len());
    for (j, m) in models.iter().enumerate() {
        let (satisfied, worst) = match budget {
            Some(b) => {
                let err = component_error(&reference.frfs[j], &frfs[j])?;
                let flags = check_component_requirement(&err, b, j)?;
                let worst = b.weighted_norms(&err, j)?.into_iter().fold(T::zero(), |a, v| a.max(v));
                (Some(flags.iter().all(|f| *f)), Some(worst.as_f64()))
            }
            None => (None, None),
        };
        components.push(ComponentPlan {
            id: m.component_id.clone(),
            f_cut_hz: m.f_cut_hz.as_f64(),
            n_rigid: m.n_rigid,
            n_elastic: m.n_elastic,
            n_boundary: m.n_boundary,
            n_hat: m.n_hat(),
            satisfied,
            max_weighted_error: worst,
        });
    }
    let coupled = coupled_frf_from(&frfs, &run.interconnection)?;
    let e_c = assembly_error(&reference.coupled, &coupled)?;
    let flags = check_assembly_requirement(&e_c, req)?;
    let weighted = req.weighted_norms(&e_c)?;
    let relative_error: Vec<T> = e_c
        .values
        .iter()
        .zip(&reference.coupled.values)
        .map(|(e, h)| spectral_norm(e) / spectral_norm(h))
        .collect();
    let plan = ReductionPlan {
        method,
        total_n_hat: components.iter().map(|c| c.n_hat).sum(),
        assembly_satisfied: flags.iter().all(|f| *f),
        max_assembly_weighted: weighted.iter().fold(T::zero(), |a, v| a.max(*v)).as_f64(),
        max_relative_error: relative_error.iter().fold(T::zero(), |a, v| a.max(*v)).as_f64(),
        components,
    };
    if plan.components.iter().all(|c| c.satisfied == Some(true)) && !plan.assembly_satisfied {
        log::error!(
            "{method}: every component meets its budget but the assembly requirement fails (worst {:e})",
            plan.max_assembly_weighted
        );
    }
    Ok(PlanResult {
        plan,
        models,
        coupled,
        relative_error,
    })
}

/// Reduced components for one method.
pub fn plan_models<T: Real>(
    method: Method,
    run: &PreparedRun<T>,
    reference: &Reference<T>,
    budget: Option<&ComponentBudget<T>>,
) -> Result<Vec<ReducedModel<T>>> {
    match method {
        Method::Standard(i) => standard_models(run, reference, i),
        Method::Proposed => match budget {
            Some(b) => proposed_models(reference, b),
            None => Err(Error::Config("the proposed method needs budgets".into())),
        },
    }
}

/// Full chain in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome<T: Real> {
    pub reference: Reference<T>,
    pub requirement: AssemblyRequirement<T>,
    pub budget: ComponentBudget<T>,
    pub plans: Vec<PlanResult<T>>,
}

impl<T: Real> RunOutcome<T> {
    pub fn plan(&self, method: Method) -> Option<&PlanResult<T>> {
        self.plans.iter().find(|p| p.plan.method == method)
    }

    /// Smallest total among satisfying uniform plans.
    pub fn best_uniform(&self) -> Option<&PlanResult<T>> {
        self.plans
            .iter()
            .filter(|p| matches!(p.plan.method, Method::Standard(_)) && p.plan.assembly_satisfied)
            .min_by_key(|p| p.plan.total_n_hat)
    }
}

pub fn run_pipeline<T: Real>(run: &PreparedRun<T>) -> Result<RunOutcome<T>> {
    let reference = build_reference(run)?;
    let (requirement, budget) = synthesize(run, &reference)?;
    let plans = run
        .methods
        .iter()
        .map(|&m| {
            let models = plan_models(m, run, &reference, Some(&budget))?;
            evaluate_plan(m, models, run, &reference, &requirement, Some(&budget))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutcome {
        reference,
        requirement,
        budget,
        plans,
    })
}

// ---------------------------------------------------------------- output

/// Round-trip float formatting (17 significant digits).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

fn hz<T: Real>(omega: T) -> f64 {
    (omega / T::two_pi()).as_f64()
}

pub const BUDGETS_CSV: &str = "budgets.csv";
pub const SENSITIVITY_CSV: &str = "sensitivity.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const FRF_CSV: &str = "frf.csv";
pub const RELERR_CSV: &str = "relerr.csv";
pub const REPORT_TXT: &str = "report.txt";

/// One row per (frequency, component, channel); cells past `p_j` (for `W`)
/// or `m_j` (for `V`) stay empty. `capped` marks components with a weight
/// held at the cap.
pub fn budgets_csv<T: Real>(budget: &ComponentBudget<T>, ids: &[String]) -> String {
    let mut s = String::from("f_hz,component,channel,w_value,v_value,d_value,lmi_min_eig,capped\n");
    for f in &budget.frequencies {
        for (j, &(m, p)) in budget.signature.iter().enumerate() {
            for c in 0..m.max(p) {
                let w = if c < p { fmt_float(f.w[j][c].as_f64()) } else { String::new() };
                let v = if c < m { fmt_float(f.v[j][c].as_f64()) } else { String::new() };
                let _ = writeln!(
                    s,
                    "{},{},{c},{w},{v},{},{},{}",
                    fmt_float(hz(f.omega)),
                    ids[j],
                    fmt_float(f.d[j].as_f64()),
                    fmt_float(f.lmi_min_eig.as_f64()),
                    flag(Some(f.capped[j]))
                );
            }
        }
    }
    s
}

/// Parses [`budgets_csv`] output back onto `grid`.
pub fn parse_budgets_csv<T: Real>(
    text: &str,
    ids: &[String],
    signature: &[(usize, usize)],
    grid: &FrequencyGrid<T>,
    cap: f64,
) -> Result<ComponentBudget<T>> {
    let bad = |m: String| Error::Config(format!("budgets file: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some("f_hz,component,channel,w_value,v_value,d_value,lmi_min_eig,capped") {
        return Err(bad("unexpected header".into()));
    }
    let num = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'"))) };
    let rows_per_freq: usize = signature.iter().map(|&(m, p)| m.max(p)).sum();
    let rows: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();
    if rows.len() != rows_per_freq * grid.len() {
        return Err(bad(format!("{} rows, expected {}", rows.len(), rows_per_freq * grid.len())));
    }
    let mut frequencies = Vec::with_capacity(grid.len());
    let mut it = rows.into_iter();
    for &omega in grid.omegas() {
        let mut w = Vec::new();
        let mut v = Vec::new();
        let mut d = Vec::new();
        let mut capped = Vec::new();
        let mut eig = 0.0;
        for (j, &(m, p)) in signature.iter().enumerate() {
            let mut wj = Vec::with_capacity(p);
            let mut vj = Vec::with_capacity(m);
            let mut dj = 1.0;
            for c in 0..m.max(p) {
                let cells: Vec<&str> = it.next().unwrap().split(',').collect();
                if cells.len() != 8 {
                    return Err(bad(format!("row has {} cells", cells.len())));
                }
                let f = num(cells[0])?;
                if (f - hz(omega)).abs() > 1e-9 * f.abs() {
                    return Err(bad(format!("frequency {f} does not match the grid")));
                }
                if cells[1] != ids[j] || cells[2] != c.to_string() {
                    return Err(bad(format!("expected component {} channel {c}", ids[j])));
                }
                if c < p {
                    wj.push(T::lit(num(cells[3])?));
                }
                if c < m {
                    vj.push(T::lit(num(cells[4])?));
                }
                dj = num(cells[5])?;
                eig = num(cells[6])?;
            }
            let limit = T::lit(cap * (1.0 - CAP_ACTIVE_TOL));
            capped.push(wj.iter().chain(&vj).any(|x| *x >= limit));
            if wj.iter().chain(&vj).any(|x| !(*x > T::zero())) {
                return Err(bad("weights must be positive".into()));
            }
            w.push(nalgebra::DVector::from_vec(wj));
            v.push(nalgebra::DVector::from_vec(vj));
            d.push(T::lit(dj));
        }
        frequencies.push(FrequencyBudget {
            omega,
            w,
            v,
            d,
            d_c: T::one(),
            lmi_min_eig: T::lit(eig),
            capped,
            history: Vec::new(),
        });
    }
    Ok(ComponentBudget {
        signature: signature.to_vec(),
        frequencies,
    })
}

pub fn sensitivity_csv<T: Real>(budget: &ComponentBudget<T>, ids: &[String]) -> String {
    let curve = sensitivity(budget);
    let mut s = String::from("f_hz");
    for id in ids {
        let _ = write!(s, ",{id}");
    }
    s.push('\n');
    for (w, row) in curve.omegas.iter().zip(&curve.values) {
        s.push_str(&fmt_float(hz(*w)));
        for v in row {
            let _ = write!(s, ",{}", fmt_float(v.as_f64()));
        }
        s.push('\n');
    }
    s
}

fn flag(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "yes",
        Some(false) => "no",
        None => "",
    }
}

pub fn summary_csv(plans: &[ReductionPlan]) -> String {
    let mut s = String::from(
        "method,component,f_cut_hz,n_rigid,n_elastic,n_boundary,n_hat,requirement_met,max_weighted_error\n",
    );
    for p in plans {
        for c in &p.components {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                p.method,
                c.id,
                fmt_float(c.f_cut_hz),
                c.n_rigid,
                c.n_elastic,
                c.n_boundary,
                c.n_hat,
                flag(c.satisfied),
                c.max_weighted_error.map(fmt_float).unwrap_or_default()
            );
        }
        let _ = writeln!(
            s,
            "{},assembly,,,,,{},{},{}",
            p.method,
            p.total_n_hat,
            flag(Some(p.assembly_satisfied)),
            fmt_float(p.max_assembly_weighted)
        );
    }
    s
}

/// Magnitudes of every coupled response entry, reference first.
pub fn frf_csv<T: Real>(reference: &FrfSamples<T>, plans: &[(Method, &FrfSamples<T>)]) -> String {
    let mut s = String::from("f_hz,model,output,input,magnitude\n");
    let mut rows = |name: &str, h: &FrfSamples<T>| {
        for (w, v) in h.omegas.iter().zip(&h.values) {
            for r in 0..v.nrows() {
                for c in 0..v.ncols() {
                    let _ = writeln!(s, "{},{name},{r},{c},{}", fmt_float(hz(*w)), fmt_float(v[(r, c)].modulus().as_f64()));
                }
            }
        }
    };
    rows("reference", reference);
    for (m, h) in plans {
        rows(&m.to_string(), h);
    }
    s
}

/// `‖E_c‖ / ‖H_c‖` per method next to the allowed level `γ`.
pub fn relerr_csv<T: Real>(omegas: &[T], gamma: T, plans: &[(Method, &[T])]) -> String {
    let mut s = String::from("f_hz,gamma");
    for (m, _) in plans {
        let _ = write!(s, ",{m}");
    }
    s.push('\n');
    for (k, w) in omegas.iter().enumerate() {
        let _ = write!(s, "{},{}", fmt_float(hz(*w)), fmt_float(gamma.as_f64()));
        for (_, e) in plans {
            let _ = write!(s, ",{}", fmt_float(e[k].as_f64()));
        }
        s.push('\n');
    }
    s
}

/// Plain-text comparison table.
pub fn report_text(plans: &[ReductionPlan], gamma: f64, best_uniform: Option<Method>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Reduction plans against the relative assembly requirement gamma = {gamma}");
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<12} {:<12} {:>12} {:>7} {:>8} {:>8} {:>6}  {}",
        "method", "component", "f_cut [Hz]", "rigid", "elastic", "boundary", "n_hat", "budget met"
    );
    for p in plans {
        for c in &p.components {
            let _ = writeln!(
                s,
                "{:<12} {:<12} {:>12.1} {:>7} {:>8} {:>8} {:>6}  {}",
                p.method.to_string(),
                c.id,
                c.f_cut_hz,
                c.n_rigid,
                c.n_elastic,
                c.n_boundary,
                c.n_hat,
                flag(c.satisfied)
            );
        }
        let _ = writeln!(
            s,
            "{:<12} {:<12} {:>12} {:>7} {:>8} {:>8} {:>6}  requirement met: {}, max relative error {:.4e}",
            p.method.to_string(),
            "assembly",
            "",
            "",
            "",
            "",
            p.total_n_hat,
            flag(Some(p.assembly_satisfied)),
            p.max_relative_error
        );
        let _ = writeln!(s);
    }
    match best_uniform {
        Some(m) => {
            let _ = writeln!(s, "smallest satisfying uniform plan: {m}");
        }
        None => {
            let _ = writeln!(s, "no uniform plan satisfies the requirement");
        }
    }
    s
}

/// Writes every CSV and the text report into `dir`.
pub fn write_outputs<T: Real>(dir: &Path, run: &PreparedRun<T>, outcome: &RunOutcome<T>) -> Result<()> {
    write_file(dir, BUDGETS_CSV, &budgets_csv(&outcome.budget, &run.ids))?;
    write_file(dir, SENSITIVITY_CSV, &sensitivity_csv(&outcome.budget, &run.ids))?;
    write_plan_outputs(dir, run, &outcome.reference, &outcome.plans)?;
    Ok(())
}

/// Summary, response and relative-error files plus the text report.
pub fn write_plan_outputs<T: Real>(dir: &Path, run: &PreparedRun<T>, reference: &Reference<T>, plans: &[PlanResult<T>]) -> Result<()> {
    let summaries: Vec<ReductionPlan> = plans.iter().map(|p| p.plan.clone()).collect();
    write_file(dir, SUMMARY_CSV, &summary_csv(&summaries))?;
    let frfs: Vec<(Method, &FrfSamples<T>)> = plans.iter().map(|p| (p.plan.method, &p.coupled)).collect();
    write_file(dir, FRF_CSV, &frf_csv(&reference.coupled, &frfs))?;
    let errs: Vec<(Method, &[T])> = plans.iter().map(|p| (p.plan.method, p.relative_error.as_slice())).collect();
    write_file(dir, RELERR_CSV, &relerr_csv(run.grid.omegas(), run.gamma, &errs))?;
    let best = plans
        .iter()
        .filter(|p| matches!(p.plan.method, Method::Standard(_)) && p.plan.assembly_satisfied)
        .min_by_key(|p| p.plan.total_n_hat)
        .map(|p| p.plan.method);
    write_file(dir, REPORT_TXT, &report_text(&summaries, run.gamma.as_f64(), best))?;
    Ok(())
}

/// Directory holding the reduced components of one method.
pub fn rom_dir(out: &Path, method: Method) -> PathBuf {
    out.join("roms").join(method.to_string())
}

pub fn write_roms<T: Real>(out: &Path, method: Method, models: &[ReducedModel<T>]) -> Result<()> {
    let dir = rom_dir(out, method);
    for m in models {
        let text = serde_json::to_string_pretty(&m.to_document())?;
        write_file(&dir, &format!("{}.json", m.component_id), &text)?;
    }
    Ok(())
}

/// Reads reduced components back; coordinate counts come from the labels
/// written by the reducer.
pub fn read_roms<T: Real>(out: &Path, method: Method, ids: &[String]) -> Result<Vec<ReducedModel<T>>> {
    let dir = rom_dir(out, method);
    ids.iter()
        .map(|id| {
            let path = dir.join(format!("{id}.json"));
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let (model, partition) = doc.to_model::<T>()?;
            let labels = model.dof_labels();
            let n_rigid = labels.iter().filter(|l| l.starts_with("ir")).count();
            let n_elastic = labels.iter().filter(|l| l.starts_with("ue")).count();
            let f_cut_hz = doc.provenance.as_ref().map(|p| p.f_cut_hz).unwrap_or(0.0);
            Ok(ReducedModel {
                model,
                component_id: id.clone(),
                f_cut_hz: T::lit(f_cut_hz),
                n_rigid,
                n_elastic,
                n_boundary: partition.n_boundary(),
            })
        })
        .collect()
}

/// Reference plus budgets; writes the budget and sensitivity files.
pub fn stage_synthesize<T: Real>(run: &PreparedRun<T>, out: &Path) -> Result<ComponentBudget<T>> {
    let reference = build_reference(run)?;
    let (_, budget) = synthesize(run, &reference)?;
    write_file(out, BUDGETS_CSV, &budgets_csv(&budget, &run.ids))?;
    write_file(out, SENSITIVITY_CSV, &sensitivity_csv(&budget, &run.ids))?;
    Ok(budget)
}

fn load_budget<T: Real>(run: &PreparedRun<T>, out: &Path) -> Result<ComponentBudget<T>> {
    let path = out.join(BUDGETS_CSV);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {} (run synthesize first): {e}", path.display())))?;
    parse_budgets_csv(&text, &run.ids, &run.interconnection.signature, &run.grid, run.options.cap)
}

/// Reduces every configured method and writes the reduced components. The
/// stored budgets are required only when the proposed method is configured.
pub fn stage_reduce<T: Real>(run: &PreparedRun<T>, out: &Path) -> Result<Vec<PlanResult<T>>> {
    let budget = if run.methods.contains(&Method::Proposed) || out.join(BUDGETS_CSV).exists() {
        Some(load_budget(run, out)?)
    } else {
        None
    };
    let reference = build_reference(run)?;
    let req = relative_error_requirement(&reference.coupled, run.gamma)?;
    let plans = run
        .methods
        .iter()
        .map(|&m| {
            let models = plan_models(m, run, &reference, budget.as_ref())?;
            write_roms(out, m, &models)?;
            evaluate_plan(m, models, run, &reference, &req, budget.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<ReductionPlan> = plans.iter().map(|p| p.plan.clone()).collect();
    write_file(out, SUMMARY_CSV, &summary_csv(&summaries))?;
    Ok(plans)
}

/// Verifies stored reduced components against the reference assembly and
/// writes the comparison files. Component flags use stored budgets when
/// present.
pub fn stage_check<T: Real>(run: &PreparedRun<T>, out: &Path) -> Result<Vec<PlanResult<T>>> {
    let budget = if out.join(BUDGETS_CSV).exists() {
        Some(load_budget(run, out)?)
    } else {
        None
    };
    let reference = build_reference(run)?;
    let req = relative_error_requirement(&reference.coupled, run.gamma)?;
    let plans = run
        .methods
        .iter()
        .map(|&m| {
            let models = read_roms(out, m, &run.ids)?;
            evaluate_plan(m, models, run, &reference, &req, budget.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    write_plan_outputs(out, run, &reference, &plans)?;
    Ok(plans)
}

/// Everything in one go: files, budgets and reduced components.
pub fn stage_run<T: Real>(run: &PreparedRun<T>, out: &Path) -> Result<RunOutcome<T>> {
    let outcome = run_pipeline(run)?;
    write_outputs(out, run, &outcome)?;
    for p in &outcome.plans {
        write_roms(out, p.plan.method, &p.models)?;
    }
    Ok(outcome)
}
