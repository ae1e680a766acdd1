use thiserror::Error;

/// Errors raised anywhere in the reduction and budget-synthesis chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid DOF partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dynamic stiffness singular at omega = {omega} rad/s (rcond estimate {rcond:e})")]
    SingularDynamicStiffness { omega: f64, rcond: f64 },

    #[error("generalized eigensolver failed: {0}")]
    EigenSolveFailure(String),

    #[error("{map} map acts on internal DOF {dof}; loads and measurements must sit on boundary DOF")]
    NonBoundaryLoading { map: &'static str, dof: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("element {element} is degenerate (jacobian {jacobian:e})")]
    DegenerateElement { element: usize, jacobian: f64 },

    #[error("internal stiffness block K_ii is singular; boundary DOF do not restrain the component")]
    SingularInternalStiffness,

    #[error("reduction basis is rank deficient: rank {rank} < {columns} columns (offending columns {offending:?})")]
    RankDeficientBasis {
        rank: usize,
        columns: usize,
        offending: Vec<usize>,
    },

    #[error("frequency grids or response dimensions do not match: {0}")]
    GridMismatch(String),

    #[error("interconnection is ill-posed at omega = {omega} rad/s (condition estimate {cond:e})")]
    IllPosedInterconnection { omega: f64, cond: f64 },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("LMI is infeasible (best phase-one margin {best_margin:e})")]
    Infeasible { best_margin: f64 },

    #[error("solver stopped after {iterations} iterations without converging")]
    MaxIterations { iterations: usize },

    #[error("assembly response vanishes at omega = {omega} rad/s; relative requirement undefined")]
    ZeroResponse { omega: f64 },

    #[error("no feasible component budget exists at omega = {omega} rad/s")]
    InfeasibleAtFrequency { omega: f64 },

    #[error("propagation violated at omega = {omega} rad/s, sample {sample}: weighted assembly error {margin}")]
    PropagationViolation {
        omega: f64,
        sample: usize,
        margin: f64,
    },

    #[error("component {component} cannot meet its budget even with the full reference basis")]
    BudgetUnreachable { component: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
