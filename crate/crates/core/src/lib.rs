pub mod assembly;
pub mod budget;
pub mod cms;
pub mod config;
pub mod demo;
pub mod error;
pub mod fem2d;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod sdp;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

/// Double-precision instantiations used by the command-line tool.
pub type SecondOrderModelF64 = model::SecondOrderModel<f64>;
pub type FrequencyGridF64 = model::FrequencyGrid<f64>;
pub type FrfSamplesF64 = model::FrfSamples<f64>;
pub type FeComponentF64 = fem2d::FeComponent<f64>;
pub type HhReducerF64 = cms::HhReducer<f64>;
pub type ReducedModelF64 = cms::ReducedModel<f64>;
pub type InterconnectionF64 = assembly::Interconnection<f64>;
pub type AssemblyModelF64 = assembly::AssemblyModel<f64>;
pub type DiagonalLmiProblemF64 = sdp::DiagonalLmiProblem<f64>;
pub type SdpSolutionF64 = sdp::SdpSolution<f64>;
pub type FrequencyBudgetF64 = budget::FrequencyBudget<f64>;
pub type ComponentBudgetF64 = budget::ComponentBudget<f64>;
pub type PreparedRunF64 = pipeline::PreparedRun<f64>;

/// Single-precision model types, for storage and quick FRF sweeps.
pub type SecondOrderModelF32 = model::SecondOrderModel<f32>;
pub type FrfSamplesF32 = model::FrfSamples<f32>;
