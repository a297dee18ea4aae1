//! Columnar join engine, probe-count cost model and join-order optimizer
//! for acyclic many-to-many equi-join queries.
//!
//! Statistics, costs and the optimizer are generic over the scalar type;
//! the aliases below fix it to `f64` or `f32`.

pub mod bench;
pub mod catalog;
pub mod cost;
pub mod engine;
pub mod error;
pub mod optimizer;
pub mod query;
pub mod scalar;
pub mod stats;

pub use catalog::{Catalog, Relation};
pub use engine::{execute, ExecOptions, OutputMode, ResultSummary};
pub use error::{Error, Result};
pub use query::{JoinTree, NodeSet, Plan, QuerySpec, RootedTree, Strategy};
pub use scalar::Scalar;

pub type EdgeStats64 = stats::EdgeStats<f64>;
pub type EdgeStats32 = stats::EdgeStats<f32>;
pub type StatsTree64 = cost::StatsTree<f64>;
pub type StatsTree32 = cost::StatsTree<f32>;
pub type Weights64 = cost::Weights<f64>;
pub type Weights32 = cost::Weights<f32>;
pub type CostBreakdown64 = cost::CostBreakdown<f64>;
pub type CostBreakdown32 = cost::CostBreakdown<f32>;
pub type OptimizerConfig64 = optimizer::OptimizerConfig<f64>;
pub type OptResult64 = optimizer::OptResult<f64>;
pub type OptResult32 = optimizer::OptResult<f32>;
