//! Instance generation, reference joins and experiment drivers.

pub mod experiments;
pub mod gen;
pub mod instances;
pub mod oracle;

pub use gen::{gen_synthetic, gen_tree, EdgeTarget, FanoutSpec, GeneratedInstance, MRange, Shape, ShapeSpec};
pub use instances::{
    adversarial_instance, asi_counterexample, random_parents, random_small_instance, random_stats_tree,
    redundant_probe_instance,
};
pub use oracle::oracle_join;
