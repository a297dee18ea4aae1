//! Experiment drivers. Each returns a [`Report`] holding the effective
//! configuration and flat tables that can be written as CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::gen::{gen_synthetic, FanoutSpec, GeneratedInstance, MRange, Shape, ShapeSpec};
use super::instances::{random_parents, random_stats_tree};
use crate::cost::{cost_plan, robustness_bounds, weighted_plan_cost, BoundMode, Evaluator, StatsTree, Weights};
use crate::engine::{execute_rooted, ExecOptions, ExecutionStats, OutputMode, ResultSummary};
use crate::error::{Error, Result};
use crate::optimizer::{dp_order, greedy_order, optimize, Algorithm, OptimizerConfig, DEFAULT_MAX_RELATIONS};
use crate::query::{RootedTree, SjPlan, Strategy};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    CompareStrategies,
    CostValidation,
    FanoutSensitivity,
    Robustness,
    OptimizerQuality,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::CompareStrategies,
        Experiment::CostValidation,
        Experiment::FanoutSensitivity,
        Experiment::Robustness,
        Experiment::OptimizerQuality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::CompareStrategies => "compare_strategies",
            Experiment::CostValidation => "cost_validation",
            Experiment::FanoutSensitivity => "fanout_sensitivity",
            Experiment::Robustness => "robustness",
            Experiment::OptimizerQuality => "optimizer_quality",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Instances to run on (all experiments except optimizer_quality).
    pub shapes: Vec<ShapeSpec>,
    pub strategies: Vec<Strategy>,
    /// Random join orders per instance.
    pub orders: usize,
    /// Random trees per match range (optimizer_quality).
    pub trees: usize,
    /// Inclusive range of relation counts for random trees.
    pub tree_sizes: (usize, usize),
    pub m_ranges: Vec<MRange>,
    pub fo_range: (f64, f64),
    /// Fanout distributions swept by fanout_sensitivity; each replaces the
    /// fanout of every instance in `shapes`.
    pub fanouts: Vec<FanoutSpec>,
    pub algorithm: Algorithm,
    pub weights: Weights<f64>,
    pub chunk_size: usize,
    pub timeout_seconds: Option<f64>,
}

fn shape(shape: Shape, n: usize, m: MRange, fanout: FanoutSpec, seed: u64) -> ShapeSpec {
    ShapeSpec {
        shape,
        n,
        m,
        fanout,
        seed,
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mid = MRange { lo: 0.5, hi: 0.5 };
        let paper_shapes = |m: MRange, fanout: FanoutSpec| {
            vec![
                shape(Shape::Star(7), 10_000, m, fanout, 1),
                shape(Shape::Path(11), 10_000, m, fanout, 2),
                shape(Shape::Snowflake(3, 2), 10_000, m, fanout, 3),
                shape(Shape::Snowflake(5, 1), 10_000, m, fanout, 4),
            ]
        };
        let mut c = ExperimentConfig {
            experiment,
            seed: 42,
            shapes: paper_shapes(MRange { lo: 0.1, hi: 0.5 }, FanoutSpec::Uniform(1, 10)),
            strategies: Strategy::ALL.to_vec(),
            orders: 10,
            trees: 100,
            tree_sizes: (4, 10),
            m_ranges: vec![
                MRange { lo: 0.05, hi: 0.2 },
                MRange { lo: 0.05, hi: 0.5 },
                MRange { lo: 0.1, hi: 0.5 },
                MRange { lo: 0.5, hi: 0.9 },
            ],
            fo_range: (1.0, 10.0),
            fanouts: Vec::new(),
            algorithm: Algorithm::Exhaustive,
            weights: Weights::default(),
            chunk_size: crate::catalog::DEFAULT_CHUNK_SIZE,
            timeout_seconds: Some(600.0),
        };
        match experiment {
            Experiment::CompareStrategies | Experiment::OptimizerQuality => {}
            Experiment::CostValidation => {
                c.shapes = paper_shapes(mid, FanoutSpec::Constant(2.0));
                c.strategies = vec![Strategy::Std, Strategy::Com];
                c.orders = 300;
            }
            Experiment::FanoutSensitivity => {
                let m = MRange { lo: 0.1, hi: 0.1 };
                c.shapes = vec![shape(Shape::Snowflake(3, 2), 5_000, m, FanoutSpec::Constant(10.0), 5)];
                c.strategies = vec![Strategy::Com];
                c.orders = 5;
                c.fanouts = [1.0, 4.0, 9.0, 16.0, 25.0]
                    .iter()
                    .map(|&variance| FanoutSpec::Normal { mean: 10.0, variance })
                    .chain([2.0, 4.0, 6.0, 8.0, 10.0].iter().map(|&m| FanoutSpec::Exponential(m)))
                    .collect();
            }
            Experiment::Robustness => {
                c.shapes = paper_shapes(MRange { lo: 0.2, hi: 0.8 }, FanoutSpec::Uniform(1, 4));
            }
        }
        c
    }

    /// Parses a JSON config. Keys that are absent take the defaults of the
    /// named experiment.
    pub fn from_json(text: &str) -> Result<Self> {
        let given: Value = serde_json::from_str(text)?;
        let kind: Experiment = match given.get("experiment") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => return Err(Error::InvalidArgument("experiment config lacks `experiment`".into())),
        };
        let mut merged = serde_json::to_value(Self::defaults(kind))?;
        if let (Some(m), Some(g)) = (merged.as_object_mut(), given.as_object()) {
            for (k, v) in g {
                m.insert(k.clone(), v.clone());
            }
        }
        Ok(serde_json::from_value(merged)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.chunk_size == 0 {
            return Err(Error::InvalidArgument("chunk size must be positive".into()));
        }
        if self.tree_sizes.0 < 2 || self.tree_sizes.0 > self.tree_sizes.1 {
            return Err(Error::InvalidArgument("tree sizes must satisfy 2 <= lo <= hi".into()));
        }
        if self.fo_range.0 < 1.0 || self.fo_range.0 > self.fo_range.1 {
            return Err(Error::InvalidArgument("fanout range must satisfy 1 <= lo <= hi".into()));
        }
        Ok(())
    }

    fn exec_options(&self) -> ExecOptions {
        ExecOptions {
            chunk_size: self.chunk_size,
            output: OutputMode::CountOnly,
            timeout: self.timeout_seconds.map(Duration::from_secs_f64),
            ..ExecOptions::default()
        }
    }
}

/// Column-named rows of JSON scalars.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| match v {
                Value::String(s) => s.clone(),
                Value::Null => String::new(),
                other => other.to_string(),
            }))
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub summary: BTreeMap<String, f64>,
    pub tables: BTreeMap<String, Table>,
    /// Executions stopped by the timeout; their counters are partial.
    pub timeouts: u64,
}

impl Report {
    fn new(config: &ExperimentConfig) -> Self {
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: config.experiment,
            config: config.clone(),
            summary: BTreeMap::new(),
            tables: BTreeMap::new(),
            timeouts: 0,
        }
    }

    /// Writes `report.json` and one `<table>.csv` per table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))?;
        for (name, t) in &self.tables {
            t.write_csv(&dir.join(format!("{name}.csv")))?;
        }
        Ok(())
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    match config.experiment {
        Experiment::CompareStrategies => compare_strategies(config),
        Experiment::CostValidation => cost_validation(config),
        Experiment::FanoutSensitivity => fanout_sensitivity(config),
        Experiment::Robustness => robustness(config),
        Experiment::OptimizerQuality => optimizer_quality(config),
    }
}

/// One generated instance rooted at its driver.
pub struct Prepared {
    pub instance: GeneratedInstance,
    pub stats: StatsTree<f64>,
}

impl Prepared {
    pub fn new(instance: GeneratedInstance) -> Result<Self> {
        let tree = instance.tree()?.root_at(instance.driver())?;
        let stats = StatsTree::from_file(tree, &instance.stats)?;
        Ok(Prepared { instance, stats })
    }

    pub fn generate(spec: &ShapeSpec) -> Result<Self> {
        Self::new(gen_synthetic(spec)?)
    }

    pub fn tree(&self) -> &RootedTree {
        &self.stats.tree
    }

    pub fn execute(&self, plan: &SjPlan, strategy: Strategy, opts: &ExecOptions) -> Result<ResultSummary> {
        execute_rooted(&self.instance.catalog, self.tree(), plan, strategy, opts)
    }
}

pub fn measured_weighted(stats: &ExecutionStats, w: &Weights<f64>) -> f64 {
    w.w_hash * stats.total_hash() as f64
        + w.w_bitvector * stats.total_bitvector() as f64
        + w.w_semijoin * stats.total_semijoin() as f64
        + w.w_emit * stats.emitted_tuples as f64
}

/// Relative error of `predicted` against `measured`; 0 when both are 0.
pub fn relative_error(predicted: f64, measured: f64) -> f64 {
    if measured == 0.0 {
        if predicted == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (predicted - measured).abs() / measured
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

/// Random phase-two order; semi-join strategies probe children in
/// declaration order.
fn random_plan(tree: &RootedTree, rng: &mut ChaCha8Rng) -> SjPlan {
    SjPlan::with_default_children(tree, tree.random_order(rng))
}

fn compare_strategies(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new(cfg);
    let opts = cfg.exec_options();
    let mut t = Table::new(&[
        "shape",
        "seed",
        "strategy",
        "algorithm",
        "order",
        "predicted_cost",
        "measured_cost",
        "hash_probes",
        "bitvector_probes",
        "semijoin_probes",
        "cardinality",
        "wall_time_ms",
        "relative_time",
        "timed_out",
    ]);
    let mut violations = 0u64;
    for spec in &cfg.shapes {
        let p = Prepared::generate(spec)?;
        let mut rows = Vec::new();
        for &strategy in &cfg.strategies {
            let algorithm = if p.stats.len() > DEFAULT_MAX_RELATIONS {
                Algorithm::GreedySurvival
            } else {
                cfg.algorithm
            };
            let oc = OptimizerConfig {
                algorithm,
                strategy,
                weights: cfg.weights,
                enumerate_drivers: false,
                max_relations: DEFAULT_MAX_RELATIONS,
            };
            let r = optimize(&p.stats, &oc)?;
            let res = p.execute(&r.plan, strategy, &opts)?;
            violations += res.stats.invariant_violations;
            report.timeouts += res.timed_out as u64;
            rows.push((strategy, algorithm, r, res));
        }
        let fastest = rows
            .iter()
            .map(|(.., res)| res.wall_time_ms)
            .fold(f64::INFINITY, f64::min)
            .max(1e-9);
        for (strategy, algorithm, r, res) in rows {
            t.push(vec![
                json!(spec.shape.to_string()),
                json!(spec.seed),
                json!(strategy.as_str()),
                json!(algorithm.as_str()),
                json!(p.tree().names_of(&r.plan.order).join(" ")),
                json!(r.cost),
                json!(measured_weighted(&res.stats, &cfg.weights)),
                json!(res.stats.total_hash()),
                json!(res.stats.total_bitvector()),
                json!(res.stats.total_semijoin()),
                json!(res.cardinality),
                json!(res.wall_time_ms),
                json!(res.wall_time_ms / fastest),
                json!(res.timed_out),
            ]);
        }
    }
    report.summary.insert("invariant_violations".into(), violations as f64);
    report.tables.insert("runs".into(), t);
    Ok(report)
}

fn cost_validation(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new(cfg);
    let opts = cfg.exec_options();
    let w = &cfg.weights;
    let mut t = Table::new(&[
        "shape",
        "seed",
        "strategy",
        "order_index",
        "order",
        "predicted_hash",
        "measured_hash",
        "hash_relative_error",
        "predicted_cost",
        "measured_cost",
        "wall_time_ms",
        "timed_out",
    ]);
    let (mut within, mut total, mut violations) = (0u64, 0u64, 0u64);
    for spec in &cfg.shapes {
        let p = Prepared::generate(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ spec.seed);
        let plans: Vec<SjPlan> = (0..cfg.orders).map(|_| random_plan(p.tree(), &mut rng)).collect();
        for &strategy in &cfg.strategies {
            for (i, plan) in plans.iter().enumerate() {
                let b = cost_plan(&p.stats, plan, strategy, w)?;
                let res = p.execute(plan, strategy, &opts)?;
                violations += res.stats.invariant_violations;
                report.timeouts += res.timed_out as u64;
                let err = relative_error(b.total_hash(), res.stats.total_hash() as f64);
                total += 1;
                within += (err <= 0.1) as u64;
                t.push(vec![
                    json!(spec.shape.to_string()),
                    json!(spec.seed),
                    json!(strategy.as_str()),
                    json!(i),
                    json!(p.tree().names_of(&plan.order).join(" ")),
                    json!(b.total_hash()),
                    json!(res.stats.total_hash()),
                    json!(err),
                    json!(weighted_plan_cost(&p.stats, &b, w)),
                    json!(measured_weighted(&res.stats, w)),
                    json!(res.wall_time_ms),
                    json!(res.timed_out),
                ]);
            }
        }
    }
    report
        .summary
        .insert("fraction_within_10pct".into(), within as f64 / total.max(1) as f64);
    report.summary.insert("invariant_violations".into(), violations as f64);
    report.tables.insert("orders".into(), t);
    Ok(report)
}

/// Nominal variance of a fanout distribution before truncation and rounding.
fn nominal_variance(f: &FanoutSpec) -> f64 {
    match *f {
        FanoutSpec::Constant(_) => 0.0,
        FanoutSpec::Uniform(lo, hi) => {
            let k = (hi - lo + 1) as f64;
            (k * k - 1.0) / 12.0
        }
        FanoutSpec::Normal { variance, .. } => variance,
        FanoutSpec::Exponential(mean) => mean * mean,
    }
}

fn fanout_sensitivity(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new(cfg);
    let opts = cfg.exec_options();
    let mut t = Table::new(&[
        "shape",
        "fanout",
        "nominal_variance",
        "strategy",
        "estimated_probes",
        "actual_probes",
        "ratio",
    ]);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut violations = 0u64;
    for spec in &cfg.shapes {
        let fanouts = if cfg.fanouts.is_empty() {
            vec![spec.fanout]
        } else {
            cfg.fanouts.clone()
        };
        for fanout in fanouts {
            let p = Prepared::generate(&ShapeSpec { fanout, ..spec.clone() })?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ spec.seed);
            let plans: Vec<SjPlan> = (0..cfg.orders.max(1)).map(|_| random_plan(p.tree(), &mut rng)).collect();
            for &strategy in &cfg.strategies {
                let (mut est, mut act) = (0.0, 0.0);
                for plan in &plans {
                    est += cost_plan(&p.stats, plan, strategy, &cfg.weights)?.total_hash();
                    let res = p.execute(plan, strategy, &opts)?;
                    violations += res.stats.invariant_violations;
                    report.timeouts += res.timed_out as u64;
                    act += res.stats.total_hash() as f64;
                }
                let ratio = est / act;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
                t.push(vec![
                    json!(spec.shape.to_string()),
                    json!(fanout.to_string()),
                    json!(nominal_variance(&fanout)),
                    json!(strategy.as_str()),
                    json!(est),
                    json!(act),
                    json!(ratio),
                ]);
            }
        }
    }
    report.summary.insert("min_ratio".into(), lo);
    report.summary.insert("max_ratio".into(), hi);
    report.summary.insert("invariant_violations".into(), violations as f64);
    report.tables.insert("levels".into(), t);
    Ok(report)
}

fn robustness(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new(cfg);
    let opts = cfg.exec_options();
    let w = &cfg.weights;
    let mut t = Table::new(&[
        "shape",
        "strategy",
        "order_index",
        "order",
        "measured_cost",
        "normalized_cost",
        "phase2_hash_probes",
        "wall_time_ms",
        "timed_out",
    ]);
    let mut bounds = Table::new(&["shape", "relations", "m_lo", "m_hi", "theta", "theta_upper"]);
    let mut spread: BTreeMap<Strategy, f64> = BTreeMap::new();
    let mut violations = 0u64;
    for spec in &cfg.shapes {
        let p = Prepared::generate(spec)?;
        let b = robustness_bounds(p.stats.len(), spec.m.lo, spec.m.hi, BoundMode::Match)?;
        bounds.push(vec![
            json!(spec.shape.to_string()),
            json!(p.stats.len()),
            json!(spec.m.lo),
            json!(spec.m.hi),
            json!(b.theta),
            json!(b.big_theta),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ spec.seed);
        let plans: Vec<SjPlan> = (0..cfg.orders).map(|_| random_plan(p.tree(), &mut rng)).collect();
        for &strategy in &cfg.strategies {
            let mut runs = Vec::new();
            for plan in &plans {
                let res = p.execute(plan, strategy, &opts)?;
                violations += res.stats.invariant_violations;
                report.timeouts += res.timed_out as u64;
                runs.push(res);
            }
            let costs: Vec<f64> = runs.iter().map(|r| measured_weighted(&r.stats, w)).collect();
            let max = costs.iter().copied().fold(0.0, f64::max);
            let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
            let s = if max > 0.0 { 1.0 - min / max } else { 0.0 };
            let e = spread.entry(strategy).or_insert(0.0);
            *e = e.max(s);
            for (i, (plan, res)) in plans.iter().zip(&runs).enumerate() {
                t.push(vec![
                    json!(spec.shape.to_string()),
                    json!(strategy.as_str()),
                    json!(i),
                    json!(p.tree().names_of(&plan.order).join(" ")),
                    json!(costs[i]),
                    json!(if max > 0.0 { costs[i] / max } else { 0.0 }),
                    json!(res.stats.total_hash()),
                    json!(res.wall_time_ms),
                    json!(res.timed_out),
                ]);
            }
        }
    }
    for (s, v) in spread {
        report.summary.insert(format!("max_spread_{}", s.as_str()), v);
    }
    report.summary.insert("invariant_violations".into(), violations as f64);
    report.tables.insert("orders".into(), t);
    report.tables.insert("bounds".into(), bounds);
    Ok(report)
}

fn optimizer_quality(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new(cfg);
    let w = &cfg.weights;
    let mut t = Table::new(&["m_range", "tree", "relations", "strategy", "algorithm", "cost", "ratio"]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for m in &cfg.m_ranges {
        for &strategy in &cfg.strategies {
            if strategy.uses_semijoins() {
                continue;
            }
            let mut ratios: BTreeMap<Algorithm, Vec<f64>> = BTreeMap::new();
            for i in 0..cfg.trees {
                let n = rand::Rng::gen_range(&mut rng, cfg.tree_sizes.0..=cfg.tree_sizes.1);
                let parents = random_parents(&mut rng, n);
                let st: StatsTree<f64> = random_stats_tree(&mut rng, &parents, 1e6, *m, cfg.fo_range)?;
                let eval = Evaluator::for_strategy(&st, strategy, w);
                let (_, opt, _) = dp_order(&eval, w, n.max(DEFAULT_MAX_RELATIONS))?;
                let mut row = |a: Algorithm, c: f64| {
                    let r = c / opt;
                    ratios.entry(a).or_default().push(r);
                    t.push(vec![
                        json!(m.to_string()),
                        json!(i),
                        json!(n),
                        json!(strategy.as_str()),
                        json!(a.as_str()),
                        json!(c),
                        json!(r),
                    ]);
                };
                row(Algorithm::Exhaustive, opt);
                for a in Algorithm::GREEDY {
                    let (order, _) = greedy_order(&st, a)?;
                    row(a, eval.objective(&order, w));
                }
            }
            for (a, r) in ratios {
                report
                    .summary
                    .insert(format!("median_ratio_{}_{}_{}", strategy.as_str(), m, a.as_str()), median(r));
            }
        }
    }
    report.tables.insert("trees".into(), t);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overlays_defaults() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "cost_validation", "orders": 3}"#).unwrap();
        assert_eq!(c.orders, 3);
        assert_eq!(c.strategies, vec![Strategy::Std, Strategy::Com]);
        assert!(ExperimentConfig::from_json(r#"{"orders": 3}"#).is_err());
        assert_eq!("fanout-sensitivity".parse::<Experiment>().unwrap(), Experiment::FanoutSensitivity);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_cost_validation_runs() {
        let mut c = ExperimentConfig::defaults(Experiment::CostValidation);
        c.shapes = vec![shape(Shape::Star(4), 2_000, MRange { lo: 0.5, hi: 0.5 }, FanoutSpec::Constant(2.0), 1)];
        c.orders = 3;
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.tables["orders"].rows.len(), 6);
        assert_eq!(r.summary["invariant_violations"], 0.0);
        assert_eq!(r.schema_version, REPORT_SCHEMA_VERSION);
    }
}
