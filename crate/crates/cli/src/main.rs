use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mmjoin::bench::experiments::{run_experiment, Experiment, ExperimentConfig, Report};
use mmjoin::bench::{gen_synthetic, FanoutSpec, MRange, Shape, ShapeSpec};
use mmjoin::catalog::{ingest_csv, ingest_dir, read_schema, DEFAULT_CHUNK_SIZE};
use mmjoin::cost::{cost_plan, weighted_plan_cost, StatsTree, Weights};
use mmjoin::engine::{execute, ExecOptions, OutputMode, ResultSummary};
use mmjoin::optimizer::{optimize_query, Algorithm, OptimizerConfig, DEFAULT_MAX_RELATIONS};
use mmjoin::query::{validate_query, JoinTree, SjPlan};
use mmjoin::stats::{collect_stats, Estimator, StatsFile};
use mmjoin::{Catalog, Error, Plan, QuerySpec, Strategy};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "mmjoin", version, about = "Many-to-many join engine and join-order optimizer")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Tuples per chunk.
    #[arg(long, global = true, default_value_t = DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
    /// Seed for generators, samplers and random orders.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[arg(long, global = true)]
    w_hash: Option<f64>,
    #[arg(long, global = true)]
    w_bitvector: Option<f64>,
    #[arg(long, global = true)]
    w_semijoin: Option<f64>,
    #[arg(long, global = true)]
    w_emit: Option<f64>,
    /// Bitvector false-positive probability used by the cost model.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Execution timeout in seconds.
    #[arg(long = "timeout", global = true)]
    timeout_seconds: Option<f64>,
}

impl Global {
    fn weights(&self) -> Result<Weights<f64>, Error> {
        let d = Weights::<f64>::default();
        let w = Weights {
            w_hash: self.w_hash.unwrap_or(d.w_hash),
            w_bitvector: self.w_bitvector.unwrap_or(d.w_bitvector),
            w_semijoin: self.w_semijoin.unwrap_or(d.w_semijoin),
            w_emit: self.w_emit.unwrap_or(d.w_emit),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
        };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<(), Error> {
        if self.chunk_size == 0 {
            return Err(Error::InvalidArgument("--chunk-size must be positive".into()));
        }
        if let Some(t) = self.timeout_seconds {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument("--timeout must be a positive number of seconds".into()));
            }
        }
        self.weights().map(|_| ())
    }

    fn config(&self) -> Value {
        json!({
            "chunk_size": self.chunk_size,
            "seed": self.seed,
            "weights": self.weights().ok(),
            "timeout_seconds": self.timeout_seconds,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load CSV files described by a schema into a catalog directory.
    Ingest(IngestArgs),
    /// Generate a synthetic instance directory.
    Gen(GenArgs),
    /// Estimate edge statistics for a query.
    Stats(StatsArgs),
    /// Choose a join order.
    Optimize(OptimizeArgs),
    /// Execute a plan.
    Run(RunArgs),
    /// Run an experiment from a config file or by name.
    Bench(BenchArgs),
    /// Compare predicted and measured probe counts over random orders.
    ValidateCost(SweepArgs),
    /// Measure cost spread over random orders per strategy.
    Robustness(SweepArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// JSON schema: relation name to ordered column list.
    #[arg(long)]
    schema: PathBuf,
    /// Directory holding `<relation>.csv` files.
    #[arg(long, required_unless_present = "file")]
    dir: Option<PathBuf>,
    /// Explicit `RELATION=PATH` inputs; override `--dir`.
    #[arg(long, value_parser = parse_assignment)]
    file: Vec<(String, String)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// star:K, path:K or snowflake:A,B.
    #[arg(long)]
    shape: Shape,
    /// Driver cardinality.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Match probability or range LO:HI, sampled per edge.
    #[arg(long, default_value = "0.5")]
    m: MRange,
    /// Fanout: F, uniform:LO,HI, normal:MEAN,VAR or exponential:MEAN.
    #[arg(long, default_value = "2")]
    fo: FanoutSpec,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Exact,
    Naive,
    Sample,
}

#[derive(Args)]
struct StatsArgs {
    /// Catalog directory; defaults to `catalog/` next to the query.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    query: PathBuf,
    #[arg(long, value_enum, default_value = "sample")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 1000)]
    sample_size: usize,
    /// Selectivity of a relation's local predicates, `RELATION=VALUE`.
    #[arg(long, value_parser = parse_assignment)]
    predicate_selectivity: Vec<(String, String)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    stats: PathBuf,
    #[arg(long = "algo", default_value = "exhaustive")]
    algorithm: Algorithm,
    #[arg(long, default_value = "COM")]
    strategy: Strategy,
    /// Fixed driver; defaults to the query's driver.
    #[arg(long, conflicts_with = "all_drivers")]
    driver: Option<String>,
    /// Search every relation as driver.
    #[arg(long)]
    all_drivers: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_RELATIONS)]
    max_relations: usize,
    /// Where to write the plan.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the optimizer report; printed otherwise.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputArg {
    Count,
    Flat,
    Factorized,
}

#[derive(Args)]
struct RunArgs {
    /// Catalog directory; defaults to `catalog/` next to the query.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Overrides the plan's strategy.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, value_enum, default_value = "count")]
    output: OutputArg,
    /// Write result tuples as CSV (flat output only).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Statistics for adding predicted counts to the report.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config (JSON).
    #[arg(long, required_unless_present = "experiment")]
    config: Option<PathBuf>,
    /// Experiment name, run with its defaults.
    #[arg(long, conflicts_with = "config")]
    experiment: Option<Experiment>,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (JSON); the experiment name is implied.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shapes to run on; each replaces the defaults.
    #[arg(long)]
    shape: Vec<Shape>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    m: Option<MRange>,
    #[arg(long)]
    fo: Option<FanoutSpec>,
    /// Random orders per instance.
    #[arg(long)]
    orders: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<Strategy>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_assignment(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))
}

enum Failure {
    Runtime(Error),
    Timeout,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = cli.global.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let g = &cli.global;
    let outcome = match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Gen(a) => gen(g, a),
        Command::Stats(a) => stats(g, a),
        Command::Optimize(a) => optimize(g, a),
        Command::Run(a) => run(g, a),
        Command::Bench(a) => bench(g, a),
        Command::ValidateCost(a) => sweep(g, a, Experiment::CostValidation),
        Command::Robustness(a) => sweep(g, a, Experiment::Robustness),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Timeout) => {
            eprintln!("error: timeout");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn write_json(path: &Path, v: &Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(v)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit(v: &Value, path: Option<&Path>) -> Result<(), Error> {
    match path {
        Some(p) => write_json(p, v),
        None => {
            let text = serde_json::to_string_pretty(v)? + "\n";
            // A closed pipe (`| head`) is not an error worth reporting.
            match std::io::stdout().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

fn default_catalog(catalog: &Option<PathBuf>, query: &Path) -> PathBuf {
    catalog.clone().unwrap_or_else(|| {
        query
            .parent()
            .map_or_else(|| PathBuf::from("catalog"), |d| d.join("catalog"))
    })
}

fn ingest(a: &IngestArgs) -> Outcome {
    let schema = read_schema(&a.schema)?;
    let catalog = if a.file.is_empty() {
        ingest_dir(&schema, a.dir.as_deref().expect("clap requires --dir"))?
    } else {
        let mut files: BTreeMap<String, PathBuf> = match &a.dir {
            Some(d) => schema.keys().map(|n| (n.clone(), d.join(format!("{n}.csv")))).collect(),
            None => BTreeMap::new(),
        };
        for (k, v) in &a.file {
            files.insert(k.clone(), PathBuf::from(v));
        }
        ingest_csv(&schema, &files)?
    };
    catalog.save_dir(&a.out)?;
    let rows: BTreeMap<&str, usize> = catalog.relations().map(|r| (r.name.as_str(), r.row_count)).collect();
    emit(&json!({ "schema_version": SCHEMA_VERSION, "relations": rows }), None)?;
    Ok(())
}

fn gen(g: &Global, a: &GenArgs) -> Outcome {
    let spec = ShapeSpec {
        shape: a.shape,
        n: a.n,
        m: a.m,
        fanout: a.fo,
        seed: g.seed,
    };
    let inst = gen_synthetic(&spec)?;
    inst.save(&a.out)?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "config": spec,
        "relations": inst.catalog.relations().map(|r| (r.name.clone(), r.row_count)).collect::<BTreeMap<_, _>>(),
        "driver": inst.driver(),
    });
    write_json(&a.out.join("instance.json"), &report)?;
    emit(&report, None)?;
    Ok(())
}

fn load_query(catalog: &Catalog, path: &Path) -> Result<(QuerySpec, JoinTree), Error> {
    let spec = QuerySpec::read(path)?;
    let tree = validate_query(&spec, catalog)?;
    Ok((spec, tree))
}

fn stats(g: &Global, a: &StatsArgs) -> Outcome {
    let catalog = Catalog::load_dir(&default_catalog(&a.catalog, &a.query))?;
    let (_, tree) = load_query(&catalog, &a.query)?;
    let mut sel = BTreeMap::new();
    for (k, v) in &a.predicate_selectivity {
        let x: f64 = v
            .parse()
            .ok()
            .filter(|x: &f64| *x > 0.0 && *x <= 1.0)
            .ok_or_else(|| Error::InvalidArgument(format!("selectivity `{v}` for `{k}` is not in (0, 1]")))?;
        tree.index_of(k)?;
        sel.insert(k.clone(), x);
    }
    let estimator = match a.estimator {
        EstimatorArg::Exact => Estimator::Exact,
        EstimatorArg::Naive => Estimator::Naive,
        EstimatorArg::Sample => Estimator::Sample {
            size: a.sample_size,
            seed: g.seed,
        },
    };
    let file = collect_stats(&catalog, &tree, estimator, &sel)?;
    file.write(&a.out)?;
    Ok(())
}

fn optimize(g: &Global, a: &OptimizeArgs) -> Outcome {
    let spec = QuerySpec::read(&a.query)?;
    let tree = JoinTree::from_spec(&spec)?;
    let file = StatsFile::read(&a.stats)?;
    let weights = g.weights()?;
    let config = OptimizerConfig {
        algorithm: a.algorithm,
        strategy: a.strategy,
        weights,
        enumerate_drivers: a.all_drivers,
        max_relations: a.max_relations,
    };
    let driver = a.driver.clone().or(spec.driver.clone());
    let config_driver = if a.all_drivers { None } else { driver.as_deref() };
    let config = OptimizerConfig {
        enumerate_drivers: a.all_drivers || config_driver.is_none(),
        ..config
    };
    let r = optimize_query(&tree, config_driver, &file, &config)?;
    let rooted = tree.root_at_index(r.plan.root);
    let plan = r.plan.to_plan(&rooted, r.strategy);
    if let Some(out) = &a.out {
        plan.write(out)?;
    }
    let per_driver: BTreeMap<&str, f64> = r
        .per_driver
        .iter()
        .map(|(d, c)| (tree.names()[*d].as_str(), *c))
        .collect();
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "config": {
            "global": g.config(),
            "algorithm": a.algorithm,
            "strategy": a.strategy,
            "driver": config_driver,
            "all_drivers": config.enumerate_drivers,
            "max_relations": a.max_relations,
            "query": a.query,
            "stats": a.stats,
        },
        "plan": plan,
        "cost": r.cost,
        "breakdown": r.breakdown,
        "search": r.search,
        "per_driver": per_driver,
    });
    emit(&report, a.report.as_deref())?;
    Ok(())
}

fn write_result_csv(catalog: &Catalog, tree: &JoinTree, rows: &[Vec<u32>], path: &Path) -> Result<(), Error> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let rels = tree
        .names()
        .iter()
        .map(|n| catalog.relation(n))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = String::new();
    let header: Vec<String> = rels
        .iter()
        .flat_map(|r| r.columns.iter().map(move |c| format!("{}.{}", r.name, c.name)))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut cells = Vec::with_capacity(header.len());
        for (r, &id) in rels.iter().zip(row) {
            for c in &r.columns {
                let v = catalog.render(r, c, id as usize);
                if v.contains([',', '"', '\n']) {
                    cells.push(format!("\"{}\"", v.replace('"', "\"\"")));
                } else {
                    cells.push(v);
                }
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io)
}

fn run(g: &Global, a: &RunArgs) -> Outcome {
    let catalog = Catalog::load_dir(&default_catalog(&a.catalog, &a.query))?;
    let (_, tree) = load_query(&catalog, &a.query)?;
    let mut plan = Plan::read(&a.plan)?;
    if let Some(s) = a.strategy {
        plan.strategy = s;
    }
    let output = match a.output {
        OutputArg::Count => OutputMode::CountOnly,
        OutputArg::Flat => OutputMode::Flat,
        OutputArg::Factorized => OutputMode::Factorized,
    };
    if a.csv.is_some() && output != OutputMode::Flat {
        return Err(Error::InvalidArgument("--csv requires --output flat".into()).into());
    }
    let opts = ExecOptions {
        chunk_size: g.chunk_size,
        output,
        timeout: g.timeout_seconds.map(Duration::from_secs_f64),
        ..ExecOptions::default()
    };
    let res: ResultSummary = execute(&catalog, &tree, &plan, &opts)?;
    if let (Some(path), Some(rows)) = (&a.csv, &res.rows) {
        write_result_csv(&catalog, &tree, rows, path)?;
    }
    let predicted = match &a.stats {
        Some(p) => {
            let file = StatsFile::read(p)?;
            let rooted = tree.root_at(&plan.driver)?;
            let sj = SjPlan::from_plan(&rooted, &plan)?;
            let st = StatsTree::<f64>::from_file(rooted, &file)?;
            let w = g.weights()?;
            let b = cost_plan(&st, &sj, plan.strategy, &w)?;
            Some(json!({ "breakdown": b, "cost": weighted_plan_cost(&st, &b, &w) }))
        }
        None => None,
    };
    let names = tree.names();
    let per_relation = |v: &[u64]| -> BTreeMap<&str, u64> { names.iter().map(String::as_str).zip(v.iter().copied()).collect() };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "config": {
            "global": g.config(),
            "output": output,
            "plan": plan,
            "query": a.query,
        },
        "strategy": res.strategy,
        "cardinality": res.cardinality,
        "hash_probes": res.stats.total_hash(),
        "bitvector_probes": res.stats.total_bitvector(),
        "semijoin_probes": res.stats.total_semijoin(),
        "per_relation": {
            "hash_probes": per_relation(&res.stats.hash_probes),
            "bitvector_probes": per_relation(&res.stats.bitvector_probes),
            "semijoin_probes": per_relation(&res.stats.semijoin_probes),
        },
        "result": res,
        "predicted": predicted,
    });
    emit(&report, a.report.as_deref())?;
    if res.timed_out {
        return Err(Failure::Timeout);
    }
    Ok(())
}

fn apply_global(g: &Global, c: &mut ExperimentConfig) -> Result<(), Error> {
    c.seed = g.seed;
    c.chunk_size = g.chunk_size;
    c.weights = g.weights()?;
    if g.timeout_seconds.is_some() {
        c.timeout_seconds = g.timeout_seconds;
    }
    Ok(())
}

fn finish(report: &Report, out: &Path) -> Outcome {
    report.write(out)?;
    emit(
        &json!({
            "schema_version": report.schema_version,
            "experiment": report.experiment,
            "summary": report.summary,
            "timeouts": report.timeouts,
            "out": out,
        }),
        None,
    )?;
    Ok(())
}

fn bench(g: &Global, a: &BenchArgs) -> Outcome {
    let mut config = match (&a.config, a.experiment) {
        (Some(p), _) => ExperimentConfig::read(p)?,
        (None, Some(e)) => ExperimentConfig::defaults(e),
        (None, None) => unreachable!("clap requires one of --config, --experiment"),
    };
    apply_global(g, &mut config)?;
    finish(&run_experiment(&config)?, &a.out)
}

fn sweep(g: &Global, a: &SweepArgs, kind: Experiment) -> Outcome {
    let mut config = match &a.config {
        Some(p) => {
            let c = ExperimentConfig::read(p)?;
            if c.experiment != kind {
                return Err(Error::InvalidArgument(format!("config is for `{}`, expected `{kind}`", c.experiment)).into());
            }
            c
        }
        None => ExperimentConfig::defaults(kind),
    };
    apply_global(g, &mut config)?;
    if !a.shape.is_empty() {
        let template = config.shapes.first().cloned();
        config.shapes = a
            .shape
            .iter()
            .enumerate()
            .map(|(i, &shape)| ShapeSpec {
                shape,
                n: a.n,
                m: template.as_ref().map_or(MRange { lo: 0.5, hi: 0.5 }, |t| t.m),
                fanout: template.as_ref().map_or(FanoutSpec::Constant(2.0), |t| t.fanout),
                seed: g.seed.wrapping_add(i as u64),
            })
            .collect();
    }
    for s in &mut config.shapes {
        if let Some(m) = a.m {
            s.m = m;
        }
        if let Some(fo) = a.fo {
            s.fanout = fo;
        }
    }
    if let Some(o) = a.orders {
        config.orders = o;
    }
    if !a.strategies.is_empty() {
        config.strategies = a.strategies.clone();
    }
    finish(&run_experiment(&config)?, &a.out)
}
