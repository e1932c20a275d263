//! Command line front end. Each command loads a point set, runs one
//! library entry point, and prints a single JSON document on standard
//! output. The JSON is a pure function of the argument list: randomness
//! enters only through --seed, and --threads changes wall time, never
//! bytes. Diagnostics go to standard error, gated by RNET_LOG
//! (error, info, debug).
//!
//! Exit codes: 0 success, 2 usage, 3 bad data or infeasible request,
//! 4 a randomized construction gave up or contradicted itself.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use rnet_core::apps::{self, Clustering, RoundSchedule};
use rnet_core::dataset::{gen, load_points};
use rnet_core::hamming_net::{delfar_hamming, hamming_rnet};
use rnet_core::oracle;
use rnet_core::rnet::{approx_rnet, delfar};
use rnet_core::{Backend, BitPointSet, FileFormat, Metric, PointSet, Result, Seed};

#[derive(Parser)]
#[command(name = "rnet", version, about = "Approximate r-nets and net-based clustering")]
struct Cli {
    /// Worker threads for internal parallelism. Output bytes do not
    /// depend on this, only wall time does.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build an approximate r-net: centers pairwise at least r apart,
    /// every point covered by a center within the slack.
    Build(NetArgs),
    /// List the points whose nearest neighbor is farther than r.
    Delfar(NetArgs),
    /// k-th smallest nearest-neighbor distance, within a (1+eps) factor.
    KnnDist(KnnDistArgs),
    /// k-center clustering, by radius search (4+eps) or by greedy
    /// permutation prefix (2+eps).
    Kcenter(KcenterArgs),
    /// Min-max clustering over a sketchable cluster family.
    Minmax(MinmaxArgs),
    /// Approximate farthest-first ordering with per-prefix radii.
    GreedyPerm(GreedyPermArgs),
    /// Exhaustive reference computations for small inputs.
    Oracle(OracleArgs),
    /// Net construction runtime over a ladder of input sizes.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Point file: CSV rows of numbers, or the packed binary format.
    input: PathBuf,

    /// Input encoding. Packed files carry their own metric tag.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Packed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    L1,
    L2,
    /// Rows must be 0/1 vectors.
    Hamming,
}

impl MetricArg {
    fn name(self) -> &'static str {
        match self {
            MetricArg::L1 => "l1",
            MetricArg::L2 => "l2",
            MetricArg::Hamming => "hamming",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Exact,
    Sampled,
    Ptf,
}

impl BackendArg {
    fn to_backend(self) -> Backend {
        match self {
            BackendArg::Exact => Backend::Exact,
            BackendArg::Sampled => Backend::Sampled,
            BackendArg::Ptf => Backend::Ptf,
        }
    }

    fn name(self) -> &'static str {
        self.to_backend().name()
    }
}

#[derive(Args)]
struct NetArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Distance metric over the rows.
    #[arg(long, value_enum)]
    metric: MetricArg,

    /// Radius. Under l1/l2 the covering slack is the factor (1+eps);
    /// under Hamming it is the additive term eps times the bit width.
    #[arg(long)]
    r: f64,

    /// Approximation slack.
    #[arg(long)]
    eps: f64,

    /// Root of all randomness in the run.
    #[arg(long)]
    seed: u64,

    /// Close-pair test used inside the construction.
    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
}

#[derive(Args)]
struct KnnDistArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    metric: MetricArg,

    /// Rank of the reported nearest-neighbor distance, 1-based.
    #[arg(long)]
    k: usize,

    #[arg(long, default_value_t = 0.2)]
    eps: f64,

    #[arg(long)]
    seed: u64,

    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KcenterMode {
    /// Radius search over a decider; radius at most (4+eps) times optimal.
    Decider,
    /// Greedy permutation prefix; radius at most (2+eps) times optimal.
    Greedy,
}

#[derive(Args)]
struct KcenterArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    metric: MetricArg,

    /// Number of centers.
    #[arg(long)]
    k: usize,

    #[arg(long, value_enum, default_value_t = KcenterMode::Decider)]
    mode: KcenterMode,

    #[arg(long, default_value_t = 0.5)]
    eps: f64,

    #[arg(long)]
    seed: u64,

    /// Close-pair test for the decider route; the greedy route does not
    /// use one.
    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
}

#[derive(Args)]
struct MinmaxArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    metric: MetricArg,

    /// Cluster admissibility family: "all" or "minsize:M".
    #[arg(long)]
    family: String,

    #[arg(long, default_value_t = 0.5)]
    eps: f64,

    #[arg(long)]
    seed: u64,

    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    /// Jump rounds forward when nothing new was placed.
    UnionGrowth,
    /// Walk the full scale ladder; needs a positive minimum distance.
    ExactSpread,
}

#[derive(Args)]
struct GreedyPermArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    metric: MetricArg,

    #[arg(long, default_value_t = 0.2)]
    eps: f64,

    #[arg(long)]
    seed: u64,

    /// First point of the ordering. Defaults to a seeded random choice.
    #[arg(long)]
    start: Option<u32>,

    #[arg(long, value_enum, default_value_t = ScheduleArg::UnionGrowth)]
    schedule: ScheduleArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleName {
    /// Every point's exact nearest-neighbor distance.
    NnDists,
    /// Exact k-th smallest nearest-neighbor distance.
    KthNn,
    /// Optimal k-center radius by enumeration (small n only).
    Kcenter,
    /// Exact farthest-first ordering.
    GreedyPerm,
    /// Optimal min-max radius by partition search (small n only).
    Minmax,
}

#[derive(Args)]
struct OracleArgs {
    /// Reference computation to run.
    #[arg(value_enum)]
    name: OracleName,

    #[command(flatten)]
    input: InputArgs,

    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    metric: MetricArg,

    #[arg(long, required_if_eq_any([("name", "kth-nn"), ("name", "kcenter")]))]
    k: Option<usize>,

    /// Family for the minmax oracle: "all" or "minsize:M".
    #[arg(long, required_if_eq("name", "minmax"))]
    family: Option<String>,

    /// Start point for the greedy-perm oracle.
    #[arg(long, default_value_t = 0)]
    start: u32,
}

#[derive(Args)]
struct BenchArgs {
    /// Input sizes, comma separated: --sizes 64,128,256.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    sizes: Vec<usize>,

    /// Dimension (bit width under Hamming).
    #[arg(long, default_value_t = 16)]
    d: usize,

    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    metric: MetricArg,

    #[arg(long, default_value_t = 0.2)]
    eps: f64,

    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,

    #[arg(long)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RNET_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let doc = match cli.threads {
        None => run(cli.command),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
        },
    };
    match doc {
        Ok(v) => {
            let mut out = std::io::stdout().lock();
            // Single document, one trailing newline. Key order comes from
            // the serializer's sorted maps, so reruns byte-match.
            if let Err(e) = writeln!(out, "{v}") {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_algorithmic() { 4 } else { 3 })
        }
    }
}

fn run(cmd: Cmd) -> Result<Value> {
    match cmd {
        Cmd::Build(a) => cmd_build(a),
        Cmd::Delfar(a) => cmd_delfar(a),
        Cmd::KnnDist(a) => cmd_knn_dist(a),
        Cmd::Kcenter(a) => cmd_kcenter(a),
        Cmd::Minmax(a) => cmd_minmax(a),
        Cmd::GreedyPerm(a) => cmd_greedy_perm(a),
        Cmd::Oracle(a) => cmd_oracle(a),
        Cmd::Bench(a) => cmd_bench(a),
    }
}

fn load(input: &InputArgs, metric: Metric) -> Result<PointSet> {
    let format = match input.format {
        FormatArg::Csv => FileFormat::Csv,
        FormatArg::Packed => FileFormat::Packed,
    };
    let ps = load_points(&input.input, format, metric)?;
    log::info!(
        "loaded {} points in {} dimensions from {}",
        ps.n(),
        ps.d(),
        input.input.display()
    );
    Ok(ps)
}

/// Loads points for the clustering commands. Hamming rows are validated
/// as 0/1 and then handled as l1 vectors, which gives the same distances.
fn load_metric(input: &InputArgs, metric: MetricArg) -> Result<PointSet> {
    match metric {
        MetricArg::L1 => load(input, Metric::L1),
        MetricArg::L2 => load(input, Metric::L2),
        MetricArg::Hamming => {
            let ps = load(input, Metric::L1)?;
            BitPointSet::from_zero_one(&ps)?;
            Ok(ps)
        }
    }
}

fn input_json(input: &InputArgs) -> Value {
    json!({
        "input": input.input.display().to_string(),
        "format": match input.format { FormatArg::Csv => "csv", FormatArg::Packed => "packed" },
    })
}

fn verification_json(rep: &oracle::VerifyReport) -> Value {
    json!({
        "packing": rep.packing_ok,
        "covering": rep.covering_ok,
        "checked": rep.checked.name(),
    })
}

/// Oracle-style check for a clustering: covering means every point lies
/// within the stated radius of its assigned center, packing rules out
/// coincident centers. Full scan up to 4096 points, strided above.
fn verify_clustering(x: &PointSet, c: &Clustering) -> Value {
    const CAP: usize = 4096;
    let slack = c.radius * 1e-9 + 1e-12;
    let exact = x.n() <= CAP;
    let stride = if exact { 1 } else { x.n().div_ceil(CAP) };
    let mut covering = true;
    for i in (0..x.n()).step_by(stride) {
        if x.dist(i, c.assignment[i] as usize) > c.radius + slack {
            covering = false;
            break;
        }
    }
    let centers: &[u32] = if c.centers.len() <= CAP { &c.centers } else { &c.centers[..CAP] };
    let mut packing = true;
    'outer: for (i, &a) in centers.iter().enumerate() {
        for &b in &centers[i + 1..] {
            if x.dist(a as usize, b as usize) <= 0.0 {
                packing = false;
                break 'outer;
            }
        }
    }
    json!({
        "packing": packing,
        "covering": covering,
        "checked": if exact { "exact" } else { "sampled" },
    })
}

fn clustering_json(command: &str, params: Value, seed: u64, x: &PointSet, c: &Clustering) -> Value {
    json!({
        "command": command,
        "params": params,
        "seed": seed,
        "centers": c.centers,
        "assignment": c.assignment,
        "radius": c.radius,
        "verification": verify_clustering(x, c),
    })
}

fn cmd_build(a: NetArgs) -> Result<Value> {
    let seed = Seed(a.seed);
    let mut params = input_json(&a.input);
    let obj = params.as_object_mut().expect("input_json is an object");
    obj.insert("metric".into(), a.metric.name().into());
    obj.insert("r".into(), a.r.into());
    obj.insert("eps".into(), a.eps.into());
    obj.insert("backend".into(), a.backend.name().into());
    let (centers, assignment, verification) = match a.metric {
        MetricArg::Hamming => {
            let ps = load(&a.input, Metric::L1)?;
            let bits = BitPointSet::from_zero_one(&ps)?;
            let net = hamming_rnet(&bits, a.r, a.eps, a.backend.to_backend(), seed)?;
            let rep = oracle::verify_hamming_net(&bits, &net.centers, &net.covered_by, a.r, a.eps);
            (net.centers, net.covered_by, verification_json(&rep))
        }
        m => {
            let metric = if m == MetricArg::L1 { Metric::L1 } else { Metric::L2 };
            let ps = load(&a.input, metric)?;
            let net = approx_rnet(&ps, a.r, a.eps, a.backend.to_backend(), seed)?;
            let rep = oracle::verify_rnet(&ps, &net.centers, &net.assignment, net.r, net.eps);
            (net.centers, net.assignment, verification_json(&rep))
        }
    };
    Ok(json!({
        "command": "build",
        "params": params,
        "seed": a.seed,
        "centers": centers,
        "assignment": assignment,
        "verification": verification,
    }))
}

fn cmd_delfar(a: NetArgs) -> Result<Value> {
    let seed = Seed(a.seed);
    let mut params = input_json(&a.input);
    let obj = params.as_object_mut().expect("input_json is an object");
    obj.insert("metric".into(), a.metric.name().into());
    obj.insert("r".into(), a.r.into());
    obj.insert("eps".into(), a.eps.into());
    obj.insert("backend".into(), a.backend.name().into());
    let far = match a.metric {
        MetricArg::Hamming => {
            let ps = load(&a.input, Metric::L1)?;
            let bits = BitPointSet::from_zero_one(&ps)?;
            delfar_hamming(&bits, a.r, a.eps, a.backend.to_backend(), seed)?
        }
        m => {
            let metric = if m == MetricArg::L1 { Metric::L1 } else { Metric::L2 };
            let ps = load(&a.input, metric)?;
            delfar(&ps, a.r, a.eps, a.backend.to_backend(), seed)?
        }
    };
    Ok(json!({
        "command": "delfar",
        "params": params,
        "seed": a.seed,
        "count": far.len(),
        "far": far,
    }))
}

fn cmd_knn_dist(a: KnnDistArgs) -> Result<Value> {
    let ps = load_metric(&a.input, a.metric)?;
    let value = apps::kth_nn_distance_with(&ps, a.k, a.eps, a.backend.to_backend(), Seed(a.seed))?;
    let mut params = input_json(&a.input);
    let obj = params.as_object_mut().expect("input_json is an object");
    obj.insert("metric".into(), a.metric.name().into());
    obj.insert("k".into(), a.k.into());
    obj.insert("eps".into(), a.eps.into());
    obj.insert("backend".into(), a.backend.name().into());
    Ok(json!({
        "command": "knn-dist",
        "params": params,
        "seed": a.seed,
        "value": value,
    }))
}

fn cmd_kcenter(a: KcenterArgs) -> Result<Value> {
    let ps = load_metric(&a.input, a.metric)?;
    let c = match a.mode {
        KcenterMode::Decider => {
            apps::kcenter_4eps_with(&ps, a.k, a.eps, a.backend.to_backend(), Seed(a.seed))?
        }
        KcenterMode::Greedy => apps::kcenter_2eps(&ps, a.k, a.eps, Seed(a.seed))?,
    };
    let mut params = input_json(&a.input);
    let obj = params.as_object_mut().expect("input_json is an object");
    obj.insert("metric".into(), a.metric.name().into());
    obj.insert("k".into(), a.k.into());
    obj.insert(
        "mode".into(),
        match a.mode {
            KcenterMode::Decider => "decider",
            KcenterMode::Greedy => "greedy",
        }
        .into(),
    );
    obj.insert("eps".into(), a.eps.into());
    obj.insert("backend".into(), a.backend.name().into());
    Ok(clustering_json("kcenter", params, a.seed, &ps, &c))
}

fn cmd_minmax(a: MinmaxArgs) -> Result<Value> {
    let ps = load_metric(&a.input, a.metric)?;
    let family = apps::parse_family(&a.family)?;
    let c = apps::minmax_cluster_with(&ps, family.as_ref(), a.eps, a.backend.to_backend(), Seed(a.seed))?;
    let mut params = input_json(&a.input);
    let obj = params.as_object_mut().expect("input_json is an object");
    obj.insert("metric".into(), a.metric.name().into());
    obj.insert("family".into(), family.name().into());
    obj.insert("eps".into(), a.eps.into());
    obj.insert("backend".into(), a.backend.name().into());
    Ok(clustering_json("minmax", params, a.seed, &ps, &c))
}

fn cmd_greedy_perm(a: GreedyPermArgs) -> Result<Value> {
    let ps = load_metric(&a.input, a.metric)?;
    let schedule = match a.schedule {
        ScheduleArg::UnionGrowth => RoundSchedule::UnionGrowth,
        ScheduleArg::ExactSpread => RoundSchedule::ExactSpread,
    };
    let seed = Seed(a.seed);
    let perm = match a.start {
        // Mirrors the library's own start selection so that passing the
        // matching --start reproduces the default run exactly.
        None if a.schedule == ScheduleArg::UnionGrowth => apps::greedy_permutation(&ps, a.eps, seed)?,
        None => {
            use rand::Rng;
            let start = seed.rng().gen_range(0..ps.n()) as u32;
            apps::greedy_permutation_from(&ps, start, a.eps, schedule, seed.child(7))?
        }
        Some(start) => apps::greedy_permutation_from(&ps, start, a.eps, schedule, seed.child(7))?,
    };
    let mut params = input_json(&a.input);
    let obj = params.as_object_mut().expect("input_json is an object");
    obj.insert("metric".into(), a.metric.name().into());
    obj.insert("eps".into(), a.eps.into());
    obj.insert(
        "schedule".into(),
        match a.schedule {
            ScheduleArg::UnionGrowth => "union-growth",
            ScheduleArg::ExactSpread => "exact-spread",
        }
        .into(),
    );
    obj.insert("start".into(), json!(perm.order.first().copied()));
    Ok(json!({
        "command": "greedy-perm",
        "params": params,
        "seed": a.seed,
        "order": perm.order,
        "radii": perm.radii,
    }))
}

fn cmd_oracle(a: OracleArgs) -> Result<Value> {
    let ps = load_metric(&a.input, a.metric)?;
    let mut params = input_json(&a.input);
    let obj = params.as_object_mut().expect("input_json is an object");
    obj.insert("metric".into(), a.metric.name().into());
    let (name, result) = match a.name {
        OracleName::NnDists => {
            let values = oracle::exact_nn_dists(&ps)?;
            ("nn-dists", json!({ "values": values }))
        }
        OracleName::KthNn => {
            let k = a.k.expect("clap enforces --k");
            obj.insert("k".into(), k.into());
            let value = oracle::exact_kth_nn(&ps, k)?;
            ("kth-nn", json!({ "value": value }))
        }
        OracleName::Kcenter => {
            let k = a.k.expect("clap enforces --k");
            obj.insert("k".into(), k.into());
            let (radius, centers) = oracle::exact_kcenter(&ps, k)?;
            ("kcenter", json!({ "radius": radius, "centers": centers }))
        }
        OracleName::GreedyPerm => {
            obj.insert("start".into(), a.start.into());
            let (order, radii) = oracle::exact_greedy_perm(&ps, a.start)?;
            ("greedy-perm", json!({ "order": order, "radii": radii }))
        }
        OracleName::Minmax => {
            let family = apps::parse_family(a.family.as_deref().expect("clap enforces --family"))?;
            obj.insert("family".into(), family.name().into());
            let admissible = |idx: &[u32]| -> bool {
                idx.iter()
                    .map(|&p| family.sketch(p))
                    .reduce(|s, t| family.merge(s, t))
                    .map(|s| family.orac(&s))
                    .unwrap_or(true)
            };
            let radius = oracle::exact_minmax(&ps, &admissible)?;
            ("minmax", json!({ "radius": radius }))
        }
    };
    obj.insert("name".into(), name.into());
    let mut doc = json!({ "command": "oracle", "params": params });
    let root = doc.as_object_mut().expect("doc is an object");
    for (key, value) in result.as_object().expect("result is an object") {
        root.insert(key.clone(), value.clone());
    }
    Ok(doc)
}

/// Times net construction on synthetic inputs of growing size. The radius
/// is the median of a few hundred sampled pairwise distances, so the net
/// has nontrivial structure at every size. Timings vary run to run; every
/// other field is seed-determined.
fn cmd_bench(a: BenchArgs) -> Result<Value> {
    let seed = Seed(a.seed);
    let mut rows = Vec::new();
    for (i, &n) in a.sizes.iter().enumerate() {
        let row_seed = seed.child(i as u64);
        let row = match a.metric {
            MetricArg::Hamming => {
                let bits = gen::bits(n, a.d, row_seed.child(1));
                let r = median_sampled(n, row_seed.child(2), |p, q| bits.hamming(p, q) as f64);
                let t = Instant::now();
                let net = hamming_rnet(&bits, r, a.eps, a.backend.to_backend(), row_seed.child(3))?;
                (r, net.centers.len(), t.elapsed())
            }
            m => {
                let metric = if m == MetricArg::L1 { Metric::L1 } else { Metric::L2 };
                let ps = gen::gaussian(n, a.d, metric, row_seed.child(1));
                let r = median_sampled(n, row_seed.child(2), |p, q| ps.dist(p, q));
                let t = Instant::now();
                let net = approx_rnet(&ps, r, a.eps, a.backend.to_backend(), row_seed.child(3))?;
                (r, net.centers.len(), t.elapsed())
            }
        };
        rows.push(json!({
            "n": n,
            "r": row.0,
            "centers": row.1,
            "millis": row.2.as_secs_f64() * 1e3,
        }));
    }
    Ok(json!({
        "command": "bench",
        "params": {
            "sizes": a.sizes,
            "d": a.d,
            "metric": a.metric.name(),
            "eps": a.eps,
            "backend": a.backend.name(),
        },
        "seed": a.seed,
        "rows": rows,
    }))
}

fn median_sampled(n: usize, seed: Seed, dist: impl Fn(usize, usize) -> f64) -> f64 {
    use rand::Rng;
    let mut rng = seed.rng();
    let mut ds: Vec<f64> = (0..512)
        .map(|_| {
            let p = rng.gen_range(0..n);
            let q = rng.gen_range(0..n);
            dist(p, q)
        })
        .filter(|d| *d > 0.0)
        .collect();
    if ds.is_empty() {
        return 1.0;
    }
    ds.sort_by(|x, y| x.total_cmp(y));
    ds[ds.len() / 2]
}
