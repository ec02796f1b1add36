//! Command-line front-end: coarsening runs, downstream evaluation,
//! cost-engine oracle suites, synthetic dataset generation, and dataset
//! conversion.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coarsenet::coarsener::{coarsen, CostMode};
use coarsenet::config::{RunConfig, Task};
use coarsenet::cost::{approx_cost, brute_force_cost, exact_cost, ConvCache};
use coarsenet::eval::{
    infer_nc, split_edges, supernode_train_labels, train_eval_lp, train_sgc_nc, EvalReport,
    TrainConfig,
};
use coarsenet::graph::{build_coarse, CoarseGraph, Graph};
use coarsenet::io;
use coarsenet::matrix::Matrix;
use coarsenet::synth::{self, SynthConfig};
use coarsenet::{Error, Partition, Result};

/// Fraction of edges held out when coarsening for link prediction.
const LP_HOLDOUT_FRAC: f64 = 0.1;

#[derive(Parser)]
#[command(name = "coarsenet", version, about = "Convolution-matching graph coarsening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coarsen a graph and write partition + coarse-graph artifacts.
    Coarsen(CoarsenArgs),
    /// Train on existing coarse artifacts, evaluate on the original graph.
    Eval(EvalArgs),
    /// Run the exact-vs-brute-force and bound-tightness oracle suites.
    Oracle(OracleArgs),
    /// Generate a seeded synthetic citation-style dataset.
    Synth(SynthArgs),
    /// Convert citation-style or OGB-CSV datasets to the native formats.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Edge list: `src<TAB>dst[<TAB>weight]`, `#` comments.
    #[arg(long)]
    edges: PathBuf,
    /// Feature matrix (CMX1 binary or `n d`-headed text).
    #[arg(long)]
    features: PathBuf,
    /// Node labels: `node<TAB>class`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Node splits: `node<TAB>train|valid|test`.
    #[arg(long)]
    splits: Option<PathBuf>,
}

#[derive(Args)]
struct CoarsenArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Target supernode ratio n'/n in (0, 1].
    #[arg(long, default_value_t = 0.1)]
    ratio: f64,
    /// Merges applied per level.
    #[arg(long, default_value_t = 10)]
    batch: usize,
    /// Propagation depth K for candidate embeddings.
    #[arg(long, default_value_t = 3)]
    sgc_k: usize,
    /// PCA dimension for the nearest-neighbor search space.
    #[arg(long, default_value_t = 15)]
    pca_dim: usize,
    /// Neighbors per node in the kNN candidate pass.
    #[arg(long, default_value_t = 1)]
    knn: usize,
    /// Global candidate pairs as a fraction of n.
    #[arg(long, default_value_t = 0.01)]
    global_frac: f64,
    /// Merge-cost mode: exact or approx.
    #[arg(long, default_value = "approx")]
    cost: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Downstream task the run prepares for: nc, lp, or none.
    #[arg(long, default_value = "none")]
    task: String,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (overrides COARSENET_THREADS; default logical cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Cross-check incremental state every level (slow).
    #[arg(long, default_value_t = false)]
    debug_verify: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Artifact directory written by a coarsen run.
    #[arg(long)]
    out: PathBuf,
    /// Task to evaluate: nc or lp.
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 3)]
    sgc_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 100)]
    graphs: usize,
    #[arg(long, default_value_t = 50)]
    nodes: usize,
    #[arg(long, default_value_t = 8)]
    feat_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Preset shape: cora or citeseer.
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    /// Citation `.content` file (requires --cites).
    #[arg(long)]
    content: Option<PathBuf>,
    /// Citation `.cites` file.
    #[arg(long)]
    cites: Option<PathBuf>,
    /// OGB-exported CSV directory (edge.csv, node-feat.csv, node-label.csv).
    #[arg(long)]
    ogb_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("COARSENET_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| Error::input(format!("bad COARSENET_THREADS value '{v}'")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::input("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::input(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn parse_task(s: &str) -> Result<Option<Task>> {
    if s == "none" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// Exit code carried through the error path: 2 = candidate exhaustion.
struct Outcome(u8);

fn cmd_coarsen(args: &CoarsenArgs) -> Result<Outcome> {
    init_threads(args.threads)?;
    let task = parse_task(&args.task)?;
    let cost_mode: CostMode = args.cost.parse()?;
    let run = RunConfig {
        ratio: args.ratio,
        batch: args.batch,
        sgc_k: args.sgc_k,
        pca_dim: args.pca_dim,
        knn: args.knn,
        global_frac: args.global_frac,
        cost_mode,
        seed: args.seed,
        task: task.unwrap_or(Task::NodeClassification),
        debug_verify: args.debug_verify,
        edges: args.data.edges.clone(),
        features: args.data.features.clone(),
        labels: args.data.labels.clone(),
        splits: args.data.splits.clone(),
        out: args.out.clone(),
    };
    run.validate()?;

    let loaded = io::load_graph(
        &args.data.edges,
        &args.data.features,
        args.data.labels.as_deref(),
        args.data.splits.as_deref(),
    )?;
    fs::create_dir_all(&args.out)?;
    io::write_id_map(&args.out.join("id_map.tsv"), &loaded.id_map)?;

    // For link prediction, hold out edges before coarsening so the coarse
    // model never sees evaluation positives.
    let work_graph = if task == Some(Task::LinkPrediction) {
        let (train_g, heldout) = split_edges(&loaded.graph, LP_HOLDOUT_FRAC, args.seed)?;
        io::write_pairs(&args.out.join("heldout.tsv"), &heldout)?;
        io::write_edges(&args.out.join("train_edges.tsv"), &train_g)?;
        train_g
    } else {
        loaded.graph
    };

    let hierarchy = coarsen(&work_graph, &run.coarsen_config())?;
    for (level, p) in hierarchy.levels.iter().enumerate() {
        io::write_partition(&args.out.join(format!("level_{level}.part")), p)?;
    }
    let cg = build_coarse(&work_graph, hierarchy.final_partition())?;
    io::write_coarse(&args.out.join("coarse"), &cg)?;
    let mut stats = BufWriter::new(File::create(args.out.join("stats.json"))?);
    io::append_json_line(
        &mut stats,
        &serde_json::json!({"phase": "candidates", "wall_s": hierarchy.candidate_wall_s}),
    )?;
    io::append_json_line(
        &mut stats,
        &serde_json::json!({"phase": "initial_costs", "wall_s": hierarchy.initial_cost_wall_s}),
    )?;
    for s in &hierarchy.stats {
        io::append_json_line(&mut stats, s)?;
    }
    stats.flush()?;

    if hierarchy.exhausted {
        eprintln!(
            "candidates exhausted at n' = {} (target {})",
            hierarchy.final_partition().n_prime,
            (run.ratio * work_graph.n as f64).ceil()
        );
        return Ok(Outcome(2));
    }
    Ok(Outcome(0))
}

fn final_level_partition(dir: &Path) -> Result<Partition> {
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if let Some(num) = name
            .strip_prefix("level_")
            .and_then(|r| r.strip_suffix(".part"))
        {
            if let Ok(level) = num.parse::<usize>() {
                if best.as_ref().map_or(true, |(b, _)| level > *b) {
                    best = Some((level, path));
                }
            }
        }
    }
    let (_, path) =
        best.ok_or_else(|| Error::input(format!("no level_*.part files in {}", dir.display())))?;
    io::read_partition(&path)
}

fn summarize_seconds(dir: &Path) -> f64 {
    let Ok(f) = File::open(dir.join("stats.json")) else {
        return 0.0;
    };
    let mut total = 0.0;
    for line in BufReader::new(f).lines().map_while(|l| l.ok()) {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&line) {
            total += v.get("wall_s").and_then(|w| w.as_f64()).unwrap_or(0.0);
        }
    }
    total
}

fn cmd_eval(args: &EvalArgs) -> Result<Outcome> {
    init_threads(args.threads)?;
    let task = parse_task(&args.task)?
        .ok_or_else(|| Error::input("eval requires --task nc or --task lp"))?;
    let loaded = io::load_graph(
        &args.data.edges,
        &args.data.features,
        args.data.labels.as_deref(),
        args.data.splits.as_deref(),
    )?;
    let summarize_s = summarize_seconds(&args.out);
    let partition = final_level_partition(&args.out)?;
    let cfg = TrainConfig {
        seed: args.seed,
        ..TrainConfig::default()
    };

    let report = match task {
        Task::NodeClassification => {
            let g = &loaded.graph;
            if partition.assign.len() != g.n {
                return Err(Error::input("partition does not cover the graph"));
            }
            let cg = build_coarse(g, &partition)?;
            let labels = supernode_train_labels(g, &partition);
            let classes = g
                .labels
                .iter()
                .flatten()
                .map(|&c| c as usize + 1)
                .max()
                .unwrap_or(0);
            let t0 = Instant::now();
            let model = train_sgc_nc(&cg, &labels, args.sgc_k, classes, &cfg)?;
            let train_s = t0.elapsed().as_secs_f64();
            let (valid, test) = infer_nc(g, &model)?;
            EvalReport {
                task: "nc".into(),
                metric: "accuracy".into(),
                valid,
                test,
                ratio: partition.n_prime as f64 / g.n as f64,
                summarize_s,
                train_s,
            }
        }
        Task::LinkPrediction => {
            let heldout = io::read_pairs(&args.out.join("heldout.tsv"))?;
            let train_records = io::read_edge_records(&args.out.join("train_edges.tsv"))?;
            let edges: Vec<(u32, u32, f64)> = train_records
                .iter()
                .map(|&(a, b, w)| (a as u32, b as u32, w))
                .collect();
            let g = &loaded.graph;
            let train_g = Graph::new(
                g.n,
                &edges,
                g.x.clone(),
                g.labels.clone(),
                g.splits.clone(),
            )?;
            if partition.assign.len() != train_g.n {
                return Err(Error::input("partition does not cover the graph"));
            }
            let cg = build_coarse(&train_g, &partition)?;
            let t0 = Instant::now();
            let (_, valid, test) = train_eval_lp(&cg, &train_g, &heldout, args.sgc_k, &cfg)?;
            let train_s = t0.elapsed().as_secs_f64();
            EvalReport {
                task: "lp".into(),
                metric: "auc".into(),
                valid,
                test,
                ratio: partition.n_prime as f64 / train_g.n as f64,
                summarize_s,
                train_s,
            }
        }
    };
    let mut stdout = std::io::stdout().lock();
    io::append_json_line(&mut stdout, &report)?;
    Ok(Outcome(0))
}

fn random_graph(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let p = (4.0 / n as f64).min(0.5);
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            if rng.gen_bool(p) {
                edges.push((u, v, 0.25 + rng.gen::<f64>()));
            }
        }
    }
    let mut x = Matrix::zeros(n, d);
    for v in x.data.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    Graph::new(n, &edges, x, vec![], vec![])
}

/// Apply a few random merges so oracle pairs see non-trivial supernodes.
fn random_partition(n: usize, rng: &mut ChaCha8Rng) -> Partition {
    let merges = rng.gen_range(0..n / 4 + 1);
    let mut assign: Vec<u32> = (0..n as u32).collect();
    for _ in 0..merges {
        let a = rng.gen_range(0..n) as u32;
        let b = rng.gen_range(0..n) as u32;
        if assign[a as usize] != assign[b as usize] {
            let (from, to) = (assign[b as usize], assign[a as usize]);
            for s in assign.iter_mut() {
                if *s == from {
                    *s = to;
                }
            }
        }
    }
    // Densify supernode ids.
    let mut remap = std::collections::BTreeMap::new();
    for s in assign.iter_mut() {
        let next = remap.len() as u32;
        *s = *remap.entry(*s).or_insert(next);
    }
    Partition::new(assign, remap.len()).expect("dense by construction")
}

fn disjoint_neighborhoods(cg: &CoarseGraph, u: u32, v: u32) -> bool {
    if cg.weight_between(u, v) > 0.0 {
        return false;
    }
    let nu: std::collections::BTreeSet<u32> = cg.adj[u as usize]
        .iter()
        .map(|&(j, _)| j)
        .filter(|&j| j != u && j != v)
        .collect();
    !cg.adj[v as usize]
        .iter()
        .any(|&(j, _)| j != u && j != v && nu.contains(&j))
}

fn cmd_oracle(args: &OracleArgs) -> Result<Outcome> {
    if args.nodes > 2000 {
        return Err(Error::ScaleGuard(format!(
            "oracle suite limited to 2000 nodes, got {}",
            args.nodes
        )));
    }
    // Fixture: two disjoint edges, indicator feature on one endpoint;
    // merging across the edges costs exactly 1 and the bound is tight.
    {
        let g = Graph::new(
            4,
            &[(0, 1, 1.0), (2, 3, 1.0)],
            Matrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0], vec![0.0]])?,
            vec![],
            vec![],
        )?;
        let cg = CoarseGraph::from_graph(&g);
        let cache = ConvCache::init(&cg, cg.n_prime);
        let e = exact_cost(&cache, &cg, 0, 2)?;
        let a = approx_cost(&cache, &cg, 0, 2)?;
        println!("fixture disjoint-edges: exact={e} approx={a}");
    }

    let mut failures = 0usize;
    let mut tight_checked = 0usize;
    for i in 0..args.graphs {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(i as u64));
        let n = rng.gen_range(4..=args.nodes.max(4));
        let d = rng.gen_range(1..=args.feat_dim.max(1));
        let g = random_graph(n, d, &mut rng)?;
        let p = random_partition(n, &mut rng);
        let cg = build_coarse(&g, &p)?;
        if cg.n_prime < 2 {
            continue;
        }
        let u = rng.gen_range(0..cg.n_prime as u32);
        let mut v = rng.gen_range(0..cg.n_prime as u32);
        if v == u {
            v = (v + 1) % cg.n_prime as u32;
        }
        let cache = ConvCache::init(&cg, cg.n_prime);
        let exact = exact_cost(&cache, &cg, u, v)?;
        let approx = approx_cost(&cache, &cg, u, v)?;
        let brute = brute_force_cost(&cg, u, v)?;
        if (exact - brute).abs() > 1e-9 {
            failures += 1;
            println!(
                "FAIL graph {i} pair ({u}, {v}): exact={exact} brute={brute} diff={}",
                (exact - brute).abs()
            );
        }
        if approx < exact - 1e-9 {
            failures += 1;
            println!("FAIL graph {i} pair ({u}, {v}): approx={approx} < exact={exact}");
        }
        if disjoint_neighborhoods(&cg, u, v) {
            tight_checked += 1;
            if (approx - exact).abs() > 1e-9 {
                failures += 1;
                println!(
                    "FAIL graph {i} pair ({u}, {v}): bound not tight, approx={approx} exact={exact}"
                );
            }
        }
    }
    println!(
        "oracle: {} graphs checked, {} tightness cases, {failures} failures",
        args.graphs, tight_checked
    );
    if failures > 0 {
        return Ok(Outcome(1));
    }
    Ok(Outcome(0))
}

fn cmd_synth(args: &SynthArgs) -> Result<Outcome> {
    let cfg = SynthConfig::preset(&args.dataset)
        .ok_or_else(|| Error::input(format!("unknown dataset preset '{}'", args.dataset)))?;
    let g = synth::generate(&cfg, args.seed)?;
    fs::create_dir_all(&args.out)?;
    io::write_edges(&args.out.join("edges.tsv"), &g)?;
    io::write_features_binary(&args.out.join("features.bin"), &g.x)?;
    io::write_labels(&args.out.join("labels.tsv"), &g.labels)?;
    io::write_splits(&args.out.join("splits.tsv"), &g.splits)?;
    println!(
        "wrote {} nodes, {} edges to {}",
        g.n,
        g.edge_count(),
        args.out.display()
    );
    Ok(Outcome(0))
}

fn cmd_convert(args: &ConvertArgs) -> Result<Outcome> {
    match (&args.content, &args.cites, &args.ogb_dir) {
        (Some(content), Some(cites), None) => {
            io::convert_citation(content, cites, &args.out)?;
        }
        (None, None, Some(dir)) => {
            io::convert_ogb_csv(dir, &args.out)?;
        }
        _ => {
            return Err(Error::input(
                "convert needs either --content + --cites or --ogb-dir",
            ))
        }
    }
    Ok(Outcome(0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Coarsen(a) => cmd_coarsen(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Convert(a) => cmd_convert(a),
    };
    match result {
        Ok(Outcome(code)) => ExitCode::from(code),
        Err(Error::ScaleGuard(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
