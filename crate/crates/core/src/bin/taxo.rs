use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use transfer_taxonomy::ahp::{distance_csv, to_distance, AffinityMatrix, DistanceConfig, DEFAULT_BETA};
use transfer_taxonomy::bip::{CostMode, SolverConfig};
use transfer_taxonomy::cluster::similarity_tree;
use transfer_taxonomy::domain::{EvaluationRecordStore, TaskDictionary, TaskId};
use transfer_taxonomy::engine::{
    family_summary_csv, localize_novel_task, normalize, novel_task_dictionary, significance_test,
    solve_affinity, taxonomy_family,
};
use transfer_taxonomy::error::{Error, Result};
use transfer_taxonomy::sampler::SamplerConfig;
use transfer_taxonomy::service;
use transfer_taxonomy::synth::{gen_synthetic, SyntheticSpec};

#[derive(Parser)]
#[command(name = "taxo", version, about = "Transfer taxonomy pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Records to affinity matrix.
    Normalize(NormalizeArgs),
    /// Optimal taxonomy for one budget and order.
    Solve(SolveArgs),
    /// Taxonomies over a grid of budgets and orders.
    Family(FamilyArgs),
    /// Taxonomy for a single out-of-dictionary target.
    Localize(LocalizeArgs),
    /// Optimal objective against random feasible policies.
    Significance(SignificanceArgs),
    /// Task similarity tree in Newick format.
    Tree(TreeArgs),
    /// Synthetic dictionary and records from latent task vectors.
    GenSynthetic(GenArgs),
    /// HTTP API over a directory of datasets.
    Serve(ServeArgs),
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Highest order to normalize; defaults to the highest recorded order.
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long, default_value_t = 5)]
    beam_width: usize,
    /// Scores are losses (lower is better).
    #[arg(long)]
    negate: bool,
    /// Also write the affinity matrix as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write exp(-beta * p) distances as CSV.
    #[arg(long)]
    distance_csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON object of per-target importance weights.
    #[arg(long)]
    importance: Option<PathBuf>,
    /// JSON object of per-task label costs.
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long, default_value = "nodes")]
    cost_mode: CostMode,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    affinity: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    budget: f64,
    #[arg(long)]
    max_order: usize,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write a Graphviz rendering.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long)]
    affinity: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    /// `a..b` (unit steps), `a..b:step`, or a comma list.
    #[arg(long)]
    budgets: String,
    #[arg(long, default_value = "1..1")]
    orders: String,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long)]
    target: String,
    /// Records whose target is the new task.
    #[arg(long)]
    records: PathBuf,
    /// Dictionary of the existing tasks.
    #[arg(long)]
    dict: PathBuf,
    /// Defaults to the number of existing sources.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long, default_value_t = 5)]
    beam_width: usize,
    #[arg(long)]
    negate: bool,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    affinity_out: Option<PathBuf>,
}

#[derive(Args)]
struct SignificanceArgs {
    #[arg(long)]
    affinity: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    budget: f64,
    #[arg(long, default_value_t = 1)]
    max_order: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Per-sample objectives as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long)]
    affinity: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the merge list as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    tasks: usize,
    #[arg(long)]
    images: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to the number of tasks.
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 2)]
    max_order: usize,
    /// Index of a task planted as everyone's best single source.
    #[arg(long)]
    planted_hub: Option<usize>,
    #[arg(long, default_value_t = 0)]
    source_only: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long)]
    data: PathBuf,
    /// Concurrent solve cap; defaults to the number of logical cores.
    #[arg(long)]
    max_concurrent: Option<usize>,
    /// Allowed CORS origin; any origin when omitted.
    #[arg(long)]
    cors_origin: Option<String>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_dict(path: &Path) -> Result<TaskDictionary> {
    TaskDictionary::from_json(&read_text(path)?)
}

fn read_records(dict: &TaskDictionary, path: &Path, negate: bool) -> Result<EvaluationRecordStore> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    EvaluationRecordStore::read_ndjson(dict, BufReader::new(file), negate)
}

fn read_weights(path: Option<&PathBuf>) -> Result<BTreeMap<TaskId, f64>> {
    match path {
        None => Ok(BTreeMap::new()),
        Some(p) => {
            let text = read_text(p)?;
            serde_json::from_str(&text).map_err(|e| Error::json(p.display().to_string(), e))
        }
    }
}

fn solver_config(budget: f64, args: &ConfigArgs) -> Result<SolverConfig> {
    Ok(SolverConfig {
        budget,
        importance: read_weights(args.importance.as_ref())?,
        costs: read_weights(args.costs.as_ref())?,
        cost_mode: args.cost_mode,
    })
}

fn parse_budgets(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("cannot parse budgets `{text}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if let Some((lo, rest)) = text.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 1.0),
        };
        let lo = num(lo)?;
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| lo + i as f64 * step).collect());
    }
    text.split(',').map(num).collect()
}

fn parse_orders(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("cannot parse orders `{text}`"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (num(lo)?, num(hi)?);
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',').map(num).collect()
}

fn sampler(max_order: usize, beam_width: usize) -> SamplerConfig {
    SamplerConfig {
        beam_width,
        ..SamplerConfig::with_max_order(max_order)
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Normalize(a) => {
            let dict = read_dict(&a.dict)?;
            let store = read_records(&dict, &a.records, a.negate)?;
            let order = a.max_order.unwrap_or(store.max_order().max(1));
            let affinity = normalize(&store, &dict, &sampler(order, a.beam_width))?;
            write_text(&a.out, &affinity.to_json())?;
            if let Some(path) = &a.csv {
                write_text(path, &affinity.to_csv())?;
            }
            if let Some(path) = &a.distance_csv {
                let cfg = DistanceConfig::new(a.beta)?;
                write_text(path, &distance_csv(&to_distance(&affinity, &cfg)))?;
            }
        }
        Command::Solve(a) => {
            let dict = read_dict(&a.dict)?;
            let affinity = AffinityMatrix::from_json(&read_text(&a.affinity)?)?;
            let cfg = solver_config(a.budget, &a.config)?;
            let taxonomy = solve_affinity(&affinity, &dict, a.max_order, &cfg)?;
            write_text(&a.out, &taxonomy.to_json())?;
            if let Some(path) = &a.dot {
                write_text(path, &taxonomy.to_dot(&dict))?;
            }
        }
        Command::Family(a) => {
            let dict = read_dict(&a.dict)?;
            let affinity = AffinityMatrix::from_json(&read_text(&a.affinity)?)?;
            let budgets = parse_budgets(&a.budgets)?;
            let orders = parse_orders(&a.orders)?;
            let base = solver_config(0.0, &a.config)?;
            let cells = taxonomy_family(&affinity, &dict, &budgets, &orders, &base)?;
            fs::create_dir_all(&a.out).map_err(|e| Error::io(a.out.display().to_string(), e))?;
            write_text(&a.out.join("summary.csv"), &family_summary_csv(&cells))?;
            for cell in &cells {
                if let Some(t) = &cell.taxonomy {
                    let name = format!("taxonomy_order{}_budget{}.json", cell.max_order, cell.budget);
                    write_text(&a.out.join(name), &t.to_json())?;
                }
            }
        }
        Command::Localize(a) => {
            let dict = read_dict(&a.dict)?;
            let target = TaskId::new(a.target)?;
            let local = novel_task_dictionary(&dict, &target)?;
            let store = read_records(&local, &a.records, a.negate)?;
            let order = a.max_order.unwrap_or(store.max_order().max(1));
            let budget = a.budget.unwrap_or(local.sources().count() as f64);
            let cfg = solver_config(budget, &a.config)?;
            let (affinity, taxonomy) =
                localize_novel_task(&store, &local, &sampler(order, a.beam_width), &cfg)?;
            write_text(&a.out, &taxonomy.to_json())?;
            if let Some(path) = &a.affinity_out {
                write_text(path, &affinity.to_json())?;
            }
        }
        Command::Significance(a) => {
            let dict = read_dict(&a.dict)?;
            let affinity = AffinityMatrix::from_json(&read_text(&a.affinity)?)?;
            let cfg = solver_config(a.budget, &a.config)?;
            let report = significance_test(&affinity, &dict, a.max_order, &cfg, a.samples, a.seed)?;
            write_text(&a.out, &report.to_json())?;
            if let Some(path) = &a.csv {
                write_text(path, &report.to_csv())?;
            }
        }
        Command::Tree(a) => {
            let affinity = AffinityMatrix::from_json(&read_text(&a.affinity)?)?;
            let tree = similarity_tree(&affinity)?;
            write_text(&a.out, &tree.to_newick())?;
            if let Some(path) = &a.json {
                write_text(path, &tree.to_json())?;
            }
        }
        Command::GenSynthetic(a) => {
            let spec = SyntheticSpec {
                n_tasks: a.tasks,
                n_images: a.images,
                latent_dim: a.latent_dim.unwrap_or(a.tasks),
                noise_sigma: a.noise_sigma,
                seed: a.seed,
                max_order: a.max_order,
                planted_hub: a.planted_hub,
                source_only: a.source_only,
            };
            gen_synthetic(&spec)?.write_dir(&a.out)?;
        }
        Command::Serve(a) => {
            let cap = a
                .max_concurrent
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("runtime", e))?;
            runtime.block_on(service::serve(
                SocketAddr::new(a.host, a.port),
                &a.data,
                cap,
                a.cors_origin.as_deref(),
            ))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("E:SCHEMA: {}", first.trim_start_matches("error: "));
            return ExitCode::FAILURE;
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("E:{}: {}", e.code().as_str(), e);
            ExitCode::FAILURE
        }
    }
}
