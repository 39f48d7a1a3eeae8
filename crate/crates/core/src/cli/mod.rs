//! The `gdl` command line: `train`, `eval`, `graph-info` and `fisher`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data or checkpoint error,
//! 3 non-finite loss or gradient, 4 a diagnostic check failed.

mod arch;

pub use arch::{parse_arch, Arch};

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use crate::datasets::{
    cora_paths, karate_club_with_seed, load_cifar10_with, load_cora, load_mnist_dir, read_class_names, write_class_names,
    GraphDataset, PixelScale, Samples, TrainTest,
};
use crate::error::{Error, Result};
use crate::fisher::{fisher_matrix_with, FisherOptions};
use crate::gnn::{any_weights_len, predict_labels, EncoderDecoder, GraphOps};
use crate::graph::{incidence, laplacian_spectrum, read_edge_list, Graph, Orientation};
use crate::nn::checkpoint::{decode, read_bytes, KIND_MP_GENERIC};
use crate::nn::{Model, Parameterized};
use crate::tensor::Tensor;
use crate::training::{
    evaluate_accuracy, evaluate_model, rng_from_seed, train_node_classifier, train_supervised, CsvMetrics, MetricRow,
    OptimizerConfig, TrainObserver,
};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NON_FINITE: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

/// Tolerances printed by `fisher`.
const EXPECTATION_TOL: f64 = 1e-9;
const COVARIANCE_TOL: f64 = 1e-9;
const HESSIAN_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "gdl", version, about = "Geometric deep learning: train, evaluate, inspect graphs, Fisher diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write metrics.csv and model.ckpt into --out.
    Train(TrainArgs),
    /// Accuracy of a checkpoint on one split.
    Eval(EvalArgs),
    /// Summary of an edge list: sizes, degrees, components, spectrum and the
    /// incidence factorization check.
    GraphInfo(GraphInfoArgs),
    /// Fisher matrix rank and identity residuals of a checkpoint at one input.
    Fisher(FisherArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    /// Zachary's karate club (embedded).
    Karate,
    /// MNIST IDX files in --data-dir (default data/mnist or $GDL_MNIST_DIR).
    Mnist,
    /// cora.content and cora.cites in --data-dir (default data/cora or $GDL_CORA_DIR).
    Cora,
    /// CIFAR-10 binary batches in --data-dir (default data/cifar10 or $GDL_CIFAR_DIR).
    Cifar10,
    /// A seeded input vector uniform in [-1, 1) (fisher only).
    Random,
}

impl DatasetKind {
    fn default_dir(self) -> PathBuf {
        let (var, dir) = match self {
            DatasetKind::Mnist => ("GDL_MNIST_DIR", "data/mnist"),
            DatasetKind::Cora => ("GDL_CORA_DIR", "data/cora"),
            DatasetKind::Cifar10 => ("GDL_CIFAR_DIR", "data/cifar10"),
            DatasetKind::Karate | DatasetKind::Random => return PathBuf::new(),
        };
        std::env::var_os(var).map_or_else(|| PathBuf::from(dir), PathBuf::from)
    }

    fn is_graph(self) -> bool {
        matches!(self, DatasetKind::Karate | DatasetKind::Cora)
    }
}

#[derive(Clone, Debug, Args)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    /// Directory holding the dataset files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Keep pixel bytes in 0..=255 instead of scaling to [0, 1].
    #[arg(long)]
    pub raw_pixels: bool,
    /// Use only the first N training samples (image datasets).
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Comma-separated training node indices replacing the seeded graph
    /// mask; the other nodes keep their validation and test roles (karate:
    /// every other node validates).
    #[arg(long, value_delimiter = ',')]
    pub train_nodes: Option<Vec<usize>>,
}

impl DataArgs {
    fn dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.dataset.default_dir())
    }

    fn scale(&self) -> PixelScale {
        if self.raw_pixels {
            PixelScale::Raw
        } else {
            PixelScale::Unit
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Architecture: `linear`, `mlp[:d-h-…-C]`, `gcn[:d-h-…]`, `sage[:…]`,
    /// `mp[:…]` or `gat[:d-HxK-C]`. Bare kinds take widths from the dataset,
    /// --hidden and --heads. Defaults: karate gcn:34-4-4-2, mnist
    /// mlp:784-500-10, cora gat:1433-8x8-7, cifar10 linear.
    #[arg(long)]
    pub model: Option<String>,
    /// Node decoder after a message-passing encoder, `linear:a-C` or
    /// `mlp:a-…-C` [default: linear from the last encoder width]
    #[arg(long)]
    pub decoder: Option<String>,
    /// relu, tanh, elu, leaky_relu[:slope] or identity [default: karate tanh,
    /// cora elu, otherwise relu]
    #[arg(long)]
    pub activation: Option<String>,
    /// [default: karate 500, mnist 10, cora 200, cifar10 10]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate η [default: karate 0.3, mnist 0.1, cora 0.5, cifar10 0.01]
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    /// Minibatch size |B| (image datasets; graph datasets train full-batch).
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Seeds initialization, minibatches and graph masks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hidden width for bare architecture kinds [default: mlp 500, gcn 4, gat 8]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Attention heads for a bare `gat` [default: 8]
    #[arg(long)]
    pub heads: Option<usize>,
    /// Attend to the node itself as well as its neighbours (GAT).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub self_loops: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Write metrics every N epochs.
    #[arg(long, default_value_t = 1)]
    pub log_every: usize,
    /// Also save epoch-N.ckpt every N epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// [default: val for karate, test otherwise]
    #[arg(long, value_enum)]
    pub mask: Option<Split>,
    /// Seed of the graph masks; use the value given to `train`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct GraphInfoArgs {
    /// Edge list with one `i j` pair of zero-based node indices per line.
    #[arg(required_unless_present = "karate")]
    pub edges: Option<PathBuf>,
    /// Use the embedded karate club graph.
    #[arg(long, conflicts_with = "edges")]
    pub karate: bool,
    /// Node count, if larger than one past the largest index.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Seeds the two random orientations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FisherArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Test-set sample used as the input x.
    #[arg(long, default_value_t = 0)]
    pub sample_index: usize,
    /// Seeds the random input and the checked weight coordinates.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight coordinates whose Fisher columns are checked against the identities.
    #[arg(long, default_value_t = 64)]
    pub check_coords: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output directory for fisher.csv.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::BadFractions(_) => EXIT_CONFIG,
        Error::NonFiniteLoss(_) | Error::NonFiniteGradient { .. } => EXIT_NON_FINITE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Output goes to `out`, diagnostics to stderr.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let (text, code) = match &cli.command {
        Command::Train(a) => with_threads(a.threads, || cmd_train(a))?,
        Command::Eval(a) => with_threads(a.threads, || cmd_eval(a))?,
        Command::GraphInfo(a) => cmd_graph_info(a)?,
        Command::Fisher(a) => with_threads(a.threads, || cmd_fisher(a))?,
    };
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))?;
    Ok(code)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(f)
}

enum Loaded {
    Samples(TrainTest),
    Graph(GraphDataset),
}

fn load(data: &DataArgs, seed: u64) -> Result<Loaded> {
    let dir = data.dir();
    let mut tt = match data.dataset {
        DatasetKind::Karate => return with_train_nodes(karate_club_with_seed(seed), data),
        DatasetKind::Cora => {
            let (content, cites) = cora_paths(&dir);
            return with_train_nodes(load_cora(&content, &cites, seed)?, data);
        }
        DatasetKind::Mnist => load_mnist_dir(&dir, data.scale())?,
        DatasetKind::Cifar10 => {
            let train: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            TrainTest {
                train: load_cifar10_with(&train, data.scale())?,
                test: load_cifar10_with(&[dir.join("test_batch.bin")], data.scale())?,
            }
        }
        DatasetKind::Random => return Err(Error::Config("the random dataset only feeds `fisher`".into())),
    };
    if data.train_nodes.is_some() {
        return Err(Error::Config("--train-nodes applies to graph datasets only".into()));
    }
    if let Some(n) = data.train_limit {
        tt.train = tt.train.head(n)?;
    }
    Ok(Loaded::Samples(tt))
}

fn with_train_nodes(mut g: GraphDataset, data: &DataArgs) -> Result<Loaded> {
    if let Some(nodes) = &data.train_nodes {
        let mut train = nodes.clone();
        train.sort_unstable();
        train.dedup();
        if let Some(&v) = train.iter().find(|&&v| v >= g.graph.n_nodes()) {
            return Err(Error::Config(format!("--train-nodes: node {v} out of range 0..{}", g.graph.n_nodes())));
        }
        let m = &mut g.mask;
        if m.test.is_empty() {
            m.val = (0..g.graph.n_nodes()).filter(|v| train.binary_search(v).is_err()).collect();
        } else {
            m.val.retain(|v| train.binary_search(v).is_err());
            m.test.retain(|v| train.binary_search(v).is_err());
        }
        m.train = train;
        m.validate(g.graph.n_nodes())?;
    }
    Ok(Loaded::Graph(g))
}

struct Defaults {
    model: &'static str,
    activation: &'static str,
    epochs: usize,
    lr: f64,
}

fn defaults(kind: DatasetKind) -> Defaults {
    match kind {
        DatasetKind::Karate => Defaults {
            model: "gcn:34-4-4-2",
            activation: "tanh",
            epochs: 500,
            lr: 0.3,
        },
        DatasetKind::Cora => Defaults {
            model: "gat:1433-8x8-7",
            activation: "elu",
            epochs: 200,
            lr: 0.5,
        },
        DatasetKind::Mnist => Defaults {
            model: "mlp:784-500-10",
            activation: "relu",
            epochs: 10,
            lr: 0.1,
        },
        DatasetKind::Cifar10 | DatasetKind::Random => Defaults {
            model: "linear",
            activation: "relu",
            epochs: 10,
            lr: 0.01,
        },
    }
}

/// Writes metrics and, every `every` epochs, a checkpoint of the current weights.
struct RunObserver<'a, M: Parameterized + Clone> {
    csv: CsvMetrics,
    model: M,
    save: &'a dyn Fn(&M, &Path) -> Result<()>,
    dir: PathBuf,
    every: Option<usize>,
}

impl<M: Parameterized + Clone> TrainObserver for RunObserver<'_, M> {
    fn metric(&mut self, row: &MetricRow) -> Result<()> {
        self.csv.metric(row)
    }

    fn epoch_end(&mut self, epoch: usize, weights: &[Tensor]) -> Result<()> {
        match self.every {
            Some(k) if k > 0 && epoch.is_multiple_of(k) => {
                self.model.set_params(weights)?;
                (self.save)(&self.model, &self.dir.join(format!("epoch-{epoch}.ckpt")))
            }
            _ => Ok(()),
        }
    }
}

fn cmd_train(a: &TrainArgs) -> Result<(String, i32)> {
    let d = defaults(a.data.dataset);
    let activation = a.activation.as_deref().unwrap_or(d.activation).parse()?;
    let cfg = OptimizerConfig {
        learning_rate: a.lr.unwrap_or(d.lr),
        batch_size: a.batch,
        epochs: a.epochs.unwrap_or(d.epochs),
        seed: a.seed,
        lr_schedule: None,
        log_every: a.log_every,
    };
    cfg.validate()?;
    let arch = parse_arch(a.model.as_deref().unwrap_or(d.model), a.hidden, a.heads)?;
    let data = load(&a.data, a.seed)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let ckpt = a.out.join("model.ckpt");
    let mut report = String::new();
    match data {
        Loaded::Samples(tt) => {
            let mut model = arch.build_dense(tt.train.dim(), tt.train.classes, activation)?;
            if a.decoder.is_some() {
                return Err(Error::Config("--decoder applies to graph encoders only".into()));
            }
            let save = |m: &Model, p: &Path| m.save(p);
            let mut obs = RunObserver {
                csv: CsvMetrics::create(&a.out.join("metrics.csv"))?,
                model: model.clone(),
                save: &save,
                dir: a.out.clone(),
                every: a.checkpoint_every,
            };
            train_supervised(&mut model, tt.train.view(), &[("test", tt.test.view())], &cfg, &mut obs)?;
            model.save(&ckpt)?;
            for (name, s) in [("train", &tt.train), ("test", &tt.test)] {
                let (_, acc) = evaluate_model(&model, s.view())?;
                let _ = writeln!(report, "{name} accuracy {acc:.4}");
            }
        }
        Loaded::Graph(g) => {
            let mut model = arch.build_graph(g.features.cols(), g.classes, activation, a.decoder.as_deref(), a.self_loops)?;
            let ops = GraphOps::new(&g.graph);
            let save = |m: &EncoderDecoder, p: &Path| m.save(p);
            let mut obs = RunObserver {
                csv: CsvMetrics::create(&a.out.join("metrics.csv"))?,
                model: model.clone(),
                save: &save,
                dir: a.out.clone(),
                every: a.checkpoint_every,
            };
            train_node_classifier(&mut model, &ops, &g.features, &g.labels, &g.mask, &cfg, &mut obs)?;
            model.save(&ckpt)?;
            write_class_names(&a.out.join("classes.txt"), &g.class_names)?;
            let scores = model.score(&ops, &g.features)?;
            for split in [Split::Train, Split::Val, Split::Test] {
                let idx = g.mask.get(split.name()).unwrap_or(&[]);
                if !idx.is_empty() {
                    let acc = evaluate_accuracy(&scores, &g.labels, idx)?;
                    let _ = writeln!(report, "{} accuracy {acc:.4}", split.name());
                }
            }
        }
    }
    let _ = writeln!(report, "checkpoint {}", ckpt.display());
    let _ = writeln!(report, "metrics {}", a.out.join("metrics.csv").display());
    Ok((report, 0))
}

fn is_graph_checkpoint(bytes: &[u8]) -> Result<bool> {
    Ok(decode(bytes, any_weights_len)?.iter().any(|r| r.kind >= KIND_MP_GENERIC))
}

fn cmd_eval(a: &EvalArgs) -> Result<(String, i32)> {
    let bytes = read_bytes(&a.checkpoint)?;
    let graph = is_graph_checkpoint(&bytes)?;
    if graph != a.data.dataset.is_graph() {
        return Err(Error::BadCheckpoint(format!(
            "{} does not hold a {} model",
            a.checkpoint.display(),
            if a.data.dataset.is_graph() { "graph" } else { "dense" }
        )));
    }
    let split = a.mask.unwrap_or(if a.data.dataset == DatasetKind::Karate { Split::Val } else { Split::Test });
    let acc = match load(&a.data, a.seed)? {
        Loaded::Samples(tt) => {
            let model = Model::from_bytes(&bytes)?;
            let s = match split {
                Split::Train => &tt.train,
                Split::Test => &tt.test,
                Split::Val => return Err(Error::Config("image datasets have train and test splits only".into())),
            };
            evaluate_model(&model, s.view())?.1
        }
        Loaded::Graph(g) => {
            let model = EncoderDecoder::from_bytes(&bytes)?;
            if let Ok(names) = read_class_names(&a.checkpoint.with_file_name("classes.txt")) {
                if names != g.class_names {
                    return Err(Error::BadCheckpoint(format!("class names differ from the training run: {names:?}")));
                }
            }
            let scores = model.score(&GraphOps::new(&g.graph), &g.features)?;
            evaluate_accuracy(&scores, &g.labels, g.mask.get(split.name()).unwrap_or(&[]))?
        }
    };
    Ok((format!("{} accuracy {acc:.4}\n", split.name()), 0))
}

/// Rounds values within print precision of zero to `0`, dropping `-0`.
fn clean(v: f64) -> f64 {
    if v.abs() < 5e-7 {
        0.0
    } else {
        v
    }
}

fn format_matrix(m: &Tensor) -> String {
    let mut s = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{:>3}", clean(*v))).collect();
        let _ = writeln!(s, "  [{}]", row.join(" "));
    }
    s
}

/// Text report of `graph-info` and whether the factorization check passed.
pub fn graph_report(g: &Graph, seed: u64) -> Result<(String, bool)> {
    let mut s = String::new();
    let _ = writeln!(s, "nodes {}", g.n_nodes());
    let _ = writeln!(s, "edges {}", g.n_edges());
    let hist: Vec<String> = g.degree_histogram().iter().map(|(d, c)| format!("{d}:{c}")).collect();
    let _ = writeln!(s, "degree histogram {}", hist.join(" "));
    let (k, _) = g.connected_components();
    let _ = writeln!(s, "components {k}");
    let l = g.laplacian();
    if g.n_nodes() <= 12 {
        let _ = write!(s, "laplacian\n{}", format_matrix(&l));
    }
    let spec = laplacian_spectrum(g);
    let shown: Vec<String> = spec.iter().take(12).map(|v| format!("{:.6}", clean(*v))).collect();
    let more = if spec.len() > 12 { " ..." } else { "" };
    let _ = writeln!(s, "laplacian eigenvalues {}{more}", shown.join(" "));
    if let (Some(lo), Some(hi)) = (spec.first(), spec.last()) {
        let _ = writeln!(s, "spectrum min {:.6} max {:.6}", clean(*lo), clean(*hi));
    }
    let mut rng = rng_from_seed(seed);
    let mut ok = true;
    for t in 1..=2 {
        let x = incidence(g, &Orientation::random(g, &mut rng))?;
        let pass = x.t_matmul(&x)? == l;
        ok &= pass;
        let _ = writeln!(s, "L == X^T X (orientation {t}): {}", if pass { "PASS" } else { "FAIL" });
    }
    Ok((s, ok))
}

fn cmd_graph_info(a: &GraphInfoArgs) -> Result<(String, i32)> {
    let g = match &a.edges {
        Some(p) => {
            let g = read_edge_list(p)?;
            match a.nodes {
                Some(n) if n > g.n_nodes() => Graph::new(n, g.edges())?,
                _ => g,
            }
        }
        None => crate::datasets::karate_graph(),
    };
    let (text, ok) = graph_report(&g, a.seed)?;
    Ok((text, if ok { 0 } else { EXIT_CHECK_FAILED }))
}

fn fisher_input(a: &FisherArgs, in_len: usize) -> Result<Tensor> {
    if a.data.dataset == DatasetKind::Random {
        let mut rng = rng_from_seed(a.seed);
        return Ok(Tensor::vector((0..in_len).map(|_| rng.random_range(-1.0..1.0)).collect()));
    }
    let test: Samples = match load(&a.data, a.seed)? {
        Loaded::Samples(tt) => tt.test,
        Loaded::Graph(_) => return Err(Error::Config("fisher needs an image or random dataset".into())),
    };
    if a.sample_index >= test.len() {
        return Err(Error::Config(format!("sample index {} outside 0..{}", a.sample_index, test.len())));
    }
    Ok(Tensor::vector(test.x.row(a.sample_index).to_vec()))
}

fn cmd_fisher(a: &FisherArgs) -> Result<(String, i32)> {
    let model = Model::load(&a.checkpoint)?;
    let x = fisher_input(a, model.in_len())?;
    let opts = FisherOptions {
        check_coords: a.check_coords,
        seed: a.seed,
        ..Default::default()
    };
    let r = fisher_matrix_with(&model, &x, &model.weights_flat(), &opts)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let csv = a.out.join("fisher.csv");
    r.write_csv(&csv)?;
    let classes = model.out_len();
    let mut s = String::new();
    let _ = writeln!(s, "weights {}", r.n_weights);
    let _ = writeln!(s, "classes {classes}");
    let _ = writeln!(s, "predicted class {}", predict_labels(&Tensor::matrix(1, classes, r.probs.clone())?)[0]);
    let top: Vec<String> = r.singular_values.iter().map(|v| format!("{v:.3e}")).collect();
    let _ = writeln!(s, "singular values {}", top.join(" "));
    let _ = writeln!(s, "numerical rank {} (bound {})", r.numerical_rank, classes.saturating_sub(1));
    let mut ok = r.numerical_rank < classes.max(1);
    if let Some(id) = r.identities {
        for (name, v, tol) in [
            ("expectation", id.expectation, EXPECTATION_TOL),
            ("covariance", id.covariance, COVARIANCE_TOL),
            ("hessian", id.hessian, HESSIAN_TOL),
        ] {
            let pass = v <= tol;
            ok &= pass;
            let _ = writeln!(s, "{name} residual {v:.3e} (tol {tol:e}, {} coords) {}", id.coords, if pass { "PASS" } else { "FAIL" });
        }
    }
    let _ = writeln!(s, "report {}", csv.display());
    Ok((s, if ok { 0 } else { EXIT_CHECK_FAILED }))
}
