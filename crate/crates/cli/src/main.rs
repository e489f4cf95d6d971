//! `condproj` command line: basis optimization, null-space denoising,
//! evaluation protocols, synthetic data and the theorem verifier.
//!
//! Every command writes its artifacts plus a JSON run report (to `--report`
//! or stdout). Failures print one JSON line on stderr and exit non-zero.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use condproj::aobo::{optimize_basis, BasisOptions, OrthogonalBasis};
use condproj::eval::{
    cluster_protocol, few_shot_classify, relevance_from_labels, retrieval_map, FewShotConfig, LabelVector, LogRegConfig,
};
use condproj::io::{read_embeddings, read_labels, write_embeddings, write_labels};
use condproj::linalg::Matrix;
use condproj::nsdp::{denoise, extract_conditional, merge_noise_bases, null_space_basis, pipeline, PipelineOptions};
use condproj::synthgen::{generate, SyntheticSpec, TextSpec};
use condproj::theory::{verify_theorem, TheoremConfig};
use condproj::Execution;

use report::{to_value, CliError, RunReport, WithPath};

#[derive(Parser)]
#[command(name = "condproj", version, about = "Criterion-conditional embedding projections")]
struct Cli {
    /// Disable data-parallel execution.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an orthonormal basis to text embeddings with curvature truncation.
    OptimizeBasis(OptimizeArgs),
    /// Project embeddings onto the null space of one or more noise bases.
    Denoise(DenoiseArgs),
    /// Coordinates of embeddings in a basis.
    Project(ProjectArgs),
    /// Target basis, optional noise removal, and projection in one step.
    Pipeline(PipelineArgs),
    /// Seeded k-means against reference labels (NMI, ACC, ARI).
    Cluster(ClusterArgs),
    /// Few-shot logistic regression accuracy.
    Classify(ClassifyArgs),
    /// Cosine retrieval mAP with label-defined relevance.
    Retrieve(RetrieveArgs),
    /// Generate a planted two-factor dataset.
    Synth(SynthArgs),
    /// Monte-Carlo check of the benefit/cost bounds.
    VerifyTheorem(TheoremArgs),
}

#[derive(Args)]
struct ReportArg {
    /// Where to write the run report; stdout if omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TruncationArgs {
    /// Use exactly this many basis vectors instead of the curvature choice.
    #[arg(long)]
    k: Option<usize>,
    /// Skip L2 row normalization of the text matrix.
    #[arg(long)]
    no_normalize: bool,
}

impl TruncationArgs {
    fn options(&self) -> BasisOptions {
        BasisOptions {
            normalize_rows: !self.no_normalize,
            k_override: self.k,
        }
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    text: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    trunc: TruncationArgs,
    #[command(flatten)]
    report: ReportArg,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    input: PathBuf,
    /// Noise basis files, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    noise: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    report: ReportArg,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    basis: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    report: ReportArg,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    input: PathBuf,
    /// Text embeddings describing the target criterion.
    #[arg(long)]
    target_text: PathBuf,
    /// Text embeddings for each noise criterion, comma separated.
    #[arg(long, value_delimiter = ',')]
    noise: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the target basis here.
    #[arg(long)]
    basis_out: Option<PathBuf>,
    #[command(flatten)]
    trunc: TruncationArgs,
    /// Fixed size for every noise basis.
    #[arg(long)]
    noise_k: Option<usize>,
    #[command(flatten)]
    report: ReportArg,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Number of clusters; defaults to the number of distinct labels.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[command(flatten)]
    report: ReportArg,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    shots: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    l2: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[command(flatten)]
    report: ReportArg,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    query_labels: PathBuf,
    #[arg(long)]
    gallery_labels: PathBuf,
    #[command(flatten)]
    report: ReportArg,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    k_t: usize,
    #[arg(long, default_value_t = 4)]
    p: usize,
    #[arg(long, default_value_t = 4)]
    classes_target: usize,
    #[arg(long, default_value_t = 4)]
    classes_noise: usize,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 0.3)]
    residual: f64,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_texts: Option<usize>,
    #[arg(long)]
    redundancy_noise: Option<f64>,
    #[arg(long)]
    ambiguity_leak: Option<f64>,
    #[command(flatten)]
    report: ReportArg,
}

#[derive(Args)]
struct TheoremArgs {
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    p: usize,
    /// Rows of each coefficient matrix.
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    report: ReportArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::usage(first).to_line());
            return ExitCode::from(2);
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, exec: Execution) -> Result<(), CliError> {
    match command {
        Command::OptimizeBasis(a) => cmd_optimize(a),
        Command::Denoise(a) => cmd_denoise(a),
        Command::Project(a) => cmd_project(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Cluster(a) => cmd_cluster(a, exec),
        Command::Classify(a) => cmd_classify(a, exec),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Synth(a) => cmd_synth(a),
        Command::VerifyTheorem(a) => cmd_theorem(a, exec),
    }
}

fn load(path: &Path, report: &mut RunReport) -> Result<Matrix, CliError> {
    let m = read_embeddings(path).at(path)?;
    report.input(path)?;
    Ok(m)
}

fn load_labels(path: &Path, rows: usize, report: &mut RunReport) -> Result<LabelVector, CliError> {
    let labels = read_labels(path).at(path)?;
    if labels.len() != rows {
        return Err(CliError::new(
            "shape",
            format!("{} labels for {rows} embedding rows", labels.len()),
            Some(path),
        ));
    }
    report.input(path)?;
    Ok(labels)
}

fn load_basis(path: &Path, report: &mut RunReport) -> Result<OrthogonalBasis, CliError> {
    let m = load(path, report)?;
    OrthogonalBasis::from_rows(m).at(path)
}

fn save(path: &Path, m: &Matrix, report: &mut RunReport) -> Result<(), CliError> {
    write_embeddings(path, m).at(path)?;
    report.output(path)
}

fn cmd_optimize(a: OptimizeArgs) -> Result<(), CliError> {
    let mut rep = RunReport::new("optimize-basis");
    let text = load(&a.text, &mut rep)?;
    let opts = a.trunc.options();
    let (basis, trunc) = optimize_basis(&text, &opts).at(&a.text)?;
    save(&a.out, basis.vectors(), &mut rep)?;
    rep.parameters = to_value(&opts);
    rep.metrics = json!({ "selected_k": trunc.selected_k, "numerical_rank": trunc.numerical_rank });
    rep.reports = json!({ "truncation": trunc });
    rep.emit(a.report.report.as_ref())
}

fn cmd_denoise(a: DenoiseArgs) -> Result<(), CliError> {
    let mut rep = RunReport::new("denoise");
    let input = load(&a.input, &mut rep)?;
    let bases = a
        .noise
        .iter()
        .map(|p| load_basis(p, &mut rep))
        .collect::<Result<Vec<_>, _>>()?;
    let merged = merge_noise_bases(&bases)?;
    let null_basis = null_space_basis(&merged)?;
    let out = denoise(&input, &null_basis).at(&a.input)?;
    save(&a.out, &out, &mut rep)?;
    rep.parameters = json!({ "noise_bases": a.noise.len() });
    rep.metrics = json!({ "noise_rank": null_basis.noise_rank(), "null_dim": null_basis.vectors().rows() });
    rep.emit(a.report.report.as_ref())
}

fn cmd_project(a: ProjectArgs) -> Result<(), CliError> {
    let mut rep = RunReport::new("project");
    let input = load(&a.input, &mut rep)?;
    let basis = load_basis(&a.basis, &mut rep)?;
    let out = extract_conditional(&input, &basis).at(&a.input)?;
    save(&a.out, &out, &mut rep)?;
    rep.metrics = json!({ "k": basis.k(), "rows": out.rows() });
    rep.emit(a.report.report.as_ref())
}

fn cmd_pipeline(a: PipelineArgs) -> Result<(), CliError> {
    let mut rep = RunReport::new("pipeline");
    let input = load(&a.input, &mut rep)?;
    let target_text = load(&a.target_text, &mut rep)?;
    let noise_texts = a
        .noise
        .iter()
        .map(|p| load(p, &mut rep))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = PipelineOptions {
        target: a.trunc.options(),
        noise: BasisOptions {
            normalize_rows: !a.trunc.no_normalize,
            k_override: a.noise_k,
        },
    };
    let out = pipeline(&input, &target_text, &noise_texts, &opts)?;
    save(&a.out, &out.conditional, &mut rep)?;
    if let Some(p) = &a.basis_out {
        save(p, out.target_basis.vectors(), &mut rep)?;
    }
    rep.parameters = json!({ "target": opts.target, "noise": opts.noise, "noise_texts": a.noise.len() });
    rep.metrics = json!({
        "selected_k": out.target_report.selected_k,
        "noise_k": out.noise_reports.iter().map(|r| r.selected_k).collect::<Vec<_>>(),
        "merged_noise_rank": out.noise_basis.as_ref().map(|b| b.k()),
    });
    rep.reports = to_value(&out.summary());
    rep.emit(a.report.report.as_ref())
}

fn cmd_cluster(a: ClusterArgs, exec: Execution) -> Result<(), CliError> {
    let mut rep = RunReport::new("cluster");
    let x = load(&a.input, &mut rep)?;
    let labels = load_labels(&a.labels, x.rows(), &mut rep)?;
    let k = a.k.unwrap_or_else(|| labels.distinct());
    let metrics = cluster_protocol(&x, labels.as_slice(), k, a.seeds, a.max_iter, exec)?;
    rep.parameters = json!({ "k": k, "seeds": a.seeds, "max_iter": a.max_iter });
    rep.seeds = metrics.seeds.clone();
    rep.metrics = to_value(&metrics);
    rep.emit(a.report.report.as_ref())
}

fn cmd_classify(a: ClassifyArgs, exec: Execution) -> Result<(), CliError> {
    let mut rep = RunReport::new("classify");
    let x = load(&a.input, &mut rep)?;
    let labels = load_labels(&a.labels, x.rows(), &mut rep)?;
    let cfg = FewShotConfig {
        shots: a.shots,
        repeats: a.repeats,
        seed: a.seed,
        logreg: LogRegConfig {
            l2: a.l2,
            tol: a.tol,
            max_iter: a.max_iter,
        },
        execution: exec,
    };
    let result = few_shot_classify(&x, labels.as_slice(), &cfg)?;
    rep.parameters = to_value(&cfg);
    rep.seeds = vec![cfg.seed];
    rep.metrics = to_value(&result);
    rep.emit(a.report.report.as_ref())
}

fn cmd_retrieve(a: RetrieveArgs) -> Result<(), CliError> {
    let mut rep = RunReport::new("retrieve");
    let q = load(&a.queries, &mut rep)?;
    let g = load(&a.gallery, &mut rep)?;
    let ql = load_labels(&a.query_labels, q.rows(), &mut rep)?;
    let gl = load_labels(&a.gallery_labels, g.rows(), &mut rep)?;
    let relevance = relevance_from_labels(ql.as_slice(), gl.as_slice());
    let result = retrieval_map(&q, &g, &relevance)?;
    rep.metrics = to_value(&result);
    rep.emit(a.report.report.as_ref())
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let defaults = TextSpec::default();
    let spec = SyntheticSpec {
        d: a.d,
        k_t: a.k_t,
        p: a.p,
        classes_target: a.classes_target,
        classes_noise: a.classes_noise,
        samples: a.samples,
        coupling_eps: a.eps,
        residual_sigma: a.residual,
        class_separation: a.separation,
        seed: a.seed,
        text: TextSpec {
            n_texts: a.n_texts.unwrap_or(defaults.n_texts),
            redundancy_noise: a.redundancy_noise.unwrap_or(defaults.redundancy_noise),
            ambiguity_leak: a.ambiguity_leak.unwrap_or(defaults.ambiguity_leak),
        },
    };
    let data = generate(&spec)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let mut rep = RunReport::new("synth");
    let dir = &a.out_dir;
    save(&dir.join("embeddings.odcr"), &data.embeddings, &mut rep)?;
    save(&dir.join("target_text.odcr"), &data.raw_target_text, &mut rep)?;
    save(&dir.join("noise_text.odcr"), &data.raw_noise_text, &mut rep)?;
    save(&dir.join("target_basis.odcr"), data.bases.target.vectors(), &mut rep)?;
    save(&dir.join("noise_basis.odcr"), data.bases.noise.vectors(), &mut rep)?;
    save(&dir.join("true_r_t.odcr"), &data.true_r_t, &mut rep)?;
    save(&dir.join("true_r_n.odcr"), &data.true_r_n, &mut rep)?;
    for (name, labels) in [
        ("target_labels.txt", &data.target_labels),
        ("noise_labels.txt", &data.noise_labels),
    ] {
        let p = dir.join(name);
        write_labels(&p, labels).at(&p)?;
        rep.output(&p)?;
    }
    rep.parameters = to_value(&spec);
    rep.seeds = vec![spec.seed];
    rep.emit(a.report.report.as_ref())
}

fn cmd_theorem(a: TheoremArgs, exec: Execution) -> Result<(), CliError> {
    let mut cfg = TheoremConfig::new(a.d, a.k, a.p, a.eps, a.trials, a.seed);
    cfg.m = a.m;
    cfg.execution = exec;
    let result = verify_theorem(&cfg)?;
    let mut rep = RunReport::new("verify-theorem");
    rep.parameters = to_value(&cfg);
    rep.seeds = vec![cfg.seed];
    rep.metrics = json!({
        "violations": result.total_violations(),
        "cost_slope": result.cost_slope,
        "benefit_slope": result.benefit_slope,
        "c1_median": result.per_epsilon.iter().map(|s| s.c1_median).collect::<Vec<_>>(),
    });
    rep.reports = to_value(&result);
    rep.emit(a.report.report.as_ref())
}
