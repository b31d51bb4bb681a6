//! The `dynacd` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on data
//! and numerical errors. `--config file.json` supplies flags from a JSON
//! object (`{"k": 8, "rho_a": 0.1}`); flags given on the command line win.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{
    auc, cosine_similarity, cross_validate_k, inject_anomalies, recall_at_n, ScoredPairs,
};
use crate::generator::{generate, GenConfig, GroundTruth, MembershipStyle};
use crate::inference::{e_step_q, fit, EmConfig, FitResult, FixedParams};
use crate::manifest::{file_digest, sha256_hex, RunManifest};
use crate::model::{AnomalyPosterior, ModelParams};
use crate::network::{
    ingest_snapshots, preprocess, read_edge_list, Binning, PreprocessOptions, TemporalNetwork,
};

pub const DEFAULT_SEED: u64 = 42;

const SUBCOMMANDS: [&str; 6] = ["generate", "fit", "score", "inject", "evaluate", "cv"];

#[derive(Debug, Parser)]
#[command(
    name = "dynacd",
    version,
    about = "Community and anomalous-pair inference for temporal networks"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON object of flag values; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic network with planted communities and anomalies.
    Generate(GenerateArgs),
    /// Fit the model to a network.
    Fit(FitArgs),
    /// List node pairs by anomaly score.
    Score(ScoreArgs),
    /// Inject symmetric anomalous pairs into a network.
    Inject(InjectArgs),
    /// Compare a fit against planted or injected labels.
    Evaluate(EvaluateArgs),
    /// Choose the number of communities by cross-validation.
    Cv(CvArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Membership {
    Hard,
    Mixed,
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    t: usize,
    #[arg(long, default_value_t = 8.0)]
    avg_degree: f64,
    #[arg(long, default_value_t = 0.1)]
    rho_a: f64,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    #[arg(long, default_value_t = 0.2)]
    phi: f64,
    #[arg(long, default_value_t = 0.2)]
    ell: f64,
    /// Anomalous Poisson mean at t = 0 (sets mu unless --mu is given).
    #[arg(long)]
    pi: Option<f64>,
    /// Anomaly prior; pi is then calibrated from it.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, value_enum, default_value_t = Membership::Hard)]
    membership: Membership,
    /// Ratio of within- to between-community affinity.
    #[arg(long, default_value_t = 10.0)]
    assortativity: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "net.json")]
    out_net: PathBuf,
    #[arg(long, default_value = "truth.json")]
    out_truth: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct InputArgs {
    /// Network JSON, or a CSV/TSV edge list with a `source,target,time` header.
    #[arg(long)]
    input: PathBuf,
    /// Bin edge-list times into windows of this width (default: times are snapshot indices).
    #[arg(long)]
    window: Option<f64>,
    /// First window start (default: the earliest time).
    #[arg(long)]
    origin: Option<f64>,
    /// Drop self-loops, one-directional nodes and everything outside the giant component.
    #[arg(long)]
    preprocess: bool,
}

#[derive(Debug, Args, Serialize)]
struct EmArgs {
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    check_every: usize,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Community-only model: mu fixed at 0 and ell at 1e-12.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    fix_mu: Option<f64>,
    #[arg(long)]
    fix_pi: Option<f64>,
    #[arg(long)]
    fix_ell: Option<f64>,
    #[arg(long)]
    fix_beta: Option<f64>,
    #[arg(long)]
    fix_phi: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    em: EmArgs,
    /// Output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ScoreArgs {
    /// FitResult JSON to read Q from.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// ModelParams JSON; Q is computed on --input.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Number of pairs to list (default: all).
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct InjectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    rho_a: f64,
    /// Per-step probability that an injected pair is switched on.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "injected.json")]
    out: PathBuf,
    /// CSV of injected pairs `i,j`.
    #[arg(long, default_value = "injected_pairs.csv")]
    labels: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    /// Ground-truth JSON from `generate`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Injected-pair CSV from `inject`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    fit: PathBuf,
    /// Cutoff for recall (default: the number of positives).
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CvArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 12])]
    k_candidates: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Run the tool on `argv` (including the program name) and return the exit code.
pub fn execute<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(Error::Config(format!("cannot build thread pool: {e}"))),
        },
        None => run(cli.command),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        1
    } else {
        2
    }
}

/// Splice flags from `--config` right after the subcommand so that later,
/// explicit flags override them.
fn merge_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (idx, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = argv.get(idx + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = fs::read_to_string(&path)?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Config(format!("{} must hold a JSON object", path.display())))?;
    let mut tokens: Vec<OsString> = Vec::new();
    for (key, value) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            serde_json::Value::Bool(true) => tokens.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => {
                tokens.push(flag.into());
                tokens.push(s.into());
            }
            serde_json::Value::Number(n) => {
                tokens.push(flag.into());
                tokens.push(n.to_string().into());
            }
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(str::to_string)
                            .unwrap_or_else(|| v.to_string())
                    })
                    .collect();
                tokens.push(flag.into());
                tokens.push(joined.join(",").into());
            }
            serde_json::Value::Object(_) => {
                return Err(Error::Config(format!(
                    "config key `{key}` must not be an object"
                )));
            }
        }
    }
    let sub = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .ok_or_else(|| Error::Config("no subcommand given".into()))?;
    argv.splice(sub + 1..sub + 1, tokens);
    Ok(argv)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Inject(a) => cmd_inject(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Cv(a) => cmd_cv(a),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_network(args: &InputArgs) -> Result<TemporalNetwork> {
    let path = &args.input;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let net = if is_json {
        if args.window.is_some() || args.origin.is_some() {
            return Err(Error::Config(
                "--window/--origin only apply to edge-list input".into(),
            ));
        }
        TemporalNetwork::load(path)?
    } else {
        let delim = match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("tsv") => Some(b'\t'),
            _ => None,
        };
        let rows = read_edge_list(fs::File::open(path)?, delim)?;
        let binning = match (args.window, args.origin) {
            (Some(width), origin) => Binning::Window {
                width,
                origin: origin
                    .unwrap_or_else(|| rows.iter().map(|r| r.time).fold(f64::INFINITY, f64::min)),
            },
            (None, Some(_)) => return Err(Error::Config("--origin needs --window".into())),
            (None, None) => Binning::Explicit,
        };
        ingest_snapshots(&rows, binning)?
    };
    if args.preprocess {
        let (clean, report) = preprocess(&net, PreprocessOptions::default())?;
        eprintln!(
            "preprocess: {} self-loops, {} nodes by degree, {} outside the giant component removed; N = {}",
            report.removed_self_loops, report.removed_nodes_degree, report.removed_nodes_component, report.final_n
        );
        Ok(clean)
    } else {
        Ok(net)
    }
}

fn em_config(k: usize, em: &EmArgs) -> Result<EmConfig> {
    let mut fixed = FixedParams {
        beta: em.fix_beta,
        phi: em.fix_phi,
        mu: em.fix_mu,
        pi: em.fix_pi,
        ell: em.fix_ell,
    };
    if em.baseline {
        if em.fix_mu.is_some() || em.fix_ell.is_some() {
            return Err(Error::Config("--baseline already fixes mu and ell".into()));
        }
        let b = FixedParams::baseline();
        fixed.mu = b.mu;
        fixed.ell = b.ell;
    }
    let config = EmConfig {
        n_communities: k,
        max_iter: em.max_iter,
        check_every: em.check_every,
        tol: em.tol,
        patience: em.patience,
        n_restarts: em.restarts,
        seed: em.seed,
        fixed,
        mask: None,
    };
    config.validate()?;
    Ok(config)
}

fn input_digest(path: &Path) -> Result<String> {
    file_digest(path)
}

/// Write `bytes` to `out` (or stdout) and the manifest next to it (or to stderr).
fn emit(
    out: Option<&Path>,
    bytes: &[u8],
    mut manifest: RunManifest,
    started: Instant,
) -> Result<()> {
    manifest.output_digest = sha256_hex(bytes);
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    match out {
        Some(path) => {
            fs::write(path, bytes)?;
            fs::write(RunManifest::sidecar_path(path), manifest_json)?;
        }
        None => {
            std::io::stdout().write_all(bytes)?;
            eprintln!("{manifest_json}");
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(
        fs::File::open(path)?,
    ))?)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let started = Instant::now();
    let defaults = GenConfig::default();
    let config = GenConfig {
        n_nodes: a.n,
        n_communities: a.k,
        n_steps: a.t,
        avg_degree: a.avg_degree,
        rho_a: a.rho_a,
        beta: a.beta,
        phi: a.phi,
        ell: a.ell,
        pi: a.pi.unwrap_or(defaults.pi),
        mu: a.mu,
        membership: match a.membership {
            Membership::Hard => MembershipStyle::Hard,
            Membership::Mixed => MembershipStyle::Mixed,
        },
        assortativity: a.assortativity,
        seed: a.seed,
    };
    if a.pi.is_some() && a.mu.is_some() {
        return Err(Error::Config(
            "give at most one of --pi and --mu; the other is calibrated".into(),
        ));
    }
    let (net, truth) = generate(&config)?;
    let net_bytes = serde_json::to_vec(&net.to_json())?;
    let truth_bytes = serde_json::to_vec_pretty(&truth.to_json())?;
    let manifest = RunManifest::new("generate", &config, String::new(), config.seed)?;
    emit(Some(&a.out_net), &net_bytes, manifest.clone(), started)?;
    emit(Some(&a.out_truth), &truth_bytes, manifest, started)?;
    eprintln!(
        "generated N = {}, T = {}, edges at t = 0: {}, realized rho_a = {:.4}",
        net.n_nodes(),
        net.n_steps(),
        net.edge_count(0),
        truth.realized_rho_a
    );
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let started = Instant::now();
    let net = load_network(&a.input)?;
    let config = em_config(a.k, &a.em)?;
    let result = fit(&net, &config)?;
    let bytes = serde_json::to_vec(&result)?;
    let manifest = RunManifest::new("fit", &config, input_digest(&a.input.input)?, config.seed)?;
    eprintln!(
        "fit: restart {} of {}, objective {:.6}, converged {}",
        result.best_restart,
        config.n_restarts,
        result.final_objective(),
        result.converged
    );
    emit(a.out.as_deref(), &bytes, manifest, started)
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let started = Instant::now();
    let (q, digest) = match (&a.fit, &a.params) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--fit and --params are mutually exclusive".into(),
            ))
        }
        (None, None) => return Err(Error::Config("one of --fit or --params is required".into())),
        (Some(path), None) => {
            if a.input.is_some() {
                return Err(Error::Config("--input is only used with --params".into()));
            }
            let fitted: FitResult = read_json(path)?;
            (fitted.q, file_digest(path)?)
        }
        (None, Some(path)) => {
            let input = a
                .input
                .as_ref()
                .ok_or_else(|| Error::Config("--params needs --input".into()))?;
            let params: ModelParams = read_json(path)?;
            let net = TemporalNetwork::load(input)?;
            (e_step_q(&params, &net)?, file_digest(input)?)
        }
    };
    let bytes = score_csv(&q, a.top)?;
    let manifest = RunManifest::new("score", &a, digest, 0)?;
    emit(a.out.as_deref(), &bytes, manifest, started)
}

fn score_csv(q: &AnomalyPosterior, top: Option<usize>) -> Result<Vec<u8>> {
    let n = q.n_nodes;
    let mut pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, q.get(i, j)))
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let take = top.unwrap_or(pairs.len()).min(pairs.len());
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["rank", "i", "j", "q"])?;
    for (rank, (i, j, s)) in pairs[..take].iter().enumerate() {
        wtr.write_record([
            (rank + 1).to_string(),
            i.to_string(),
            j.to_string(),
            s.to_string(),
        ])?;
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn cmd_inject(a: InjectArgs) -> Result<()> {
    let started = Instant::now();
    let net = load_network(&a.input)?;
    let (out, injected) = inject_anomalies(&net, a.rho_a, a.p, a.seed)?;
    let bytes = serde_json::to_vec(&out.to_json())?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["i", "j"])?;
    for (i, j) in &injected {
        wtr.write_record([i.to_string(), j.to_string()])?;
    }
    let label_bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let manifest = RunManifest::new("inject", &a, input_digest(&a.input.input)?, a.seed)?;
    emit(Some(&a.out), &bytes, manifest.clone(), started)?;
    emit(Some(&a.labels), &label_bytes, manifest, started)?;
    eprintln!("injected {} anomalous pairs", injected.len());
    Ok(())
}

fn read_pair_labels(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |idx: usize| -> Result<usize> {
            rec.get(idx)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad pair row {:?}", rec)))
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct MetricRow {
    seed: u64,
    rho_a: Option<f64>,
    k: usize,
    t: usize,
    metric: String,
    value: f64,
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    let fitted: FitResult = read_json(&a.fit)?;
    let n = fitted.q.n_nodes;
    let (truth, pairs) = match (&a.truth, &a.labels) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--truth and --labels are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "one of --truth or --labels is required".into(),
            ))
        }
        (Some(path), None) => {
            let gt = GroundTruth::from_json(read_json(path)?)?;
            let pairs = gt.anomalous_pairs();
            (Some(gt), pairs)
        }
        (None, Some(path)) => (None, read_pair_labels(path)?),
    };
    let mut labels = vec![false; n * n];
    for &(i, j) in &pairs {
        if i >= n || j >= n {
            return Err(Error::Shape(format!(
                "label ({i}, {j}) outside the fitted network"
            )));
        }
        labels[i * n + j] = true;
        labels[j * n + i] = true;
    }
    let scored = ScoredPairs::from_posterior(&fitted.q, |i, j| labels[i * n + j])?;
    let base = |metric: &str, value: f64| MetricRow {
        seed: fitted.seed_used,
        rho_a: truth.as_ref().map(|t| t.realized_rho_a),
        k: fitted.params.n_communities,
        t: fitted.params.n_steps,
        metric: metric.to_string(),
        value,
    };
    let mut rows = Vec::new();
    match auc(&scored) {
        Ok(v) => rows.push(base("auc_z", v)),
        Err(Error::UndefinedMetric(m)) => eprintln!("auc_z skipped: {m}"),
        Err(e) => return Err(e),
    }
    if !pairs.is_empty() {
        let cutoff = a.top.unwrap_or(pairs.len());
        rows.push(base("recall_at_n", recall_at_n(&scored, cutoff)?));
    }
    if let Some(gt) = &truth {
        let p = &fitted.params;
        if gt.params.n_communities == p.n_communities && gt.n_nodes == p.n_nodes {
            let k = p.n_communities;
            rows.push(base("cosine_u", cosine_similarity(&gt.params.u, &p.u, k)?));
            rows.push(base("cosine_v", cosine_similarity(&gt.params.v, &p.v, k)?));
        } else {
            eprintln!("cosine similarity skipped: fitted K differs from the planted K");
        }
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        wtr.serialize(r)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let manifest = RunManifest::new("evaluate", &a, file_digest(&a.fit)?, fitted.seed_used)?;
    emit(a.out.as_deref(), &bytes, manifest, started)
}

fn cmd_cv(a: CvArgs) -> Result<()> {
    let started = Instant::now();
    let net = load_network(&a.input)?;
    let first = *a
        .k_candidates
        .first()
        .ok_or_else(|| Error::Config("empty --k-candidates".into()))?;
    let config = em_config(first, &a.em)?;
    let report = cross_validate_k(&net, &a.k_candidates, a.folds, &config, config.seed)?;
    let bytes = serde_json::to_vec_pretty(&report)?;
    let manifest = RunManifest::new("cv", &a, input_digest(&a.input.input)?, config.seed)?;
    eprintln!("cv: chosen K = {}", report.chosen_k);
    emit(a.out.as_deref(), &bytes, manifest, started)
}
