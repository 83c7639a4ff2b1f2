use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use semcascade::confidence::{fit_calibration, CalibrationStats, ChowVariant};
use semcascade::eval::{deferral_curve, emit_report, summarize, CostModel, EmbeddingTable, EvalContext};
use semcascade::gateway::{calibrate_threshold, run_dataset, serve, Cascade, CascadeConfig};
use semcascade::policy::{PolicyConfig, PolicyKind};
use semcascade::trace::{load_dataset, load_trace, Trace};

#[derive(Parser)]
#[command(name = "cascade", version, about = "Agreement-based model cascades")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Query every configured model on every example and append generations.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit per-model score normalization on the first N trace examples.
    Calibrate {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Quantile for `--variant quantile`.
        #[arg(long)]
        q: Option<f64>,
        /// Number of leading examples used for fitting.
        #[arg(long)]
        subset: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deferral curves, AUC-DF and operating points for a set of policies.
    Eval {
        #[command(flatten)]
        trace: TraceArgs,
        /// A policy object or an array of them.
        #[arg(long)]
        policies: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        side: SideInputs,
        /// Budget as a fraction of the target-only cost.
        #[arg(long, default_value_t = 0.4)]
        budget: f64,
        /// Quality requirement as a fraction of target-only quality.
        #[arg(long, default_value_t = 0.98)]
        quality_fraction: f64,
    },
    /// Pick the threshold that defers a given share of the trace.
    Threshold {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        rate: f64,
        /// Policy file; defaults to the policy in `--config`.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[command(flatten)]
        side: SideInputs,
    },
    /// Serve the cascade over HTTP.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Generations JSONL.
    #[arg(long)]
    trace: PathBuf,
    /// Cascade config supplying ensemble, target and cost model.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ensemble model ids, overriding the config.
    #[arg(long, value_delimiter = ',')]
    ensemble: Option<Vec<String>>,
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct SideInputs {
    /// Calibration statistics for token policies.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// JSON object mapping example id to ensemble-aligned embedding vectors.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Sum,
    Avg,
    Quantile,
}

struct Loaded {
    trace: Trace,
    config: Option<CascadeConfig>,
}

impl TraceArgs {
    fn load(&self) -> Result<Loaded> {
        let config = self
            .config
            .as_ref()
            .map(|p| CascadeConfig::load(p).with_context(|| format!("loading {}", p.display())))
            .transpose()?;
        let ensemble = match (&self.ensemble, &config) {
            (Some(e), _) => e.clone(),
            (None, Some(c)) => c.ensemble_ids(),
            (None, None) => bail!("pass --config or --ensemble"),
        };
        let target = match (&self.target, &config) {
            (Some(t), _) => t.clone(),
            (None, Some(c)) => c.target.id.clone(),
            (None, None) => bail!("pass --config or --target"),
        };
        let trace = load_trace(&self.dataset, &self.trace, &ensemble, &target)
            .with_context(|| format!("assembling trace from {}", self.trace.display()))?;
        Ok(Loaded { trace, config })
    }
}

fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_stats(path: Option<&PathBuf>) -> Result<Option<CalibrationStats>> {
    path.map(|p| {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        CalibrationStats::from_json(&text).with_context(|| format!("parsing {}", p.display()))
    })
    .transpose()
}

/// Stats from `--stats`, falling back to a token policy's own calibration path.
fn stats_for(side: &SideInputs, policies: &[PolicyConfig]) -> Result<Option<CalibrationStats>> {
    if side.stats.is_some() {
        return load_stats(side.stats.as_ref());
    }
    let from_policy = policies.iter().find_map(|p| match &p.kind {
        PolicyKind::Token { calibration, .. } => calibration.clone(),
        _ => None,
    });
    load_stats(from_policy.as_ref())
}

fn calibrate(args: &TraceArgs, variant: VariantArg, q: Option<f64>, subset: usize, out: &Path) -> Result<()> {
    let variant = match (variant, q) {
        (VariantArg::Sum, None) => ChowVariant::Sum,
        (VariantArg::Avg, None) => ChowVariant::Avg,
        (VariantArg::Quantile, Some(q)) => ChowVariant::Quantile { q },
        (VariantArg::Quantile, None) => bail!("--variant quantile needs --q"),
        (_, Some(_)) => bail!("--q only applies to --variant quantile"),
    };
    let loaded = args.load()?;
    if subset == 0 || subset > loaded.trace.len() {
        bail!("--subset must be in 1..={}", loaded.trace.len());
    }
    let fit = loaded.trace.prefix(subset);
    let mut raw: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (model, seqs) in fit.logprobs_by_model() {
        let scores = seqs
            .into_iter()
            .map(|s| semcascade::confidence::chow_score_raw(s, variant))
            .collect::<Result<Vec<_>, _>>()?;
        raw.insert(model, scores);
    }
    let stats = fit_calibration(&raw, variant)?;
    std::fs::write(out, stats.to_json()).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("fitted {} models on {subset} examples", stats.models().count());
    Ok(())
}

fn eval(
    args: &TraceArgs,
    policies: &Path,
    report: &Path,
    side: &SideInputs,
    budget: f64,
    quality_fraction: f64,
) -> Result<()> {
    let loaded = args.load()?;
    let text = std::fs::read_to_string(policies)?;
    let policies = PolicyConfig::list_from_json(&text).with_context(|| format!("parsing {}", policies.display()))?;
    let stats = stats_for(side, &policies)?;
    let embeddings: Option<EmbeddingTable> = side.embeddings.as_deref().map(read_embeddings).transpose()?;
    let cost: Option<&CostModel> = loaded.config.as_ref().map(|c| &c.cost_model);
    let ctx = EvalContext {
        cost: cost.filter(|c| !c.is_empty()),
        stats: stats.as_ref(),
        embeddings: embeddings.as_ref(),
    };
    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    for p in &policies {
        let curve = deferral_curve(&loaded.trace, p, &ctx).with_context(|| format!("policy {}", p.label()))?;
        summaries.push(summarize(&curve, budget, quality_fraction));
        curves.push(curve);
    }
    emit_report(&curves, &summaries, report)?;
    for s in &summaries {
        println!("{}", serde_json::to_string(s)?);
    }
    Ok(())
}

fn threshold(args: &TraceArgs, rate: f64, policy: Option<&PathBuf>, side: &SideInputs) -> Result<()> {
    let loaded = args.load()?;
    let policy = match (policy, &loaded.config) {
        (Some(p), _) => PolicyConfig::from_json(&std::fs::read_to_string(p)?)?,
        (None, Some(c)) => c.policy.clone(),
        (None, None) => bail!("pass --policy or --config"),
    };
    let stats = stats_for(side, std::slice::from_ref(&policy))?;
    let embeddings: Option<EmbeddingTable> = side.embeddings.as_deref().map(read_embeddings).transpose()?;
    let ctx = EvalContext {
        cost: None,
        stats: stats.as_ref(),
        embeddings: embeddings.as_ref(),
    };
    let tau = calibrate_threshold(&loaded.trace, &policy, &ctx, rate)?;
    println!("{}", serde_json::json!({"policy": policy.label(), "rate": rate, "threshold": tau}));
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config, dataset, out } => {
            let cfg = CascadeConfig::load(config)?;
            let examples = load_dataset(dataset)?;
            let summary = run_dataset(&cfg, &examples, out).await?;
            println!("{}", serde_json::to_string(&summary)?);
            if !summary.failures.is_empty() {
                bail!("{} calls failed; re-run to resume", summary.failures.len());
            }
        }
        Command::Calibrate {
            trace,
            variant,
            q,
            subset,
            out,
        } => calibrate(trace, *variant, *q, *subset, out)?,
        Command::Eval {
            trace,
            policies,
            report,
            side,
            budget,
            quality_fraction,
        } => eval(trace, policies, report, side, *budget, *quality_fraction)?,
        Command::Threshold {
            trace,
            rate,
            policy,
            side,
        } => threshold(trace, *rate, policy.as_ref(), side)?,
        Command::Serve { config, bind } => {
            let cascade = Cascade::new(CascadeConfig::load(config)?)?;
            serve(Arc::new(cascade), bind).await?;
        }
    }
    Ok(())
}
