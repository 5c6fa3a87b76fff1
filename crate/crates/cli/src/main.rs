use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regrag::corpus::StrategyTag;
use regrag::generation::{ContextVariant, ReturnPolicy};
use regrag::orchestrator::{self, RunConfig, Session};
use regrag::repass::CoverageThreshold;
use regrag::retrieval::{FusionWeights, RerankDepth};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "regrag", version, about = "Regulatory question answering: retrieval, RePASs scoring and answer strategies")]
struct Cli {
    /// Worker threads for data-parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Retrieve passages for every question; writes run.trec and metrics.
    Retrieve(Common),
    /// Recall@10 / MAP@10 over a grid of fusion weights.
    SweepFusion {
        #[command(flatten)]
        common: Common,
        /// Comma-separated a:b pairs, e.g. "1:0,0:1,0.25:0.2".
        #[arg(long, default_value = "1:0,0:1,0:0,0.5:0.5,0.5:0,0:0.5,0.34:0.33,0.25:0.2,0.2:0.25,0.3:0.3")]
        grid: String,
    },
    /// Recall@10 for each reranking depth.
    SweepRerankDepth {
        #[command(flatten)]
        common: Common,
        /// Comma-separated depths.
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80,90,100")]
        depths: Vec<usize>,
    },
    /// Generate answers with the configured strategy.
    Generate(Common),
    /// Compute RePASs for an answers file.
    Score {
        #[command(flatten)]
        common: Common,
        /// Answers file (default: <output_dir>/answers.jsonl).
        #[arg(long)]
        answers: Option<PathBuf>,
    },
    /// Compare NOC's RePASs against another strategy's.
    AuditMetric {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "BASELINE")]
        against: StrategyTag,
    },
}

/// Run configuration file plus per-field overrides.
#[derive(Args)]
struct Common {
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    questions: Option<PathBuf>,
    /// Existing run file to generate from.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<StrategyTag>,
    #[arg(long, value_parser = parse_variant)]
    context_variant: Option<ContextVariant>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    run_tag: Option<String>,
    #[arg(long)]
    bm25_k1: Option<f64>,
    #[arg(long)]
    bm25_b: Option<f64>,
    #[arg(long)]
    fusion_a: Option<f64>,
    #[arg(long)]
    fusion_b: Option<f64>,
    #[arg(long)]
    rerank_depth: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    final_k: Option<usize>,
    #[arg(long)]
    filter_threshold: Option<f64>,
    #[arg(long)]
    filter_max_drop: Option<f64>,
    #[arg(long)]
    loc_max_tries: Option<usize>,
    #[arg(long)]
    vrr_alternatives: Option<usize>,
    #[arg(long)]
    vrr_rounds: Option<usize>,
    #[arg(long, value_parser = parse_policy)]
    vrr_policy: Option<ReturnPolicy>,
    #[arg(long)]
    verify_only: bool,
}

fn parse_variant(s: &str) -> Result<ContextVariant, String> {
    s.parse().map_err(|e: regrag::Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<ReturnPolicy, String> {
    match s.to_ascii_uppercase().replace('-', "_").as_str() {
        "BEST_SEEN" => Ok(ReturnPolicy::BestSeen),
        "FINAL" => Ok(ReturnPolicy::Final),
        _ => Err(format!("unknown return policy {s:?} (expected BEST_SEEN or FINAL)")),
    }
}

fn parse_grid(s: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| anyhow::anyhow!("grid entry {pair:?} is not a:b"))?;
            let w = FusionWeights::new(a.trim().parse()?, b.trim().parse()?)?;
            Ok((w.a, w.b))
        })
        .collect()
}

impl Common {
    fn load(&self) -> regrag::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            corpus => cfg.corpus,
            questions => cfg.questions,
            output_dir => cfg.output_dir,
            seed => cfg.seed,
            strategy => cfg.strategy,
            context_variant => cfg.context_variant,
            run_tag => cfg.run_tag,
            bm25_k1 => cfg.retrieval.bm25.k1,
            bm25_b => cfg.retrieval.bm25.b,
            fusion_a => cfg.retrieval.weights.a,
            fusion_b => cfg.retrieval.weights.b,
            pool_size => cfg.retrieval.pool_size,
            final_k => cfg.retrieval.final_k,
            filter_threshold => cfg.filter.threshold,
            filter_max_drop => cfg.filter.max_drop,
            loc_max_tries => cfg.loc.max_tries,
            vrr_alternatives => cfg.vrr.num_alternatives,
            vrr_rounds => cfg.vrr.rounds,
            vrr_policy => cfg.vrr.return_policy,
        }
        if let Some(p) = &self.run {
            cfg.run = Some(p.clone());
        }
        if let Some(p) = &self.cache_dir {
            cfg.cache_dir = Some(p.clone());
        }
        if let Some(p) = &self.prompts {
            cfg.prompts = Some(p.clone());
        }
        if let Some(t) = self.tau {
            cfg.tau = CoverageThreshold::new(t)?;
        }
        if let Some(d) = self.rerank_depth {
            cfg.retrieval.rerank_depth = RerankDepth::new(d)?;
        }
        FusionWeights::new(cfg.retrieval.weights.a, cfg.retrieval.weights.b)?;
        if self.verify_only {
            cfg.vrr.verify_only = true;
        }
        Ok(cfg)
    }

    fn session(&self) -> regrag::Result<Session> {
        Session::open(self.load()?)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Retrieve(common) => {
            let session = common.session()?;
            let out = orchestrator::cmd_retrieve(&session)?;
            println!("wrote {}", session.output(orchestrator::RUN_FILE).display());
            if let Some(m) = &out.metrics {
                print!("{}", regrag::metrics::format_summary(m));
            }
        }
        Command::SweepFusion { common, grid } => {
            let grid = parse_grid(&grid)?;
            let session = common.session()?;
            print!("{}", orchestrator::cmd_sweep_fusion(&session, &grid)?.render());
        }
        Command::SweepRerankDepth { common, depths } => {
            for &d in &depths {
                RerankDepth::new(d)?;
            }
            let session = common.session()?;
            print!("{}", orchestrator::cmd_sweep_rerank_depth(&session, &depths)?.render());
        }
        Command::Generate(common) => {
            let session = common.session()?;
            let out = orchestrator::cmd_generate(&session)?;
            println!(
                "wrote {} {} answers to {}",
                out.answers.len(),
                session.config.strategy,
                session.output(orchestrator::ANSWERS_FILE).display()
            );
        }
        Command::Score { common, answers } => {
            let cfg = common.load()?;
            let answers = answers.unwrap_or_else(|| cfg.output_dir.join(orchestrator::ANSWERS_FILE));
            let scoring = orchestrator::ScoringConfig::from(&cfg);
            let out = orchestrator::cmd_score(&answers, &cfg.corpus, &scoring, Some(&cfg.output_dir))?;
            print!("{}", out.table.render());
        }
        Command::AuditMetric { common, against } => {
            let session = common.session()?;
            let (_, table) = orchestrator::cmd_audit_metric(&session, against)?;
            print!("{}", table.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let threads = cli.threads;
    match regrag::par::with_threads(threads, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<regrag::Error>().map_or("error", regrag::Error::kind);
            let record = serde_json::json!({ "error": kind, "message": format!("{e:#}") });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
