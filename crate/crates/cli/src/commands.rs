use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use tracing::info;

use convps::dialogue::{question_prompt, run_conversation};
use convps::eval::{sweep, to_csv};
use convps::{
    Corpus, Feedback, LambdaWeights, Model, QuestionPool, Session, SimulatedUser, StrategyConfig,
    StrategyKind, SyntheticConfig, TrainConfig,
};
use convps_service::{ServiceConfig, ANONYMOUS, ENV_ADDR, ENV_CORPUS, ENV_MODEL, ENV_STRATEGY};

use crate::UsageError;

/// Prints the fully resolved configuration as one JSON line on stderr.
fn print_resolved<T: Serialize>(command: &str, config: &T) -> Result<()> {
    let line = serde_json::json!({ "command": command, "config": config });
    eprintln!("{line}");
    Ok(())
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: convps::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, Serialize, Args)]
pub struct LambdaArgs {
    /// Weight of the user term.
    #[arg(long = "lambda-u", default_value_t = 1.0)]
    pub lambda_u: f64,
    /// Weight of the query term.
    #[arg(long = "lambda-q", default_value_t = 1.0)]
    pub lambda_q: f64,
    /// Weight of the conversation term.
    #[arg(long = "lambda-c", default_value_t = 1.0)]
    pub lambda_c: f64,
}

impl From<LambdaArgs> for LambdaWeights {
    fn from(a: LambdaArgs) -> Self {
        LambdaWeights {
            user: a.lambda_u,
            query: a.lambda_q,
            conv: a.lambda_c,
        }
    }
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct StrategyArgs {
    /// LinRel exploration weight.
    #[arg(long, default_value_t = 4.0)]
    pub c: f64,
    /// GP-UCB exploration weight.
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// LinRel ridge term.
    #[arg(long = "lambda-i", default_value_t = 0.1)]
    pub lambda_i: f64,
    #[arg(long = "kernel-sigma2", default_value_t = 1.0)]
    pub kernel_sigma2: f64,
    #[arg(long = "noise-sigma2", default_value_t = 1.0)]
    pub noise_sigma2: f64,
    /// GBS questions before a GP strategy takes over.
    #[arg(long = "gp-t0", default_value_t = 2)]
    pub gp_init_t0: usize,
}

impl StrategyArgs {
    fn config(&self, seed: u64) -> StrategyConfig {
        StrategyConfig {
            c: self.c,
            beta: self.beta,
            lambda_i: self.lambda_i,
            kernel_sigma2: self.kernel_sigma2,
            noise_sigma2: self.noise_sigma2,
            gp_init_t0: self.gp_init_t0,
            seed,
        }
    }
}

#[derive(Debug, Serialize, Args)]
pub struct GenArgs {
    /// Output directory for the four corpus files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub users: usize,
    #[arg(long, default_value_t = 500)]
    pub items: usize,
    #[arg(long, default_value_t = 20)]
    pub queries: usize,
    #[arg(long = "slots-per-topic", default_value_t = 8)]
    pub slots_per_topic: usize,
    #[arg(long = "tail-values", default_value_t = 200)]
    pub tail_values: usize,
    #[arg(long, default_value_t = 2000)]
    pub vocab: usize,
    #[arg(long = "pairs-per-item", default_value_t = 6)]
    pub pairs_per_item: usize,
    #[arg(long = "interactions-per-user", default_value_t = 5)]
    pub interactions_per_user: usize,
    /// 0 makes text, annotations and purchases independent of the topics.
    #[arg(long, default_value_t = 0.8)]
    pub strength: f64,
    #[arg(long = "test-fraction", default_value_t = 0.2)]
    pub test_fraction: f64,
}

pub fn gen_corpus(a: GenArgs, seed: u64) -> Result<()> {
    let config = SyntheticConfig {
        num_users: a.users,
        num_items: a.items,
        num_queries: a.queries,
        slots_per_topic: a.slots_per_topic,
        tail_values: a.tail_values,
        vocab_size: a.vocab,
        pairs_per_item: a.pairs_per_item,
        interactions_per_user: a.interactions_per_user,
        structure_strength: a.strength,
        test_fraction: a.test_fraction,
        seed,
        ..Default::default()
    };
    print_resolved("gen-corpus", &serde_json::json!({ "out": a.out, "synthetic": config }))?;
    config.validate()?;
    let corpus = convps::corpus::generate_synthetic(&config)?;
    corpus.write(&a.out)?;
    info!(
        users = corpus.num_users(),
        items = corpus.num_items(),
        slots = corpus.vocab.num_slots(),
        "corpus written"
    );
    Ok(())
}

#[derive(Debug, Serialize, Args)]
pub struct TrainArgs {
    #[arg(long, env = ENV_CORPUS)]
    pub corpus: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub dim: usize,
    /// Negatives per positive target.
    #[arg(long, default_value_t = 5)]
    pub neg: usize,
    /// L2 weight decay.
    #[arg(long, default_value_t = 0.005)]
    pub gamma: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    /// Word subsampling threshold.
    #[arg(long, default_value_t = 1e-5)]
    pub subsample: f64,
    /// Negative-answer examples per purchase (default min(#pairs, 5)).
    #[arg(long = "neg-slots")]
    pub neg_slots: Option<usize>,
    #[command(flatten)]
    pub lambdas: LambdaArgs,
}

pub fn train(a: TrainArgs, seed: u64) -> Result<()> {
    let config = TrainConfig {
        dim: a.dim,
        epochs: a.epochs,
        batch_size: a.batch,
        lr0: a.lr,
        clip_norm: a.clip,
        neg_samples: a.neg,
        l2_gamma: a.gamma,
        subsample_t: a.subsample,
        neg_slots_per_interaction: a.neg_slots,
        seed,
    };
    let lambdas = LambdaWeights::from(a.lambdas);
    print_resolved(
        "train",
        &serde_json::json!({ "corpus": a.corpus, "out": a.out, "train": config, "lambdas": lambdas }),
    )?;
    config.validate()?;
    let corpus = Corpus::ingest(&a.corpus)?;
    let stdout = io::stdout();
    let model = convps::training::train(&corpus, &config, &lambdas, |stats| {
        let mut out = stdout.lock();
        // A closed stdout must not abort training.
        let _ = writeln!(out, "{}", serde_json::to_string(stats).expect("stats serialize"));
    })?;
    model.save(&a.out)?;
    info!(path = %a.out.display(), "checkpoint written");
    Ok(())
}

/// Question counts to report.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct QuestionCounts(pub Vec<usize>);

/// `5`, `0..10` (inclusive) or `0,2,5`.
fn parse_ls(s: &str) -> Result<QuestionCounts, String> {
    let bad = || format!("invalid question counts {s:?}; use N, A..B or a comma list");
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok(QuestionCounts((a..=b).collect()));
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()
        .map(QuestionCounts)
}

#[derive(Debug, Serialize, Args)]
pub struct EvalArgs {
    #[arg(long, env = ENV_MODEL)]
    pub model: PathBuf,
    #[arg(long, env = ENV_CORPUS)]
    pub corpus: PathBuf,
    /// Comma-separated strategies: random, gbs, linrel, gp-ucb, gp-ei.
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_strategy,
        default_value = "random,gbs,linrel,gp-ucb,gp-ei"
    )]
    pub strategies: Vec<StrategyKind>,
    /// Question counts: N, A..B (inclusive) or a comma list.
    #[arg(long = "L", value_parser = parse_ls, default_value = "0..10")]
    pub ls: QuestionCounts,
    /// Number of strategy seeds, counting up from --seed.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    /// CSV path; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[command(flatten)]
    pub lambdas: LambdaArgs,
}

pub fn eval(a: EvalArgs, seed: u64) -> Result<()> {
    if a.seeds == 0 {
        return Err(usage("--seeds must be >= 1"));
    }
    let ls = a.ls.0.clone();
    let seeds: Vec<u64> = (seed..seed + a.seeds).collect();
    let config = a.strategy.config(seed);
    let lambdas = LambdaWeights::from(a.lambdas);
    print_resolved(
        "eval",
        &serde_json::json!({
            "model": a.model, "corpus": a.corpus, "strategies": a.strategies, "L": ls,
            "seeds": seeds, "strategy_config": config, "lambdas": lambdas, "out": a.out,
        }),
    )?;
    let model = Model::load(&a.model)?;
    let corpus = Corpus::ingest(&a.corpus)?;
    let pool = QuestionPool::from_corpus(&corpus)?;
    let rows = sweep(&model, &corpus, &pool, &a.strategies, &ls, &seeds, lambdas, &config)?;
    let csv = to_csv(&rows);
    match &a.out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Jsonl,
}

#[derive(Debug, Serialize, Args)]
pub struct SimulateArgs {
    #[arg(long, env = ENV_MODEL)]
    pub model: PathBuf,
    #[arg(long, env = ENV_CORPUS)]
    pub corpus: PathBuf,
    /// User id, or "anonymous".
    #[arg(long)]
    pub user: String,
    #[arg(long)]
    pub query: String,
    /// Item the simulated user is looking for.
    #[arg(long)]
    pub target: String,
    #[arg(long, value_parser = parse_strategy, default_value = "gbs")]
    pub strategy: StrategyKind,
    /// Questions to ask.
    #[arg(long = "L", default_value_t = 5)]
    pub l: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(flatten)]
    pub strategy_args: StrategyArgs,
    #[command(flatten)]
    pub lambdas: LambdaArgs,
}

/// One trajectory line.
#[derive(Debug, Serialize)]
struct TrajectoryLine<'a> {
    round: usize,
    slot: Option<&'a str>,
    feedback: Option<&'static str>,
    value: Option<&'a str>,
    target_rank: usize,
    mrr_so_far: f64,
}

pub fn simulate(a: SimulateArgs, seed: u64) -> Result<()> {
    let config = a.strategy_args.config(seed);
    let lambdas = LambdaWeights::from(a.lambdas);
    print_resolved(
        "simulate",
        &serde_json::json!({
            "model": a.model, "corpus": a.corpus, "user": a.user, "query": a.query,
            "target": a.target, "strategy": a.strategy, "L": a.l, "strategy_config": config,
            "lambdas": lambdas,
        }),
    )?;
    let model = Model::load(&a.model)?;
    let corpus = Corpus::ingest(&a.corpus)?;
    model.check_compatible(&corpus)?;
    let pool = QuestionPool::from_corpus(&corpus)?;
    let user = if a.user == ANONYMOUS {
        None
    } else {
        Some(
            corpus
                .user_id(&a.user)
                .ok_or_else(|| usage(format!("unknown user {:?}", a.user)))?,
        )
    };
    let target = corpus
        .item_id(&a.target)
        .ok_or_else(|| usage(format!("unknown item {:?}", a.target)))?;
    let words = corpus.words_of(&a.query);
    let simulated = SimulatedUser::new(&corpus, target)?;
    let mut session = Session::start(&model, user, &words, a.strategy, &config, lambdas)?;
    let trajectory = run_conversation(&simulated, &mut session, a.l, &model, &pool, &config)?;

    let vocab = &corpus.vocab;
    let lines: Vec<TrajectoryLine> = trajectory
        .iter()
        .map(|r| TrajectoryLine {
            round: r.round,
            slot: r.slot.map(|s| vocab.slot_name(s)),
            feedback: r.feedback.map(|f| f.name()),
            value: match r.feedback {
                Some(Feedback::Positive(v)) => Some(vocab.value_name(v)),
                _ => None,
            },
            target_rank: r.target_rank,
            mrr_so_far: r.mrr_so_far,
        })
        .collect();

    let mut out = io::stdout().lock();
    match a.format {
        Format::Jsonl => {
            for l in &lines {
                writeln!(out, "{}", serde_json::to_string(l)?)?;
            }
        }
        Format::Table => {
            writeln!(out, "{:<6} {:<40} {:<28} {:>11}", "round", "question", "answer", "target rank")?;
            for l in &lines {
                let question = l.slot.map_or_else(|| "(initial ranking)".to_string(), question_prompt);
                let answer = match (l.feedback, l.value) {
                    (Some(_), Some(v)) => v.to_string(),
                    (Some("negative"), None) => "not relevant".to_string(),
                    (Some(f), None) => f.to_string(),
                    (None, _) => "-".to_string(),
                };
                // Ranks are shown 1-based, as a shopper would count them.
                writeln!(out, "{:<6} {:<40} {:<28} {:>11}", l.round, question, answer, l.target_rank + 1)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Args)]
pub struct ServeArgs {
    #[arg(long, env = ENV_MODEL)]
    pub model: PathBuf,
    #[arg(long, env = ENV_CORPUS)]
    pub corpus: PathBuf,
    /// Listen address; a bare `:PORT` listens on every interface.
    #[arg(long, env = ENV_ADDR, default_value = convps_service::DEFAULT_ADDR)]
    pub addr: String,
    #[arg(long, env = ENV_STRATEGY, value_parser = parse_strategy, default_value = "gbs")]
    pub strategy: StrategyKind,
    #[arg(long = "top-k", default_value_t = convps_service::DEFAULT_TOP_K)]
    pub top_k: usize,
    /// Idle seconds before a session is dropped.
    #[arg(long = "ttl", default_value_t = convps_service::DEFAULT_TTL.as_secs())]
    pub ttl_secs: u64,
    /// Report the rank of a caller-chosen target item.
    #[arg(long)]
    pub demo: bool,
    #[command(flatten)]
    pub strategy_args: StrategyArgs,
    #[command(flatten)]
    pub lambdas: LambdaArgs,
}

pub fn serve(a: ServeArgs, seed: u64) -> Result<()> {
    let addr = match a.addr.strip_prefix(':') {
        Some(port) => format!("0.0.0.0:{port}"),
        None => a.addr.clone(),
    };
    let config = ServiceConfig {
        addr,
        model_path: a.model.clone(),
        corpus_path: a.corpus.clone(),
        strategy: a.strategy,
        strategy_config: a.strategy_args.config(seed),
        lambdas: LambdaWeights::from(a.lambdas),
        top_k: a.top_k,
        session_ttl: Duration::from_secs(a.ttl_secs),
        demo_mode: a.demo,
    };
    print_resolved(
        "serve",
        &serde_json::json!({
            "addr": config.addr, "model": config.model_path, "corpus": config.corpus_path,
            "strategy": config.strategy, "strategy_config": config.strategy_config,
            "lambdas": config.lambdas, "top_k": config.top_k, "ttl_secs": a.ttl_secs,
            "demo": config.demo_mode,
        }),
    )?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(convps_service::serve(&config, async {
        let _ = tokio::signal::ctrl_c().await;
    }))?;
    Ok(())
}
