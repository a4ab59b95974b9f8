//! The `polcon` command line: every pipeline stage runs from persisted
//! artifacts of the previous stage, writes its own artifacts under the
//! output directory, and appends a run record (timings live in the log,
//! never in artifacts). `--dry-run` prints the planned request count and
//! issues nothing.

use crate::artifacts::{read_jsonl, write_json_pretty, write_jsonl, write_string, ArtifactError};
use crate::assets::PromptAssets;
use crate::config::{append_run_record, ConfigError, ModelRef, RunConfig, RunRecord};
use crate::gateway::Gateway;
use crate::judges::{JudgeError, JudgeRunner};
use crate::ood::{self, GenParams, OodError};
use crate::pcp::{self, PcpError};
use crate::pipeline::{self, PipelineError};
use crate::report::{self, ConsistencyArtifact, EvenHandedArtifact, ExchangeArtifact, PoliticalValuesArtifact};
use crate::rewards::{self, ResponseRecord, RewardStreamError, TrainVerdictRecord};
use clap::{Args, Parser, Subcommand};
use polcon_core::grid::{expand_grid, PairedExchange, Valence};
use polcon_core::metrics::round_half_up_1dp;
use polcon_core::reward::TrainingExample;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pcp(#[from] PcpError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ood(#[from] OodError),
    #[error(transparent)]
    RewardStream(#[from] RewardStreamError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("missing artifact {0}: run the producing stage first or pass a path")]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Pcp(_) => "pcp",
            CliError::Pipeline(_) => "pipeline",
            CliError::Ood(_) => "ood",
            CliError::RewardStream(_) => "reward",
            CliError::Artifact(_) => "artifact",
            CliError::Judge(_) => "judge",
            CliError::MissingArtifact(_) => "missing_artifact",
            CliError::Usage(_) => "usage",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "polcon", about = "Batch harness for measuring covert political bias in language models", version)]
pub struct Cli {
    /// Run config (providers, models, seeds, output dir).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the planned request count and write nothing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Paired-prompt consistency benchmark.
    Pcp {
        #[command(subcommand)]
        cmd: PcpCmd,
    },
    /// Training-data pipeline.
    Data {
        #[command(subcommand)]
        cmd: DataCmd,
    },
    /// Emit the reward stream for an external RL trainer.
    Reward(RewardArgs),
    /// Out-of-distribution evaluations.
    Ood {
        #[command(subcommand)]
        cmd: OodCmd,
    },
    /// Render report tables and plots from persisted artifacts.
    Report {
        /// Run directory (defaults to the output root).
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Re-score persisted exchanges under several judges.
    Rescore {
        /// Comma-separated judge model specs.
        #[arg(long)]
        judges: String,
        /// Exchange artifacts (default: every pcp exchanges file).
        #[arg(long)]
        exchanges: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum PcpCmd {
    /// Expand pairs x valences x templates into paired queries.
    Expand {
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Comma list of builtin template ids, or a template file.
        #[arg(long)]
        templates: Option<String>,
        /// Queries file to write (default artifacts/pcp/queries.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send both sides of every query to an evaluated model.
    Run {
        #[arg(long)]
        model: String,
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Exchanges file to write; orphan/failure logs land beside it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Judge persisted exchanges and aggregate the consistency report.
    Aggregate {
        #[arg(long)]
        model: String,
        #[arg(long)]
        judge: Option<String>,
        #[arg(long)]
        exchanges: Option<PathBuf>,
        #[arg(long)]
        orphans: Option<PathBuf>,
        /// Consistency report file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DataCmd {
    /// Extract candidate topics from a snapshot or newline list.
    Ingest {
        #[arg(long)]
        source: PathBuf,
    },
    /// Keep topics with a clear left/right dimension.
    Filter {
        #[arg(long)]
        topics: Option<PathBuf>,
        #[arg(long)]
        judge: Option<String>,
    },
    /// Generate the four directive query variants per topic.
    GenQueries {
        #[arg(long)]
        topics: Option<PathBuf>,
        #[arg(long)]
        generator: Option<String>,
    },
    /// Pre-generate left/right anchor responses per topic.
    GenAnchors {
        #[arg(long)]
        topics: Option<PathBuf>,
        #[arg(long)]
        anchor_model: Option<String>,
    },
    /// Audit anchor pairs for counter-spin and distinguishability.
    Audit {
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        judge: Option<String>,
    },
    /// Sample both tracks to target counts and shuffle.
    Assemble {
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        target_helpfulness: Option<usize>,
        #[arg(long)]
        target_sentiment: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    #[arg(long)]
    pub examples: PathBuf,
    /// Precomputed training-judge verdicts.
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
    /// Rollout responses to judge here (requires --judge).
    #[arg(long)]
    pub responses: Option<PathBuf>,
    #[arg(long)]
    pub judge: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum OodCmd {
    /// Paired-request even-handedness over an ingested dataset.
    EvenHanded {
        #[arg(long)]
        model: String,
        #[arg(long)]
        judge: Option<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Exchange-rate egalitarianism over quantity tradeoffs.
    Exchange {
        #[arg(long)]
        model: String,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Thurstonian policy utilities projected onto politician axes.
    PoliticalValues {
        #[arg(long)]
        model: String,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        items: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Ctx {
    config: Option<RunConfig>,
    out_base: PathBuf,
    dry_run: bool,
    started: Instant,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self, CliError> {
        let config = match &cli.config {
            Some(path) => Some(RunConfig::load(path)?),
            None => None,
        };
        let out_base = config
            .as_ref()
            .map(|c| c.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("polcon-out"));
        Ok(Self {
            config,
            out_base,
            dry_run: cli.dry_run,
            started: Instant::now(),
        })
    }

    fn config(&self) -> Result<&RunConfig, CliError> {
        self.config
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs --config (providers and seeds)".into()))
    }

    fn artifacts(&self) -> PathBuf {
        self.out_base.join("artifacts")
    }

    fn assets(&self) -> Result<PromptAssets, CliError> {
        match self.config.as_ref().and_then(|c| c.prompts_dir.as_deref()) {
            Some(dir) => PromptAssets::from_dir(dir).map_err(|e| CliError::Judge(JudgeError::Asset(e))),
            None => Ok(PromptAssets::builtin()),
        }
    }

    fn judge_runner<'a>(
        &self,
        gateway: &'a Gateway,
        assets: &'a PromptAssets,
        judge: &ModelRef,
    ) -> JudgeRunner<'a> {
        let seed = self.config.as_ref().map(|c| c.seeds.judge_presentation).unwrap_or(0);
        JudgeRunner::new(gateway, &judge.model_id, assets, seed)
    }

    fn gen_params(&self) -> GenParams {
        match &self.config {
            Some(c) => GenParams {
                temperature: c.generation.temperature,
                max_tokens: c.generation.max_tokens,
            },
            None => GenParams::default(),
        }
    }

    fn require_file(&self, explicit: Option<&Path>, default: PathBuf) -> Result<PathBuf, CliError> {
        let path = explicit.map(Path::to_path_buf).unwrap_or(default);
        if path.exists() {
            Ok(path)
        } else {
            Err(CliError::MissingArtifact(path))
        }
    }

    fn plan(&self, calls: usize, exact: bool) -> bool {
        if self.dry_run {
            let bound = if exact { "" } else { "<= " };
            println!("dry run: planned {bound}{calls} gateway call(s); none issued");
        }
        self.dry_run
    }

    fn record(&self, stage: &str, inputs: &[&Path], outputs: &[&Path]) {
        if self.dry_run {
            return;
        }
        let config_hash = self.config.as_ref().map(|c| c.config_hash()).unwrap_or_else(|| "local".into());
        let record = RunRecord {
            run_id: format!("{stage}-{config_hash}"),
            config_hash,
            stage: stage.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            duration_ms: self.started.elapsed().as_millis() as u64,
        };
        // Logging failure must not fail the stage.
        let _ = append_run_record(&self.out_base.join("log"), &record);
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::Pcp { cmd } => run_pcp(&ctx, cmd),
        Command::Data { cmd } => run_data(&ctx, cmd),
        Command::Reward(args) => run_reward(&ctx, args),
        Command::Ood { cmd } => run_ood(&ctx, cmd),
        Command::Report { run } => run_report(&ctx, run.as_deref()),
        Command::Rescore { judges, exchanges } => run_rescore(&ctx, judges, exchanges),
    }
}

// ─── pcp ────────────────────────────────────────────────────────────────────

fn run_pcp(ctx: &Ctx, cmd: &PcpCmd) -> Result<(), CliError> {
    match cmd {
        PcpCmd::Expand { pairs, templates, out } => {
            let pairs_path = pairs
                .clone()
                .or_else(|| ctx.config.as_ref().and_then(|c| c.datasets.pairs.clone()));
            let pair_list = pcp::load_pairs(pairs_path.as_deref())?;
            let template_list = pcp::resolve_templates(templates.as_deref())?;
            let grid = expand_grid(&pair_list, &template_list, &Valence::ALL).map_err(PcpError::Grid)?;
            println!(
                "{} paired queries ({} prompts) from {} pairs x {} valences x {} templates",
                grid.len(),
                grid.len() * 2,
                pair_list.len(),
                Valence::ALL.len(),
                template_list.len()
            );
            if ctx.plan(0, true) {
                return Ok(());
            }
            let out = out.clone().unwrap_or_else(|| ctx.artifacts().join("pcp/queries.jsonl"));
            write_jsonl(&out, &grid)?;
            println!("wrote {}", out.display());
            ctx.record("pcp-expand", &[], &[&out]);
            Ok(())
        }
        PcpCmd::Run { model, queries, out } => {
            let queries_path = ctx.require_file(queries.as_deref(), ctx.artifacts().join("pcp/queries.jsonl"))?;
            let grid: Vec<polcon_core::grid::PairedQuery> = read_jsonl(&queries_path)?;
            if ctx.plan(grid.len() * 2, true) {
                return Ok(());
            }
            let config = ctx.config()?;
            let model_ref = config.resolve_model(model)?;
            let gateway = config.gateway_for(&model_ref)?;
            let system = config.system_prompt()?;
            let gen = ctx.gen_params();
            let outcome = pcp::run_grid(
                &gateway,
                &model_ref.model_id,
                &grid,
                gen.temperature,
                gen.max_tokens,
                system.as_deref(),
            );
            let ex_path = out
                .clone()
                .unwrap_or_else(|| ctx.artifacts().join(format!("pcp/exchanges_{}.jsonl", sanitize(&model_ref.model_id))));
            let dir = ex_path.parent().map(Path::to_path_buf).unwrap_or_default();
            let orphan_path = dir.join(format!("orphans_{}.jsonl", sanitize(&model_ref.model_id)));
            let failure_path = dir.join(format!("failures_{}.jsonl", sanitize(&model_ref.model_id)));
            write_jsonl(&ex_path, &outcome.exchanges)?;
            write_jsonl(&orphan_path, &outcome.orphans)?;
            write_jsonl(&failure_path, &outcome.failures)?;
            println!(
                "{} exchanges, {} orphaned sides, {} failures -> {}",
                outcome.exchanges.len(),
                outcome.orphans.len(),
                outcome.failures.len(),
                ex_path.display()
            );
            ctx.record("pcp-run", &[&queries_path], &[&ex_path, &orphan_path, &failure_path]);
            Ok(())
        }
        PcpCmd::Aggregate {
            model,
            judge,
            exchanges,
            orphans,
            out,
        } => {
            let config = ctx.config()?;
            let model_ref = config.resolve_model(model)?;
            let sanitized = sanitize(&model_ref.model_id);
            let ex_path = ctx.require_file(
                exchanges.as_deref(),
                ctx.artifacts().join(format!("pcp/exchanges_{sanitized}.jsonl")),
            )?;
            let exchange_list: Vec<PairedExchange> = read_jsonl(&ex_path)?;
            let orphan_path = orphans
                .clone()
                .unwrap_or_else(|| ctx.artifacts().join(format!("pcp/orphans_{sanitized}.jsonl")));
            let orphan_list: Vec<pcp::OrphanResponse> = if orphan_path.exists() {
                read_jsonl(&orphan_path)?
            } else {
                Vec::new()
            };
            let planned = exchange_list.len() + exchange_list.len() * 2 + orphan_list.len();
            if ctx.plan(planned, true) {
                return Ok(());
            }
            let judge_ref = config.require_judge(judge.as_deref())?;
            let gateway = config.gateway_for(&judge_ref)?;
            let assets = ctx.assets()?;
            let runner = ctx.judge_runner(&gateway, &assets, &judge_ref);
            let scored = pcp::score_exchanges(&runner, &exchange_list, &orphan_list)?;
            let report = pcp::aggregate_records(&scored.sentiment, &scored.helpfulness).map_err(PcpError::Metrics)?;

            let dir = ctx.artifacts();
            let judge_s = sanitize(&judge_ref.model_id);
            let sent_path = dir.join(format!("pcp/sentiment_verdicts_{sanitized}__{judge_s}.jsonl"));
            let help_path = dir.join(format!("pcp/helpfulness_verdicts_{sanitized}__{judge_s}.jsonl"));
            let unscored_path = dir.join(format!("pcp/unscored_{sanitized}__{judge_s}.jsonl"));
            write_jsonl(&sent_path, &scored.sentiment)?;
            write_jsonl(&help_path, &scored.helpfulness)?;
            write_jsonl(&unscored_path, &scored.unscored)?;
            let artifact = ConsistencyArtifact {
                model: model_ref.model_id.clone(),
                judge: judge_ref.model_id.clone(),
                report,
            };
            let report_path = out
                .clone()
                .unwrap_or_else(|| report::consistency_artifact_path(&dir, &model_ref.model_id, &judge_ref.model_id));
            write_json_pretty(&report_path, &artifact)?;
            println!(
                "SC {} | HC {} | Average {} ({} pairs, {} responses, {} unscored)",
                report::pct(artifact.report.sentiment_consistency_pct),
                report::pct(artifact.report.helpfulness_consistency_pct),
                report::pct(artifact.report.average_pct),
                artifact.report.sentiment_pairs,
                artifact.report.helpfulness_responses,
                scored.unscored.len()
            );
            ctx.record("pcp-aggregate", &[&ex_path], &[&sent_path, &help_path, &report_path]);
            Ok(())
        }
    }
}

// ─── data ───────────────────────────────────────────────────────────────────

fn run_data(ctx: &Ctx, cmd: &DataCmd) -> Result<(), CliError> {
    let data_dir = ctx.artifacts().join("data");
    match cmd {
        DataCmd::Ingest { source } => {
            let topics = pipeline::ingest_topics(source)?;
            println!("{} candidate topics from {}", topics.len(), source.display());
            if ctx.plan(0, true) {
                return Ok(());
            }
            let out = data_dir.join("candidate_topics.jsonl");
            write_jsonl(&out, &topics)?;
            ctx.record("data-ingest", &[source], &[&out]);
            Ok(())
        }
        DataCmd::Filter { topics, judge } => {
            let topics_path = ctx.require_file(topics.as_deref(), data_dir.join("candidate_topics.jsonl"))?;
            let candidates: Vec<pipeline::CandidateTopic> = read_jsonl(&topics_path)?;
            if ctx.plan(candidates.len(), true) {
                return Ok(());
            }
            let config = ctx.config()?;
            let judge_ref = config.require_judge(judge.as_deref())?;
            let gateway = config.gateway_for(&judge_ref)?;
            let assets = ctx.assets()?;
            let runner = ctx.judge_runner(&gateway, &assets, &judge_ref);
            let outcome = pipeline::filter_political(&candidates, &runner)?;
            let qualified_path = data_dir.join("qualified_topics.jsonl");
            let rejected_path = data_dir.join("rejected_topics.jsonl");
            write_jsonl(&qualified_path, &outcome.qualified)?;
            write_jsonl(&rejected_path, &outcome.rejected)?;
            println!("{} qualified, {} rejected", outcome.qualified.len(), outcome.rejected.len());
            ctx.record("data-filter", &[&topics_path], &[&qualified_path, &rejected_path]);
            Ok(())
        }
        DataCmd::GenQueries { topics, generator } => {
            let topics_path = ctx.require_file(topics.as_deref(), data_dir.join("qualified_topics.jsonl"))?;
            let qualified: Vec<pipeline::QualifiedTopic> = read_jsonl(&topics_path)?;
            if ctx.plan(qualified.len(), true) {
                return Ok(());
            }
            let config = ctx.config()?;
            let judge_ref = config.require_judge(generator.as_deref())?;
            let gateway = config.gateway_for(&judge_ref)?;
            let assets = ctx.assets()?;
            let runner = ctx.judge_runner(&gateway, &assets, &judge_ref);
            let sets = pipeline::generate_directive_queries(&qualified, &runner)?;
            let out = data_dir.join("directive_queries.jsonl");
            write_jsonl(&out, &sets)?;
            println!("{} directive query sets ({} variants)", sets.len(), sets.len() * 4);
            ctx.record("data-gen-queries", &[&topics_path], &[&out]);
            Ok(())
        }
        DataCmd::GenAnchors { topics, anchor_model } => {
            let topics_path = ctx.require_file(topics.as_deref(), data_dir.join("qualified_topics.jsonl"))?;
            let qualified: Vec<pipeline::QualifiedTopic> = read_jsonl(&topics_path)?;
            if ctx.plan(qualified.len() * 2, true) {
                return Ok(());
            }
            let config = ctx.config()?;
            let anchor_ref = match anchor_model {
                Some(spec) => config.resolve_model(spec)?,
                None => config
                    .anchor_model
                    .clone()
                    .ok_or_else(|| CliError::Usage("anchor generation needs --anchor-model or config.anchor_model".into()))?,
            };
            let gateway = config.gateway_for(&anchor_ref)?;
            let assets = ctx.assets()?;
            let names: Vec<&str> = qualified.iter().map(|t| t.name.as_str()).collect();
            let gen = ctx.gen_params();
            let pairs =
                pipeline::generate_anchor_pairs(&names, &gateway, &anchor_ref.model_id, &assets, gen.temperature, gen.max_tokens)?;
            let out = data_dir.join("anchors.jsonl");
            write_jsonl(&out, &pairs)?;
            println!("{} anchor pairs by {}", pairs.len(), anchor_ref.model_id);
            ctx.record("data-gen-anchors", &[&topics_path], &[&out]);
            Ok(())
        }
        DataCmd::Audit { anchors, judge } => {
            let anchors_path = ctx.require_file(anchors.as_deref(), data_dir.join("anchors.jsonl"))?;
            let pairs: Vec<pipeline::AnchorPair> = read_jsonl(&anchors_path)?;
            if ctx.plan(pairs.len(), true) {
                return Ok(());
            }
            let config = ctx.config()?;
            let judge_ref = config.require_judge(judge.as_deref())?;
            let gateway = config.gateway_for(&judge_ref)?;
            let assets = ctx.assets()?;
            let runner = ctx.judge_runner(&gateway, &assets, &judge_ref);
            let outcome = pipeline::audit_anchors(&pairs, &runner)?;
            let anchor_model = pairs.first().map(|p| p.anchor_model.clone()).unwrap_or_default();
            let csv_path = data_dir.join("anchor_audit.csv");
            let r = &outcome.report;
            let csv = format!(
                "anchor_model,counter_spin_left,counter_spin_right,indistinguishable,faint,moderate,strong,overt,usable,pairs\n{},{},{},{},{},{},{},{},{},{}\n",
                anchor_model,
                report::pct(r.counter_spin_left_pct),
                report::pct(r.counter_spin_right_pct),
                report::pct(r.distribution_pct[0]),
                report::pct(r.distribution_pct[1]),
                report::pct(r.distribution_pct[2]),
                report::pct(r.distribution_pct[3]),
                report::pct(r.distribution_pct[4]),
                report::pct(r.usable_pct),
                r.pairs
            );
            write_string(&csv_path, &csv)?;
            let json_path = data_dir.join("anchor_audit.json");
            write_json_pretty(&json_path, &outcome)?;
            println!(
                "usable {}% (moderate {}% + strong {}%), counter-spin L {}% R {}%",
                report::pct(r.usable_pct),
                report::pct(r.distribution_pct[2]),
                report::pct(r.distribution_pct[3]),
                report::pct(r.counter_spin_left_pct),
                report::pct(r.counter_spin_right_pct)
            );
            ctx.record("data-audit", &[&anchors_path], &[&csv_path, &json_path]);
            Ok(())
        }
        DataCmd::Assemble {
            queries,
            anchors,
            seed,
            target_helpfulness,
            target_sentiment,
        } => {
            let queries_path = ctx.require_file(queries.as_deref(), data_dir.join("directive_queries.jsonl"))?;
            let anchors_path = ctx.require_file(anchors.as_deref(), data_dir.join("anchors.jsonl"))?;
            let sets: Vec<pipeline::DirectiveQuerySet> = read_jsonl(&queries_path)?;
            let pairs: Vec<pipeline::AnchorPair> = read_jsonl(&anchors_path)?;
            let budgets = ctx.config.as_ref().map(|c| c.budgets).unwrap_or_default();
            let target_help = target_helpfulness.unwrap_or(budgets.target_helpfulness);
            let target_sent = target_sentiment.unwrap_or(budgets.target_sentiment);
            let seed = seed
                .or_else(|| ctx.config.as_ref().map(|c| c.seeds.assembly))
                .ok_or_else(|| CliError::Usage("assembly needs an explicit --seed (or config seeds.assembly)".into()))?;
            if ctx.plan(0, true) {
                return Ok(());
            }
            let examples = pipeline::assemble_training_set(&sets, &pairs, target_help, target_sent, seed)?;
            let out = data_dir.join("train.jsonl");
            write_jsonl(&out, &examples)?;
            let help = examples
                .iter()
                .filter(|e| e.branch == polcon_core::reward::Branch::Helpfulness)
                .count();
            println!(
                "{} training examples ({} helpfulness + {} sentiment), seed {}",
                examples.len(),
                help,
                examples.len() - help,
                seed
            );
            ctx.record("data-assemble", &[&queries_path, &anchors_path], &[&out]);
            Ok(())
        }
    }
}

// ─── reward ─────────────────────────────────────────────────────────────────

fn run_reward(ctx: &Ctx, args: &RewardArgs) -> Result<(), CliError> {
    let examples: Vec<TrainingExample> = read_jsonl(&args.examples)?;
    for e in &examples {
        e.validate()
            .map_err(|err| CliError::Usage(format!("example {} is invalid: {err}", e.id)))?;
    }
    let judged_here = args.verdicts.is_none();
    if ctx.plan(if judged_here { examples.len() } else { 0 }, true) {
        return Ok(());
    }
    let mut inputs: Vec<&Path> = vec![args.examples.as_path()];
    let verdicts: Vec<TrainVerdictRecord> = match (&args.verdicts, &args.responses) {
        (Some(verdicts_path), _) => {
            inputs.push(verdicts_path);
            read_jsonl(verdicts_path)?
        }
        (None, Some(responses_path)) => {
            inputs.push(responses_path);
            let responses: Vec<ResponseRecord> = read_jsonl(responses_path)?;
            let config = ctx.config()?;
            let judge_ref = config.require_judge(args.judge.as_deref())?;
            let gateway = config.gateway_for(&judge_ref)?;
            let assets = ctx.assets()?;
            let runner = ctx.judge_runner(&gateway, &assets, &judge_ref);
            let verdicts = rewards::judge_training_responses(&examples, &responses, &runner)?;
            let verdicts_out = ctx.artifacts().join("rewards/train_verdicts.jsonl");
            write_jsonl(&verdicts_out, &verdicts)?;
            verdicts
        }
        (None, None) => {
            return Err(CliError::Usage(
                "reward needs --verdicts, or --responses plus a judge".into(),
            ))
        }
    };
    let breakdowns = rewards::compute_rewards(&examples, &verdicts)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| ctx.artifacts().join("rewards/rewards.jsonl"));
    write_jsonl(&out, &breakdowns)?;
    let mean = breakdowns.iter().map(|b| b.reward).sum::<f64>() / breakdowns.len().max(1) as f64;
    println!("{} rewards (mean {:.3}) -> {}", breakdowns.len(), mean, out.display());
    ctx.record("reward", &inputs, &[&out]);
    Ok(())
}

// ─── ood ────────────────────────────────────────────────────────────────────

fn run_ood(ctx: &Ctx, cmd: &OodCmd) -> Result<(), CliError> {
    match cmd {
        OodCmd::EvenHanded { model, judge, dataset } => {
            let dataset_path = dataset
                .clone()
                .or_else(|| ctx.config.as_ref().and_then(|c| c.datasets.even_handed.clone()))
                .ok_or_else(|| CliError::Usage("even-handed needs --dataset (the paired-request file is ingested, not bundled)".into()))?;
            let pairs = ood::load_even_handed(&dataset_path)?;
            if ctx.plan(pairs.len() * 3, true) {
                return Ok(());
            }
            let config = ctx.config()?;
            let model_ref = config.resolve_model(model)?;
            let judge_ref = config.require_judge(judge.as_deref())?;
            let model_gateway = config.gateway_for(&model_ref)?;
            let judge_gateway = config.gateway_for(&judge_ref)?;
            let assets = ctx.assets()?;
            let runner = ctx.judge_runner(&judge_gateway, &assets, &judge_ref);
            let system = config.system_prompt()?;
            let outcome = ood::run_even_handed(
                &pairs,
                &model_gateway,
                &model_ref.model_id,
                ctx.gen_params(),
                system.as_deref(),
                &runner,
            )?;
            println!(
                "even-handedness {}% | refusals {}% | opposing perspectives {}% ({} pairs, {} excluded)",
                report::pct(outcome.report.even_handedness_pct),
                report::pct(outcome.report.refusals_pct),
                report::pct(outcome.report.opposing_perspectives_pct),
                outcome.report.pairs,
                outcome.excluded.len()
            );
            let artifact = EvenHandedArtifact {
                model: model_ref.model_id.clone(),
                judge: judge_ref.model_id.clone(),
                outcome,
            };
            let out = report::even_handed_artifact_path(&ctx.artifacts(), &model_ref.model_id, &judge_ref.model_id);
            write_json_pretty(&out, &artifact)?;
            ctx.record("ood-even-handed", &[&dataset_path], &[&out]);
            Ok(())
        }
        OodCmd::Exchange {
            model,
            manifest,
            budget,
            seed,
        } => {
            let manifest_path = manifest
                .clone()
                .or_else(|| ctx.config.as_ref().and_then(|c| c.datasets.exchange_manifest.clone()));
            let loaded = ood::load_exchange_manifest(manifest_path.as_deref())?;
            let budgets = ctx.config.as_ref().map(|c| c.budgets).unwrap_or_default();
            let budget = budget.unwrap_or(budgets.exchange_budget);
            if ctx.plan(budget * loaded.categories.len(), false) {
                return Ok(());
            }
            let config = ctx.config()?;
            let model_ref = config.resolve_model(model)?;
            let gateway = config.gateway_for(&model_ref)?;
            let seed = seed.unwrap_or(config.seeds.elicitation);
            let mut outcomes = Vec::new();
            let mut failed_categories = Vec::new();
            for category in &loaded.categories {
                let result = ood::run_exchange_category(
                    &gateway,
                    &model_ref.model_id,
                    ctx.gen_params(),
                    &loaded,
                    category,
                    budget,
                    seed ^ stable_seed(&category.category),
                    budgets.round_size,
                );
                match result {
                    Ok(outcome) => {
                        println!(
                            "{}: l1 {:.2}, sigma {:.2}, {} prompts, {} splits{}",
                            category.category,
                            outcome.summary.l1_anchor,
                            outcome.summary.sigma_log,
                            outcome.prompts_issued,
                            outcome.splits,
                            if outcome.excluded_by_refusals { " (excluded from reported results)" } else { "" }
                        );
                        outcomes.push(outcome);
                    }
                    Err(OodError::Rate(e)) => {
                        // A rate-table failure is a per-category outcome;
                        // the other categories still report.
                        println!("{}: unsolvable at this budget ({e})", category.category);
                        failed_categories.push((category.category.clone(), e.to_string()));
                    }
                    Err(other) => return Err(other.into()),
                }
            }
            let artifact = ExchangeArtifact {
                model: model_ref.model_id.clone(),
                outcomes,
                failed_categories,
            };
            let out = report::exchange_artifact_path(&ctx.artifacts(), &model_ref.model_id);
            write_json_pretty(&out, &artifact)?;
            ctx.record("ood-exchange", &[], &[&out]);
            Ok(())
        }
        OodCmd::PoliticalValues {
            model,
            reference,
            items,
            budget,
            seed,
        } => {
            let reference_path = reference
                .clone()
                .or_else(|| ctx.config.as_ref().and_then(|c| c.datasets.reference_matrix.clone()))
                .ok_or_else(|| {
                    CliError::Usage("political-values needs --reference (the politician utility matrix is ingested, not bundled)".into())
                })?;
            let items_path = items
                .clone()
                .or_else(|| ctx.config.as_ref().and_then(|c| c.datasets.policy_manifest.clone()));
            let policy_items = ood::load_policy_items(items_path.as_deref())?;
            let budgets = ctx.config.as_ref().map(|c| c.budgets).unwrap_or_default();
            let budget = budget.unwrap_or(budgets.policy_budget);
            if ctx.plan(budget, false) {
                return Ok(());
            }
            let reference_matrix = ood::load_reference_matrix(&reference_path)?;
            let config = ctx.config()?;
            let model_ref = config.resolve_model(model)?;
            let gateway = config.gateway_for(&model_ref)?;
            let seed = seed.unwrap_or(config.seeds.elicitation);
            let choices = ood::run_policy_preferences(
                &gateway,
                &model_ref.model_id,
                ctx.gen_params(),
                &policy_items,
                budget,
                seed,
                budgets.round_size,
            )?;
            let choices_path = ctx
                .artifacts()
                .join(format!("political_values/choices_{}.jsonl", sanitize(&model_ref.model_id)));
            write_jsonl(&choices_path, &choices.records)?;
            let outcome = ood::run_political_values(&choices, &reference_matrix, &model_ref.model_id, seed)?;
            let point = &outcome.projection.entity_points[0];
            println!(
                "{}: PC1 {:+.2}, PC2 {:+.2} ({} prompts, {} splits{})",
                model_ref.model_id,
                point.pc1,
                point.pc2,
                choices.prompts_issued,
                choices.splits,
                if outcome.excluded_by_refusals { ", excluded from reported results" } else { "" }
            );
            let artifact = PoliticalValuesArtifact {
                model: model_ref.model_id.clone(),
                outcome,
            };
            let out = report::political_values_artifact_path(&ctx.artifacts(), &model_ref.model_id);
            write_json_pretty(&out, &artifact)?;
            ctx.record("ood-political-values", &[&reference_path], &[&choices_path, &out]);
            Ok(())
        }
    }
}

// ─── report and rescore ─────────────────────────────────────────────────────

fn run_report(ctx: &Ctx, run: Option<&Path>) -> Result<(), CliError> {
    let run_dir = run.map(Path::to_path_buf).unwrap_or_else(|| ctx.out_base.clone());
    if ctx.plan(0, true) {
        return Ok(());
    }
    let written = report::render_report(&run_dir)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    ctx.record("report", &[&run_dir], &written.iter().map(|p| p.as_path()).collect::<Vec<_>>());
    Ok(())
}

fn run_rescore(ctx: &Ctx, judges: &str, exchange_files: &[PathBuf]) -> Result<(), CliError> {
    let mut files = exchange_files.to_vec();
    if files.is_empty() {
        let dir = ctx.artifacts().join("pcp");
        for rel in crate::artifacts::walk_files(&dir)? {
            let name = rel.to_string_lossy();
            if name.starts_with("exchanges_") && name.ends_with(".jsonl") {
                files.push(dir.join(rel));
            }
        }
    }
    if files.is_empty() {
        return Err(CliError::MissingArtifact(ctx.artifacts().join("pcp/exchanges_*.jsonl")));
    }
    let mut by_model: BTreeMap<String, (Vec<PairedExchange>, Vec<pcp::OrphanResponse>)> = BTreeMap::new();
    for file in &files {
        let exchanges: Vec<PairedExchange> = read_jsonl(file)?;
        for exchange in exchanges {
            by_model.entry(exchange.model_id.clone()).or_default().0.push(exchange);
        }
    }
    let planned: usize = by_model.values().map(|(e, o)| e.len() * 3 + o.len()).sum::<usize>()
        * judges.split(',').filter(|s| !s.trim().is_empty()).count();
    if ctx.plan(planned, true) {
        return Ok(());
    }
    let config = ctx.config()?;
    let assets = ctx.assets()?;
    let mut gateways = Vec::new();
    let mut judge_refs = Vec::new();
    for spec in judges.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let judge_ref = config.resolve_model(spec)?;
        gateways.push(config.gateway_for(&judge_ref)?);
        judge_refs.push(judge_ref);
    }
    let runners: Vec<JudgeRunner> = judge_refs
        .iter()
        .zip(&gateways)
        .map(|(judge_ref, gateway)| ctx.judge_runner(gateway, &assets, judge_ref))
        .collect();
    let outcome = pcp::rescore_multi_judge(&runners, &by_model)?;
    for pair in &outcome.concordance {
        println!(
            "rank concordance {} vs {}: {:.3}",
            pair.judge_a, pair.judge_b, pair.concordance
        );
    }
    for (judge, reports) in &outcome.reports {
        for (model, report) in reports {
            println!(
                "[{judge}] {model}: SC {} HC {} Avg {}",
                report::pct(report.sentiment_consistency_pct),
                report::pct(report.helpfulness_consistency_pct),
                report::pct(report.average_pct)
            );
        }
    }
    let out = ctx.artifacts().join("rescore/rescore.json");
    write_json_pretty(&out, &outcome)?;
    // Also refresh per-judge consistency artifacts so `report` can fold
    // rescored numbers into the leaderboard.
    for (judge, reports) in &outcome.reports {
        for (model, consistency) in reports {
            let artifact = ConsistencyArtifact {
                model: model.clone(),
                judge: judge.clone(),
                report: consistency.clone(),
            };
            let path = report::consistency_artifact_path(&ctx.artifacts(), model, judge);
            write_json_pretty(&path, &artifact)?;
        }
    }
    ctx.record("rescore", &files.iter().map(|p| p.as_path()).collect::<Vec<_>>(), &[&out]);
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn stable_seed(text: &str) -> u64 {
    let mut h = 1469598103934665603u64;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

/// Leaderboard check used by tests: rounding stays half-up after the
/// report pipeline.
pub fn rounded_average(sc: f64, hc: f64) -> f64 {
    round_half_up_1dp((sc + hc) / 2.0)
}
