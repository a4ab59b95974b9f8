//! The paired-prompt consistency benchmark: load the topic pairs, run the
//! expanded grid against an evaluated model, score exchanges with the two
//! evaluation judges, and aggregate into a consistency report.

use crate::artifacts::ArtifactError;
use crate::assets;
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::judges::{batch_with_reprompt, JudgeError, JudgeRunner};
use polcon_core::grid::{GridError, PairedExchange, PairedQuery, PromptTemplate, TopicPair, Valence};
use polcon_core::metrics::{aggregate, rank_concordance, ConsistencyReport, MetricsError};
use polcon_core::verdict::{HelpfulnessLabel, HelpfulnessVerdict, SentimentLabel, SentimentPairVerdict};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PcpError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("pairs file: {0}")]
    PairsFile(String),
    #[error("templates: {0}")]
    Templates(String),
}

/// Load topic pairs from a `left_entity,right_entity` CSV.
pub fn load_pairs_csv(body: &str) -> Result<Vec<TopicPair>, PcpError> {
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let headers = reader.headers().map_err(|e| PcpError::PairsFile(e.to_string()))?.clone();
    let left_idx = headers.iter().position(|h| h == "left_entity");
    let right_idx = headers.iter().position(|h| h == "right_entity");
    let (Some(left_idx), Some(right_idx)) = (left_idx, right_idx) else {
        return Err(PcpError::PairsFile("missing left_entity/right_entity columns".into()));
    };
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| PcpError::PairsFile(e.to_string()))?;
        let left = record.get(left_idx).unwrap_or_default();
        let right = record.get(right_idx).unwrap_or_default();
        pairs.push(TopicPair::new(left, right).map_err(|e| PcpError::PairsFile(e.to_string()))?);
    }
    Ok(pairs)
}

pub fn load_pairs(path: Option<&Path>) -> Result<Vec<TopicPair>, PcpError> {
    match path {
        Some(p) => {
            let body = std::fs::read_to_string(p).map_err(|e| PcpError::PairsFile(format!("{}: {e}", p.display())))?;
            load_pairs_csv(&body)
        }
        None => load_pairs_csv(assets::PCP_PAIRS_CSV),
    }
}

/// Resolve `--templates`: a comma list of builtin ids, or a file of
/// `id = pattern` lines. Empty means all five builtin templates.
pub fn resolve_templates(spec: Option<&str>) -> Result<Vec<PromptTemplate>, PcpError> {
    let builtin = polcon_core::grid::builtin_templates();
    let Some(spec) = spec else {
        return Ok(builtin);
    };
    let path = Path::new(spec);
    if path.exists() {
        let body = std::fs::read_to_string(path).map_err(|e| PcpError::Templates(format!("{spec}: {e}")))?;
        let mut out = Vec::new();
        for line in body.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#')) {
            let (id, pattern) = line
                .split_once('=')
                .ok_or_else(|| PcpError::Templates(format!("expected `id = pattern`, got `{line}`")))?;
            out.push(
                PromptTemplate::new(id.trim(), pattern.trim()).map_err(|e| PcpError::Templates(e.to_string()))?,
            );
        }
        if out.is_empty() {
            return Err(PcpError::Templates(format!("{spec} defines no templates")));
        }
        return Ok(out);
    }
    let mut out = Vec::new();
    for id in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let template = builtin
            .iter()
            .find(|t| t.template_id == id)
            .ok_or_else(|| PcpError::Templates(format!("unknown template id `{id}`")))?;
        out.push(template.clone());
    }
    if out.is_empty() {
        return Err(PcpError::Templates("no template ids given".into()));
    }
    Ok(out)
}

/// Stable identifier for one grid cell of one evaluated model.
pub fn exchange_id(model_id: &str, query: &PairedQuery) -> String {
    let mut hasher = Sha256::new();
    for part in [model_id, &query.pair_id, &query.template_id, query.valence.as_str()] {
        hasher.update(part.as_bytes());
        hasher.update([0x1f]);
    }
    hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the judge request a verdict came from, for reproducible joins
/// against the gateway cache.
fn request_hash(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(request.model_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update(request.user_prompt.as_bytes());
    hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// A pair one of whose sides failed at the gateway; the surviving
/// response still counts toward helpfulness consistency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrphanResponse {
    pub query: PairedQuery,
    pub side: Side,
    pub response: String,
    pub model_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFailure {
    pub pair_id: String,
    pub template_id: String,
    pub valence: Valence,
    pub side: Side,
    pub error: String,
}

#[derive(Debug)]
pub struct GridRunOutcome {
    pub exchanges: Vec<PairedExchange>,
    pub orphans: Vec<OrphanResponse>,
    pub failures: Vec<GridFailure>,
}

/// Send both sides of every query (no system context unless the run
/// config injects one) and pair up the responses.
pub fn run_grid(
    gateway: &Gateway,
    model_id: &str,
    queries: &[PairedQuery],
    temperature: f64,
    max_tokens: u32,
    system_prompt: Option<&str>,
) -> GridRunOutcome {
    let mut requests = Vec::with_capacity(queries.len() * 2);
    for q in queries {
        for prompt in [&q.left_prompt, &q.right_prompt] {
            let mut request = ChatRequest::new(model_id, prompt)
                .with_temperature(temperature)
                .with_max_tokens(max_tokens);
            if let Some(system) = system_prompt {
                request = request.with_system(system);
            }
            requests.push(request);
        }
    }
    let mut responses = gateway.complete_batch(&requests).into_iter();
    let mut outcome = GridRunOutcome {
        exchanges: Vec::new(),
        orphans: Vec::new(),
        failures: Vec::new(),
    };
    for q in queries {
        let left = responses.next().expect("two responses per query");
        let right = responses.next().expect("two responses per query");
        let fail = |side: Side, e: &GatewayError, out: &mut GridRunOutcome| {
            out.failures.push(GridFailure {
                pair_id: q.pair_id.clone(),
                template_id: q.template_id.clone(),
                valence: q.valence,
                side,
                error: e.to_string(),
            });
        };
        match (left, right) {
            (Ok(l), Ok(r)) => outcome.exchanges.push(PairedExchange {
                query: q.clone(),
                left_response: l.text,
                right_response: r.text,
                model_id: model_id.to_string(),
            }),
            (Ok(l), Err(e)) => {
                fail(Side::Right, &e, &mut outcome);
                outcome.orphans.push(OrphanResponse {
                    query: q.clone(),
                    side: Side::Left,
                    response: l.text,
                    model_id: model_id.to_string(),
                });
            }
            (Err(e), Ok(r)) => {
                fail(Side::Left, &e, &mut outcome);
                outcome.orphans.push(OrphanResponse {
                    query: q.clone(),
                    side: Side::Right,
                    response: r.text,
                    model_id: model_id.to_string(),
                });
            }
            (Err(el), Err(er)) => {
                fail(Side::Left, &el, &mut outcome);
                fail(Side::Right, &er, &mut outcome);
            }
        }
    }
    outcome
}

// ─── Verdict records ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentimentVerdictRecord {
    pub exchange_id: String,
    pub template_id: String,
    pub judge_model: String,
    pub label: SentimentLabel,
    pub rationale: String,
    pub presented_swapped: bool,
    pub request_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HelpfulnessVerdictRecord {
    pub exchange_id: String,
    pub side: Side,
    pub template_id: String,
    pub judge_model: String,
    pub label: HelpfulnessLabel,
    pub rationale: String,
    pub request_hash: String,
}

/// An exchange the judge could not score; excluded, never defaulted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnscoredRecord {
    pub exchange_id: String,
    pub judge_model: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct ScoredVerdicts {
    pub sentiment: Vec<SentimentVerdictRecord>,
    pub helpfulness: Vec<HelpfulnessVerdictRecord>,
    pub unscored: Vec<UnscoredRecord>,
}

/// Run both evaluation judges over a grid outcome: the sentiment judge
/// once per complete pair, the helpfulness judge once per response
/// (orphaned sides included).
pub fn score_exchanges(runner: &JudgeRunner, exchanges: &[PairedExchange], orphans: &[OrphanResponse]) -> Result<ScoredVerdicts, JudgeError> {
    let mut out = ScoredVerdicts::default();

    // Sentiment: one jointly scored request per pair.
    let mut sent_requests = Vec::with_capacity(exchanges.len());
    let mut sent_swaps = Vec::with_capacity(exchanges.len());
    for (i, exchange) in exchanges.iter().enumerate() {
        let (request, swapped) = runner.build_sentiment_pair(exchange, i as u64)?;
        sent_requests.push(request);
        sent_swaps.push(swapped);
    }
    let sent_hashes: Vec<String> = sent_requests.iter().map(request_hash).collect();
    let sent_results = batch_with_reprompt(runner.gateway, &sent_requests, |_, text| SentimentPairVerdict::parse(text));
    for (((exchange, result), swapped), hash) in exchanges.iter().zip(sent_results).zip(sent_swaps).zip(sent_hashes) {
        let id = exchange_id(&exchange.model_id, &exchange.query);
        match result {
            Ok(verdict) => out.sentiment.push(SentimentVerdictRecord {
                exchange_id: id,
                template_id: exchange.query.template_id.clone(),
                judge_model: runner.judge_model.clone(),
                label: verdict.label,
                rationale: verdict.rationale,
                presented_swapped: swapped,
                request_hash: hash,
            }),
            Err(e) => out.unscored.push(UnscoredRecord {
                exchange_id: id,
                judge_model: runner.judge_model.clone(),
                stage: "sentiment_pair".into(),
                error: e.to_string(),
            }),
        }
    }

    // Helpfulness: every individual response, including orphans.
    struct HelpItem<'a> {
        query: &'a PairedQuery,
        model_id: &'a str,
        side: Side,
        request_text: &'a str,
        response: &'a str,
    }
    let mut items = Vec::new();
    for exchange in exchanges {
        items.push(HelpItem {
            query: &exchange.query,
            model_id: &exchange.model_id,
            side: Side::Left,
            request_text: &exchange.query.left_prompt,
            response: &exchange.left_response,
        });
        items.push(HelpItem {
            query: &exchange.query,
            model_id: &exchange.model_id,
            side: Side::Right,
            request_text: &exchange.query.right_prompt,
            response: &exchange.right_response,
        });
    }
    for orphan in orphans {
        items.push(HelpItem {
            query: &orphan.query,
            model_id: &orphan.model_id,
            side: orphan.side,
            request_text: match orphan.side {
                Side::Left => &orphan.query.left_prompt,
                Side::Right => &orphan.query.right_prompt,
            },
            response: &orphan.response,
        });
    }
    let help_requests: Vec<ChatRequest> = items
        .iter()
        .map(|item| runner.build_helpfulness(item.request_text, item.response))
        .collect::<Result<_, _>>()?;
    let help_hashes: Vec<String> = help_requests.iter().map(request_hash).collect();
    let help_results = batch_with_reprompt(runner.gateway, &help_requests, |_, text| HelpfulnessVerdict::parse(text));
    for ((item, result), hash) in items.iter().zip(help_results).zip(help_hashes) {
        let id = exchange_id(item.model_id, item.query);
        match result {
            Ok(verdict) => out.helpfulness.push(HelpfulnessVerdictRecord {
                exchange_id: id,
                side: item.side,
                template_id: item.query.template_id.clone(),
                judge_model: runner.judge_model.clone(),
                label: verdict.label,
                rationale: verdict.rationale,
                request_hash: hash,
            }),
            Err(e) => out.unscored.push(UnscoredRecord {
                exchange_id: id,
                judge_model: runner.judge_model.clone(),
                stage: format!("helpfulness_{:?}", item.side).to_lowercase(),
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Aggregate persisted verdict records into the consistency report.
pub fn aggregate_records(
    sentiment: &[SentimentVerdictRecord],
    helpfulness: &[HelpfulnessVerdictRecord],
) -> Result<ConsistencyReport, MetricsError> {
    let sent: Vec<(String, SentimentLabel)> = sentiment.iter().map(|r| (r.template_id.clone(), r.label)).collect();
    let help: Vec<(String, HelpfulnessLabel)> = helpfulness.iter().map(|r| (r.template_id.clone(), r.label)).collect();
    aggregate(&sent, &help)
}

// ─── Multi-judge rescoring ──────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeConcordance {
    pub judge_a: String,
    pub judge_b: String,
    pub concordance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RescoreOutcome {
    /// judge model -> evaluated model -> report.
    pub reports: BTreeMap<String, BTreeMap<String, ConsistencyReport>>,
    /// Pairwise rank agreement between judges over the models' averages.
    pub concordance: Vec<JudgeConcordance>,
}

/// Re-score the same exchanges under several judges and summarize how
/// well the induced model rankings agree.
pub fn rescore_multi_judge(
    runners: &[JudgeRunner],
    exchanges_by_model: &BTreeMap<String, (Vec<PairedExchange>, Vec<OrphanResponse>)>,
) -> Result<RescoreOutcome, JudgeError> {
    let mut reports: BTreeMap<String, BTreeMap<String, ConsistencyReport>> = BTreeMap::new();
    for runner in runners {
        let mut per_model = BTreeMap::new();
        for (model, (exchanges, orphans)) in exchanges_by_model {
            let scored = score_exchanges(runner, exchanges, orphans)?;
            let report = aggregate_records(&scored.sentiment, &scored.helpfulness)
                .map_err(|e| JudgeError::InvalidInput(e.to_string()))?;
            per_model.insert(model.clone(), report);
        }
        reports.insert(runner.judge_model.clone(), per_model);
    }
    let judges: Vec<&String> = reports.keys().collect();
    let mut concordance = Vec::new();
    for i in 0..judges.len() {
        for j in (i + 1)..judges.len() {
            let ranking = |judge: &str| -> BTreeMap<String, f64> {
                reports[judge]
                    .iter()
                    .map(|(model, report)| (model.clone(), report.average_pct))
                    .collect()
            };
            concordance.push(JudgeConcordance {
                judge_a: judges[i].clone(),
                judge_b: judges[j].clone(),
                concordance: rank_concordance(&ranking(judges[i]), &ranking(judges[j])),
            });
        }
    }
    Ok(RescoreOutcome { reports, concordance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::PromptAssets;
    use crate::gateway::MockProvider;
    use polcon_core::grid::{builtin_templates, expand_grid};
    use std::sync::Arc;

    #[test]
    fn shipped_pairs_expand_to_the_full_grid() {
        let pairs = load_pairs(None).unwrap();
        assert_eq!(pairs.len(), 50);
        let grid = expand_grid(&pairs, &builtin_templates(), &Valence::ALL).unwrap();
        assert_eq!(grid.len(), 1000);
    }

    #[test]
    fn template_specs_resolve() {
        assert_eq!(resolve_templates(None).unwrap().len(), 5);
        let subset = resolve_templates(Some("tell_me,argue")).unwrap();
        assert_eq!(subset.len(), 2);
        assert!(resolve_templates(Some("nope")).is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("custom.templates");
        std::fs::write(&path, "mine = Describe how {valence} {entity} is.\n").unwrap();
        let custom = resolve_templates(Some(path.to_str().unwrap())).unwrap();
        assert_eq!(custom[0].template_id, "mine");
    }

    fn small_grid() -> Vec<PairedQuery> {
        let pairs = vec![
            TopicPair::new("Gun Control", "Second Amendment Rights").unwrap(),
            TopicPair::new("MSNBC", "Fox News").unwrap(),
        ];
        expand_grid(&pairs, &builtin_templates(), &Valence::ALL).unwrap()
    }

    #[test]
    fn run_grid_echo_pairs_up_responses() {
        let gw = Gateway::with_provider(Arc::new(MockProvider::echo()), 4, 0, None);
        let queries = small_grid();
        let outcome = run_grid(&gw, "m", &queries, 0.7, 512, None);
        assert_eq!(outcome.exchanges.len(), 40);
        assert!(outcome.failures.is_empty());
        for exchange in &outcome.exchanges {
            assert_eq!(exchange.left_response, exchange.query.left_prompt);
            assert_eq!(exchange.right_response, exchange.query.right_prompt);
        }
    }

    #[test]
    fn failed_side_is_logged_and_survivor_feeds_helpfulness() {
        // Script only some prompts; the rest fail at the provider.
        let queries = small_grid();
        let mut script = std::collections::BTreeMap::new();
        for q in &queries {
            script.insert(q.left_prompt.clone(), format!("response to {}", q.left_prompt));
            script.insert(q.right_prompt.clone(), format!("response to {}", q.right_prompt));
        }
        // Break one specific right side.
        script.remove(&queries[3].right_prompt);
        let gw = Gateway::with_provider(Arc::new(MockProvider::scripted(script)), 4, 0, None);
        let outcome = run_grid(&gw, "m", &queries, 0.7, 512, None);
        assert_eq!(outcome.exchanges.len(), 39);
        assert_eq!(outcome.orphans.len(), 1);
        assert_eq!(outcome.failures.len(), 1);
        assert_eq!(outcome.orphans[0].side, Side::Left);

        let judge_gw = Gateway::with_provider(Arc::new(MockProvider::judge_sim(1)), 4, 0, None);
        let assets = PromptAssets::builtin();
        let runner = JudgeRunner::new(&judge_gw, "judge", &assets, 5);
        let scored = score_exchanges(&runner, &outcome.exchanges, &outcome.orphans).unwrap();
        assert_eq!(scored.sentiment.len(), 39);
        assert_eq!(scored.helpfulness.len(), 39 * 2 + 1);
        assert!(scored.unscored.is_empty());
    }

    #[test]
    fn scoring_then_aggregating_yields_a_full_report() {
        let gw = Gateway::with_provider(Arc::new(MockProvider::model_sim(3, 0.0)), 8, 0, None);
        let queries = small_grid();
        let outcome = run_grid(&gw, "sim-model", &queries, 0.7, 512, None);
        let judge_gw = Gateway::with_provider(Arc::new(MockProvider::judge_sim(2)), 8, 0, None);
        let assets = PromptAssets::builtin();
        let runner = JudgeRunner::new(&judge_gw, "judge", &assets, 5);
        let scored = score_exchanges(&runner, &outcome.exchanges, &outcome.orphans).unwrap();
        let report = aggregate_records(&scored.sentiment, &scored.helpfulness).unwrap();
        assert_eq!(report.sentiment_pairs, 40);
        assert_eq!(report.helpfulness_responses, 80);
        assert_eq!(report.per_template.len(), 5);
        assert!((0.0..=100.0).contains(&report.average_pct));
    }

    #[test]
    fn rescore_single_judge_matches_direct_scoring_and_self_concordance() {
        let gw = Gateway::with_provider(Arc::new(MockProvider::model_sim(3, 0.0)), 8, 0, None);
        let queries = small_grid();
        let outcome = run_grid(&gw, "m1", &queries, 0.7, 512, None);
        let judge_gw = Gateway::with_provider(Arc::new(MockProvider::judge_sim(2)), 8, 0, None);
        let assets = PromptAssets::builtin();

        let mut by_model = BTreeMap::new();
        by_model.insert("m1".to_string(), (outcome.exchanges, outcome.orphans));

        let runners = vec![JudgeRunner::new(&judge_gw, "judge-a", &assets, 5)];
        let rescored = rescore_multi_judge(&runners, &by_model).unwrap();
        assert_eq!(rescored.reports.len(), 1);
        assert!(rescored.concordance.is_empty());

        let direct_runner = JudgeRunner::new(&judge_gw, "judge-a", &assets, 5);
        let scored = score_exchanges(&direct_runner, &by_model["m1"].0, &by_model["m1"].1).unwrap();
        let direct = aggregate_records(&scored.sentiment, &scored.helpfulness).unwrap();
        assert_eq!(rescored.reports["judge-a"]["m1"], direct);
    }

    #[test]
    fn identical_judges_agree_perfectly() {
        let gw = Gateway::with_provider(Arc::new(MockProvider::model_sim(3, 0.0)), 8, 0, None);
        let queries = small_grid();
        let o1 = run_grid(&gw, "m1", &queries, 0.7, 512, None);
        let o2 = run_grid(&gw, "m2", &queries, 0.6, 512, None);
        let judge_gw = Gateway::with_provider(Arc::new(MockProvider::judge_sim(2)), 8, 0, None);
        let assets = PromptAssets::builtin();
        let mut by_model = BTreeMap::new();
        by_model.insert("m1".to_string(), (o1.exchanges, o1.orphans));
        by_model.insert("m2".to_string(), (o2.exchanges, o2.orphans));
        // Two judge names backed by the same deterministic sim.
        let runners = vec![
            JudgeRunner::new(&judge_gw, "judge-a", &assets, 5),
            JudgeRunner::new(&judge_gw, "judge-b", &assets, 5),
        ];
        let rescored = rescore_multi_judge(&runners, &by_model).unwrap();
        assert_eq!(rescored.concordance.len(), 1);
        assert_eq!(rescored.concordance[0].concordance, 1.0);
    }

    #[test]
    fn exchange_ids_are_stable_and_distinct() {
        let queries = small_grid();
        let a = exchange_id("m", &queries[0]);
        let b = exchange_id("m", &queries[1]);
        let a2 = exchange_id("m", &queries[0]);
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_ne!(a, exchange_id("other", &queries[0]));
    }
}
