//! The three out-of-distribution evaluations: even-handedness over an
//! ingested paired-request dataset, exchange-rate egalitarianism over
//! quantity-utility tradeoffs, and the Political Values projection of
//! revealed policy preferences.

use crate::artifacts::ArtifactError;
use crate::assets::{self, fill_slots, PromptAssets};
use crate::gateway::{ChatRequest, Gateway};
use crate::judges::{batch_with_reprompt, JudgeError, JudgeRunner};
use polcon_core::metrics::{EvenHandedReport, MetricsError};
use polcon_core::pca::{project_ideology, IdeologyProjection, PcaError, ReferenceEntity};
use polcon_core::rates::{exchange_rates, summarize_rates, ExchangeRateTable, ItemCurve, QuantityUtility, RateError, RateOptions, RateSummary};
use polcon_core::thurstonian::{fit_thurstonian, select_next_pairs, ChoiceOutcome, ChoiceRecord, FitError, FitOptions, UtilityModel};
use polcon_core::verdict::{EvenHandedVerdict, PolicyAnswer};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum OodError {
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Generation settings for the evaluated model.
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

fn model_request(model_id: &str, prompt: &str, gen: GenParams, system_prompt: Option<&str>) -> ChatRequest {
    let mut request = ChatRequest::new(model_id, prompt)
        .with_temperature(gen.temperature)
        .with_max_tokens(gen.max_tokens);
    if let Some(system) = system_prompt {
        request = request.with_system(system);
    }
    request
}

// ─── Even-handedness ────────────────────────────────────────────────────────

/// One ingested dispute: task requests from the two opposing sides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvenHandedPair {
    pub dispute_id: String,
    pub request_left: String,
    pub request_right: String,
}

pub fn load_even_handed(path: &Path) -> Result<Vec<EvenHandedPair>, OodError> {
    let pairs: Vec<EvenHandedPair> = crate::artifacts::read_jsonl(path)?;
    for p in &pairs {
        if p.request_left.is_empty() || p.request_right.is_empty() {
            return Err(OodError::Manifest(format!("dispute {} has an empty request", p.dispute_id)));
        }
    }
    Ok(pairs)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvenHandedOutcome {
    pub report: EvenHandedReport,
    pub verdicts: Vec<(String, EvenHandedVerdict)>,
    /// Pairs excluded by model-call or judge failures, with reasons.
    pub excluded: Vec<(String, String)>,
}

/// Complete both sides of every dispute, judge each pair, and aggregate.
pub fn run_even_handed(
    dataset: &[EvenHandedPair],
    model_gateway: &Gateway,
    model_id: &str,
    gen: GenParams,
    system_prompt: Option<&str>,
    judge: &JudgeRunner,
) -> Result<EvenHandedOutcome, OodError> {
    let mut requests = Vec::with_capacity(dataset.len() * 2);
    for pair in dataset {
        requests.push(model_request(model_id, &pair.request_left, gen, system_prompt));
        requests.push(model_request(model_id, &pair.request_right, gen, system_prompt));
    }
    let mut responses = model_gateway.complete_batch(&requests).into_iter();

    let mut judged_pairs = Vec::new();
    let mut excluded = Vec::new();
    for pair in dataset {
        let left = responses.next().expect("two per dispute");
        let right = responses.next().expect("two per dispute");
        match (left, right) {
            (Ok(l), Ok(r)) => judged_pairs.push((pair, l.text, r.text)),
            (Err(e), _) | (_, Err(e)) => excluded.push((pair.dispute_id.clone(), format!("model call failed: {e}"))),
        }
    }

    let mut judge_requests = Vec::with_capacity(judged_pairs.len());
    let mut swaps = Vec::with_capacity(judged_pairs.len());
    for (i, (pair, left_text, right_text)) in judged_pairs.iter().enumerate() {
        let (request, swapped) =
            judge.build_even_handed(&pair.request_left, left_text, &pair.request_right, right_text, i as u64)?;
        judge_requests.push(request);
        swaps.push(swapped);
    }
    let results = batch_with_reprompt(judge.gateway, &judge_requests, |_, text| EvenHandedVerdict::parse(text));

    let mut verdicts = Vec::new();
    for (((pair, _, _), result), swapped) in judged_pairs.iter().zip(results).zip(swaps) {
        match result {
            Ok(v) => verdicts.push((pair.dispute_id.clone(), if swapped { v.unswap() } else { v })),
            Err(e) => excluded.push((pair.dispute_id.clone(), format!("judge failed: {e}"))),
        }
    }
    let report = EvenHandedReport::from_verdicts(&verdicts.iter().map(|(_, v)| *v).collect::<Vec<_>>())?;
    Ok(EvenHandedOutcome {
        report,
        verdicts,
        excluded,
    })
}

// ─── Pairwise preference elicitation (shared machinery) ─────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElicitOutcome {
    pub records: Vec<ChoiceRecord>,
    pub splits: usize,
    pub prompts_issued: usize,
    /// Transport failures: question asked, no usable answer recorded.
    pub errors: Vec<String>,
}

impl ElicitOutcome {
    /// Models that mostly refuse are flagged and excluded from reported
    /// results rather than silently averaged in.
    pub fn refusal_dominated(&self) -> bool {
        !self.records.is_empty() && self.splits * 2 > self.records.len()
    }
}

/// Active-learning loop over pairwise A/B prompts: a seeded ring pass
/// connects the comparison graph, then each round refits utilities and
/// asks the `round_size` smallest-gap unasked pairs until the budget is
/// spent. Refusals and unparseable answers become split outcomes.
#[allow(clippy::too_many_arguments)]
fn elicit_pairwise(
    gateway: &Gateway,
    model_id: &str,
    gen: GenParams,
    system_prompt: Option<&str>,
    items: &[(String, String)],
    budget: usize,
    seed: u64,
    round_size: usize,
    assets: &PromptAssets,
    user_template: &str,
    slot_a: &str,
    slot_b: &str,
) -> Result<ElicitOutcome, OodError> {
    let mut outcome = ElicitOutcome {
        records: Vec::new(),
        splits: 0,
        prompts_issued: 0,
        errors: Vec::new(),
    };
    if budget == 0 || items.len() < 2 {
        return Ok(outcome);
    }
    let system = assets.get("ab_choice_system.txt").map_err(JudgeError::Asset)?.trim().to_string();
    let template = assets.get(user_template).map_err(JudgeError::Asset)?;
    let text_of = |id: &str| -> &str {
        items
            .iter()
            .find(|(item_id, _)| item_id == id)
            .map(|(_, text)| text.as_str())
            .expect("selected pairs come from the item set")
    };

    let mut asked: BTreeSet<(String, String)> = BTreeSet::new();
    // The xml-only instruction is the choice protocol's own system
    // prompt; an injected ablation prompt applies to open generation,
    // not to this fixed-format elicitation.
    let ask_batch = |pairs: &[(String, String)],
                     asked: &mut BTreeSet<(String, String)>,
                     outcome: &mut ElicitOutcome| {
        let requests: Vec<ChatRequest> = pairs
            .iter()
            .map(|(a, b)| {
                let user = fill_slots(template, &[(slot_a, text_of(a)), (slot_b, text_of(b))]);
                model_request(model_id, &user, gen, system_prompt).with_system(&system)
            })
            .collect();
        let responses = gateway.complete_batch(&requests);
        for ((a, b), response) in pairs.iter().zip(responses) {
            outcome.prompts_issued += 1;
            asked.insert((a.clone(), b.clone()));
            match response {
                Err(e) => outcome.errors.push(format!("{a} vs {b}: {e}")),
                Ok(r) => {
                    let choice = match PolicyAnswer::parse(&r.text) {
                        Some(PolicyAnswer::A) => ChoiceOutcome::A,
                        Some(PolicyAnswer::B) => ChoiceOutcome::B,
                        None => {
                            outcome.splits += 1;
                            ChoiceOutcome::Split
                        }
                    };
                    outcome
                        .records
                        .push(ChoiceRecord::new(a, b, choice).expect("ids are distinct"));
                }
            }
        }
    };

    // Ring pass over a seeded shuffle: n edges connecting every item.
    let mut order: Vec<&str> = items.iter().map(|(id, _)| id.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut ring: Vec<(String, String)> = Vec::new();
    for i in 0..order.len() {
        let a = order[i];
        let b = order[(i + 1) % order.len()];
        if a == b {
            continue;
        }
        let pair = polcon_core::thurstonian::normalized_pair(a, b);
        if !ring.contains(&pair) && ring.len() < budget {
            ring.push(pair);
        }
    }
    ask_batch(&ring, &mut asked, &mut outcome);

    let fit_options = FitOptions {
        seed,
        ..FitOptions::default()
    };
    while outcome.prompts_issued < budget {
        if outcome.records.is_empty() {
            break;
        }
        let model = fit_thurstonian(&outcome.records, &fit_options)?;
        let want = round_size.min(budget - outcome.prompts_issued);
        let next = select_next_pairs(&model, want, &asked);
        if next.is_empty() {
            break;
        }
        ask_batch(&next, &mut asked, &mut outcome);
    }
    Ok(outcome)
}

// ─── Political Values ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyItem {
    pub policy_id: String,
    pub category: String,
    pub text: String,
}

/// The 18 policy categories of the shipped manifest.
pub const POLICY_CATEGORIES: [&str; 18] = [
    "agriculture",
    "civil_liberties",
    "criminal_justice",
    "defense",
    "education",
    "elections",
    "energy",
    "environment",
    "foreign_policy",
    "healthcare",
    "housing",
    "immigration",
    "labor",
    "taxation",
    "technology",
    "trade",
    "transportation",
    "welfare",
];

pub fn load_policy_items_csv(body: &str) -> Result<Vec<PolicyItem>, OodError> {
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let mut out = Vec::new();
    for record in reader.deserialize::<PolicyItem>() {
        let item = record.map_err(|e| OodError::Manifest(format!("policy manifest: {e}")))?;
        if !POLICY_CATEGORIES.contains(&item.category.as_str()) {
            return Err(OodError::Manifest(format!(
                "policy {} has unknown category `{}`",
                item.policy_id, item.category
            )));
        }
        out.push(item);
    }
    Ok(out)
}

pub fn load_policy_items(path: Option<&Path>) -> Result<Vec<PolicyItem>, OodError> {
    match path {
        Some(p) => {
            let body =
                std::fs::read_to_string(p).map_err(|e| OodError::Manifest(format!("{}: {e}", p.display())))?;
            load_policy_items_csv(&body)
        }
        None => load_policy_items_csv(assets::POLICY_ITEMS_CSV),
    }
}

/// Elicit pairwise policy choices with the fixed A/B prompt.
pub fn run_policy_preferences(
    gateway: &Gateway,
    model_id: &str,
    gen: GenParams,
    items: &[PolicyItem],
    budget: usize,
    seed: u64,
    round_size: usize,
) -> Result<ElicitOutcome, OodError> {
    let assets = PromptAssets::builtin();
    let pairs: Vec<(String, String)> = items.iter().map(|i| (i.policy_id.clone(), i.text.clone())).collect();
    elicit_pairwise(
        gateway,
        model_id,
        gen,
        None,
        &pairs,
        budget,
        seed,
        round_size,
        &assets,
        "policy_choice_user.txt",
        "policy_a",
        "policy_b",
    )
}

/// Reference politicians with their policy-utility vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMatrix {
    pub policy_ids: Vec<String>,
    pub entities: Vec<ReferenceEntity>,
}

/// CSV layout: `name,group,<policy_id>,<policy_id>,...` with group one of
/// dem / rep / other; the dem subset pins the PC1 orientation.
pub fn load_reference_matrix(path: &Path) -> Result<ReferenceMatrix, OodError> {
    let body = std::fs::read_to_string(path).map_err(|e| OodError::Manifest(format!("{}: {e}", path.display())))?;
    parse_reference_matrix(&body)
}

pub fn parse_reference_matrix(body: &str) -> Result<ReferenceMatrix, OodError> {
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| OodError::Manifest(format!("reference matrix: {e}")))?
        .clone();
    if headers.len() < 4 || headers.get(0) != Some("name") || headers.get(1) != Some("group") {
        return Err(OodError::Manifest(
            "reference matrix must start with name,group columns followed by policy ids".to_string(),
        ));
    }
    let policy_ids: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut entities = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| OodError::Manifest(format!("reference matrix: {e}")))?;
        let name = record.get(0).unwrap_or_default().to_string();
        let group = record.get(1).unwrap_or_default().to_ascii_lowercase();
        let utilities: Vec<f64> = record
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| OodError::Manifest(format!("reference row {name}: {e}")))?;
        entities.push(ReferenceEntity {
            name,
            democrat_aligned: group == "dem",
            utilities,
        });
    }
    Ok(ReferenceMatrix { policy_ids, entities })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PoliticalValuesOutcome {
    pub projection: IdeologyProjection,
    /// Fraction of elicited choices that were splits.
    pub split_fraction: f64,
    /// Mirrors the refusal-exclusion rule for reported results.
    pub excluded_by_refusals: bool,
    pub policies_estimated: usize,
}

/// Fit utilities from the elicited choices and project the model into
/// the fixed politician axes without refitting.
pub fn run_political_values(
    choices: &ElicitOutcome,
    reference: &ReferenceMatrix,
    entity_name: &str,
    seed: u64,
) -> Result<PoliticalValuesOutcome, OodError> {
    let fit = fit_thurstonian(
        &choices.records,
        &FitOptions {
            seed,
            ..FitOptions::default()
        },
    )?;
    let vector = utility_vector(&fit, &reference.policy_ids);
    let policies_estimated = reference.policy_ids.iter().filter(|id| fit.mu(id).is_some()).count();
    let projection = project_ideology(&reference.entities, &[(entity_name.to_string(), vector)])?;
    let split_fraction = if choices.records.is_empty() {
        0.0
    } else {
        choices.splits as f64 / choices.records.len() as f64
    };
    Ok(PoliticalValuesOutcome {
        projection,
        split_fraction,
        excluded_by_refusals: choices.refusal_dominated(),
        policies_estimated,
    })
}

/// Align fitted utilities to the reference policy columns; policies the
/// budget never reached sit at the gauge mean (zero).
pub fn utility_vector(fit: &UtilityModel, policy_ids: &[String]) -> Vec<f64> {
    policy_ids.iter().map(|id| fit.mu(id).unwrap_or(0.0)).collect()
}

// ─── Exchange rates ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeEntity {
    pub id: String,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeCategory {
    pub category: String,
    pub anchor: String,
    pub outcome_template: String,
    pub entities: Vec<ExchangeEntity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeManifest {
    pub quantities: Vec<f64>,
    pub anchor_quantity: f64,
    pub categories: Vec<ExchangeCategory>,
}

pub fn load_exchange_manifest(path: Option<&Path>) -> Result<ExchangeManifest, OodError> {
    let body = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| OodError::Manifest(format!("{}: {e}", p.display())))?,
        None => assets::EXCHANGE_CATEGORIES_JSON.to_string(),
    };
    let manifest: ExchangeManifest =
        serde_json::from_str(&body).map_err(|e| OodError::Manifest(format!("exchange manifest: {e}")))?;
    for category in &manifest.categories {
        if !category.entities.iter().any(|e| e.id == category.anchor) {
            return Err(OodError::Manifest(format!(
                "category {} anchor `{}` is not among its entities",
                category.category, category.anchor
            )));
        }
    }
    if manifest.quantities.len() < 2 {
        return Err(OodError::Manifest("need at least two quantity levels".to_string()));
    }
    Ok(manifest)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExchangeCategoryOutcome {
    pub table: ExchangeRateTable,
    pub summary: RateSummary,
    pub splits: usize,
    pub prompts_issued: usize,
    pub excluded_by_refusals: bool,
    /// Entities that never produced a usable curve.
    pub dropped_entities: Vec<(String, String)>,
}

fn outcome_item_id(entity: &str, quantity: f64) -> String {
    format!("{entity}@{quantity}")
}

/// Elicit tradeoffs over (entity, quantity) outcomes for one category,
/// fit utilities, and solve exchange rates against the anchor.
#[allow(clippy::too_many_arguments)]
pub fn run_exchange_category(
    gateway: &Gateway,
    model_id: &str,
    gen: GenParams,
    manifest: &ExchangeManifest,
    category: &ExchangeCategory,
    budget: usize,
    seed: u64,
    round_size: usize,
) -> Result<ExchangeCategoryOutcome, OodError> {
    let assets = PromptAssets::builtin();
    let mut items = Vec::new();
    for entity in &category.entities {
        for &quantity in &manifest.quantities {
            let text = category
                .outcome_template
                .replace("{count}", &format_quantity(quantity))
                .replace("{entity}", &entity.phrase);
            items.push((outcome_item_id(&entity.id, quantity), text));
        }
    }
    let elicited = elicit_pairwise(
        gateway,
        model_id,
        gen,
        None,
        &items,
        budget,
        seed,
        round_size,
        &assets,
        "exchange_choice_user.txt",
        "option_a",
        "option_b",
    )?;
    let fit = fit_thurstonian(
        &elicited.records,
        &FitOptions {
            seed,
            ..FitOptions::default()
        },
    )?;

    let mut curves = Vec::new();
    let mut dropped = Vec::new();
    for entity in &category.entities {
        let points: Vec<QuantityUtility> = manifest
            .quantities
            .iter()
            .filter_map(|&q| {
                fit.mu(&outcome_item_id(&entity.id, q))
                    .map(|mu| QuantityUtility { quantity: q, mu })
            })
            .collect();
        if points.len() < 2 {
            dropped.push((entity.id.clone(), "fewer than two estimated quantity levels".to_string()));
            continue;
        }
        curves.push(ItemCurve {
            item: entity.id.clone(),
            points,
        });
    }
    let table = exchange_rates(
        &category.category,
        &curves,
        &category.anchor,
        manifest.anchor_quantity,
        &RateOptions::default(),
    )?;
    for (item, reason) in &table.excluded {
        dropped.push((item.clone(), format!("{reason:?}")));
    }
    let summary = summarize_rates(&table);
    Ok(ExchangeCategoryOutcome {
        table,
        summary,
        splits: elicited.splits,
        prompts_issued: elicited.prompts_issued,
        excluded_by_refusals: elicited.refusal_dominated(),
        dropped_entities: dropped,
    })
}

fn format_quantity(q: f64) -> String {
    if q.fract() == 0.0 {
        format!("{}", q as i64)
    } else {
        format!("{q}")
    }
}
