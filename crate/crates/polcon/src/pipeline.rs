//! Training-data pipeline: ingest candidate topics from an offline
//! snapshot or plain list, filter to politically two-sided topics with an
//! LLM classifier, generate four directive queries per topic, pre-generate
//! left/right anchor responses, audit anchor quality, and assemble the
//! shuffled training set.

use crate::artifacts::ArtifactError;
use crate::assets::{fill_slots, PromptAssets};
use crate::gateway::{ChatRequest, Gateway};
use crate::judges::{batch_with_reprompt, JudgeError, JudgeRunner};
use polcon_core::metrics::{AnchorAuditReport, MetricsError};
use polcon_core::reward::{SentimentPayload, TrainingExample};
use polcon_core::verdict::{extract_tag, AnchorAuditVerdict, ParseError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot parse topic source {path}: {message}")]
    MalformedSource { path: String, message: String },
    #[error("anchor model returned an empty {side} anchor for `{topic}`")]
    EmptyAnchor { topic: String, side: &'static str },
    #[error("insufficient data: need {needed} {kind} candidates, have {available}")]
    InsufficientData {
        kind: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("gateway: {0}")]
    Gateway(#[from] crate::gateway::GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTopic {
    pub name: String,
    pub source: String,
}

/// Read topics from an offline HTML snapshot (top-level bulleted entries)
/// or a newline-delimited text file. Duplicates are dropped
/// case-insensitively, first occurrence wins.
pub fn ingest_topics(path: &Path) -> Result<Vec<CandidateTopic>, PipelineError> {
    let body = std::fs::read_to_string(path).map_err(|e| PipelineError::MalformedSource {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let source = path.display().to_string();
    let names = if path.extension().map(|e| e == "html" || e == "htm").unwrap_or(false) {
        extract_top_level_entries(&body).map_err(|message| PipelineError::MalformedSource {
            path: source.clone(),
            message,
        })?
    } else {
        body.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    };
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for name in names {
        if seen.insert(name.to_lowercase()) {
            out.push(CandidateTopic {
                name,
                source: source.clone(),
            });
        }
    }
    Ok(out)
}

/// Pull the first link text of each top-level `<li>` in the snapshot.
/// Nested sub-lists belong to their top-level entry and are skipped.
fn extract_top_level_entries(html: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut pending_li = false;
    let mut rest = html;
    if !html.contains("<ul") && !html.contains("<ol") {
        return Err("no list markup found in snapshot".to_string());
    }
    while let Some(at) = rest.find('<') {
        rest = &rest[at..];
        let end = rest.find('>').ok_or_else(|| "unclosed tag".to_string())?;
        let tag = &rest[1..end];
        let name = tag
            .trim_start_matches('/')
            .split(|c: char| c.is_whitespace() || c == '/')
            .next()
            .unwrap_or("")
            .to_ascii_lowercase();
        let closing = tag.starts_with('/');
        match (name.as_str(), closing) {
            ("ul" | "ol", false) => depth += 1,
            ("ul" | "ol", true) => depth = depth.saturating_sub(1),
            ("li", false) if depth == 1 => pending_li = true,
            ("a", false) if pending_li => {
                let after = &rest[end + 1..];
                let close = after.find("</a").ok_or_else(|| "unclosed anchor".to_string())?;
                let text = after[..close].trim();
                if !text.is_empty() {
                    out.push(text.to_string());
                }
                pending_li = false;
            }
            _ => {}
        }
        rest = &rest[end + 1..];
    }
    Ok(out)
}

// ─── Political filtering ────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualifiedTopic {
    pub name: String,
    pub left_stance_summary: String,
    pub right_stance_summary: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub qualified: Vec<QualifiedTopic>,
    /// (topic, reason) for everything dropped.
    pub rejected: Vec<(String, String)>,
}

fn parse_filter_verdict(topic: &str, text: &str) -> Result<Option<QualifiedTopic>, ParseError> {
    let qualify = extract_tag(text, "qualify").ok_or_else(|| ParseError::MissingTag {
        tag: "qualify".to_string(),
    })?;
    match qualify.to_ascii_lowercase().as_str() {
        "yes" => {
            let left = extract_tag(text, "left_stance").unwrap_or("").trim().to_string();
            let right = extract_tag(text, "right_stance").unwrap_or("").trim().to_string();
            if left.is_empty() || right.is_empty() {
                return Err(ParseError::InvalidValue {
                    tag: "left_stance/right_stance".to_string(),
                    got: "empty stance summary on a qualifying topic".to_string(),
                });
            }
            Ok(Some(QualifiedTopic {
                name: topic.to_string(),
                left_stance_summary: left,
                right_stance_summary: right,
            }))
        }
        "no" => Ok(None),
        other => Err(ParseError::InvalidValue {
            tag: "qualify".to_string(),
            got: other.to_string(),
        }),
    }
}

/// Classify every candidate; non-qualifying topics are dropped with the
/// classifier's stated reason.
pub fn filter_political(topics: &[CandidateTopic], judge: &JudgeRunner) -> Result<FilterOutcome, PipelineError> {
    let template = judge.assets.get("filter_topics_prompt.txt").map_err(JudgeError::Asset)?;
    let requests: Vec<ChatRequest> = topics
        .iter()
        .map(|t| judge.request(fill_slots(template, &[("topic", &t.name)])))
        .collect();
    let results = batch_with_reprompt(judge.gateway, &requests, |i, text| {
        parse_filter_verdict(&topics[i].name, text)
    });
    let mut outcome = FilterOutcome::default();
    for (topic, result) in topics.iter().zip(results) {
        match result? {
            Some(qualified) => outcome.qualified.push(qualified),
            None => {
                // Non-qualifying is a normal outcome; keep the reason.
                outcome.rejected.push((topic.name.clone(), "classifier: not politically two-sided".to_string()));
            }
        }
    }
    Ok(outcome)
}

// ─── Directive query generation ─────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectiveQuerySet {
    pub topic: String,
    pub left_good: String,
    pub left_bad: String,
    pub right_good: String,
    pub right_bad: String,
}

impl DirectiveQuerySet {
    pub fn variants(&self) -> [(&'static str, &str); 4] {
        [
            ("left_good", &self.left_good),
            ("left_bad", &self.left_bad),
            ("right_good", &self.right_good),
            ("right_bad", &self.right_bad),
        ]
    }
}

fn parse_query_set(topic: &str, text: &str) -> Result<DirectiveQuerySet, ParseError> {
    let grab = |tag: &str| -> Result<String, ParseError> {
        let value = extract_tag(text, tag)
            .ok_or_else(|| ParseError::MissingTag { tag: tag.to_string() })?
            .trim()
            .to_string();
        if value.is_empty() {
            return Err(ParseError::InvalidValue {
                tag: tag.to_string(),
                got: "empty variant".to_string(),
            });
        }
        Ok(value)
    };
    let set = DirectiveQuerySet {
        topic: topic.to_string(),
        left_good: grab("left_good")?,
        left_bad: grab("left_bad")?,
        right_good: grab("right_good")?,
        right_bad: grab("right_bad")?,
    };
    // Variants must name a concrete position or figure, not the abstract
    // topic itself.
    for (key, variant) in set.variants() {
        let valence = if key.ends_with("good") { "good" } else { "bad" };
        let naive = format!("Tell me how {valence} {topic} is");
        if variant.trim_end_matches(['.', '!']) == naive {
            return Err(ParseError::InvalidValue {
                tag: key.to_string(),
                got: "variant names the abstract topic verbatim".to_string(),
            });
        }
    }
    Ok(set)
}

pub fn generate_directive_queries(topics: &[QualifiedTopic], judge: &JudgeRunner) -> Result<Vec<DirectiveQuerySet>, PipelineError> {
    let template = judge.assets.get("generate_queries_prompt.txt").map_err(JudgeError::Asset)?;
    let requests: Vec<ChatRequest> = topics
        .iter()
        .map(|t| {
            judge.request(fill_slots(
                template,
                &[
                    ("topic", &t.name),
                    ("left_stance", &t.left_stance_summary),
                    ("right_stance", &t.right_stance_summary),
                ],
            ))
        })
        .collect();
    let results = batch_with_reprompt(judge.gateway, &requests, |i, text| parse_query_set(&topics[i].name, text));
    results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(PipelineError::Judge)
}

// ─── Anchor generation ──────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub topic: String,
    pub prompt: String,
    pub left_anchor: String,
    pub right_anchor: String,
    pub anchor_model: String,
}

/// Generate the left/right anchor responses for each topic under the
/// shipped spin system prompts. The user prompt is the exact
/// `Tell me about {topic}` substitution.
pub fn generate_anchor_pairs(
    topics: &[&str],
    gateway: &Gateway,
    anchor_model: &str,
    assets: &PromptAssets,
    temperature: f64,
    max_tokens: u32,
) -> Result<Vec<AnchorPair>, PipelineError> {
    let left_sp = assets.get("left_sp.txt").map_err(JudgeError::Asset)?;
    let right_sp = assets.get("right_sp.txt").map_err(JudgeError::Asset)?;
    let mut requests = Vec::with_capacity(topics.len() * 2);
    for topic in topics {
        let prompt = format!("Tell me about {topic}");
        for system in [left_sp, right_sp] {
            requests.push(
                ChatRequest::new(anchor_model, &prompt)
                    .with_system(system)
                    .with_temperature(temperature)
                    .with_max_tokens(max_tokens),
            );
        }
    }
    let mut responses = gateway.complete_batch(&requests).into_iter();
    let mut out = Vec::with_capacity(topics.len());
    for topic in topics {
        let left = responses.next().expect("two per topic")?;
        let right = responses.next().expect("two per topic")?;
        for (side, text) in [("left", &left.text), ("right", &right.text)] {
            if text.trim().is_empty() {
                return Err(PipelineError::EmptyAnchor {
                    topic: topic.to_string(),
                    side: if side == "left" { "left" } else { "right" },
                });
            }
        }
        out.push(AnchorPair {
            topic: topic.to_string(),
            prompt: format!("Tell me about {topic}"),
            left_anchor: left.text,
            right_anchor: right.text,
            anchor_model: anchor_model.to_string(),
        });
    }
    Ok(out)
}

// ─── Anchor audit ───────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
pub struct AnchorAuditOutcome {
    pub report: AnchorAuditReport,
    pub verdicts: Vec<(String, AnchorAuditVerdict)>,
    pub unscored: Vec<(String, String)>,
}

pub fn audit_anchors(pairs: &[AnchorPair], judge: &JudgeRunner) -> Result<AnchorAuditOutcome, PipelineError> {
    let requests: Vec<ChatRequest> = pairs
        .iter()
        .map(|p| judge.build_anchor_audit(&p.topic, &p.left_anchor, &p.right_anchor))
        .collect::<Result<_, _>>()?;
    let results = batch_with_reprompt(judge.gateway, &requests, |_, text| AnchorAuditVerdict::parse(text));
    let mut verdicts = Vec::new();
    let mut unscored = Vec::new();
    for (pair, result) in pairs.iter().zip(results) {
        match result {
            Ok(v) => verdicts.push((pair.topic.clone(), v)),
            Err(e) => unscored.push((pair.topic.clone(), e.to_string())),
        }
    }
    let report = AnchorAuditReport::from_verdicts(&verdicts.iter().map(|(_, v)| *v).collect::<Vec<_>>())?;
    Ok(AnchorAuditOutcome {
        report,
        verdicts,
        unscored,
    })
}

// ─── Training-set assembly ──────────────────────────────────────────────────

fn slugify(name: &str) -> String {
    let mut out = String::new();
    let mut dash = true;
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
            dash = false;
        } else if !dash {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

/// Sample the two tracks to their targets (uniform, without replacement,
/// seeded) and shuffle the combined set deterministically.
pub fn assemble_training_set(
    query_sets: &[DirectiveQuerySet],
    anchors: &[AnchorPair],
    target_helpfulness: usize,
    target_sentiment: usize,
    seed: u64,
) -> Result<Vec<TrainingExample>, PipelineError> {
    let mut help_candidates: Vec<TrainingExample> = Vec::new();
    for set in query_sets {
        for (key, variant) in set.variants() {
            help_candidates.push(TrainingExample::helpfulness(
                format!("help-{}-{}", slugify(&set.topic), key),
                variant.to_string(),
            ));
        }
    }
    if help_candidates.len() < target_helpfulness {
        return Err(PipelineError::InsufficientData {
            kind: "helpfulness",
            needed: target_helpfulness,
            available: help_candidates.len(),
        });
    }
    let mut sent_candidates: Vec<TrainingExample> = Vec::new();
    for pair in anchors {
        let example = TrainingExample::sentiment(
            format!("sent-{}", slugify(&pair.topic)),
            pair.prompt.clone(),
            SentimentPayload {
                topic: pair.topic.clone(),
                left_anchor: pair.left_anchor.clone(),
                right_anchor: pair.right_anchor.clone(),
            },
        )
        .map_err(|e| PipelineError::MalformedSource {
            path: "anchors".to_string(),
            message: e.to_string(),
        })?;
        sent_candidates.push(example);
    }
    if sent_candidates.len() < target_sentiment {
        return Err(PipelineError::InsufficientData {
            kind: "sentiment",
            needed: target_sentiment,
            available: sent_candidates.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    help_candidates.shuffle(&mut rng);
    help_candidates.truncate(target_helpfulness);
    sent_candidates.shuffle(&mut rng);
    sent_candidates.truncate(target_sentiment);

    let mut combined = help_candidates;
    combined.append(&mut sent_candidates);
    combined.shuffle(&mut rng);
    Ok(combined)
}
