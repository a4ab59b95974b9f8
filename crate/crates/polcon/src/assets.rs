//! Versioned text assets: judge prompts, anchor system prompts, and the
//! shipped datasets. Prompt assembly is literal slot substitution only.
//!
//! The builtin assets are compiled in; a directory of the same file names
//! can override them (e.g. to swap judge rubrics). Every prompt file is
//! pinned by the sha256 manifest shipped alongside.

use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssetError {
    #[error("unknown prompt asset `{0}`")]
    Unknown(String),
    #[error("failed reading `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("checksum mismatch for `{name}`: manifest {expected}, actual {actual}")]
    ChecksumMismatch { name: String, expected: String, actual: String },
    #[error("malformed checksum manifest line `{0}`")]
    BadManifest(String),
}

macro_rules! builtin_prompts {
    ($($name:literal),+ $(,)?) => {
        &[$(($name, include_str!(concat!("../assets/prompts/", $name)))),+]
    };
}

const BUILTIN_PROMPTS: &[(&str, &str)] = builtin_prompts![
    "ab_choice_system.txt",
    "anchor_unified_judge.txt",
    "evenhanded_judge_prompt.md",
    "exchange_choice_user.txt",
    "filter_topics_prompt.txt",
    "generate_queries_prompt.txt",
    "helpfulness_eval_judge_prompt.md",
    "helpfulness_train_judge_prompt.md",
    "left_sp.txt",
    "policy_choice_user.txt",
    "right_sp.txt",
    "sentiment_eval_judge_prompt.md",
    "sentiment_train_judge_prompt.md",
    "taxonomy_rubric.md",
];

pub const PROMPT_MANIFEST: &str = include_str!("../assets/prompts/manifest.sha256");

/// The 50 shipped topic pairs (left_entity,right_entity).
pub const PCP_PAIRS_CSV: &str = include_str!("../assets/pcp_pairs.csv");
/// The 136-item policy manifest spanning 18 categories.
pub const POLICY_ITEMS_CSV: &str = include_str!("../assets/policy_items.csv");
/// Exchange-rate categories with anchors, phrases, and the quantity grid.
pub const EXCHANGE_CATEGORIES_JSON: &str = include_str!("../assets/exchange_categories.json");

#[derive(Debug, Clone)]
pub struct PromptAssets {
    prompts: BTreeMap<String, String>,
}

impl PromptAssets {
    /// The compiled-in prompt set, verified against the manifest.
    pub fn builtin() -> Self {
        let assets = Self {
            prompts: BUILTIN_PROMPTS
                .iter()
                .map(|(name, body)| (name.to_string(), body.to_string()))
                .collect(),
        };
        assets
            .verify_manifest(PROMPT_MANIFEST)
            .expect("builtin prompt assets match their manifest");
        assets
    }

    /// Load prompt files from a directory; names present there override
    /// the builtin set, anything absent falls back to builtin.
    pub fn from_dir(dir: &Path) -> Result<Self, AssetError> {
        let mut assets = Self::builtin();
        for name in BUILTIN_PROMPTS.iter().map(|(n, _)| *n) {
            let path = dir.join(name);
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|e| AssetError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                assets.prompts.insert(name.to_string(), body);
            }
        }
        Ok(assets)
    }

    pub fn get(&self, name: &str) -> Result<&str, AssetError> {
        self.prompts
            .get(name)
            .map(|s| s.as_str())
            .ok_or_else(|| AssetError::Unknown(name.to_string()))
    }

    /// Check every prompt named in a `sha256sum`-style manifest.
    pub fn verify_manifest(&self, manifest: &str) -> Result<(), AssetError> {
        for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
            let mut parts = line.split_whitespace();
            let (Some(expected), Some(name)) = (parts.next(), parts.next()) else {
                return Err(AssetError::BadManifest(line.to_string()));
            };
            let body = self.get(name)?;
            let actual = sha256_hex(body.as_bytes());
            if actual != expected {
                return Err(AssetError::ChecksumMismatch {
                    name: name.to_string(),
                    expected: expected.to_string(),
                    actual,
                });
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Replace `{name}` slots with their values. Literal substitution, no
/// escaping, no other rewriting.
pub fn fill_slots(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
