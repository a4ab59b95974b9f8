//! Policy-reward computation for consistency training.
//!
//! Each training example belongs to one of two branches. Helpfulness
//! examples are rewarded by a monotone mapping of the 0-5 helpfulness
//! score; sentiment examples multiply a bias term (peaked at the balanced
//! midpoint 3) with an auxiliary helpfulness term, so an unhelpful
//! response earns zero regardless of framing.

use alloc::string::String;
use serde::{Deserialize, Serialize};

/// Which reward branch a training example is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Helpfulness,
    Sentiment,
}

/// Anchor payload carried by sentiment-branch examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentPayload {
    pub topic: String,
    pub left_anchor: String,
    pub right_anchor: String,
}

/// One prompt routed to a reward branch, with the sentiment branch
/// carrying its per-topic anchor pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub prompt: String,
    pub branch: Branch,
    pub payload: Option<SentimentPayload>,
}

impl TrainingExample {
    pub fn helpfulness(id: String, prompt: String) -> Self {
        Self {
            id,
            prompt,
            branch: Branch::Helpfulness,
            payload: None,
        }
    }

    pub fn sentiment(id: String, prompt: String, payload: SentimentPayload) -> Result<Self, RewardError> {
        if payload.left_anchor.is_empty() || payload.right_anchor.is_empty() {
            return Err(RewardError::EmptyAnchor);
        }
        Ok(Self {
            id,
            prompt,
            branch: Branch::Sentiment,
            payload: Some(payload),
        })
    }

    /// Payload presence must match the branch; checked after deserialization.
    pub fn validate(&self) -> Result<(), RewardError> {
        match (self.branch, &self.payload) {
            (Branch::Helpfulness, None) => Ok(()),
            (Branch::Sentiment, Some(p)) if !p.left_anchor.is_empty() && !p.right_anchor.is_empty() => Ok(()),
            (Branch::Sentiment, Some(_)) => Err(RewardError::EmptyAnchor),
            _ => Err(RewardError::PayloadMismatch),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("score {got} outside the defined range for {mapping}")]
    Range { mapping: &'static str, got: f64 },
    #[error("helpfulness score must land on a half step")]
    NotHalfStep,
    #[error("verdict kind does not match the example's branch")]
    BranchMismatch,
    #[error("sentiment payload anchors must be non-empty")]
    EmptyAnchor,
    #[error("payload presence does not match branch")]
    PayloadMismatch,
}

/// Integer anchors of the helpfulness reward at scores 0..=5.
const R_HELP: [f64; 6] = [-4.0, -2.0, -1.0, -0.5, 1.0, 2.0];
/// Bias reward, peaked at the balanced score 3.
const R_BIAS: [f64; 6] = [1.0, 1.0, 2.0, 4.0, 2.0, 1.0];
/// Auxiliary helpfulness reward, defined only at 0..=2.
const R_AUX_HELP: [f64; 3] = [0.0, 1.0, 3.0];

/// Map a 0-5 helpfulness score (half steps allowed) to its reward.
///
/// Integer scores use the table directly; half scores interpolate
/// linearly between the adjacent integer values.
pub fn map_r_help(h: f64) -> Result<f64, RewardError> {
    let doubled = h * 2.0;
    if !h.is_finite() || libm::fabs(doubled - libm::round(doubled)) > 1e-9 {
        return Err(RewardError::NotHalfStep);
    }
    let half_steps = libm::round(doubled) as i64;
    if !(0..=10).contains(&half_steps) {
        return Err(RewardError::Range {
            mapping: "r_help",
            got: h,
        });
    }
    let lo = (half_steps / 2) as usize;
    if half_steps % 2 == 0 {
        Ok(R_HELP[lo])
    } else {
        Ok((R_HELP[lo] + R_HELP[lo + 1]) / 2.0)
    }
}

/// Map a 0-5 bias score to its reward. Score 3 is the balanced midpoint.
pub fn map_r_bias(b: u8) -> Result<f64, RewardError> {
    R_BIAS
        .get(b as usize)
        .copied()
        .ok_or(RewardError::Range {
            mapping: "r_bias",
            got: b as f64,
        })
}

/// Map a 0-2 auxiliary helpfulness score to its reward.
pub fn map_r_aux_help(a: u8) -> Result<f64, RewardError> {
    R_AUX_HELP
        .get(a as usize)
        .copied()
        .ok_or(RewardError::Range {
            mapping: "r_aux_help",
            got: a as f64,
        })
}

/// A training-judge verdict routed into the reward function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainVerdict {
    HelpfulnessTrain { help_score: f64 },
    SentimentTrain { bias_score: u8, aux_helpfulness: u8 },
}

/// Per-branch reward components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewardComponents {
    Help { r_help: f64 },
    Sentiment { r_bias: f64, r_aux_help: f64 },
}

/// The reward for one (example, verdict) pair, with its components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub example_id: String,
    pub branch: Branch,
    pub components: RewardComponents,
    pub reward: f64,
}

/// Route a verdict through the branch-appropriate mapping.
pub fn reward(example: &TrainingExample, verdict: &TrainVerdict) -> Result<RewardBreakdown, RewardError> {
    match (example.branch, verdict) {
        (Branch::Helpfulness, TrainVerdict::HelpfulnessTrain { help_score }) => {
            let r_help = map_r_help(*help_score)?;
            Ok(RewardBreakdown {
                example_id: example.id.clone(),
                branch: Branch::Helpfulness,
                components: RewardComponents::Help { r_help },
                reward: r_help,
            })
        }
        (Branch::Sentiment, TrainVerdict::SentimentTrain { bias_score, aux_helpfulness }) => {
            let r_bias = map_r_bias(*bias_score)?;
            let r_aux_help = map_r_aux_help(*aux_helpfulness)?;
            Ok(RewardBreakdown {
                example_id: example.id.clone(),
                branch: Branch::Sentiment,
                components: RewardComponents::Sentiment { r_bias, r_aux_help },
                reward: r_bias * r_aux_help,
            })
        }
        _ => Err(RewardError::BranchMismatch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn help_example() -> TrainingExample {
        TrainingExample::helpfulness("h1".to_string(), "Tell me how good X is".to_string())
    }

    fn sent_example() -> TrainingExample {
        TrainingExample::sentiment(
            "s1".to_string(),
            "Tell me about Y".to_string(),
            SentimentPayload {
                topic: "Y".to_string(),
                left_anchor: "left".to_string(),
                right_anchor: "right".to_string(),
            },
        )
        .unwrap()
    }

    #[test]
    fn r_help_integer_table() {
        let expect = [(0.0, -4.0), (1.0, -2.0), (2.0, -1.0), (3.0, -0.5), (4.0, 1.0), (5.0, 2.0)];
        for (h, r) in expect {
            assert_eq!(map_r_help(h).unwrap(), r);
        }
    }

    #[test]
    fn r_help_half_steps_interpolate() {
        assert_eq!(map_r_help(4.5).unwrap(), 1.5);
        assert_eq!(map_r_help(0.5).unwrap(), -3.0);
        assert_eq!(map_r_help(2.5).unwrap(), -0.75);
        assert_eq!(map_r_help(3.5).unwrap(), 0.25);
    }

    #[test]
    fn r_help_rejects_non_half_steps_and_range() {
        assert_eq!(map_r_help(3.25), Err(RewardError::NotHalfStep));
        assert!(matches!(map_r_help(5.5), Err(RewardError::Range { .. })));
        assert!(matches!(map_r_help(-0.5), Err(RewardError::Range { .. })));
        assert_eq!(map_r_help(f64::NAN), Err(RewardError::NotHalfStep));
    }

    #[test]
    fn r_bias_table() {
        let expect = [(0, 1.0), (1, 1.0), (2, 2.0), (3, 4.0), (4, 2.0), (5, 1.0)];
        for (b, r) in expect {
            assert_eq!(map_r_bias(b).unwrap(), r);
        }
        assert!(matches!(map_r_bias(6), Err(RewardError::Range { .. })));
    }

    #[test]
    fn r_aux_table() {
        assert_eq!(map_r_aux_help(0).unwrap(), 0.0);
        assert_eq!(map_r_aux_help(1).unwrap(), 1.0);
        assert_eq!(map_r_aux_help(2).unwrap(), 3.0);
        assert!(matches!(map_r_aux_help(3), Err(RewardError::Range { .. })));
    }

    #[test]
    fn sentiment_reward_is_multiplicative() {
        let ex = sent_example();
        let r = reward(&ex, &TrainVerdict::SentimentTrain { bias_score: 3, aux_helpfulness: 2 }).unwrap();
        assert_eq!(r.reward, 12.0);
        // Unhelpful responses earn nothing no matter the framing.
        for b in 0..=5 {
            let r = reward(&ex, &TrainVerdict::SentimentTrain { bias_score: b, aux_helpfulness: 0 }).unwrap();
            assert_eq!(r.reward, 0.0);
        }
    }

    #[test]
    fn helpfulness_reward_uses_r_help() {
        let r = reward(&help_example(), &TrainVerdict::HelpfulnessTrain { help_score: 2.0 }).unwrap();
        assert_eq!(r.reward, -1.0);
    }

    #[test]
    fn branch_mismatch_is_an_error() {
        let err = reward(&help_example(), &TrainVerdict::SentimentTrain { bias_score: 3, aux_helpfulness: 1 });
        assert_eq!(err, Err(RewardError::BranchMismatch));
        let err = reward(&sent_example(), &TrainVerdict::HelpfulnessTrain { help_score: 4.0 });
        assert_eq!(err, Err(RewardError::BranchMismatch));
    }

    #[test]
    fn bias_symmetry_about_midpoint() {
        for k in 1..=2u8 {
            assert_eq!(map_r_bias(3 - k).unwrap(), map_r_bias(3 + k).unwrap());
        }
        assert_eq!(map_r_bias(0).unwrap(), map_r_bias(1).unwrap());
    }

    #[test]
    fn r_help_monotone_over_half_steps() {
        let mut prev = f64::NEG_INFINITY;
        for hs in 0..=10 {
            let r = map_r_help(hs as f64 / 2.0).unwrap();
            assert!(r >= prev, "r_help not monotone at {hs}");
            prev = r;
        }
    }

    #[test]
    fn validate_checks_payload_against_branch() {
        let mut ex = help_example();
        assert!(ex.validate().is_ok());
        ex.payload = Some(SentimentPayload {
            topic: "t".to_string(),
            left_anchor: "l".to_string(),
            right_anchor: "r".to_string(),
        });
        assert_eq!(ex.validate(), Err(RewardError::PayloadMismatch));

        let mut sx = sent_example();
        assert!(sx.validate().is_ok());
        sx.payload = None;
        assert_eq!(sx.validate(), Err(RewardError::PayloadMismatch));
    }
}
