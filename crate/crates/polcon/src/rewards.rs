//! The reward stream consumed by an external RL trainer: route each
//! (example, response) pair to its branch's training judge, then map the
//! verdicts through the piecewise reward tables. This harness never
//! performs weight updates.

use crate::judges::{batch_with_reprompt, JudgeError, JudgeRunner};
use polcon_core::reward::{reward, Branch, RewardBreakdown, RewardError, TrainVerdict, TrainingExample};
use polcon_core::verdict::{HelpfulnessTrainVerdict, SentimentTrainVerdict};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum RewardStreamError {
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("example {example_id}: {source}")]
    Reward {
        example_id: String,
        #[source]
        source: RewardError,
    },
    #[error("no response recorded for example {0}")]
    MissingResponse(String),
    #[error("no verdict recorded for example {0}")]
    MissingVerdict(String),
    #[error("example {0} failed validation: {1}")]
    BadExample(String, String),
}

/// One rollout response keyed by its training-example id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub example_id: String,
    pub response: String,
}

/// One training-judge verdict keyed by example id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainVerdictRecord {
    pub example_id: String,
    #[serde(flatten)]
    pub verdict: TrainVerdict,
}

/// Score rollout responses with the branch-appropriate training judge.
pub fn judge_training_responses(
    examples: &[TrainingExample],
    responses: &[ResponseRecord],
    judge: &JudgeRunner,
) -> Result<Vec<TrainVerdictRecord>, RewardStreamError> {
    let by_id: BTreeMap<&str, &str> = responses
        .iter()
        .map(|r| (r.example_id.as_str(), r.response.as_str()))
        .collect();
    let mut requests = Vec::with_capacity(examples.len());
    for example in examples {
        example
            .validate()
            .map_err(|e| RewardStreamError::BadExample(example.id.clone(), e.to_string()))?;
        let response = by_id
            .get(example.id.as_str())
            .ok_or_else(|| RewardStreamError::MissingResponse(example.id.clone()))?;
        let request = match (&example.branch, &example.payload) {
            (Branch::Helpfulness, _) => judge.build_helpfulness_training(response, &example.prompt)?,
            (Branch::Sentiment, Some(payload)) => judge.build_sentiment_training(
                response,
                &payload.topic,
                &payload.left_anchor,
                &payload.right_anchor,
            )?,
            (Branch::Sentiment, None) => {
                return Err(RewardStreamError::BadExample(
                    example.id.clone(),
                    "sentiment example lacks its anchor payload".into(),
                ))
            }
        };
        requests.push(request);
    }
    let results = batch_with_reprompt(judge.gateway, &requests, |i, text| match examples[i].branch {
        Branch::Helpfulness => HelpfulnessTrainVerdict::parse(text).map(|v| TrainVerdict::HelpfulnessTrain {
            help_score: v.help_score,
        }),
        Branch::Sentiment => SentimentTrainVerdict::parse(text).map(|v| TrainVerdict::SentimentTrain {
            bias_score: v.bias_score,
            aux_helpfulness: v.aux_helpfulness,
        }),
    });
    let mut out = Vec::with_capacity(examples.len());
    for (example, result) in examples.iter().zip(results) {
        out.push(TrainVerdictRecord {
            example_id: example.id.clone(),
            verdict: result?,
        });
    }
    Ok(out)
}

/// Map verdicts to the reward stream, one breakdown per example.
pub fn compute_rewards(
    examples: &[TrainingExample],
    verdicts: &[TrainVerdictRecord],
) -> Result<Vec<RewardBreakdown>, RewardStreamError> {
    let by_id: BTreeMap<&str, &TrainVerdict> = verdicts
        .iter()
        .map(|v| (v.example_id.as_str(), &v.verdict))
        .collect();
    examples
        .iter()
        .map(|example| {
            let verdict = by_id
                .get(example.id.as_str())
                .ok_or_else(|| RewardStreamError::MissingVerdict(example.id.clone()))?;
            reward(example, verdict).map_err(|e| RewardStreamError::Reward {
                example_id: example.id.clone(),
                source: e,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::PromptAssets;
    use crate::gateway::{Gateway, MockProvider};
    use polcon_core::reward::{RewardComponents, SentimentPayload};
    use std::sync::Arc;

    fn examples() -> Vec<TrainingExample> {
        vec![
            TrainingExample::helpfulness("h1".into(), "Tell me how good the left stance on X is.".into()),
            TrainingExample::sentiment(
                "s1".into(),
                "Tell me about X".into(),
                SentimentPayload {
                    topic: "X".into(),
                    left_anchor: "left take".into(),
                    right_anchor: "right take".into(),
                },
            )
            .unwrap(),
        ]
    }

    #[test]
    fn responses_route_to_the_branch_judges_and_rewards_multiply() {
        let gw = Gateway::with_provider(Arc::new(MockProvider::judge_sim(4)), 4, 0, None);
        let assets = PromptAssets::builtin();
        let judge = JudgeRunner::new(&gw, "judge", &assets, 0);
        let responses = vec![
            ResponseRecord {
                example_id: "h1".into(),
                response: "a real effortful answer".into(),
            },
            ResponseRecord {
                example_id: "s1".into(),
                response: "left take".into(),
            },
        ];
        let verdicts = judge_training_responses(&examples(), &responses, &judge).unwrap();
        assert!(matches!(verdicts[0].verdict, TrainVerdict::HelpfulnessTrain { .. }));
        match verdicts[1].verdict {
            TrainVerdict::SentimentTrain { bias_score, .. } => assert_eq!(bias_score, 1),
            _ => panic!("sentiment example got the wrong judge"),
        }
        let rewards = compute_rewards(&examples(), &verdicts).unwrap();
        assert_eq!(rewards.len(), 2);
        match rewards[1].components {
            RewardComponents::Sentiment { r_bias, r_aux_help } => {
                assert_eq!(rewards[1].reward, r_bias * r_aux_help);
            }
            _ => panic!("sentiment breakdown expected"),
        }
    }

    #[test]
    fn missing_pieces_are_named_errors() {
        let gw = Gateway::with_provider(Arc::new(MockProvider::judge_sim(4)), 4, 0, None);
        let assets = PromptAssets::builtin();
        let judge = JudgeRunner::new(&gw, "judge", &assets, 0);
        let err = judge_training_responses(&examples(), &[], &judge).unwrap_err();
        assert!(matches!(err, RewardStreamError::MissingResponse(_)));
        let err = compute_rewards(&examples(), &[]).unwrap_err();
        assert!(matches!(err, RewardStreamError::MissingVerdict(_)));
    }

    #[test]
    fn verdict_records_serialize_flat() {
        let record = TrainVerdictRecord {
            example_id: "s1".into(),
            verdict: TrainVerdict::SentimentTrain {
                bias_score: 3,
                aux_helpfulness: 2,
            },
        };
        let json = serde_json::to_string(&record).unwrap();
        assert_eq!(
            json,
            r#"{"example_id":"s1","kind":"sentiment_train","bias_score":3,"aux_helpfulness":2}"#
        );
        let back: TrainVerdictRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
    }
}
