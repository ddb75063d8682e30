use std::collections::HashSet;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::error::EvalError;

/// Anything that returns p(premise entails hypothesis).
#[async_trait]
pub trait EntailmentScorer: Send + Sync {
    async fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, EvalError>;
}

fn checked(p: f64) -> Result<f64, EvalError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(EvalError::BadProbability(p))
    }
}

/// Mean of the entailment probabilities in both directions.
pub async fn nli_bidirectional(gold: &str, predicted: &str, scorer: &dyn EntailmentScorer) -> Result<f64, EvalError> {
    if gold.trim().is_empty() || predicted.trim().is_empty() {
        return Err(EvalError::Nli("both texts must be non-empty".into()));
    }
    let forward = checked(scorer.entailment(gold, predicted).await?)?;
    let backward = checked(scorer.entailment(predicted, gold).await?)?;
    Ok((forward + backward) / 2.0)
}

fn words(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Offline scorer: the share of hypothesis words that occur in the
/// premise. Deterministic, for tests and dry runs only.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalEntailment;

#[async_trait]
impl EntailmentScorer for LexicalEntailment {
    async fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, EvalError> {
        let h = words(hypothesis);
        if h.is_empty() {
            return Ok(0.0);
        }
        let p = words(premise);
        Ok(h.iter().filter(|w| p.contains(*w)).count() as f64 / h.len() as f64)
    }
}

/// Scorer backed by an HTTP service that answers
/// `{"premise": .., "hypothesis": ..}` with `{"entailment": p}`.
#[derive(Debug, Clone)]
pub struct HttpEntailment {
    client: reqwest::Client,
    endpoint: String,
}

#[derive(Serialize)]
struct NliRequest<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Deserialize)]
struct NliResponse {
    entailment: f64,
}

impl HttpEntailment {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, EvalError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EvalError::Nli(e.to_string()))?;
        Ok(Self { client, endpoint: endpoint.into() })
    }
}

#[async_trait]
impl EntailmentScorer for HttpEntailment {
    async fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, EvalError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&NliRequest { premise, hypothesis })
            .send()
            .await
            .and_then(reqwest::Response::error_for_status)
            .map_err(|e| EvalError::Nli(e.to_string()))?;
        let body: NliResponse = resp.json().await.map_err(|e| EvalError::Nli(e.to_string()))?;
        Ok(body.entailment)
    }
}
