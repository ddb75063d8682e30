use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cache::{digest, JsonCache};
use crate::error::EvalError;
use crate::gateway::{CallContext, Gateway, GenerationRequest, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactSource {
    Gold,
    Predicted,
    SummaryPool,
}

/// Atomic facts, trimmed and deduplicated case-insensitively. The first
/// spelling seen is kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSet {
    pub source: FactSource,
    pub facts: Vec<String>,
    /// Decomposition produced nothing and the whole text became one fact.
    #[serde(default)]
    pub flagged: bool,
}

impl FactSet {
    pub fn new<I, S>(source: FactSource, facts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let facts = facts
            .into_iter()
            .map(|f| f.as_ref().trim().to_string())
            .filter(|f| !f.is_empty() && seen.insert(f.to_lowercase()))
            .collect();
        Self { source, facts, flagged: false }
    }

    pub fn empty(source: FactSource) -> Self {
        Self::new(source, Vec::<String>::new())
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Order-independent digest of the fact contents.
    pub fn digest(&self) -> String {
        let mut folded: Vec<String> = self.facts.iter().map(|f| f.to_lowercase()).collect();
        folded.sort();
        let parts: Vec<&str> = folded.iter().map(String::as_str).collect();
        digest(&parts)
    }

    pub fn as_bullets(&self) -> String {
        self.facts.iter().map(|f| format!("- {f}\n")).collect()
    }
}

/// Bullet or numbered lines from a reply.
pub fn parse_fact_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| {
            let l = l.trim();
            let l = l
                .strip_prefix("- ")
                .or_else(|| l.strip_prefix("* "))
                .or_else(|| l.strip_prefix("• "))
                .or_else(|| {
                    let digits = l.chars().take_while(char::is_ascii_digit).count();
                    (digits > 0).then(|| &l[digits..]).and_then(|r| r.strip_prefix(". ").or_else(|| r.strip_prefix(") ")))
                })?;
            let l = l.trim();
            (!l.is_empty()).then(|| l.to_string())
        })
        .collect()
}

/// Strict yes/no reading of a judge reply.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    let first = text
        .split_whitespace()
        .next()?
        .trim_matches(|c: char| !c.is_ascii_alphanumeric())
        .to_ascii_lowercase();
    match first.as_str() {
        "yes" | "true" | "supported" => Some(true),
        "no" | "false" | "unsupported" => Some(false),
        _ => None,
    }
}

/// Outcome of one support judgement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub supported: bool,
    /// The judge never gave a usable answer; counted as not supported.
    pub flagged: bool,
}

/// LLM judge for decomposition and fact support. Results are cached by
/// content so reruns make no calls.
#[derive(Debug, Clone)]
pub struct FactJudge {
    gateway: Gateway,
    cache: Arc<JsonCache>,
    calls: Arc<AtomicU64>,
}

impl FactJudge {
    pub fn new(gateway: Gateway, cache: Arc<JsonCache>) -> Self {
        Self {
            gateway,
            cache,
            calls: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Backend calls made through this judge (cache hits excluded).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn cache(&self) -> &JsonCache {
        &self.cache
    }

    async fn ask(&self, req: &GenerationRequest) -> Result<String, EvalError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.gateway.generate(req).await?.text)
    }

    /// Splits an intent into atomic facts. Empty text gives an empty set.
    pub async fn decompose(&self, text: &str, source: FactSource) -> Result<FactSet, EvalError> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(FactSet::empty(source));
        }
        let key = digest(&["decompose", text]);
        let reply = match self.cache.get(&key) {
            Some(cached) => cached,
            None => {
                let req = GenerationRequest::new(TemplateId::DecomposeFacts)
                    .var("intent", text)
                    .context(CallContext::default());
                let reply = self.ask(&req).await?;
                self.cache.insert(key, reply.clone());
                reply
            }
        };
        let mut set = FactSet::new(source, parse_fact_lines(&reply));
        if set.is_empty() {
            set = FactSet::new(source, [text]);
            set.flagged = true;
        }
        Ok(set)
    }

    /// Whether `fact` is supported by `against`. An empty set supports
    /// nothing and costs no call.
    pub async fn judge(&self, fact: &str, against: &FactSet) -> Result<Judgement, EvalError> {
        let fact = fact.trim();
        if fact.is_empty() || against.is_empty() {
            return Ok(Judgement { supported: false, flagged: false });
        }
        let key = digest(&["judge", &fact.to_lowercase(), &against.digest()]);
        if let Some(v) = self.cache.get(&key).and_then(|c| serde_json::from_str::<Judgement>(&c).ok()) {
            return Ok(v);
        }
        let req = GenerationRequest::new(TemplateId::JudgeEntailment)
            .var("fact", fact)
            .var("facts", against.as_bullets())
            .context(CallContext::default());
        let mut verdict = parse_yes_no(&self.ask(&req).await?);
        if verdict.is_none() {
            verdict = parse_yes_no(&self.ask(&req).await?);
        }
        let j = Judgement {
            supported: verdict.unwrap_or(false),
            flagged: verdict.is_none(),
        };
        self.cache.insert(key, serde_json::to_string(&j).expect("judgement serializes"));
        Ok(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptedBackend, StubReply};

    fn judge() -> (Arc<ScriptedBackend>, FactJudge) {
        let stub = Arc::new(ScriptedBackend::new());
        let j = FactJudge::new(Gateway::with_stub(stub.clone()), Arc::new(JsonCache::in_memory()));
        (stub, j)
    }

    #[test]
    fn fact_sets_dedup_case_insensitively() {
        let s = FactSet::new(FactSource::Gold, [" Book a flight", "book a flight", "", "to LAX "]);
        assert_eq!(s.facts, ["Book a flight", "to LAX"]);
        let t = FactSet::new(FactSource::Predicted, ["TO LAX", "book a flight"]);
        assert_eq!(s.digest(), t.digest());
    }

    #[test]
    fn reads_bullets_and_numbers() {
        assert_eq!(parse_fact_lines("Facts:\n- a\n* b\n3. c\n4) d\n-\n"), ["a", "b", "c", "d"]);
        assert_eq!(parse_yes_no("Yes."), Some(true));
        assert_eq!(parse_yes_no(" no, it is not"), Some(false));
        assert_eq!(parse_yes_no("maybe"), None);
        assert_eq!(parse_yes_no(""), None);
    }

    #[tokio::test]
    async fn decomposes_the_flight_example() {
        let (stub, j) = judge();
        stub.script(
            TemplateId::DecomposeFacts,
            None,
            None,
            vec![StubReply::text("- book a flight\n- flight is to LAX\n- flight is on Friday\n- book a flight")],
        );
        let s = j.decompose("book a flight to LAX on Friday", FactSource::Gold).await.unwrap();
        assert_eq!(s.facts, ["book a flight", "flight is to LAX", "flight is on Friday"]);
        assert!(!s.flagged);
    }

    #[tokio::test]
    async fn empty_decomposition_falls_back_to_whole_text() {
        let (stub, j) = judge();
        stub.script(TemplateId::DecomposeFacts, None, None, vec![StubReply::text("I cannot do that")]);
        let s = j.decompose("buy milk", FactSource::Predicted).await.unwrap();
        assert_eq!(s.facts, ["buy milk"]);
        assert!(s.flagged);
        assert!(j.decompose("  ", FactSource::Predicted).await.unwrap().is_empty());
    }

    #[tokio::test]
    async fn judge_caches_and_retries_once() {
        let (stub, j) = judge();
        let against = FactSet::new(FactSource::Gold, ["book a flight"]);
        assert!(j.judge("Book a flight", &against).await.unwrap().supported);
        assert!(!j.judge("rent a car", &against).await.unwrap().supported);
        assert_eq!(j.calls(), 2);
        assert!(j.judge("book a flight", &against).await.unwrap().supported);
        assert_eq!(j.calls(), 2);

        stub.script(TemplateId::JudgeEntailment, None, None, vec![StubReply::text("hmm"), StubReply::text("perhaps")]);
        let v = j.judge("fly on Friday", &against).await.unwrap();
        assert_eq!(v, Judgement { supported: false, flagged: true });
        assert_eq!(j.calls(), 4);
    }

    #[tokio::test]
    async fn paraphrases_under_equivalence_table() {
        // Hand-written equivalence table standing in for a semantic judge.
        let table: &[(&str, &str)] = &[("reserve a flight", "book a flight"), ("flight goes to lax", "flight is to lax")];
        let stub = Arc::new(ScriptedBackend::with_responder(Arc::new(move |p: &crate::gateway::RenderedPrompt| {
            let fact = p.variables["fact"].to_lowercase();
            let facts = p.variables["facts"].to_lowercase();
            let ok = table.iter().any(|(a, b)| fact == *a && facts.contains(b)) || facts.contains(&fact);
            StubReply::text(if ok { "yes" } else { "no" })
        })));
        let j = FactJudge::new(Gateway::with_stub(stub), Arc::new(JsonCache::in_memory()));
        let gold = FactSet::new(FactSource::Gold, ["book a flight", "flight is to LAX"]);
        assert!(j.judge("reserve a flight", &gold).await.unwrap().supported);
        assert!(j.judge("flight goes to LAX", &gold).await.unwrap().supported);
        assert!(!j.judge("flight is on Monday", &gold).await.unwrap().supported);
    }
}
