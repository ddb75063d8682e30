use crate::cache::{digest, JsonCache};
use crate::error::IngestError;
use crate::gateway::{CallContext, Gateway, GenerationRequest, TemplateId};
use crate::model::{remove_platform_mentions, split_platform_prefix, IntentStatement, PLATFORM_DELIMITER};

/// Rewrites a noisy annotator label through the cleaning prompt.
///
/// Results are memoised in `cache` when one is given, keyed by the raw
/// label, so re-ingesting never needs a live backend.
pub async fn clean_label(
    raw: &str,
    trajectory_id: &str,
    gateway: &Gateway,
    cache: Option<&JsonCache>,
) -> Result<String, IngestError> {
    let key = digest(&["clean_label", raw]);
    if let Some(hit) = cache.and_then(|c| c.get(&key)) {
        return Ok(hit);
    }
    let req = GenerationRequest::new(TemplateId::CleanLabel)
        .var("label", raw)
        .context(CallContext::trajectory(trajectory_id));
    let out = gateway.generate(&req).await.map_err(|e| IngestError::Cleaning {
        trajectory: trajectory_id.to_string(),
        source: Box::new(e),
    })?;
    let cleaned = out.text.trim().to_string();
    if cleaned.is_empty() {
        return Err(IngestError::EmptyCleanedLabel(trajectory_id.to_string()));
    }
    if let Some(c) = cache {
        c.insert(key, cleaned.clone());
    }
    Ok(cleaned)
}

/// Rewrites a label into the `"<platform>; <intent>"` form, pulling any
/// mention of the platform out of the intent body, then splits it.
pub fn restructure_label(label: &str, platform: Option<&str>) -> Result<IntentStatement, IngestError> {
    let label = label.trim();
    let Some(platform) = platform.map(str::trim).filter(|p| !p.is_empty()) else {
        return Ok(IntentStatement::new(label));
    };
    let body = match split_platform_prefix(label)? {
        IntentStatement { platform_prefix: Some(p), text } if p == platform => text,
        _ => label.to_string(),
    };
    let body = remove_platform_mentions(&body, platform);
    let formatted = format!("{platform}{PLATFORM_DELIMITER}{body}");
    Ok(split_platform_prefix(&formatted)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptedBackend, StubReply};
    use std::sync::Arc;

    #[tokio::test]
    async fn scripted_cleaning() {
        let stub = Arc::new(ScriptedBackend::new());
        stub.script(
            TemplateId::CleanLabel,
            Some("ep1"),
            None,
            vec![StubReply::text("  order an olive pizza from DoorDash\n")],
        );
        let gw = Gateway::with_stub(stub.clone());
        let out = clean_label("I'm hungry, order an olive pizza from DoorDash", "ep1", &gw, None)
            .await
            .unwrap();
        assert_eq!(out, "order an olive pizza from DoorDash");
        // identity stub leaves clean labels alone
        let same = clean_label("open the settings", "ep2", &gw, None).await.unwrap();
        assert_eq!(same, "open the settings");
    }

    #[tokio::test]
    async fn empty_reply_is_an_error_and_cache_short_circuits() {
        let stub = Arc::new(ScriptedBackend::new());
        stub.script(TemplateId::CleanLabel, Some("bad"), None, vec![StubReply::text("   ")]);
        let gw = Gateway::with_stub(stub.clone());
        assert!(matches!(
            clean_label("x", "bad", &gw, None).await,
            Err(IngestError::EmptyCleanedLabel(id)) if id == "bad"
        ));
        let cache = JsonCache::in_memory();
        clean_label("y", "ok", &gw, Some(&cache)).await.unwrap();
        let calls = stub.call_count();
        assert_eq!(clean_label("y", "ok", &gw, Some(&cache)).await.unwrap(), "y");
        assert_eq!(stub.call_count(), calls);
    }

    #[test]
    fn restructures_into_prefix_form() {
        let s = restructure_label("order an olive pizza from DoorDash", Some("DoorDash")).unwrap();
        assert_eq!(s.platform_prefix.as_deref(), Some("DoorDash"));
        assert_eq!(s.text, "order an olive pizza");
        assert_eq!(s.to_string(), "DoorDash; order an olive pizza");
        // already structured labels are not double-prefixed
        let s = restructure_label("DoorDash; order an olive pizza", Some("DoorDash")).unwrap();
        assert_eq!(s.text, "order an olive pizza");
        let s = restructure_label("book a flight", None).unwrap();
        assert_eq!(s.platform_prefix, None);
    }
}
