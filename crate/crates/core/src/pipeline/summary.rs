//! Stage-1 output format and the text blocks fed to stage 2.

use crate::model::InteractionSummary;

/// Output instructions for structured summaries. The parser below reads
/// exactly this layout.
pub const STRUCTURED_FORMAT: &str = "Reply in exactly this format:
SCREEN CONTEXT:
- <a short list of salient details on the current screen>
USER ACTION:
- <the mid-level actions the user took in this interaction>
SPECULATIVE INTENT:
- <any guess about the user's underlying goal; leave empty if none>";

pub const FREEFORM_FORMAT: &str =
    "Reply with a single paragraph describing the screen and what the user did.";

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Screen,
    Action,
    Speculative,
}

fn header(line: &str) -> Option<(Section, &str)> {
    let cleaned = line.trim().trim_start_matches(['#', '*', ' ']).trim_end_matches('*');
    let (name, rest) = cleaned.split_once(':')?;
    let name = name.trim().trim_end_matches('*').trim().to_ascii_lowercase();
    let section = match name.as_str() {
        "screen context" => Section::Screen,
        "user action" | "user actions" => Section::Action,
        "speculative intent" | "speculative intents" => Section::Speculative,
        _ => return None,
    };
    Some((section, rest.trim().trim_start_matches('*').trim()))
}

fn item(line: &str) -> Option<String> {
    let l = line.trim();
    let l = l
        .strip_prefix("- ")
        .or_else(|| l.strip_prefix("* "))
        .or_else(|| l.strip_prefix("• "))
        .unwrap_or(l)
        .trim();
    (!l.is_empty() && l != "-").then(|| l.to_string())
}

/// Parses the labelled-section layout. Headers are case-insensitive.
/// Returns `None` when no factual section is present or both factual
/// sections are empty.
pub fn parse_structured_summary(text: &str, step_index: u32) -> Option<InteractionSummary> {
    let mut summary = InteractionSummary {
        step_index,
        screen_context: Vec::new(),
        user_actions: Vec::new(),
        speculative_intent: Vec::new(),
        parse_fallback: false,
    };
    let mut current = None;
    let mut saw_factual_header = false;
    for line in text.lines() {
        if let Some((section, rest)) = header(line) {
            saw_factual_header |= section != Section::Speculative;
            current = Some(section);
            if let Some(i) = item(rest) {
                push(&mut summary, section, i);
            }
            continue;
        }
        if let (Some(section), Some(i)) = (current, item(line)) {
            push(&mut summary, section, i);
        }
    }
    let empty = summary.screen_context.is_empty() && summary.user_actions.is_empty();
    (saw_factual_header && !empty).then_some(summary)
}

fn push(s: &mut InteractionSummary, section: Section, item: String) {
    match section {
        Section::Screen => s.screen_context.push(item),
        Section::Action => s.user_actions.push(item),
        Section::Speculative => s.speculative_intent.push(item),
    }
}

/// Renders summaries for the fusion and refinement prompts. Only the
/// factual fields are rendered.
pub fn render_summaries(summaries: &[InteractionSummary]) -> String {
    let mut out = String::new();
    for (pos, s) in summaries.iter().enumerate() {
        if pos > 0 {
            out.push('\n');
        }
        out.push_str(&format!("Interaction {}\n", pos + 1));
        if !s.screen_context.is_empty() {
            out.push_str("Screen context:\n");
            for l in &s.screen_context {
                out.push_str(&format!("- {l}\n"));
            }
        }
        if !s.user_actions.is_empty() {
            out.push_str("User actions:\n");
            for l in &s.user_actions {
                out.push_str(&format!("- {l}\n"));
            }
        }
    }
    out
}
