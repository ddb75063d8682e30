//! `{placeholder}` prompt templates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::GatewayError;

use super::TemplateId;

/// Marks where an image attachment sits inside the prompt text.
pub const IMAGE_MARKER: &str = "<|image|>";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Placeholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    id: TemplateId,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(id: TemplateId, source: &str) -> Result<Self, GatewayError> {
        let err = |message: String| GatewayError::Template { template: id, message };
        let mut pieces = Vec::new();
        let mut literal = String::new();
        let mut chars = source.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    literal.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    literal.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(c) if c.is_ascii_alphanumeric() || c == '_' => name.push(c),
                            Some(c) => return Err(err(format!("invalid character {c:?} in placeholder"))),
                            None => return Err(err("unterminated placeholder".into())),
                        }
                    }
                    if name.is_empty() {
                        return Err(err("empty placeholder".into()));
                    }
                    if !literal.is_empty() {
                        pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                    }
                    pieces.push(Piece::Placeholder(name));
                }
                '}' => return Err(err("unmatched '}'".into())),
                c => literal.push(c),
            }
        }
        if !literal.is_empty() {
            pieces.push(Piece::Literal(literal));
        }
        Ok(Self { id, pieces })
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Placeholder(n) => Some(n.as_str()),
                Piece::Literal(_) => None,
            })
            .collect()
    }

    /// Substitutes every placeholder. Fails on the first unbound name.
    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Placeholder(name) => match vars.get(name) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(GatewayError::UnboundPlaceholder {
                            template: self.id,
                            name: name.clone(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }
}

/// One template per [`TemplateId`].
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, Template>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL
            .iter()
            .map(|&id| {
                let t = Template::parse(id, builtin_source(id)).expect("built-in templates parse");
                (id, t)
            })
            .collect();
        Self { templates }
    }

    /// Loads `<dir>/<id>.txt` for every id, falling back to the built-in copy.
    pub fn load_dir(dir: &Path) -> Result<Self, GatewayError> {
        let mut set = Self::builtin();
        for &id in TemplateId::ALL.iter() {
            let path = dir.join(format!("{}.txt", id.as_str()));
            if path.exists() {
                let source = std::fs::read_to_string(&path).map_err(|e| {
                    GatewayError::Config(format!("{}: {e}", path.display()))
                })?;
                set.templates.insert(id, Template::parse(id, &source)?);
            }
        }
        Ok(set)
    }

    pub fn with_override(mut self, id: TemplateId, source: &str) -> Result<Self, GatewayError> {
        self.templates.insert(id, Template::parse(id, source)?);
        Ok(self)
    }

    pub fn get(&self, id: TemplateId) -> &Template {
        &self.templates[&id]
    }
}

fn builtin_source(id: TemplateId) -> &'static str {
    match id {
        TemplateId::Cot => include_str!("../../templates/cot.txt"),
        TemplateId::E2e => include_str!("../../templates/e2e.txt"),
        TemplateId::Summarize => include_str!("../../templates/summarize.txt"),
        TemplateId::FuseIntent => include_str!("../../templates/fuse_intent.txt"),
        TemplateId::RefineLabel => include_str!("../../templates/refine_label.txt"),
        TemplateId::CleanLabel => include_str!("../../templates/clean_label.txt"),
        TemplateId::DecomposeFacts => include_str!("../../templates/decompose_facts.txt"),
        TemplateId::JudgeEntailment => include_str!("../../templates/judge_entailment.txt"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn renders_and_escapes() {
        let t = Template::parse(TemplateId::CleanLabel, "Goal: {label} {{literal}}").unwrap();
        assert_eq!(t.render(&vars(&[("label", "x")])).unwrap(), "Goal: x {literal}");
        assert_eq!(t.placeholders().into_iter().collect::<Vec<_>>(), vec!["label"]);
    }

    #[test]
    fn unbound_placeholder_is_reported() {
        let t = Template::parse(TemplateId::Summarize, "{action}").unwrap();
        match t.render(&BTreeMap::new()) {
            Err(GatewayError::UnboundPlaceholder { name, .. }) => assert_eq!(name, "action"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_templates_fail_to_parse() {
        assert!(Template::parse(TemplateId::Cot, "{oops").is_err());
        assert!(Template::parse(TemplateId::Cot, "a } b").is_err());
        assert!(Template::parse(TemplateId::Cot, "{}").is_err());
        assert!(Template::parse(TemplateId::Cot, "{a b}").is_err());
    }

    #[test]
    fn builtins_declare_expected_variables() {
        let set = TemplateSet::builtin();
        let names = |id| set.get(id).placeholders().into_iter().map(String::from).collect::<Vec<_>>();
        assert_eq!(names(TemplateId::Summarize), ["current_action", "format", "next", "previous"]);
        assert_eq!(names(TemplateId::FuseIntent), ["final_screen", "summaries"]);
        assert_eq!(names(TemplateId::JudgeEntailment), ["fact", "facts"]);
        assert_eq!(names(TemplateId::Cot), ["steps"]);
    }

    #[test]
    fn directory_overrides_single_file() {
        let dir = std::env::temp_dir().join(format!("intentkit-tpl-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("clean_label.txt"), "CLEAN {label}").unwrap();
        let set = TemplateSet::load_dir(&dir).unwrap();
        let out = set.get(TemplateId::CleanLabel).render(&vars(&[("label", "x")])).unwrap();
        assert_eq!(out, "CLEAN x");
        assert!(set.get(TemplateId::Cot).placeholders().contains("steps"));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
