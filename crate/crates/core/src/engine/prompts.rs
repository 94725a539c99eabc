use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::EngineError;

pub const TEMPLATE_VERSION: &str = "1";

pub const THEME: &str = "theme";
pub const PAGE: &str = "page";
pub const ANSWER: &str = "answer";
pub const QUERIES: &str = "queries";
pub const FEATURES: &str = "features";
pub const JUDGE_ANSWER: &str = "judge_answer";
pub const JUDGE_PAGE: &str = "judge_page";

const BUNDLED: [(&str, &str); 7] = [
    (THEME, include_str!("../../templates/theme.txt")),
    (PAGE, include_str!("../../templates/page.txt")),
    (ANSWER, include_str!("../../templates/answer.txt")),
    (QUERIES, include_str!("../../templates/queries.txt")),
    (FEATURES, include_str!("../../templates/features.txt")),
    (JUDGE_ANSWER, include_str!("../../templates/judge_answer.txt")),
    (JUDGE_PAGE, include_str!("../../templates/judge_page.txt")),
];

/// Named prompt templates with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    by_name: BTreeMap<&'static str, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            by_name: BUNDLED.iter().map(|(k, v)| (*k, v.to_string())).collect(),
        }
    }
}

impl Templates {
    /// Bundled templates, with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, EngineError> {
        let mut t = Templates::default();
        for (name, _) in BUNDLED {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                let text = fs::read_to_string(&path)
                    .map_err(|e| EngineError::Template(format!("{}: {e}", path.display())))?;
                t.by_name.insert(name, text);
            }
        }
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Result<&str, EngineError> {
        self.by_name
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| EngineError::Template(format!("no template named `{name}`")))
    }

    /// sha256 of every template, keyed by name.
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.by_name
            .iter()
            .map(|(k, v)| (k.to_string(), hex::encode(Sha256::digest(v.as_bytes()))))
            .collect()
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, EngineError> {
        render(self.get(name)?, vars)
    }
}

/// Single-pass substitution of `{ident}` slots.
///
/// Substituted text is not rescanned. Braces that do not enclose an
/// identifier are copied through; an identifier with no binding is an error.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, EngineError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let ident_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if ident_len > 0 && after[ident_len..].starts_with('}') {
            let ident = &after[..ident_len];
            let value = vars
                .iter()
                .find(|(k, _)| *k == ident)
                .map(|(_, v)| *v)
                .ok_or_else(|| EngineError::Template(format!("placeholder `{{{ident}}}` has no value")))?;
            out.push_str(value);
            rest = &after[ident_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_and_keeps_stray_braces() {
        let out = render("a {x} b {not closed {y}} {}", &[("x", "1"), ("y", "{x}")]).unwrap();
        assert_eq!(out, "a 1 b {not closed {x}} {}");
    }

    #[test]
    fn missing_binding_is_error() {
        assert!(render("{nope}", &[]).is_err());
    }

    #[test]
    fn bundled_templates_have_expected_slots() {
        let t = Templates::default();
        let page = t
            .render(PAGE, &[("ad_theme", "THEME"), ("guidelines", "GUIDE")])
            .unwrap();
        assert!(page.contains("[Ad Strategy Brief]\nTHEME\n"));
        assert!(page.contains("requirements:\nGUIDE\n"));
        let answer = t
            .render(ANSWER, &[("query", "Q"), ("source_text", "[1] S")])
            .unwrap();
        assert!(answer.contains("Question: Q\n\nSearch Results:\n[1] S"));
        let theme = t
            .render(THEME, &[("doc_count", "5"), ("docs_text", "D")])
            .unwrap();
        assert!(theme.starts_with("You are an advertising strategist. Analyze the 5 webpage"));
        assert_eq!(t.digests().len(), 7);
    }

    #[test]
    fn rendering_is_byte_stable() {
        let t = Templates::default();
        let vars = [("query", "q"), ("answer", "a"), ("page_text", "p")];
        assert_eq!(
            t.render(JUDGE_ANSWER, &vars).unwrap(),
            t.render(JUDGE_ANSWER, &vars).unwrap()
        );
    }
}
