//! Prompt templates with `{{slot}}` placeholders.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

pub const EXTRACTION_TEMPLATE: &str = include_str!("../../prompts/extraction.txt");
pub const NAVIGATION_TEMPLATE: &str = include_str!("../../prompts/navigation.txt");

static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").unwrap());

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("template slot {{{{{0}}}}} has no value")]
    MissingSlot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    text: String,
}

impl Template {
    pub fn new(text: impl Into<String>) -> Self {
        Template { text: text.into() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map(Template::new)
            .map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn extraction() -> Self {
        Template::new(EXTRACTION_TEMPLATE)
    }

    pub fn navigation() -> Self {
        Template::new(NAVIGATION_TEMPLATE)
    }

    /// Slot names in order of first appearance.
    pub fn slots(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in SLOT.captures_iter(&self.text) {
            let name = c.get(1).unwrap().as_str();
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    /// Fills every slot; a slot without a value is an error. Values are
    /// inserted verbatim and are not rescanned for slots.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        if let Some(missing) = self.slots().into_iter().find(|s| !values.iter().any(|(k, _)| k == s)) {
            return Err(TemplateError::MissingSlot(missing.to_string()));
        }
        Ok(SLOT
            .replace_all(&self.text, |c: &regex::Captures<'_>| {
                let name = &c[1];
                values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .unwrap_or_default()
                    .to_string()
            })
            .into_owned())
    }
}
