use std::collections::BTreeMap;
use std::path::Path;

use crate::{Error, Result};

/// Id of the built-in question template.
pub const DEFAULT_TEMPLATE_ID: &str = "anomaly-engineer";

const DEFAULT_TEMPLATE: &str = include_str!("../../templates/anomaly-engineer.txt");

/// Question templates keyed by id. `{object}` is replaced by the object name.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    templates: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(DEFAULT_TEMPLATE_ID.to_string(), DEFAULT_TEMPLATE.trim().to_string());
        Self { templates }
    }
}

impl PromptTemplates {
    /// Built-ins plus every `*.txt` file in `dir`, keyed by file stem.
    pub fn with_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut out = Self::default();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            out.templates.insert(id.to_string(), text.trim().to_string());
        }
        Ok(out)
    }

    pub fn insert(&mut self, id: impl Into<String>, template: impl Into<String>) {
        self.templates.insert(id.into(), template.into());
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    /// The question for `object_name` under template `id`.
    pub fn render(&self, id: &str, object_name: &str) -> Result<String> {
        let template = self
            .get(id)
            .ok_or_else(|| Error::invalid(format!("unknown prompt template `{id}`")))?;
        Ok(template.replace("{object}", object_name))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}
