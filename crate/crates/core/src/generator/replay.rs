use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{Generator, GeneratorError, GeneratorRequest};
use crate::domain::Provenance;

/// Scripted completions keyed by `(task_id, attempt_index)`.
///
/// On disk this is a JSON object mapping `"task_id/attempt_index"` to the
/// completion text. The task id may itself contain `/`; the attempt index
/// is whatever follows the last one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayScript {
    entries: HashMap<(String, u32), String>,
}

impl ReplayScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, task_id: impl Into<String>, attempt_index: u32, completion: impl Into<String>) {
        self.entries.insert((task_id.into(), attempt_index), completion.into());
    }

    pub fn get(&self, task_id: &str, attempt_index: u32) -> Option<&str> {
        self.entries
            .get(&(task_id.to_string(), attempt_index))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self, GeneratorError> {
        let raw: HashMap<String, String> =
            serde_json::from_str(text).map_err(|e| GeneratorError::InvalidScript(e.to_string()))?;
        let mut script = Self::new();
        for (key, completion) in raw {
            let (task_id, attempt) = key
                .rsplit_once('/')
                .ok_or_else(|| GeneratorError::InvalidScript(format!("key `{key}` is not task_id/attempt")))?;
            let attempt: u32 = attempt
                .parse()
                .map_err(|_| GeneratorError::InvalidScript(format!("key `{key}` has a non-numeric attempt")))?;
            if task_id.is_empty() {
                return Err(GeneratorError::InvalidScript(format!("key `{key}` has an empty task id")));
            }
            script.insert(task_id, attempt, completion);
        }
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeneratorError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| GeneratorError::InvalidScript(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Serialized form with keys in sorted order.
    pub fn to_json(&self) -> String {
        let map: std::collections::BTreeMap<String, &String> = self
            .entries
            .iter()
            .map(|((t, a), c)| (format!("{t}/{a}"), c))
            .collect();
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }
}

/// Returns scripted completions verbatim.
#[derive(Debug, Clone)]
pub struct ReplayGenerator {
    script: ReplayScript,
}

impl ReplayGenerator {
    pub fn new(script: ReplayScript) -> Self {
        Self { script }
    }
}

impl Generator for ReplayGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, GeneratorError> {
        self.script
            .get(&request.task_id, request.attempt_index)
            .map(str::to_string)
            .ok_or_else(|| GeneratorError::ScriptMiss {
                task_id: request.task_id.clone(),
                attempt_index: request.attempt_index,
            })
    }

    fn provenance(&self) -> Provenance {
        Provenance::Replayed
    }
}
