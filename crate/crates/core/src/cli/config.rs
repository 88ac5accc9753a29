use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::analyzers::AnalyzerConfig;
use crate::domain::TaskSpec;
use crate::generator::{RemoteGeneratorConfig, RetryPolicy};
use crate::orchestrator::LoopConfig;
use crate::retrieval::{RemoteEmbedderConfig, FALLBACK_DIMENSION};

pub const API_KEY_ENV: &str = "MENDLOOP_API_KEY";
pub const EMBED_KEY_ENV: &str = "MENDLOOP_EMBED_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum GeneratorSelection {
    Replay {
        script: PathBuf,
    },
    Remote {
        endpoint: String,
        #[serde(default)]
        api_key: Option<String>,
        #[serde(default = "default_generator_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_generator_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum EmbedderSelection {
    Hashed {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Remote(RemoteEmbedderConfig),
}

fn default_dimension() -> usize {
    FALLBACK_DIMENSION
}

impl Default for EmbedderSelection {
    fn default() -> Self {
        EmbedderSelection::Hashed {
            dimension: FALLBACK_DIMENSION,
        }
    }
}

/// The `run` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, rename = "loop")]
    pub loop_config: LoopConfig,
    #[serde(default)]
    pub analyzers: AnalyzerConfig,
    pub generator: GeneratorSelection,
    #[serde(default)]
    pub embedder: EmbedderSelection,
    /// JSONL manifest of tasks.
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    pub store: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub probe_tools: bool,
}

fn default_parallelism() -> usize {
    1
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl RunConfig {
    /// Parses the file and resolves relative paths against its directory.
    /// Harness refs default to the corpus directory, SARIF ingest
    /// patterns to the config directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
        config.corpus = resolve(base, &config.corpus);
        config.output_dir = resolve(base, &config.output_dir);
        config.store = resolve(base, &config.store);
        if let GeneratorSelection::Replay { script } = &mut config.generator {
            *script = resolve(base, script);
        }
        let analyzers = &mut config.analyzers;
        analyzers.harness_root = Some(match &analyzers.harness_root {
            Some(root) => resolve(base, root),
            None => config.corpus.parent().map(Path::to_path_buf).unwrap_or_else(|| base.to_path_buf()),
        });
        analyzers.sarif_root = Some(match &analyzers.sarif_root {
            Some(root) => resolve(base, root),
            None => base.to_path_buf(),
        });
        if let Some(root) = &analyzers.workdir_root {
            analyzers.workdir_root = Some(resolve(base, root));
        }
        config.apply_env();
        Ok(config)
    }

    fn apply_env(&mut self) {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if let GeneratorSelection::Remote { api_key, .. } = &mut self.generator {
                *api_key = Some(key);
            }
        }
        if let Ok(key) = std::env::var(EMBED_KEY_ENV) {
            if let EmbedderSelection::Remote(remote) = &mut self.embedder {
                remote.api_key = Some(key);
            }
        }
    }

    /// Startup checks: configs are internally valid and referenced input
    /// files exist.
    pub fn validate(&self) -> Result<(), CliError> {
        self.loop_config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.analyzers
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.parallelism == 0 {
            return Err(CliError::Config("parallelism must be >= 1".into()));
        }
        if !self.corpus.is_file() {
            return Err(CliError::Config(format!("corpus manifest {} not found", self.corpus.display())));
        }
        if let GeneratorSelection::Replay { script } = &self.generator {
            if !script.is_file() {
                return Err(CliError::Config(format!("replay script {} not found", script.display())));
            }
        }
        if let EmbedderSelection::Hashed { dimension: 0 } = self.embedder {
            return Err(CliError::Config("embedder dimension must be > 0".into()));
        }
        Ok(())
    }

    pub fn remote_generator(&self) -> Option<RemoteGeneratorConfig> {
        match &self.generator {
            GeneratorSelection::Remote {
                endpoint,
                api_key,
                timeout_secs,
                retry,
            } => Some(RemoteGeneratorConfig {
                endpoint: endpoint.clone(),
                api_key: api_key.clone(),
                timeout_secs: *timeout_secs,
                retry: retry.clone(),
            }),
            GeneratorSelection::Replay { .. } => None,
        }
    }
}

/// Reads a JSONL corpus manifest; blank lines are skipped.
pub fn load_corpus(path: &Path) -> Result<Vec<TaskSpec>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<TaskSpec>(line)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_with_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"generator":{"backend":"replay","script":"script.json"},
                "corpus":"tasks/corpus.jsonl","output_dir":"out","store":"memory.jsonl"}"#,
        )
        .unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.corpus, dir.path().join("tasks/corpus.jsonl"));
        assert_eq!(config.analyzers.harness_root, Some(dir.path().join("tasks")));
        assert_eq!(config.loop_config.max_repairs, 3);
        assert_eq!(config.embedder, EmbedderSelection::default());
        // The corpus does not exist yet.
        assert!(matches!(config.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_backend_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"generator":{"backend":"magic"},"corpus":"c","output_dir":"o","store":"s"}"#).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(CliError::Config(_))));
    }

    #[test]
    fn corpus_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        fs::write(
            &path,
            "{\"task_id\":\"a\",\"description\":\"x\",\"language_tag\":\"c\",\"model_id\":\"m\"}\n\n",
        )
        .unwrap();
        assert_eq!(load_corpus(&path).unwrap().len(), 1);
        fs::write(&path, "{\"task_id\":\"a\"}\n").unwrap();
        assert!(load_corpus(&path).is_err());
    }
}
