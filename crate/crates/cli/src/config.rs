use std::path::{Path, PathBuf};

use pace_core::gateway::BackendConfig;
use pace_core::{Error, Result, RunConfig};
use serde::Deserialize;

pub const BASE_URL_ENV: &str = "PACE_BASE_URL";

/// On-disk configuration. Relative paths are resolved against the file's
/// directory, not the working directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunConfig,
    pub backend: BackendConfig,
    /// JSON file of template overrides.
    pub templates: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config: FileConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.backend.mock_script,
            &mut config.backend.cache_dir,
            &mut config.templates,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => Self::load(p)?,
            None => FileConfig::default(),
        };
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.is_empty() {
                config.backend.base_url = Some(url);
            }
        }
        Ok(config)
    }
}
