//! Setting resolution: flags > environment variables > config file.
//!
//! Endpoints (labeling, embedding) deliberately never come from the config
//! file — they are per-invocation wiring, not durable defaults.

use std::path::Path;

use landmark_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Landmark service base URL used when --remote is absent.
    pub remote: Option<String>,
    /// Default HTTP timeout in seconds.
    pub timeout_s: Option<f64>,
    /// Default sweep worker threads.
    pub parallel: Option<usize>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    toml::from_str(&text)
        .map_err(|e| Error::Parse(format!("config file {}: {e}", path.display())))
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

pub fn resolve_remote(flag: &Option<String>, file: &FileConfig) -> Option<String> {
    flag.clone().or_else(|| file.remote.clone())
}

pub fn resolve_timeout(flag: Option<f64>, file: &FileConfig) -> Result<Option<f64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Some(raw) = env_var("HTTP_TIMEOUT_S") {
        let value: f64 = raw.parse().map_err(|_| {
            Error::InvalidInput(format!("HTTP_TIMEOUT_S must be a number of seconds, got '{raw}'"))
        })?;
        return Ok(Some(value));
    }
    Ok(file.timeout_s)
}

/// Endpoint resolution: flag, then the named environment variable.
pub fn resolve_endpoint(flag: Option<String>, var: &str) -> Option<String> {
    flag.or_else(|| env_var(var))
}

pub fn resolve_parallel(flag: Option<usize>, file: &FileConfig) -> usize {
    flag.or(file.parallel).unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_config_file_is_default() {
        assert_eq!(load(None).unwrap(), FileConfig::default());
    }

    #[test]
    fn unknown_config_keys_are_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("landmark.toml");
        std::fs::write(&path, "remot = \"http://x\"\n").unwrap();
        match load(Some(&path)) {
            Err(Error::Parse(msg)) => assert!(msg.contains("remot"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn flags_beat_file_values() {
        let file = FileConfig {
            remote: Some("http://file".into()),
            timeout_s: Some(9.0),
            parallel: Some(7),
        };
        assert_eq!(
            resolve_remote(&Some("http://flag".into()), &file).unwrap(),
            "http://flag"
        );
        assert_eq!(resolve_remote(&None, &file).unwrap(), "http://file");
        assert_eq!(resolve_timeout(Some(1.0), &file).unwrap(), Some(1.0));
        assert_eq!(resolve_parallel(Some(2), &file), 2);
        assert_eq!(resolve_parallel(None, &file), 7);
    }
}
