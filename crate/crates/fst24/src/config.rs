use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use fst24_core::trainer::TrainConfig;

/// Reads a training config. Missing fields take their defaults; unknown
/// fields are rejected.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: TrainConfig =
        serde_json::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))?;
    cfg.validate()
        .with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

pub fn save_config(path: &Path, cfg: &TrainConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write config {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let cfg = TrainConfig {
            steps: 123,
            seed: 9,
            ..TrainConfig::default()
        };
        save_config(&path, &cfg).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg);

        fs::write(&path, r#"{"steps": 50, "decay": {"lambda": 0.01}}"#).unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.steps, 50);
        assert_eq!(cfg.decay.lambda, 0.01);
        assert_eq!(cfg.decay.refresh_period, 40);
        assert_eq!(cfg.d, 64);
    }

    #[test]
    fn errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.json");
        let err = format!("{:#}", load_config(&missing).unwrap_err());
        assert!(err.contains("nope.json"), "{err}");

        let bad = dir.path().join("bad.json");
        fs::write(&bad, r#"{"stepz": 5}"#).unwrap();
        let err = format!("{:#}", load_config(&bad).unwrap_err());
        assert!(err.contains("bad.json") && err.contains("stepz"), "{err}");

        fs::write(&bad, r#"{"d": 6}"#).unwrap();
        assert!(format!("{:#}", load_config(&bad).unwrap_err()).contains("multiple of 4"));
    }
}
