//! Orchestration for the supermix experiments: configuration, the staged
//! pipeline and its manifest.

pub mod config;
pub mod formats;
pub mod pipeline;

use std::path::Path;

use config::{preset_text, validate_config, ExperimentConfig, Violation};

/// Loads a config from a file path, or from a preset name when no such file
/// exists.
pub fn load_config(arg: &str) -> Result<ExperimentConfig, Vec<Violation>> {
    let path = Path::new(arg);
    if path.is_file() {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            vec![Violation {
                field: "<file>".into(),
                message: format!("{}: {e}", path.display()),
            }]
        })?;
        return validate_config(&raw);
    }
    match preset_text(arg) {
        Some(t) => validate_config(t),
        None => Err(vec![Violation {
            field: "<file>".into(),
            message: format!("`{arg}` is neither a readable file nor a preset name"),
        }]),
    }
}
