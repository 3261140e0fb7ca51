//! Subcommand implementations. Each command is a plain function over the
//! parsed configuration so the test suites drive them directly.

pub mod calibrate;
pub mod fit;
pub mod oracle_check;
pub mod render_cmd;
pub mod simulate;

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CliError, Result};

/// Reads a key-value report (the calibration and fit report format):
/// `[section]` headers, `key = value` lines, `#` comments.
pub fn read_report(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Io(format!(
            "cannot read report {}: {e}; run `ionfringe calibrate` first or pass an \
             existing report",
            path.display()
        ))
    })?;
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for raw in text.lines() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            section = name.trim_end_matches(']').trim().to_string();
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            out.insert(
                format!("{section}.{}", k.trim()),
                v.trim().to_string(),
            );
        }
    }
    Ok(out)
}

pub(crate) fn report_f64(map: &BTreeMap<String, String>, key: &str, path: &Path) -> Result<f64> {
    map.get(key)
        .ok_or_else(|| {
            CliError::Io(format!("report {} lacks key `{key}`", path.display()))
        })?
        .parse::<f64>()
        .map_err(|_| CliError::Io(format!("report {} has non-numeric `{key}`", path.display())))
}
