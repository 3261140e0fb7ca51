//! Run manifest: the parameters that produced a batch plus a SHA-256
//! content hash per output file, for corruption detection and
//! reproducibility checks.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";

pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `manifest.txt` in `dir`. Entries are sorted by name so the
/// manifest is byte-identical however the batch was scheduled.
pub fn write_manifest(
    dir: &Path,
    parameters: &[String],
    mut entries: Vec<ManifestEntry>,
) -> Result<()> {
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    let mut text = String::from("[parameters]\n");
    for line in parameters {
        text.push_str(line);
        text.push('\n');
    }
    text.push_str("\n[files]\n");
    for e in &entries {
        text.push_str(&format!("{}  sha256:{}  bytes:{}\n", e.name, e.sha256, e.bytes));
    }
    std::fs::write(dir.join(MANIFEST_NAME), text)
        .map_err(|e| CliError::Io(format!("cannot write manifest: {e}")))
}

/// Parses `manifest.txt` and verifies every listed file against its hash.
/// Returns the verified file names in manifest order.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut names = Vec::new();
    let mut in_files = false;
    for line in text.lines() {
        let line = line.trim();
        if line == "[files]" {
            in_files = true;
            continue;
        }
        if line.starts_with('[') {
            in_files = false;
            continue;
        }
        if !in_files || line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(sha), Some(len)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(CliError::Io(format!("malformed manifest line: `{line}`")));
        };
        let sha = sha.strip_prefix("sha256:").ok_or_else(|| {
            CliError::Io(format!("malformed manifest hash field: `{line}`"))
        })?;
        let expected_len: usize = len
            .strip_prefix("bytes:")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Io(format!("malformed manifest length field: `{line}`")))?;
        let bytes = std::fs::read(dir.join(name))
            .map_err(|e| CliError::Io(format!("manifest names missing file {name}: {e}")))?;
        if bytes.len() != expected_len {
            return Err(CliError::Io(format!(
                "{name}: length {} does not match manifest ({expected_len})",
                bytes.len()
            )));
        }
        let actual = sha256_hex(&bytes);
        if actual != sha {
            return Err(CliError::Io(format!(
                "{name}: content hash mismatch (file corrupt or regenerated): \
                 manifest {sha}, actual {actual}"
            )));
        }
        names.push(name.to_string());
    }
    if names.is_empty() {
        return Err(CliError::Io(format!(
            "{} lists no files",
            path.display()
        )));
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption_detection() {
        let dir = std::env::temp_dir().join(format!("ifg_manifest_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let payload = b"hello interferograms".to_vec();
        std::fs::write(dir.join("a.bin"), &payload).unwrap();
        let entries = vec![ManifestEntry {
            name: "a.bin".into(),
            sha256: sha256_hex(&payload),
            bytes: payload.len(),
        }];
        write_manifest(&dir, &["k = v".into()], entries).unwrap();
        assert_eq!(verify_manifest(&dir).unwrap(), vec!["a.bin".to_string()]);

        std::fs::write(dir.join("a.bin"), b"hello Interferograms").unwrap();
        assert!(verify_manifest(&dir).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
