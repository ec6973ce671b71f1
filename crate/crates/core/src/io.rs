//! File plumbing shared by the library and the command-line front end:
//! timestamp formatting, atomic writes and content fingerprints.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Accepts `YYYY-MM-DDTHH:MM:SS` or the same with a space separator.
pub fn parse_timestamp(s: &str) -> std::result::Result<NaiveDateTime, String> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .map_err(|e| format!("bad timestamp `{s}`: {e}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_fingerprint(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Writes to a temporary sibling and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Provenance record stored next to every CSV artifact as `<file>.meta.json`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub format_version: u32,
    pub kind: String,
    pub config_hash: String,
    /// sha256 of the artifact itself.
    pub fingerprint: String,
    /// Upstream artifact name -> sha256.
    pub upstream: std::collections::BTreeMap<String, String>,
}

pub const META_FORMAT_VERSION: u32 = 1;

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    s.into()
}

/// Writes `bytes` to `path` and its provenance sidecar.
pub fn write_artifact(
    path: &Path,
    bytes: &[u8],
    kind: &str,
    config_hash: &str,
    upstream: std::collections::BTreeMap<String, String>,
) -> Result<ArtifactMeta> {
    atomic_write(path, bytes)?;
    let meta = ArtifactMeta {
        format_version: META_FORMAT_VERSION,
        kind: kind.to_string(),
        config_hash: config_hash.to_string(),
        fingerprint: sha256_hex(bytes),
        upstream,
    };
    write_json(&meta_path(path), &meta)?;
    Ok(meta)
}

/// Reads the sidecar and checks that the artifact still matches it.
pub fn verify_artifact(path: &Path) -> Result<ArtifactMeta> {
    let meta: ArtifactMeta = read_json(&meta_path(path))
        .map_err(|e| Error::Lineage(format!("{}: missing or unreadable metadata ({e})", path.display())))?;
    if meta.format_version != META_FORMAT_VERSION {
        return Err(Error::Lineage(format!(
            "{}: metadata version {} unsupported",
            path.display(),
            meta.format_version
        )));
    }
    let actual = file_fingerprint(path)?;
    if actual != meta.fingerprint {
        return Err(Error::Lineage(format!("{}: content does not match recorded fingerprint", path.display())));
    }
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_roundtrip() {
        let t = parse_timestamp("2021-08-02T13:45:00").unwrap();
        assert_eq!(format_timestamp(&t), "2021-08-02T13:45:00");
        assert_eq!(parse_timestamp("2021-08-02 13:45:00").unwrap(), t);
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn artifact_roundtrip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_artifact(&p, b"x,y\n1,2\n", "test", "abc", Default::default()).unwrap();
        let meta = verify_artifact(&p).unwrap();
        assert_eq!(meta.config_hash, "abc");
        std::fs::write(&p, b"x,y\n1,3\n").unwrap();
        assert!(matches!(verify_artifact(&p), Err(Error::Lineage(_))));
    }
}
