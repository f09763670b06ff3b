//! Small file helpers shared by the writers: atomic replacement and artifact headers.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `contents` to `path` through a sibling temp file and a rename, so readers
/// never observe a half-written artifact.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Provenance carried as a `#` comment line at the top of every CSV artifact.
/// The loaders skip comment lines, so headed files still re-parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArtifactHeader {
    pub seed: u64,
    pub config_hash: u64,
}

impl ArtifactHeader {
    pub fn line(&self) -> String {
        format!("# seed={} config_hash={:016x}\n", self.seed, self.config_hash)
    }
}

/// Prepends the optional header to a CSV body.
pub fn with_header(header: Option<ArtifactHeader>, body: String) -> String {
    match header {
        Some(h) => h.line() + &body,
        None => body,
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
