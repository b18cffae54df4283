//! Output layout, atomic file writes, and fingerprinting for run metadata.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gridfreq_core::model::Building;

/// Artifact locations under one output directory.
#[derive(Debug, Clone)]
pub struct Paths {
    pub out_dir: PathBuf,
}

impl Paths {
    pub fn new(out_dir: PathBuf) -> Self {
        Paths { out_dir }
    }

    pub fn frame(&self, b: Building) -> PathBuf {
        self.out_dir.join(format!("frame_{}.csv", b.id()))
    }

    pub fn dataset(&self, b: Building) -> PathBuf {
        self.out_dir.join(format!("dataset_{}.bin", b.id()))
    }

    pub fn scaler(&self, b: Building) -> PathBuf {
        self.out_dir.join(format!("scaler_{}.json", b.id()))
    }

    pub fn model(&self, b: Building) -> PathBuf {
        self.out_dir.join(format!("model_{}.clstm", b.id()))
    }

    pub fn curve(&self, b: Building) -> PathBuf {
        self.out_dir.join(format!("curve_{}.csv", b.id()))
    }

    pub fn report(&self, scope: &str) -> PathBuf {
        self.out_dir.join(format!("report_{}.txt", scope))
    }

    pub fn pred(&self, scope: &str) -> PathBuf {
        self.out_dir.join(format!("pred_{}.csv", scope))
    }

    pub fn combined_curves(&self) -> PathBuf {
        self.out_dir.join("curves_combined.csv")
    }
}

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a half-written artifact.
pub fn atomic_write_with(
    path: &Path,
    write: impl FnOnce(&Path) -> anyhow::Result<()>,
) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    atomic_write_with(path, |tmp| {
        std::fs::write(tmp, text)?;
        Ok(())
    })
}

/// FNV-1a, 64-bit. Used to fingerprint configs and data files in metadata.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn file_fingerprint(path: &Path) -> Result<u64> {
    let bytes =
        std::fs::read(path).with_context(|| format!("fingerprinting {}", path.display()))?;
    Ok(fnv1a64(&bytes))
}
