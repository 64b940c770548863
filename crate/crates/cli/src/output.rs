use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use specfilter_core::{write_tensor, Matrix};

use crate::UsageError;

/// Writes outputs, refusing to replace existing files unless forced.
pub struct Outputs {
    force: bool,
}

impl Outputs {
    pub fn new(force: bool) -> Self {
        Outputs { force }
    }

    /// Creates `dir` if needed.
    pub fn dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
    }

    /// Fails if any target already exists and `--force` was not given.
    pub fn claim<'a>(&self, paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
        if self.force {
            return Ok(());
        }
        for p in paths {
            if p.exists() {
                return Err(UsageError(format!("{} exists; pass --force to overwrite", p.display())).into());
            }
        }
        Ok(())
    }

    pub fn tensor(&self, path: &Path, m: &Matrix) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            self.dir(parent)?;
        }
        write_tensor(path, m)?;
        Ok(())
    }

    pub fn text(&self, path: &Path, body: &str) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            self.dir(parent)?;
        }
        fs::write(path, body).with_context(|| format!("writing {}", path.display()))
    }
}
