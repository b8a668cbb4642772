use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Output directory whose planned files were checked for collisions before
/// any work started.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    /// Creates `dir` if needed. Fails if any of `files` already exists,
    /// unless `force` is set.
    pub fn prepare<S: AsRef<str>>(dir: &Path, force: bool, files: &[S]) -> Result<Output> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        if !force {
            let existing: Vec<&str> = files
                .iter()
                .map(AsRef::as_ref)
                .filter(|f| dir.join(f).exists())
                .collect();
            if !existing.is_empty() {
                bail!(
                    "refusing to overwrite {} in {} (pass --force)",
                    existing.join(", "),
                    dir.display()
                );
            }
        }
        Ok(Output { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> opclim_core::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        body(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
