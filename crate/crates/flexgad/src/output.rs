//! All-or-nothing output directories.
//!
//! Files are written into a hidden staging directory next to their final
//! location and moved into place by [`Staged::commit`]. Dropping an
//! uncommitted `Staged` deletes everything it wrote, including the output
//! directory itself when this run created it.

use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::error::{IoContext, Result};

pub struct Staged {
    dir: PathBuf,
    staging: Option<TempDir>,
    created_dir: bool,
    files: Vec<String>,
}

impl Staged {
    pub fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).at(dir)?;
        let staging = tempfile::Builder::new()
            .prefix(".flexgad-partial-")
            .tempdir_in(dir)
            .at(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            staging: Some(staging),
            created_dir,
            files: Vec::new(),
        })
    }

    /// Staging path for the output file `name`; registers it for commit.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.staging.as_ref().expect("not committed").path().join(name)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Moves every staged file into the output directory. On a failed move
    /// the files already moved are removed again.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let staging = self.staging.take().expect("not committed");
        let mut moved = Vec::new();
        for name in &self.files {
            let from = staging.path().join(name);
            let to = self.dir.join(name);
            if let Err(e) = std::fs::rename(&from, &to) {
                for p in &moved {
                    let _ = std::fs::remove_file(p);
                }
                self.staging = Some(staging);
                return Err(e).at(&from);
            }
            moved.push(to);
        }
        staging.close().at(&self.dir)?;
        self.created_dir = false;
        Ok(moved)
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if let Some(s) = self.staging.take() {
            let _ = s.close();
            if self.created_dir {
                // only succeeds when nothing else landed there
                let _ = std::fs::remove_dir(&self.dir);
            }
        }
    }
}
