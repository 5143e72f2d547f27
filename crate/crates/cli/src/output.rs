//! Atomic file output for command results.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

pub struct Output {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: PathBuf, csv: bool, json: bool) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Output {
            dir,
            csv,
            json,
            written: Vec::new(),
        })
    }

    /// Writes through a temporary file in the target directory and renames
    /// it into place, so readers never see a partial file.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        let path = self.dir.join(name);
        let tmp = NamedTempFile::new_in(&self.dir).with_context(|| format!("cannot write {}", path.display()))?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
            w.flush()?;
        }
        tmp.persist(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
