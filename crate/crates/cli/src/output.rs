//! Artifact writing. Every file lands directly in one output directory and is
//! recorded in `manifest.csv` with the seed that produced it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use darcy_core::field::{field_write, Field};

use crate::error::{CliError, CliResult, ErrorKind};

pub const MANIFEST: &str = "manifest.csv";

pub struct Output {
    dir: PathBuf,
    entries: Vec<(String, Option<u64>)>,
}

impl Output {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&mut self, name: &str, seed: Option<u64>) -> PathBuf {
        debug_assert!(!name.contains('/') && !name.contains('\\') && name != MANIFEST);
        self.entries.push((name.to_string(), seed));
        self.dir.join(name)
    }

    /// Writes a text artifact through `body`.
    pub fn text(
        &mut self,
        name: &str,
        seed: Option<u64>,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> CliResult<()> {
        let path = self.path(name, seed);
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_error(&path, e))
    }

    pub fn field(&mut self, name: &str, seed: Option<u64>, f: &Field) -> CliResult<()> {
        let path = self.path(name, seed);
        field_write(f, &path).map_err(CliError::from)
    }

    pub fn finish(self) -> CliResult<Vec<(String, Option<u64>)>> {
        let path = self.dir.join(MANIFEST);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(["artifact", "seed"]).map_err(|e| csv_error(&path, e))?;
        for (name, seed) in &self.entries {
            let seed = seed.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([name.as_str(), seed.as_str()])
                .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| io_error(&path, e))?;
        Ok(self.entries)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::plain(ErrorKind::Config, format!("{}: {e}", path.display()))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::plain(ErrorKind::Config, format!("{}: {e}", path.display()))
}
