use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::{CliError, CliResult};

/// Files of one command invocation, written atomically in one batch.
#[derive(Debug, Default)]
pub struct OutputDir {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputDir {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_text(&mut self, name: &str, text: String) {
        self.add(name, text.into_bytes());
    }

    /// Creates `dir` and writes every file through a temporary name.
    pub fn commit(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            let tmp = dir.join(format!(".{name}.tmp"));
            let mut f = fs::File::create(&tmp).map_err(|e| io_error(&tmp, e))?;
            f.write_all(&bytes).map_err(|e| io_error(&tmp, e))?;
            f.sync_all().map_err(|e| io_error(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| io_error(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub(crate) fn csv_error(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv: {e}"))
}

pub(crate) fn csv_bytes<F>(write: F) -> CliResult<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).map_err(csv_error)?;
    Ok(buf)
}
