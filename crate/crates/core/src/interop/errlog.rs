use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::TranslationError;

/// Destination for rejected-payload reports.
pub trait ErrorSink: Send + Sync {
    fn record(&self, error: &TranslationError);
}

/// Keeps errors in memory; used by tests and the CLI.
#[derive(Debug, Default)]
pub struct MemoryErrorLog {
    entries: Mutex<Vec<TranslationError>>,
}

impl MemoryErrorLog {
    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<TranslationError> {
        self.entries.lock().unwrap().clone()
    }
}

impl ErrorSink for MemoryErrorLog {
    fn record(&self, error: &TranslationError) {
        self.entries.lock().unwrap().push(error.clone());
    }
}

/// Append-only text log, one serialized [`TranslationError`] per line.
#[derive(Debug)]
pub struct FileErrorLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl FileErrorLog {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Reads back every complete entry; a torn trailing line is skipped.
    pub fn read_all(path: &Path) -> io::Result<Vec<TranslationError>> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if let Ok(entry) = serde_json::from_str(&line) {
                out.push(entry);
            }
        }
        Ok(out)
    }
}

impl ErrorSink for FileErrorLog {
    fn record(&self, error: &TranslationError) {
        let mut line = error.to_log_line();
        line.push('\n');
        let mut file = self.file.lock().unwrap();
        // A failing error log must not take the pipeline down with it.
        if let Err(e) = file.write_all(line.as_bytes()) {
            eprintln!("error log {}: {e}", self.path.display());
        }
    }
}
