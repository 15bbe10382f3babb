//! Append-only, newline-delimited logs with torn-tail recovery.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, PoisonError};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}, line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// What opening a log found on disk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovered {
    pub lines: Vec<String>,
    /// Bytes cut from an unterminated, unparseable last line.
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub struct LineLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl LineLog {
    /// Opens (creating if needed) and recovers the log.
    ///
    /// Every complete line must satisfy `check`, otherwise the file is
    /// reported corrupt. A final line without a newline is kept if it
    /// passes `check` and cut off if it does not, since that is what a crash
    /// mid-append leaves behind.
    pub fn open(
        path: impl Into<PathBuf>,
        check: impl Fn(&str) -> Result<(), String>,
    ) -> Result<(Self, Recovered), LogError> {
        let path = path.into();
        let io_err = |source| LogError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .write(true)
            .open(&path)
            .map_err(io_err)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;

        let mut recovered = Recovered::default();
        let mut start = 0;
        let mut line_no = 0;
        while start < bytes.len() {
            line_no += 1;
            let (end, terminated) = match bytes[start..].iter().position(|b| *b == b'\n') {
                Some(n) => (start + n, true),
                None => (bytes.len(), false),
            };
            let outcome = std::str::from_utf8(&bytes[start..end])
                .map_err(|e| e.to_string())
                .and_then(|text| check(text).map(|_| text.to_string()));
            match outcome {
                Ok(text) => {
                    recovered.lines.push(text);
                    if !terminated {
                        file.seek(SeekFrom::End(0)).map_err(io_err)?;
                        file.write_all(b"\n").map_err(io_err)?;
                    }
                }
                Err(_) if !terminated => {
                    recovered.truncated_bytes = (end - start) as u64;
                    file.set_len(start as u64).map_err(io_err)?;
                }
                Err(reason) => {
                    return Err(LogError::Corrupt {
                        path,
                        line: line_no,
                        reason,
                    })
                }
            }
            start = end + 1;
        }
        file.sync_data().map_err(io_err)?;
        file.seek(SeekFrom::End(0)).map_err(io_err)?;
        Ok((
            Self {
                path,
                file: Mutex::new(file),
            },
            recovered,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one line. `line` must not contain a newline.
    pub fn append(&self, line: &str) -> io::Result<()> {
        self.append_with(line, || ())
    }

    /// Runs `f` while holding the writer lock, so that a caller can keep
    /// its own bookkeeping in the same order as the file.
    pub fn append_with<T>(&self, line: &str, f: impl FnOnce() -> T) -> io::Result<T> {
        debug_assert!(!line.contains('\n'));
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        let mut file = self.file.lock().unwrap_or_else(PoisonError::into_inner);
        file.write_all(&buf)?;
        file.flush()?;
        Ok(f())
    }
}
