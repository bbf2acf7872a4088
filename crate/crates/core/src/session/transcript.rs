use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::events::SessionEvent;

use super::SessionError;

static COUNTER: AtomicU64 = AtomicU64::new(0);

/// Append-only JSON-lines transcript. Every line is flushed as written.
#[derive(Debug)]
pub struct TranscriptWriter {
    path: PathBuf,
    file: File,
    lines: u64,
}

impl TranscriptWriter {
    /// Creates a new, uniquely named file in `dir`.
    pub fn create(dir: &Path) -> Result<Self, SessionError> {
        let log_dir_error = |source| SessionError::LogDir {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(log_dir_error)?;
        let name = format!(
            "session-{}-{}-{}.jsonl",
            chrono::Utc::now().format("%Y%m%dT%H%M%S"),
            std::process::id(),
            COUNTER.fetch_add(1, Ordering::SeqCst)
        );
        let path = dir.join(name);
        let file = File::options()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(log_dir_error)?;
        Ok(Self {
            path,
            file,
            lines: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn append(&mut self, event: &SessionEvent) -> std::io::Result<()> {
        let mut line = serde_json::to_string(event).map_err(std::io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.lines += 1;
        Ok(())
    }
}

/// Reads a transcript. A torn last line, as left by a crash mid-write, is
/// ignored; any other malformed line is an error.
pub fn read_transcript(path: &Path) -> Result<Vec<SessionEvent>, SessionError> {
    let io = |source| SessionError::Io {
        context: format!("reading {}", path.display()),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(io)?;
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => events.push(e),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => {
                return Err(SessionError::Scenario {
                    origin: path.display().to_string(),
                    message: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(events)
}

/// The transcript text with every wall_time blanked.
pub fn mask_wall_time(text: &str) -> String {
    text.lines()
        .map(|line| match serde_json::from_str::<SessionEvent>(line) {
            Ok(mut e) => {
                e.wall_time = String::new();
                serde_json::to_string(&e).expect("event serializes")
            }
            Err(_) => line.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
