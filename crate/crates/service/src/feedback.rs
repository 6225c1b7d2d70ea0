//! Append-only, line-delimited JSON log of reviewer verdicts.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use detox_core::Language;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    WrongLabel,
    BadRewrite,
}

/// What a client posts; the log assigns `id` and `timestamp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSubmission {
    pub language: String,
    pub input_text: String,
    pub system_output: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub corrected_text: Option<String>,
    #[serde(default)]
    pub annotator_handle: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub id: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub language: Language,
    pub input_text: String,
    pub system_output: String,
    pub verdict: Verdict,
    pub corrected_text: Option<String>,
    pub annotator_handle: Option<String>,
}

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("{0}")]
    Validation(String),
    #[error("feedback log {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FeedbackSubmission {
    pub fn validate(&self) -> Result<Language, FeedbackError> {
        let language: Language = self
            .language
            .parse()
            .map_err(|e: detox_core::DetoxError| FeedbackError::Validation(e.to_string()))?;
        if self.input_text.trim().is_empty() {
            return Err(FeedbackError::Validation("input_text is empty".into()));
        }
        let corrected = self.corrected_text.as_deref().map(str::trim).unwrap_or("");
        if self.verdict == Verdict::BadRewrite && corrected.is_empty() {
            return Err(FeedbackError::Validation(
                "bad_rewrite requires corrected_text".into(),
            ));
        }
        Ok(language)
    }
}

struct Appender {
    file: File,
    next_id: u64,
}

/// Serializes writers; a record is flushed to disk before its id is returned.
pub struct FeedbackLog {
    path: PathBuf,
    appender: Mutex<Appender>,
}

impl FeedbackLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, FeedbackError> {
        let path = path.into();
        let storage = |source| FeedbackError::Storage {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(storage)?;
        let mut max_id = 0;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line).map_err(storage)? == 0 {
                break;
            }
            // Lines that fail to parse (e.g. a torn final write) are left in place.
            if let Ok(record) = serde_json::from_str::<FeedbackRecord>(line.trim_end()) {
                max_id = max_id.max(record.id);
            }
        }
        // A torn last line must not swallow the next record.
        let len = file.metadata().map_err(storage)?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(storage)?;
            file.read_exact(&mut last).map_err(storage)?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(storage)?;
            }
        }
        Ok(FeedbackLog {
            path,
            appender: Mutex::new(Appender {
                file,
                next_id: max_id + 1,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, submission: FeedbackSubmission) -> Result<FeedbackRecord, FeedbackError> {
        let language = submission.validate()?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let mut appender = self.appender.lock().expect("feedback lock");
        let record = FeedbackRecord {
            id: appender.next_id,
            timestamp,
            language,
            input_text: submission.input_text,
            system_output: submission.system_output,
            verdict: submission.verdict,
            corrected_text: submission.corrected_text,
            annotator_handle: submission.annotator_handle,
        };
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let storage = |source| FeedbackError::Storage {
            path: self.path.clone(),
            source,
        };
        appender.file.write_all(line.as_bytes()).map_err(storage)?;
        appender.file.sync_data().map_err(storage)?;
        appender.next_id += 1;
        Ok(record)
    }
}
