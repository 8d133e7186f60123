//! Append-only record of every message the source sent or received.
//!
//! ```text
//! # model=clock
//! # seed=7
//! 2026-10-16T09:12:44.120331Z > type=lambda v=1 trial=0 wing=A payload=theta:...
//! 2026-10-16T09:12:44.120502Z < type=outcome v=1 trial=0 wing=A payload=sign:+1;setting:i0
//! # status=complete
//! ```
//!
//! Entries keep the raw message text so the audit sees exactly what went over the
//! wire, including anything a strict parser would reject.

use std::fmt;
use std::path::Path;

use chrono::{SecondsFormat, Utc};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Source to wing.
    Sent,
    /// Wing to source.
    Received,
}

impl Direction {
    pub fn symbol(self) -> char {
        match self {
            Direction::Sent => '>',
            Direction::Received => '<',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub timestamp: String,
    pub direction: Direction,
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    Incomplete(String),
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Complete => f.write_str("complete"),
            RunStatus::Incomplete(why) => write!(f, "incomplete reason={why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLog {
    pub meta: Vec<(String, String)>,
    pub entries: Vec<LogEntry>,
    pub status: RunStatus,
}

impl Default for RunLog {
    fn default() -> Self {
        RunLog::new()
    }
}

impl RunLog {
    /// A fresh log is incomplete until [`RunLog::mark_complete`] is called.
    pub fn new() -> Self {
        RunLog {
            meta: Vec::new(),
            entries: Vec::new(),
            status: RunStatus::Incomplete("not finished".into()),
        }
    }

    pub fn push_meta(&mut self, key: &str, value: impl fmt::Display) {
        let value = value.to_string().replace('\n', " ");
        self.meta.push((key.to_string(), value));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn record(&mut self, direction: Direction, line: &str) {
        self.entries.push(LogEntry {
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true),
            direction,
            line: line.trim_end().to_string(),
        });
    }

    pub fn mark_complete(&mut self) {
        self.status = RunStatus::Complete;
    }

    pub fn mark_incomplete(&mut self, reason: impl Into<String>) {
        let reason: String = reason.into();
        self.status = RunStatus::Incomplete(reason.replace(char::is_whitespace, "_"));
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}={v}\n"));
        }
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {}\n",
                e.timestamp,
                e.direction.symbol(),
                e.line
            ));
        }
        out.push_str(&format!("# status={}\n", self.status));
        out
    }

    /// Parses a log. A missing status line means the writer died mid-run, so the log
    /// is read as incomplete.
    pub fn parse(text: &str) -> Result<Self> {
        let mut log = RunLog::new();
        log.status = RunStatus::Incomplete("no status line".into());
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_start();
                let (k, v) = rest.split_once('=').ok_or_else(|| {
                    Error::protocol(format!("log line {}: bad header {line:?}", lineno + 1))
                })?;
                if k == "status" {
                    log.status = match v.split_once(' ') {
                        None if v == "complete" => RunStatus::Complete,
                        Some(("incomplete", why)) => RunStatus::Incomplete(
                            why.strip_prefix("reason=").unwrap_or(why).to_string(),
                        ),
                        None if v == "incomplete" => RunStatus::Incomplete(String::new()),
                        _ => {
                            return Err(Error::protocol(format!(
                                "log line {}: bad status {v:?}",
                                lineno + 1
                            )))
                        }
                    };
                } else {
                    log.meta.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            let (ts, dir, msg) = match (parts.next(), parts.next(), parts.next()) {
                (Some(ts), Some(dir), Some(msg)) => (ts, dir, msg),
                _ => {
                    return Err(Error::protocol(format!(
                        "log line {}: truncated entry",
                        lineno + 1
                    )))
                }
            };
            let direction = match dir {
                ">" => Direction::Sent,
                "<" => Direction::Received,
                _ => {
                    return Err(Error::protocol(format!(
                        "log line {}: bad direction {dir:?}",
                        lineno + 1
                    )))
                }
            };
            log.entries.push(LogEntry {
                timestamp: ts.to_string(),
                direction,
                line: msg.to_string(),
            });
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
