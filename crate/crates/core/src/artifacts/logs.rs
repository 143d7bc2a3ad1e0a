use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// 1-based line number.
    pub line: usize,
    pub time: Timestamp,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogFile {
    pub entries: Vec<LogEntry>,
    /// Lines without a leading date-time (continuations, banners).
    pub untimed_lines: usize,
}

/// Leading RFC 3339 token, or a `YYYY-MM-DD HH:MM:SS[.fff]` pair of tokens.
fn split_stamp(line: &str) -> Option<(Timestamp, &str)> {
    let line = line.trim_start_matches('[');
    let first_end = line.find(char::is_whitespace).unwrap_or(line.len());
    let first = line[..first_end].trim_end_matches(']');
    if let Some(t) = Timestamp::parse(first) {
        return Some((t, &line[first_end..]));
    }
    let rest = line[first_end..].trim_start();
    let second_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    let pair = format!("{first} {}", rest[..second_end].trim_end_matches(']'));
    Timestamp::parse(&pair).map(|t| (t, &rest[second_end..]))
}

pub fn parse_log(bytes: &[u8]) -> LogFile {
    let text = String::from_utf8_lossy(bytes);
    let mut out = LogFile::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match split_stamp(line) {
            Some((time, rest)) => out.entries.push(LogEntry { line: i + 1, time, message: rest.trim().to_string() }),
            None => out.untimed_lines += 1,
        }
    }
    out
}
