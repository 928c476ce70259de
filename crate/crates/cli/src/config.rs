//! Line-based `key = value` configuration and the header echoed into every
//! output file.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

/// First line of every output file.
pub const HEADER_PREFIX: &str = "# mpedge ";
/// Key of the header line that is allowed to differ between replays.
pub const TIMESTAMP_KEY: &str = "generated_unix";

/// Ordered `key = value` entries; later entries win.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    pub entries: Vec<(String, String)>,
}

impl ConfigMap {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Parses a config file, or the echoed header of an output file.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.starts_with(HEADER_PREFIX) {
            return Ok(Self::from_header(text));
        }
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_entry(line)
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got `{raw}`", i + 1)))?;
            entries.push((k, v));
        }
        Ok(Self { entries })
    }

    /// Entries of the comment block at the top of an output file, minus the
    /// version and timestamp lines.
    pub fn from_header(text: &str) -> Self {
        let entries = text
            .lines()
            .skip(1)
            .map_while(|l| l.strip_prefix('#'))
            .filter_map(|l| split_entry(l.trim()))
            .filter(|(k, _)| k != TIMESTAMP_KEY)
            .collect();
        Self { entries }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

fn split_entry(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once('=')?;
    let k = k.trim();
    if k.is_empty() || k.contains(char::is_whitespace) {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

/// Version line, timestamp line, then one `# key = value` line per entry.
pub fn render_header(entries: &[(String, String)]) -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut out = format!("{HEADER_PREFIX}{}\n# {TIMESTAMP_KEY} = {secs}\n", env!("CARGO_PKG_VERSION"));
    for (k, v) in entries {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out
}

/// Drops the leading comment block of a CSV file.
pub fn strip_comments(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty())
}
