//! Simulation traces: one JSON object per line, `{t, node, event, block_hash,
//! height, details}`, plus a SHA-256 digest of the serialized bytes.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::hashcore::{sha256, Digest256};

/// Node label used for records that belong to the whole run.
pub const GLOBAL: &str = "*";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// First record: the full scenario and the genesis hash.
    Scenario,
    /// A node produced a block.
    Propose,
    /// A node validated and stored a delivered block.
    Accept,
    Reject,
    /// A block buffered until its parent arrives.
    Orphan,
    /// A node's canonical tip changed.
    Tip,
    Equivocation,
    Slash,
    /// Per-node final state.
    End,
    /// Last record.
    ScenarioEnd,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Scenario => "scenario",
            EventKind::Propose => "propose",
            EventKind::Accept => "accept",
            EventKind::Reject => "reject",
            EventKind::Orphan => "orphan",
            EventKind::Tip => "tip",
            EventKind::Equivocation => "equivocation",
            EventKind::Slash => "slash",
            EventKind::End => "end",
            EventKind::ScenarioEnd => "scenario-end",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub t: f64,
    pub node: String,
    pub event: EventKind,
    pub block_hash: Option<Digest256>,
    pub height: Option<u64>,
    pub details: Value,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimulationTrace {
    pub records: Vec<TraceRecord>,
}

impl SimulationTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    /// Lowercase hex SHA-256 of [`Self::to_ndjson`].
    pub fn digest(&self) -> String {
        hex::encode(sha256(self.to_ndjson().as_bytes()))
    }

    /// Parses NDJSON; blank lines are skipped. Errors carry the 1-based line.
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record =
                serde_json::from_str(line).map_err(|e| TraceError::Corrupt { line: i + 1, message: e.to_string() })?;
            records.push(record);
        }
        Ok(SimulationTrace { records })
    }

    pub fn read(path: &Path) -> Result<Self, TraceError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_ndjson())
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.event == kind)
    }
}
