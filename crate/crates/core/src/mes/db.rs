//! Shop and station databases: in-memory maps with an append-only journal.

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::petri::{Time, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatabaseRecord {
    pub key: String,
    pub value: Value,
    pub last_updated: Time,
    /// Sequence number of the write; breaks ties between writes at one time.
    pub stamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub at: Time,
    pub stamp: u64,
    pub key: String,
    pub value: Value,
    /// False when an older write arrived after a newer one and lost.
    pub applied: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    records: BTreeMap<String, DatabaseRecord>,
    journal: Vec<JournalEntry>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    /// The record under `key`, or `None` (the negative result).
    pub fn query(&self, key: &str) -> Option<&DatabaseRecord> {
        self.records.get(key)
    }

    /// Last writer wins by `(at, stamp)`; every write is journaled.
    pub fn write(&mut self, key: &str, value: Value, at: Time, stamp: u64) -> bool {
        let applied = self
            .records
            .get(key)
            .is_none_or(|r| (r.last_updated, r.stamp) <= (at, stamp));
        if applied {
            self.records.insert(
                key.to_string(),
                DatabaseRecord {
                    key: key.to_string(),
                    value: value.clone(),
                    last_updated: at,
                    stamp,
                },
            );
        }
        self.journal.push(JournalEntry {
            at,
            stamp,
            key: key.to_string(),
            value,
            applied,
        });
        applied
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &DatabaseRecord> {
        self.records.values()
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    /// One line per write: `at stamp key value`.
    pub fn write_journal(&self, mut w: impl Write) -> io::Result<()> {
        for e in &self.journal {
            writeln!(
                w,
                "{} {} {} {}{}",
                e.at,
                e.stamp,
                e.key,
                e.value,
                if e.applied { "" } else { " # superseded" }
            )?;
        }
        Ok(())
    }
}
