use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::kernel::SimTime;

/// One line of the JSONL event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: SimTime,
    pub node: String,
    pub kind: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, Value>,
}

impl EventRecord {
    pub fn attr(&self, key: &str) -> Option<&Value> {
        self.attrs.get(key)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// In-memory event log with an optional streaming sink.
#[derive(Default)]
pub struct EventLog {
    records: Vec<EventRecord>,
    sink: Option<Box<dyn Write + Send>>,
    sink_error: Option<io::Error>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog").field("records", &self.records.len()).field("streaming", &self.sink.is_some()).finish()
    }
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: EventRecord) {
        if let Some(sink) = &mut self.sink {
            if let Err(e) = writeln!(sink, "{}", record.to_line()) {
                self.sink_error.get_or_insert(e);
                self.sink = None;
            }
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Write everything logged so far to `sink`, then keep streaming to it.
    pub fn stream_to(&mut self, mut sink: Box<dyn Write + Send>) -> io::Result<()> {
        for r in &self.records {
            writeln!(sink, "{}", r.to_line())?;
        }
        self.sink = Some(sink);
        Ok(())
    }

    /// Flush the sink and report the first write error, if any.
    pub fn finish(&mut self) -> io::Result<()> {
        if let Some(e) = self.sink_error.take() {
            return Err(e);
        }
        match &mut self.sink {
            Some(s) => s.flush(),
            None => Ok(()),
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| r.to_line() + "\n").collect()
    }
}
