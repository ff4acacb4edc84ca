//! Simulation events and the line-delimited trace format.
//!
//! One event per line, space separated: `time seq kind transition payload`,
//! with `-` for a missing transition and the payload in value syntax. Lines
//! starting with `#` carry run metadata (the end-of-run outcome).

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use super::value::Value;
use super::Time;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Fire,
    TokenCreated,
    TokenConsumed,
    Failure,
    Repair,
    ExternalCommand,
    ExternalNotify,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Fire,
        EventKind::TokenCreated,
        EventKind::TokenConsumed,
        EventKind::Failure,
        EventKind::Repair,
        EventKind::ExternalCommand,
        EventKind::ExternalNotify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Fire => "fire",
            EventKind::TokenCreated => "token-created",
            EventKind::TokenConsumed => "token-consumed",
            EventKind::Failure => "failure",
            EventKind::Repair => "repair",
            EventKind::ExternalCommand => "external-command",
            EventKind::ExternalNotify => "external-notify",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub time: Time,
    /// Position in the run; strictly increasing.
    pub seq: u64,
    pub kind: EventKind,
    pub transition: Option<String>,
    pub payload: Value,
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.time,
            self.seq,
            self.kind,
            self.transition.as_deref().unwrap_or("-"),
            self.payload
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SimEvent {
    pub fn parse_line(line: &str) -> Result<SimEvent, String> {
        let mut parts = line.splitn(5, ' ');
        let mut field = |name: &str| parts.next().ok_or_else(|| format!("missing {name}"));
        let time = field("time")?.parse().map_err(|e| format!("bad time: {e}"))?;
        let seq = field("seq")?.parse().map_err(|e| format!("bad seq: {e}"))?;
        let kind = field("kind")?.parse()?;
        let transition = match field("transition")? {
            "-" => None,
            t => Some(t.to_string()),
        };
        let payload = field("payload")?.parse().map_err(|e| format!("bad payload: {e}"))?;
        Ok(SimEvent {
            time,
            seq,
            kind,
            transition,
            payload,
        })
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    /// Nothing can ever fire again.
    Deadlock { at: Time },
    /// The next enabling lies beyond the horizon.
    Horizon { at: Time },
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunOutcome::Deadlock { at } => write!(f, "deadlock {at}"),
            RunOutcome::Horizon { at } => write!(f, "horizon {at}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTrace {
    pub events: Vec<SimEvent>,
    pub outcome: Option<RunOutcome>,
}

impl EventTrace {
    pub fn fires(&self) -> impl Iterator<Item = &SimEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Fire)
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        for e in &self.events {
            writeln!(w, "{e}")?;
        }
        if let Some(o) = self.outcome {
            writeln!(w, "# end {o}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace text is UTF-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<EventTrace, TraceError> {
        let mut events = Vec::new();
        let mut outcome = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let err = |message: String| TraceError::Parse { line: i + 1, message };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix("# end ") {
                let mut it = meta.split(' ');
                let kind = it.next().unwrap_or_default();
                let at: Time = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err(format!("bad outcome line `{line}`")))?;
                outcome = Some(match kind {
                    "deadlock" => RunOutcome::Deadlock { at },
                    "horizon" => RunOutcome::Horizon { at },
                    other => return Err(err(format!("unknown outcome `{other}`"))),
                });
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            events.push(SimEvent::parse_line(&line).map_err(err)?);
        }
        Ok(EventTrace { events, outcome })
    }
}
