//! Protocol checking. Each conversation kind has a table of allowed steps;
//! a transcript conforms when every conversation walks its table, replies
//! name an earlier message of the counterpart, and per-sender sequence
//! numbers only grow.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::payload::Payload;
use super::{AgentId, AgentMessage, Performative, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConversationKind {
    /// Order arrival at the SMA.
    Orders,
    /// Release and completion of one order.
    Order,
    /// Allocation of one task.
    Task,
    /// Execution of one allocated task.
    Dispatch,
}

impl ConversationKind {
    pub fn of(conversation_id: &str) -> Option<Self> {
        let (head, num) = conversation_id.rsplit_once('-').unwrap_or((conversation_id, ""));
        let numbered = !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit());
        match (head, numbered) {
            ("orders", _) if conversation_id == "orders" => Some(ConversationKind::Orders),
            ("order", true) => Some(ConversationKind::Order),
            ("task", true) => Some(ConversationKind::Task),
            ("dispatch", true) => Some(ConversationKind::Dispatch),
            _ => None,
        }
    }

    /// `(from, sender, receiver, performative, label, to)`.
    fn table(self) -> &'static [Step] {
        use Performative::*;
        use Role::*;
        match self {
            ConversationKind::Orders => &[(0, Ha, Sma, Inform, "orders", 0)],
            ConversationKind::Order => &[
                (0, Sma, DbaShop, Request, "write", 1),
                (1, DbaShop, Sma, Inform, "ack", 2),
                (2, Sma, Ha, Command, "release", 3),
                (3, Smca, Sma, Notify, "order-done", 4),
            ],
            ConversationKind::Task => &[
                (0, Ha, Am, Request, "task", 1),
                (1, Am, DbaShop, Query, "lookup", 2),
                (1, Am, Ha, Refuse, "task", 4),
                (2, DbaShop, Am, Inform, "record", 3),
                // Negative lookup, or no station can ever do it.
                (3, Am, Ha, Refuse, "task", 4),
                (4, Am, DbaShop, Query, "lookup", 2),
                (3, Am, Sca, Query, "availability-query", 5),
                (5, Sca, Am, Refuse, "availability", 6),
                (6, Am, Sca, Query, "availability-query", 5),
                (5, Sca, Am, Propose, "availability", 7),
                (7, Am, Sca, Accept, "allocation", 8),
                (8, Am, DbaShop, Inform, "allocation", 9),
                (9, DbaShop, Sca, Inform, "allocation", 10),
            ],
            ConversationKind::Dispatch => &[
                (0, Sca, DbaStation, Request, "write", 1),
                (1, DbaStation, Sca, Inform, "ack", 2),
                (2, Sca, Mra, Command, "dispatch", 3),
                (3, Mra, Ami, Command, "dispatch", 4),
                (4, Mra, SmonA, Notify, "status:started", 5),
                (5, Ami, Ha, Command, "dispatch", 6),
                (6, Ha, SmonA, Notify, "status:failed", 7),
                (7, Ha, Smca, Notify, "status:failed", 8),
                (8, SmonA, Sca, Inform, "status:failed", 6),
                (6, Ha, SmonA, Notify, "status:repaired", 9),
                (9, Ha, Smca, Notify, "status:repaired", 10),
                (10, SmonA, Sca, Inform, "status:repaired", 6),
                (6, Ha, SmonA, Notify, "status:completed", 11),
                (11, Ha, Smca, Notify, "status:completed", 12),
                (12, SmonA, Sca, Inform, "status:completed", 13),
                (13, SmonA, Mra, Inform, "status:completed", 14),
                (14, Sca, Am, Notify, "status:completed", 15),
            ],
        }
    }

    /// States a finished conversation may rest in.
    fn accepting(self) -> &'static [u8] {
        match self {
            ConversationKind::Orders => &[0],
            ConversationKind::Order => &[4],
            ConversationKind::Task => &[4, 10],
            ConversationKind::Dispatch => &[15],
        }
    }
}

type Step = (u8, Role, Role, Performative, &'static str, u8);

fn label(p: &Payload) -> String {
    match p {
        Payload::Status(s) => format!("status:{}", s.event.as_str()),
        other => other.kind().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Position in the transcript; `None` for end-of-transcript findings.
    pub index: Option<usize>,
    pub conversation: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "message {i} in {}: {}", self.conversation, self.message),
            None => write!(f, "{}: {}", self.conversation, self.message),
        }
    }
}

/// Incremental checker; conversations that reach a final state are
/// forgotten, so memory stays proportional to the open ones.
#[derive(Debug, Default)]
pub struct ConformanceChecker {
    open: BTreeMap<String, Open>,
    last_seq: BTreeMap<AgentId, u64>,
    index: usize,
    violations: Vec<Violation>,
    finished: u64,
}

#[derive(Debug)]
struct Open {
    kind: ConversationKind,
    states: BTreeSet<u8>,
    /// (sender, seq) of the conversation's messages so far.
    seen: BTreeSet<(AgentId, u64)>,
}

impl ConformanceChecker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, m: &AgentMessage) {
        let i = self.index;
        self.index += 1;
        let conv = m.conversation_id.as_str();
        let mut bad = |message: String| {
            self.violations.push(Violation {
                index: Some(i),
                conversation: conv.to_string(),
                message,
            })
        };
        if let Some(prev) = self.last_seq.insert(m.sender.clone(), m.seq) {
            if m.seq <= prev {
                bad(format!("{} seq {} after {prev}", m.sender, m.seq));
            }
        }
        let Some(kind) = ConversationKind::of(conv) else {
            bad("unknown conversation kind".to_string());
            return;
        };
        let open = self.open.entry(conv.to_string()).or_insert_with(|| Open {
            kind,
            states: BTreeSet::from([0]),
            seen: BTreeSet::new(),
        });
        if let Some(r) = m.in_reply_to {
            if !open.seen.contains(&(m.receiver.clone(), r)) {
                bad(format!("in-reply-to {r} names no earlier message from {}", m.receiver));
            }
        }
        open.seen.insert((m.sender.clone(), m.seq));
        let lab = label(&m.payload);
        let next: BTreeSet<u8> = kind
            .table()
            .iter()
            .filter(|(from, s, r, p, l, _)| {
                open.states.contains(from)
                    && *s == m.sender.role
                    && *r == m.receiver.role
                    && *p == m.performative
                    && *l == lab
            })
            .map(|t| t.5)
            .collect();
        if next.is_empty() {
            bad(format!(
                "{} {lab} from {} to {} not allowed here",
                m.performative, m.sender, m.receiver
            ));
            return;
        }
        let terminal = next
            .iter()
            .all(|s| !kind.table().iter().any(|t| t.0 == *s) && kind.accepting().contains(s));
        if terminal {
            self.open.remove(conv);
            self.finished += 1;
        } else {
            open.states = next;
        }
    }

    /// Violations so far.
    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// Messages checked so far.
    pub fn checked(&self) -> usize {
        self.index
    }

    /// Conversations that reached a final state.
    pub fn finished(&self) -> u64 {
        self.finished
    }

    /// All violations; with `complete`, unfinished conversations count too.
    pub fn finish(mut self, complete: bool) -> Vec<Violation> {
        if complete {
            for (conv, open) in &self.open {
                if !open.states.iter().any(|s| open.kind.accepting().contains(s)) {
                    self.violations.push(Violation {
                        index: None,
                        conversation: conv.clone(),
                        message: "conversation left unfinished".to_string(),
                    });
                }
            }
        }
        self.violations
    }
}

/// Checks a delivered transcript. With `complete`, every conversation must
/// also have reached an accepting state.
pub fn check_transcript(messages: &[AgentMessage], complete: bool) -> Vec<Violation> {
    let mut c = ConformanceChecker::new();
    for m in messages {
        c.feed(m);
    }
    c.finish(complete)
}
