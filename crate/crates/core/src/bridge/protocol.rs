//! Typed protocol documents and their canonical XML form.
//!
//! Descriptors follow the MAS / AGENT / OBJECT layout: a MAS lists its
//! agents, objects, states and actions; agents and objects carry
//! ATTRIBUTES, a CURRENT-STATE and ACTIONS. Leaves are
//! `<ATTRIBUTE NAME="k">v</ATTRIBUTE>`, `<STATE NAME="idle" TIME="0"></STATE>`
//! and `<ACTION NAME="a"><PARAM NAME="k">v</PARAM></ACTION>`.

use crate::fms::PartKind;
use crate::mes::{AgentMessage, Payload};
use crate::petri::{
    Arc, ColorSet, EventKind, Expr, InitialToken, NetModel, Pattern, PlaceDef, SimEvent, Time, TransitionDef, Value,
};

use super::xml::{parse_document, Element, XmlWriter};
use super::BridgeError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateEntry {
    pub name: String,
    pub time: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionEntry {
    pub name: String,
    pub params: Vec<(String, String)>,
}

/// An agent or an object (resource): the two share one layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Descriptor {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub current_state: Option<StateEntry>,
    pub actions: Vec<ActionEntry>,
}

impl Descriptor {
    pub fn new(name: impl Into<String>) -> Self {
        Descriptor {
            name: name.into(),
            attributes: Vec::new(),
            current_state: None,
            actions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasDescriptor {
    pub name: String,
    pub agents: Vec<Descriptor>,
    pub objects: Vec<Descriptor>,
    pub states: Vec<StateEntry>,
    pub actions: Vec<ActionEntry>,
}

/// A dispatch decision as the simulator sees it: let `target` do `action`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionCommand {
    pub target: String,
    pub action: String,
    pub task_id: u64,
    pub order_id: u32,
    pub part: Option<(u32, PartKind)>,
    pub issued_at: Time,
}

/// A token arriving somewhere in the simulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateUpdate {
    pub object: String,
    pub state: String,
    pub at: Time,
    pub payload: Value,
}

/// How a simulator step ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Fired,
    Deadlock,
    Horizon,
}

impl StepOutcome {
    fn as_str(self) -> &'static str {
        match self {
            StepOutcome::Fired => "fired",
            StepOutcome::Deadlock => "deadlock",
            StepOutcome::Horizon => "horizon",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Mas(MasDescriptor),
    Agent(Descriptor),
    Object(Descriptor),
    Objects(Vec<Descriptor>),
    Message(AgentMessage),
    Command(ActionCommand),
    Update(StateUpdate),
    Event(SimEvent),
    /// Apply `commands`, then fire at most one binding enabled by `until`.
    Step { until: Time, commands: Vec<ActionCommand> },
    StepResult { outcome: StepOutcome, now: Time, events: Vec<SimEvent> },
    /// Start a simulator on `net` (initial tokens included).
    Setup { seed: u64, net: NetModel },
    Net(NetModel),
}

fn unserializable(what: &str) -> BridgeError {
    BridgeError::Unserializable(format!("{what} needs a non-empty name"))
}

fn named(name: &str, what: &str) -> Result<String, BridgeError> {
    if name.is_empty() {
        Err(unserializable(what))
    } else {
        Ok(name.to_string())
    }
}

/// Canonical bytes of `m`.
pub fn serialize(m: &WireMessage) -> Result<Vec<u8>, BridgeError> {
    let mut w = XmlWriter::new();
    match m {
        WireMessage::Mas(d) => write_mas(&mut w, d)?,
        WireMessage::Agent(d) => write_descriptor(&mut w, "AGENT", d)?,
        WireMessage::Object(d) => write_descriptor(&mut w, "OBJECT", d)?,
        WireMessage::Objects(list) => {
            w.open("OBJECTS-LIST", &[])?;
            for d in list {
                write_descriptor(&mut w, "OBJECT", d)?;
            }
            w.close("OBJECTS-LIST");
        }
        WireMessage::Message(msg) => write_message(&mut w, msg)?,
        WireMessage::Command(c) => write_command(&mut w, c)?,
        WireMessage::Update(u) => w.leaf(
            "UPDATE",
            &[
                ("NAME", named(&u.object, "UPDATE")?),
                ("STATE", u.state.clone()),
                ("TIME", u.at.to_string()),
            ],
            &u.payload.to_string(),
        )?,
        WireMessage::Event(e) => write_event(&mut w, e)?,
        WireMessage::Step { until, commands } => {
            w.open("STEP", &[("NAME", "step".to_string()), ("UNTIL", until.to_string())])?;
            for c in commands {
                write_command(&mut w, c)?;
            }
            w.close("STEP");
        }
        WireMessage::StepResult { outcome, now, events } => {
            w.open("STEP-RESULT", &[("NAME", outcome.as_str().to_string()), ("TIME", now.to_string())])?;
            for e in events {
                write_event(&mut w, e)?;
            }
            w.close("STEP-RESULT");
        }
        WireMessage::Setup { seed, net } => {
            w.open("SETUP", &[("NAME", named(&net.name, "NET")?), ("SEED", seed.to_string())])?;
            write_net(&mut w, net)?;
            w.close("SETUP");
        }
        WireMessage::Net(net) => write_net(&mut w, net)?,
    }
    Ok(w.finish())
}

/// Inverse of [`serialize`].
pub fn parse(bytes: &[u8]) -> Result<WireMessage, BridgeError> {
    let root = parse_document(bytes)?;
    Ok(match root.name.as_str() {
        "MAS" => WireMessage::Mas(read_mas(&root)?),
        "AGENT" => WireMessage::Agent(read_descriptor(&root)?),
        "OBJECT" => WireMessage::Object(read_descriptor(&root)?),
        "OBJECTS-LIST" => WireMessage::Objects(
            root.only("OBJECT")?
                .iter()
                .map(read_descriptor)
                .collect::<Result<_, _>>()?,
        ),
        "MESSAGE" => WireMessage::Message(read_message(&root)?),
        "COMMAND" => WireMessage::Command(read_command(&root)?),
        "UPDATE" => {
            no_children(&root)?;
            WireMessage::Update(StateUpdate {
                object: root.name_attr()?.to_string(),
                state: root.required("STATE")?.to_string(),
                at: root.parsed("TIME")?,
                payload: value_text(&root)?,
            })
        }
        "EVENT" => WireMessage::Event(read_event(&root)?),
        "STEP" => WireMessage::Step {
            until: root.parsed("UNTIL")?,
            commands: root
                .only("COMMAND")?
                .iter()
                .map(read_command)
                .collect::<Result<_, _>>()?,
        },
        "STEP-RESULT" => WireMessage::StepResult {
            outcome: match root.name_attr()? {
                "fired" => StepOutcome::Fired,
                "deadlock" => StepOutcome::Deadlock,
                "horizon" => StepOutcome::Horizon,
                other => return Err(root.malformed(format!("unknown step outcome `{other}`"))),
            },
            now: root.parsed("TIME")?,
            events: root.only("EVENT")?.iter().map(read_event).collect::<Result<_, _>>()?,
        },
        "SETUP" => {
            root.name_attr()?;
            WireMessage::Setup {
                seed: root.parsed("SEED")?,
                net: read_net(root.only("NET")?.first().ok_or_else(|| root.malformed("<SETUP> lacks <NET>".into()))?)?,
            }
        }
        "NET" => WireMessage::Net(read_net(&root)?),
        _ => return Err(root.unexpected()),
    })
}

fn no_children(e: &Element) -> Result<(), BridgeError> {
    match e.children.first() {
        Some(c) => Err(c.unexpected()),
        None => Ok(()),
    }
}

fn value_text(e: &Element) -> Result<Value, BridgeError> {
    e.text
        .parse()
        .map_err(|err| e.malformed(format!("<{}> content: {err}", e.name)))
}

fn write_mas(w: &mut XmlWriter, d: &MasDescriptor) -> Result<(), BridgeError> {
    w.open("MAS", &[("NAME", named(&d.name, "MAS")?)])?;
    w.open("AGENTS-LIST", &[])?;
    for a in &d.agents {
        write_descriptor(w, "AGENT", a)?;
    }
    w.close("AGENTS-LIST");
    w.open("OBJECT-LIST", &[])?;
    for o in &d.objects {
        write_descriptor(w, "OBJECT", o)?;
    }
    w.close("OBJECT-LIST");
    w.open("STATES-LIST", &[])?;
    for s in &d.states {
        write_state(w, s)?;
    }
    w.close("STATES-LIST");
    w.open("ACTIONS-LIST", &[])?;
    for a in &d.actions {
        write_action(w, a)?;
    }
    w.close("ACTIONS-LIST");
    w.close("MAS");
    Ok(())
}

fn read_mas(e: &Element) -> Result<MasDescriptor, BridgeError> {
    let names: Vec<&str> = e.children.iter().map(|c| c.name.as_str()).collect();
    let expected = ["AGENTS-LIST", "OBJECT-LIST", "STATES-LIST", "ACTIONS-LIST"];
    if names != expected {
        let bad = e
            .children
            .iter()
            .zip(expected)
            .find(|(c, x)| c.name != *x)
            .map(|(c, _)| c.unexpected());
        return Err(bad.unwrap_or_else(|| e.malformed(format!("<MAS> needs {}", expected.join(", ")))));
    }
    Ok(MasDescriptor {
        name: e.name_attr()?.to_string(),
        agents: e.children[0].only("AGENT")?.iter().map(read_descriptor).collect::<Result<_, _>>()?,
        objects: e.children[1].only("OBJECT")?.iter().map(read_descriptor).collect::<Result<_, _>>()?,
        states: e.children[2].only("STATE")?.iter().map(read_state).collect::<Result<_, _>>()?,
        actions: e.children[3].only("ACTION")?.iter().map(read_action).collect::<Result<_, _>>()?,
    })
}

fn write_descriptor(w: &mut XmlWriter, tag: &str, d: &Descriptor) -> Result<(), BridgeError> {
    w.open(tag, &[("NAME", named(&d.name, tag)?)])?;
    w.open("ATTRIBUTES", &[])?;
    for (k, v) in &d.attributes {
        w.leaf("ATTRIBUTE", &[("NAME", named(k, "ATTRIBUTE")?)], v)?;
    }
    w.close("ATTRIBUTES");
    w.open("CURRENT-STATE", &[])?;
    if let Some(s) = &d.current_state {
        write_state(w, s)?;
    }
    w.close("CURRENT-STATE");
    w.open("ACTIONS", &[])?;
    for a in &d.actions {
        write_action(w, a)?;
    }
    w.close("ACTIONS");
    w.close(tag);
    Ok(())
}

fn read_descriptor(e: &Element) -> Result<Descriptor, BridgeError> {
    let name = e.name_attr()?.to_string();
    let attributes = e
        .child("ATTRIBUTES")?
        .only("ATTRIBUTE")?
        .iter()
        .map(|a| {
            no_children(a)?;
            Ok((a.name_attr()?.to_string(), a.text.clone()))
        })
        .collect::<Result<_, BridgeError>>()?;
    let current_state = match e.child("CURRENT-STATE")?.only("STATE")? {
        [] => None,
        [s] => Some(read_state(s)?),
        [_, s, ..] => return Err(s.malformed("more than one current state".into())),
    };
    let actions = e.child("ACTIONS")?.only("ACTION")?.iter().map(read_action).collect::<Result<_, _>>()?;
    if let Some(c) = e
        .children
        .iter()
        .find(|c| !["ATTRIBUTES", "CURRENT-STATE", "ACTIONS"].contains(&c.name.as_str()))
    {
        return Err(c.unexpected());
    }
    Ok(Descriptor {
        name,
        attributes,
        current_state,
        actions,
    })
}

fn write_state(w: &mut XmlWriter, s: &StateEntry) -> Result<(), BridgeError> {
    w.leaf("STATE", &[("NAME", named(&s.name, "STATE")?), ("TIME", s.time.to_string())], "")
}

fn read_state(e: &Element) -> Result<StateEntry, BridgeError> {
    no_children(e)?;
    Ok(StateEntry {
        name: e.name_attr()?.to_string(),
        time: e.parsed("TIME")?,
    })
}

fn write_action(w: &mut XmlWriter, a: &ActionEntry) -> Result<(), BridgeError> {
    w.open("ACTION", &[("NAME", named(&a.name, "ACTION")?)])?;
    for (k, v) in &a.params {
        w.leaf("PARAM", &[("NAME", named(k, "PARAM")?)], v)?;
    }
    w.close("ACTION");
    Ok(())
}

fn read_action(e: &Element) -> Result<ActionEntry, BridgeError> {
    Ok(ActionEntry {
        name: e.name_attr()?.to_string(),
        params: e
            .only("PARAM")?
            .iter()
            .map(|p| {
                no_children(p)?;
                Ok((p.name_attr()?.to_string(), p.text.clone()))
            })
            .collect::<Result<_, BridgeError>>()?,
    })
}

fn write_message(w: &mut XmlWriter, m: &AgentMessage) -> Result<(), BridgeError> {
    let mut attrs = vec![
        ("NAME", named(&m.conversation_id, "MESSAGE")?),
        ("SEQ", m.seq.to_string()),
        ("SENDER", m.sender.to_string()),
        ("RECEIVER", m.receiver.to_string()),
        ("PERFORMATIVE", m.performative.to_string()),
    ];
    if let Some(r) = m.in_reply_to {
        attrs.push(("IN-REPLY-TO", r.to_string()));
    }
    attrs.push(("SENT-AT", m.sent_at.to_string()));
    w.open("MESSAGE", &attrs)?;
    w.leaf("PAYLOAD", &[("KIND", m.payload.kind().to_string())], &m.payload.to_value().to_string())?;
    w.close("MESSAGE");
    Ok(())
}

fn read_message(e: &Element) -> Result<AgentMessage, BridgeError> {
    let p = e.child("PAYLOAD")?;
    if e.children.len() != 1 {
        return Err(e.children[1].unexpected());
    }
    no_children(p)?;
    let kind = p.required("KIND")?;
    let payload = Payload::from_value(kind, &value_text(p)?).map_err(|err| p.malformed(err.to_string()))?;
    Ok(AgentMessage {
        conversation_id: e.name_attr()?.to_string(),
        sender: e.parsed("SENDER")?,
        receiver: e.parsed("RECEIVER")?,
        performative: e.parsed("PERFORMATIVE")?,
        in_reply_to: e.optional("IN-REPLY-TO")?,
        seq: e.parsed("SEQ")?,
        payload,
        sent_at: e.parsed("SENT-AT")?,
    })
}

fn write_command(w: &mut XmlWriter, c: &ActionCommand) -> Result<(), BridgeError> {
    w.open(
        "COMMAND",
        &[
            ("NAME", named(&c.action, "COMMAND")?),
            ("TARGET", named(&c.target, "COMMAND target")?),
            ("TASK", c.task_id.to_string()),
            ("ISSUED-AT", c.issued_at.to_string()),
        ],
    )?;
    w.leaf("PARAM", &[("NAME", "order".to_string())], &c.order_id.to_string())?;
    if let Some((part, kind)) = c.part {
        w.leaf("PARAM", &[("NAME", "part".to_string())], &part.to_string())?;
        w.leaf("PARAM", &[("NAME", "kind".to_string())], kind.as_str())?;
    }
    w.close("COMMAND");
    Ok(())
}

fn read_command(e: &Element) -> Result<ActionCommand, BridgeError> {
    let action = e.name_attr()?.to_string();
    let params = e.only("PARAM")?;
    let get = |name: &str| params.iter().find(|p| p.attr("NAME") == Some(name));
    let order = get("order").ok_or_else(|| e.malformed("<COMMAND> lacks the order parameter".into()))?;
    let order_id = order
        .text
        .parse()
        .map_err(|err| order.malformed(format!("order: {err}")))?;
    let part = match (get("part"), get("kind")) {
        (None, None) => None,
        (Some(p), Some(k)) => Some((
            p.text.parse().map_err(|err| p.malformed(format!("part: {err}")))?,
            k.text.parse().map_err(|err: crate::fms::FmsError| k.malformed(err.to_string()))?,
        )),
        _ => return Err(e.malformed("<COMMAND> needs both part and kind, or neither".into())),
    };
    if let Some(p) = params
        .iter()
        .find(|p| !matches!(p.attr("NAME"), Some("order" | "part" | "kind")))
    {
        return Err(p.malformed(format!("unknown parameter {:?}", p.attr("NAME"))));
    }
    Ok(ActionCommand {
        target: e.required("TARGET")?.to_string(),
        action,
        task_id: e.parsed("TASK")?,
        order_id,
        part,
        issued_at: e.parsed("ISSUED-AT")?,
    })
}

fn write_event(w: &mut XmlWriter, e: &SimEvent) -> Result<(), BridgeError> {
    let mut attrs = vec![
        ("NAME", e.kind.as_str().to_string()),
        ("SEQ", e.seq.to_string()),
        ("TIME", e.time.to_string()),
    ];
    if let Some(t) = &e.transition {
        attrs.push(("TRANSITION", t.clone()));
    }
    w.leaf("EVENT", &attrs, &e.payload.to_string())
}

fn read_event(e: &Element) -> Result<SimEvent, BridgeError> {
    no_children(e)?;
    Ok(SimEvent {
        time: e.parsed("TIME")?,
        seq: e.parsed("SEQ")?,
        kind: e.name_attr()?.parse::<EventKind>().map_err(|err| e.malformed(err))?,
        transition: e.attr("TRANSITION").map(str::to_string),
        payload: value_text(e)?,
    })
}

fn write_net(w: &mut XmlWriter, net: &NetModel) -> Result<(), BridgeError> {
    w.open("NET", &[("NAME", named(&net.name, "NET")?)])?;
    for p in &net.places {
        let mut attrs = vec![("NAME", named(&p.id, "PLACE")?), ("COLORS", p.colors.to_string())];
        if let Some(c) = p.capacity {
            attrs.push(("CAPACITY", c.to_string()));
        }
        w.leaf("PLACE", &attrs, "")?;
    }
    for t in &net.transitions {
        let mut attrs = vec![("NAME", named(&t.id, "TRANSITION")?), ("DELAY", t.delay.to_string())];
        if t.priority != 0 {
            attrs.push(("PRIORITY", t.priority.to_string()));
        }
        if let Some(g) = &t.guard {
            attrs.push(("GUARD", g.to_string()));
        }
        if let Some(k) = t.emits {
            attrs.push(("EMITS", k.as_str().to_string()));
        }
        w.leaf("TRANSITION", &attrs, "")?;
    }
    for a in &net.arcs {
        match a {
            Arc::Input {
                place,
                transition,
                pattern,
                count,
            } => w.leaf(
                "INPUT",
                &[
                    ("NAME", named(place, "INPUT")?),
                    ("TRANSITION", transition.clone()),
                    ("COUNT", count.to_string()),
                ],
                &pattern.to_string(),
            )?,
            Arc::Output {
                transition,
                place,
                expr,
                count,
            } => w.leaf(
                "OUTPUT",
                &[
                    ("NAME", named(place, "OUTPUT")?),
                    ("TRANSITION", transition.clone()),
                    ("COUNT", count.to_string()),
                ],
                &expr.to_string(),
            )?,
        }
    }
    for t in &net.initial {
        w.leaf(
            "TOKEN",
            &[("NAME", named(&t.place, "TOKEN")?), ("TIME", t.time.to_string())],
            &t.color.to_string(),
        )?;
    }
    w.close("NET");
    Ok(())
}

/// Reads a `<NET>` element into a model (not validated).
pub fn read_net(e: &Element) -> Result<NetModel, BridgeError> {
    e.expect("NET")?;
    let mut net = NetModel::new(e.name_attr()?);
    for c in &e.children {
        no_children(c)?;
        let name = c.name_attr()?.to_string();
        let text = |what: &str| -> Result<&str, BridgeError> {
            if c.text.trim().is_empty() {
                Err(c.malformed(format!("<{}> lacks its {what}", c.name)))
            } else {
                Ok(&c.text)
            }
        };
        match c.name.as_str() {
            "PLACE" => net.places.push(PlaceDef {
                id: name,
                colors: c
                    .required("COLORS")?
                    .parse::<ColorSet>()
                    .map_err(|err| c.malformed(format!("COLORS: {err}")))?,
                capacity: c.optional("CAPACITY")?,
            }),
            "TRANSITION" => net.transitions.push(TransitionDef {
                id: name,
                guard: match c.attr("GUARD") {
                    Some(g) => Some(g.parse::<Expr>().map_err(|err| c.malformed(format!("GUARD: {err}")))?),
                    None => None,
                },
                delay: c
                    .required("DELAY")?
                    .parse::<Expr>()
                    .map_err(|err| c.malformed(format!("DELAY: {err}")))?,
                priority: c.optional("PRIORITY")?.unwrap_or(0),
                emits: c.optional::<EventKind>("EMITS")?,
            }),
            "INPUT" => net.arcs.push(Arc::Input {
                place: name,
                transition: c.required("TRANSITION")?.to_string(),
                pattern: text("pattern")?
                    .parse::<Pattern>()
                    .map_err(|err| c.malformed(format!("pattern: {err}")))?,
                count: c.optional("COUNT")?.unwrap_or(1),
            }),
            "OUTPUT" => net.arcs.push(Arc::Output {
                place: name,
                transition: c.required("TRANSITION")?.to_string(),
                expr: text("expression")?
                    .parse::<Expr>()
                    .map_err(|err| c.malformed(format!("expression: {err}")))?,
                count: c.optional("COUNT")?.unwrap_or(1),
            }),
            "TOKEN" => net.initial.push(InitialToken {
                place: name,
                time: c.optional("TIME")?.unwrap_or(0),
                color: text("color")?
                    .parse::<Value>()
                    .map_err(|err| c.malformed(format!("color: {err}")))?,
            }),
            _ => return Err(c.unexpected()),
        }
    }
    Ok(net)
}
