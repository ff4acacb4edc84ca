//! The cell as a timed colored net.
//!
//! Every operation is a start/end pair of transitions so that completions
//! show up as firings the control layer can observe. Work only starts when a
//! command token names the part (or order) and the resource to use, which
//! keeps all scheduling decisions outside the net.

use crate::petri::{ColorSet, Expr, KernelError, Marking, NetModel, Pattern, Value, EventKind};

use super::{BookOrder, FmsConfig, FmsError, Operation, PartKind};

pub mod places {
    /// Released orders waiting for assembly.
    pub const ORDERS: &str = "orders";
    pub const ASRS_PARTS: &str = "asrs_parts";
    /// Dispatch commands from the control layer.
    pub const COMMANDS: &str = "commands";
    pub const TRANSPORT_IDLE: &str = "transport_idle";
    pub const IN_TRANSIT_S1: &str = "in_transit_s1";
    pub const S1_IN: &str = "s1_in";
    pub const CNC_IDLE: &str = "cnc_idle";
    pub const CNC_CHECK: &str = "cnc_check";
    pub const CNC_BUSY: &str = "cnc_busy";
    pub const CNC_DOWN: &str = "cnc_down";
    pub const S1_OUT: &str = "s1_out";
    pub const IN_TRANSIT_S2: &str = "in_transit_s2";
    pub const S2_IN: &str = "s2_in";
    pub const ASSEMBLER_IDLE: &str = "assembler_idle";
    pub const ASSEMBLING: &str = "assembling";
    pub const S2_OUT: &str = "s2_out";
    pub const IN_TRANSIT_S3: &str = "in_transit_s3";
    pub const ASRS_PRODUCTS: &str = "asrs_products";

    /// Places holding idle resource tokens.
    pub const RESOURCE_POOLS: [&str; 3] = [TRANSPORT_IDLE, CNC_IDLE, ASSEMBLER_IDLE];
}

pub mod transitions {
    pub const RETRIEVE: &str = "retrieve";
    pub const ARRIVE_S1: &str = "arrive_s1";
    pub const CNC_START: &str = "cnc_start";
    pub const CNC_MACHINE: &str = "cnc_machine";
    pub const CNC_FAIL: &str = "cnc_fail";
    pub const CNC_REPAIR: &str = "cnc_repair";
    pub const CNC_DONE: &str = "cnc_done";
    pub const MOVE_S2: &str = "move_s2";
    pub const ARRIVE_S2: &str = "arrive_s2";
    pub const ASSEMBLE_START: &str = "assemble_start";
    pub const ASSEMBLE_DONE: &str = "assemble_done";
    pub const MOVE_S3: &str = "move_s3";
    pub const STORE: &str = "store";

    /// Firings that finish an operation, with the operation they finish.
    pub const COMPLETIONS: [(&str, super::Operation); 5] = [
        (ARRIVE_S1, super::Operation::Retrieve),
        (CNC_DONE, super::Operation::Machine),
        (ARRIVE_S2, super::Operation::MoveToAssembly),
        (ASSEMBLE_DONE, super::Operation::Assemble),
        (STORE, super::Operation::Store),
    ];

    /// Firings that start an operation.
    pub const STARTS: [(&str, super::Operation); 5] = [
        (RETRIEVE, super::Operation::Retrieve),
        (CNC_START, super::Operation::Machine),
        (MOVE_S2, super::Operation::MoveToAssembly),
        (ASSEMBLE_START, super::Operation::Assemble),
        (MOVE_S3, super::Operation::Store),
    ];
}

/// Object name used for a resource in tokens and on the wire.
pub fn object_name(resource: &str) -> String {
    resource.to_ascii_uppercase()
}

/// The command token that lets `op` start. Order-level operations use part 0
/// and kind `-`.
pub fn command_token(op: Operation, order_id: u32, part: Option<(u32, PartKind)>, obj: &str) -> Value {
    let (part, kind) = part.map_or((0, "-"), |(p, k)| (p, k.as_str()));
    Value::record([
        ("action", Value::str(op.as_str())),
        ("order", Value::Int(order_id.into())),
        ("part", Value::Int(part.into())),
        ("kind", Value::str(kind)),
        ("obj", Value::str(obj)),
    ])
}

fn kind_set() -> ColorSet {
    ColorSet::enumeration(PartKind::ALL.map(|k| k.as_str()))
}

fn part_set(extra: &[(&str, ColorSet)]) -> ColorSet {
    let mut f = vec![
        ("part", ColorSet::Int),
        ("order", ColorSet::Int),
        ("kind", kind_set()),
    ];
    f.extend(extra.iter().cloned());
    ColorSet::record(f)
}

fn order_set(extra: &[(&str, ColorSet)]) -> ColorSet {
    let mut f = vec![("order", ColorSet::Int)];
    f.extend(extra.iter().cloned());
    ColorSet::record(f)
}

fn p(text: &str) -> Pattern {
    text.parse().expect("built-in pattern")
}

fn e(text: &str) -> Expr {
    text.parse().expect("built-in expression")
}

fn command_pattern(op: Operation) -> Pattern {
    if op.per_order() {
        p(&format!("{{action: \"{op}\", order: ?order, part: _, kind: _, obj: ?obj}}"))
    } else {
        p(&format!("{{action: \"{op}\", order: ?order, part: ?part, kind: ?kind, obj: ?obj}}"))
    }
}

const PART: &str = "{part: ?part, order: ?order, kind: ?kind}";
const PART_AT: &str = "{part: ?part, order: ?order, kind: ?kind, obj: ?obj}";
const PART_OUT: &str = "{part: part, order: order, kind: kind}";
const PART_AT_OUT: &str = "{part: part, order: order, kind: kind, obj: obj}";

/// The cell net for `config`, with idle resources in the initial marking and
/// no orders (see [`initial_marking`]).
pub fn build_fms_net(config: &FmsConfig) -> Result<NetModel, FmsError> {
    use places::*;
    use transitions::*;
    config.check()?;

    let res = ColorSet::Str;
    let command = ColorSet::record([
        ("action", ColorSet::enumeration(Operation::ALL.map(|o| o.as_str()))),
        ("order", ColorSet::Int),
        ("part", ColorSet::Int),
        ("kind", ColorSet::Str),
        ("obj", ColorSet::Str),
    ]);
    let at = [("obj", ColorSet::Str)];
    let transport = Expr::int(config.transport_time as i64);

    let mut m = NetModel::new("emu-fms");
    m.place(ORDERS, order_set(&[]))
        .place(ASRS_PARTS, part_set(&[]))
        .place(COMMANDS, command)
        .bounded_place(TRANSPORT_IDLE, res.clone(), config.transport_resources.len() as u32)
        .place(IN_TRANSIT_S1, part_set(&at))
        .place(S1_IN, part_set(&[]))
        .bounded_place(CNC_IDLE, res.clone(), 1)
        .bounded_place(CNC_BUSY, part_set(&at), 1)
        .place(S1_OUT, part_set(&[]))
        .place(IN_TRANSIT_S2, part_set(&at))
        .place(S2_IN, part_set(&[]))
        .bounded_place(ASSEMBLER_IDLE, res, 1)
        .bounded_place(ASSEMBLING, order_set(&at), 1)
        .place(S2_OUT, order_set(&[]))
        .place(IN_TRANSIT_S3, order_set(&at))
        .place(ASRS_PRODUCTS, order_set(&[]));

    // AS/RS -> station 1
    m.transition(RETRIEVE, transport.clone())
        .input(COMMANDS, RETRIEVE, command_pattern(Operation::Retrieve))
        .input(ASRS_PARTS, RETRIEVE, p(PART))
        .input(TRANSPORT_IDLE, RETRIEVE, Pattern::var("obj"))
        .output(RETRIEVE, IN_TRANSIT_S1, e(PART_AT_OUT));
    m.transition(ARRIVE_S1, Expr::int(0))
        .input(IN_TRANSIT_S1, ARRIVE_S1, p(PART_AT))
        .output(ARRIVE_S1, S1_IN, e(PART_OUT))
        .output(ARRIVE_S1, TRANSPORT_IDLE, Expr::var("obj"));

    // Machining, with an optional failure/repair loop in front of it.
    let cnc_time = Expr::int(config.cnc_time as i64);
    m.transition(CNC_START, Expr::int(0))
        .input(COMMANDS, CNC_START, command_pattern(Operation::Machine))
        .input(S1_IN, CNC_START, p(PART))
        .input(CNC_IDLE, CNC_START, Pattern::var("obj"));
    match config.failure.as_ref().filter(|f| f.probability > 0.0) {
        None => {
            m.transition_mut(CNC_START).expect("just added").delay = cnc_time;
            m.output(CNC_START, CNC_BUSY, e(PART_AT_OUT));
        }
        Some(f) => {
            let draw = format!(
                "{{part: part, order: order, kind: kind, obj: obj, fail: (bernoulli {:?})}}",
                f.probability
            );
            m.place(CNC_CHECK, part_set(&[("obj", ColorSet::Str), ("fail", ColorSet::Bool)]))
                .place(CNC_DOWN, part_set(&at))
                .output(CNC_START, CNC_CHECK, e(&draw))
                .transition(CNC_MACHINE, cnc_time)
                .input(CNC_CHECK, CNC_MACHINE, p("{part: ?part, order: ?order, kind: ?kind, obj: ?obj, fail: false}"))
                .output(CNC_MACHINE, CNC_BUSY, e(PART_AT_OUT))
                .transition(CNC_FAIL, Expr::int(f.repair_time as i64))
                .input(CNC_CHECK, CNC_FAIL, p("{part: ?part, order: ?order, kind: ?kind, obj: ?obj, fail: true}"))
                .output(CNC_FAIL, CNC_DOWN, e(PART_AT_OUT))
                .transition(CNC_REPAIR, Expr::int(0))
                .input(CNC_DOWN, CNC_REPAIR, p(PART_AT))
                .output(CNC_REPAIR, CNC_CHECK, e(&draw));
            m.transition_mut(CNC_FAIL).expect("just added").emits = Some(EventKind::Failure);
            m.transition_mut(CNC_REPAIR).expect("just added").emits = Some(EventKind::Repair);
        }
    }
    m.transition(CNC_DONE, Expr::int(0))
        .input(CNC_BUSY, CNC_DONE, p(PART_AT))
        .output(CNC_DONE, S1_OUT, e(PART_OUT))
        .output(CNC_DONE, CNC_IDLE, Expr::var("obj"));

    // station 1 -> station 2
    m.transition(MOVE_S2, transport.clone())
        .input(COMMANDS, MOVE_S2, command_pattern(Operation::MoveToAssembly))
        .input(S1_OUT, MOVE_S2, p(PART))
        .input(TRANSPORT_IDLE, MOVE_S2, Pattern::var("obj"))
        .output(MOVE_S2, IN_TRANSIT_S2, e(PART_AT_OUT));
    m.transition(ARRIVE_S2, Expr::int(0))
        .input(IN_TRANSIT_S2, ARRIVE_S2, p(PART_AT))
        .output(ARRIVE_S2, S2_IN, e(PART_OUT))
        .output(ARRIVE_S2, TRANSPORT_IDLE, Expr::var("obj"));

    // Assembly joins the three parts of one order.
    m.transition(ASSEMBLE_START, Expr::int(config.assembly_time as i64))
        .input(COMMANDS, ASSEMBLE_START, command_pattern(Operation::Assemble))
        .input(ORDERS, ASSEMBLE_START, p("{order: ?order}"))
        .input(S2_IN, ASSEMBLE_START, p("{part: ?body, order: ?order, kind: \"body\"}"))
        .input(S2_IN, ASSEMBLE_START, p("{part: ?handle, order: ?order, kind: \"handle\"}"))
        .input(S2_IN, ASSEMBLE_START, p("{part: ?cover, order: ?order, kind: \"cover\"}"))
        .input(ASSEMBLER_IDLE, ASSEMBLE_START, Pattern::var("obj"))
        .output(ASSEMBLE_START, ASSEMBLING, e("{order: order, obj: obj}"));
    m.transition(ASSEMBLE_DONE, Expr::int(0))
        .input(ASSEMBLING, ASSEMBLE_DONE, p("{order: ?order, obj: ?obj}"))
        .output(ASSEMBLE_DONE, S2_OUT, e("{order: order}"))
        .output(ASSEMBLE_DONE, ASSEMBLER_IDLE, Expr::var("obj"));

    // station 2 -> AS/RS
    m.transition(MOVE_S3, transport)
        .input(COMMANDS, MOVE_S3, command_pattern(Operation::Store))
        .input(S2_OUT, MOVE_S3, p("{order: ?order}"))
        .input(TRANSPORT_IDLE, MOVE_S3, Pattern::var("obj"))
        .output(MOVE_S3, IN_TRANSIT_S3, e("{order: order, obj: obj}"));
    m.transition(STORE, Expr::int(0))
        .input(IN_TRANSIT_S3, STORE, p("{order: ?order, obj: ?obj}"))
        .output(STORE, ASRS_PRODUCTS, e("{order: order}"))
        .output(STORE, TRANSPORT_IDLE, Expr::var("obj"));

    for r in &config.transport_resources {
        m.token(TRANSPORT_IDLE, Value::str(object_name(r)), 0);
    }
    m.token(CNC_IDLE, Value::str(object_name("cnc")), 0);
    m.token(ASSEMBLER_IDLE, Value::str(object_name("glue-assembly")), 0);

    let diags = crate::petri::validate(&m);
    assert!(diags.is_empty(), "built-in cell net is malformed: {diags:?}");
    Ok(m)
}

/// The net's initial marking plus the tokens of `orders`, each available at
/// its release time.
pub fn initial_marking(net: &crate::petri::Net, orders: &[BookOrder]) -> Result<Marking, KernelError> {
    let mut m = net.initial_marking();
    for o in orders {
        for inj in o.injections() {
            let place = net
                .place_id(&inj.place)
                .ok_or_else(|| KernelError::UnknownPlace(inj.place.clone()))?;
            m.add(net, place, inj.color, o.release_time)?;
        }
    }
    Ok(m)
}
