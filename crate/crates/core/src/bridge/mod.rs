//! The hybrid agent: couples the agent layer with the simulated cell over
//! an XML message protocol, either in-process or across a framed stream.

pub mod coupling;
pub mod framing;
pub mod link;
pub mod protocol;
pub mod xml;

use thiserror::Error;

use crate::fms::{FmsError, Operation};
use crate::mes::MesError;
use crate::petri::{KernelError, Time};

pub use coupling::{
    audit, cell_model, completions, mas_descriptor, step_coupled, translate_decision, translate_event,
    AgentController, Controller, CoupledOutcome, JointEntry, JointTrace, ObjectInfo, ObjectRegistry, Translation,
};
pub use framing::{frame, read_frame, write_frame, FrameDecoder, DEFAULT_FRAME_LIMIT};
pub use link::{net_objects, serve_hsa, FramedHsa, HsaLink, InProcessHsa, PacedLink, StepReply};
pub use protocol::{
    parse, read_net, serialize, ActionCommand, ActionEntry, Descriptor, MasDescriptor, StateEntry, StateUpdate,
    StepOutcome, WireMessage,
};
pub use xml::{parse_document, Element, XmlWriter, VOCABULARY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BridgeError {
    #[error("malformed XML at byte {offset}: {message}")]
    MalformedXml { offset: u64, message: String },
    #[error("unknown element <{name}> at byte {offset}")]
    UnknownElement { name: String, offset: u64 },
    #[error("<{element}> at byte {offset} has no NAME")]
    MissingName { element: String, offset: u64 },
    #[error("cannot serialize: {0}")]
    Unserializable(String),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("object {object} has no action {action}")]
    UnknownAction { object: String, action: String },
    #[error("frame of {len} bytes exceeds the {limit}-byte limit")]
    OversizeFrame { len: u64, limit: usize },
    #[error("broken stream: {0}")]
    BrokenStream(String),
    #[error("sides diverged at t={at}: {message}")]
    Divergence { at: Time, message: String },
    #[error(transparent)]
    Mes(#[from] MesError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Fms(#[from] FmsError),
}

const ACTIONS: [(Operation, &str); 5] = [
    (Operation::Retrieve, "start-retrieval"),
    (Operation::Machine, "start-machining"),
    (Operation::MoveToAssembly, "start-transfer"),
    (Operation::Assemble, "start-assembly"),
    (Operation::Store, "start-storage"),
];

/// Wire name of the action that starts `op`.
pub fn action_name(op: Operation) -> &'static str {
    ACTIONS.iter().find(|(o, _)| *o == op).map(|(_, a)| *a).expect("every operation has an action")
}

pub fn operation_of(action: &str) -> Option<Operation> {
    ACTIONS.iter().find(|(_, a)| *a == action).map(|(o, _)| *o)
}
