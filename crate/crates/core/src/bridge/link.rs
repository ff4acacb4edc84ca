//! The simulator end of the coupling, in-process or across a framed socket.

use std::collections::BTreeSet;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::fms::{command_token, places, Operation};
use crate::petri::{Net, NetModel, SimEvent, Simulator, Step, Time};

use super::framing::{read_frame, write_frame, FrameDecoder, DEFAULT_FRAME_LIMIT};
use super::protocol::{parse, serialize, ActionCommand, StepOutcome, WireMessage};
use super::{operation_of, BridgeError};

#[derive(Debug, Clone, PartialEq)]
pub struct StepReply {
    pub outcome: StepOutcome,
    /// Simulator clock after the step.
    pub now: Time,
    /// Command injections, then the firing's events.
    pub events: Vec<SimEvent>,
}

/// One lock-step exchange with the hardware simulation.
pub trait HsaLink {
    /// Applies `commands` at the current clock, then fires the first
    /// binding enabled no later than `until`, if any.
    fn step(&mut self, commands: &[ActionCommand], until: Time) -> Result<StepReply, BridgeError>;
}

/// Holds any link to wall-clock pace: after each step it sleeps until the
/// simulated clock is no more than `speedup` times ahead of real time since
/// the first step. Demonstration only; results do not depend on it.
pub struct PacedLink<L> {
    inner: L,
    speedup: f64,
    started: Option<Instant>,
}

impl<L: HsaLink> PacedLink<L> {
    pub fn new(inner: L, speedup: f64) -> Result<Self, BridgeError> {
        if !(speedup.is_finite() && speedup > 0.0) {
            return Err(BridgeError::BrokenStream(format!("pace must be positive, got {speedup}")));
        }
        Ok(PacedLink {
            inner,
            speedup,
            started: None,
        })
    }
}

impl<L: HsaLink> HsaLink for PacedLink<L> {
    fn step(&mut self, commands: &[ActionCommand], until: Time) -> Result<StepReply, BridgeError> {
        let started = *self.started.get_or_insert_with(Instant::now);
        let reply = self.inner.step(commands, until)?;
        let due = Duration::from_secs_f64(reply.now as f64 / 1000.0 / self.speedup);
        if let Some(wait) = due.checked_sub(started.elapsed()) {
            std::thread::sleep(wait);
        }
        Ok(reply)
    }
}

/// Names of the resource objects a net knows: the string tokens initially
/// in its resource pools.
pub fn net_objects(net: &NetModel) -> BTreeSet<String> {
    net.initial
        .iter()
        .filter(|t| places::RESOURCE_POOLS.contains(&t.place.as_str()))
        .filter_map(|t| t.color.as_str().map(str::to_string))
        .collect()
}

/// The simulator with its object registry.
pub struct InProcessHsa {
    sim: Simulator,
    objects: BTreeSet<String>,
}

impl InProcessHsa {
    /// Starts from the model's initial tokens.
    pub fn new(model: NetModel, seed: u64) -> Result<Self, BridgeError> {
        let objects = net_objects(&model);
        let net = Net::new(model)?;
        let marking = net.initial_marking();
        Ok(InProcessHsa {
            sim: Simulator::new(Arc::new(net), marking, seed),
            objects,
        })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    fn apply(&mut self, c: &ActionCommand) -> Result<(), BridgeError> {
        if !self.objects.contains(&c.target) {
            return Err(BridgeError::UnknownObject(c.target.clone()));
        }
        let op: Operation = operation_of(&c.action).ok_or_else(|| BridgeError::UnknownAction {
            object: c.target.clone(),
            action: c.action.clone(),
        })?;
        self.sim
            .inject(places::COMMANDS, command_token(op, c.order_id, c.part, &c.target))?;
        Ok(())
    }
}

impl HsaLink for InProcessHsa {
    fn step(&mut self, commands: &[ActionCommand], until: Time) -> Result<StepReply, BridgeError> {
        let start = self.sim.events().len();
        for c in commands {
            self.apply(c)?;
        }
        let outcome = match self.sim.step(until)? {
            Step::Fired(_) => StepOutcome::Fired,
            Step::Deadlock => StepOutcome::Deadlock,
            Step::Horizon => StepOutcome::Horizon,
        };
        Ok(StepReply {
            outcome,
            now: self.sim.now(),
            events: self.sim.events()[start..].to_vec(),
        })
    }
}

/// Client end of a simulator running behind a framed stream.
pub struct FramedHsa {
    stream: TcpStream,
    decoder: FrameDecoder,
    limit: usize,
    server: Option<JoinHandle<Result<(), BridgeError>>>,
}

impl FramedHsa {
    /// Connects to `addr` and sets the simulator up with `model`.
    pub fn connect(addr: SocketAddr, model: &NetModel, seed: u64) -> Result<Self, BridgeError> {
        let stream = TcpStream::connect(addr).map_err(|e| BridgeError::BrokenStream(e.to_string()))?;
        stream.set_nodelay(true).map_err(|e| BridgeError::BrokenStream(e.to_string()))?;
        let mut link = FramedHsa {
            stream,
            decoder: FrameDecoder::new(DEFAULT_FRAME_LIMIT),
            limit: DEFAULT_FRAME_LIMIT,
            server: None,
        };
        link.exchange(&WireMessage::Setup {
            seed,
            net: model.clone(),
        })?;
        Ok(link)
    }

    /// Serves a simulator on a loopback port from a background thread and
    /// connects to it.
    pub fn loopback(model: &NetModel, seed: u64) -> Result<Self, BridgeError> {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| BridgeError::BrokenStream(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| BridgeError::BrokenStream(e.to_string()))?;
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().map_err(|e| BridgeError::BrokenStream(e.to_string()))?;
            serve_hsa(stream, DEFAULT_FRAME_LIMIT)
        });
        let mut link = Self::connect(addr, model, seed)?;
        link.server = Some(server);
        Ok(link)
    }

    fn exchange(&mut self, m: &WireMessage) -> Result<StepReply, BridgeError> {
        write_frame(&mut self.stream, &serialize(m)?, self.limit)?;
        let Some(bytes) = read_frame(&mut self.stream, &mut self.decoder)? else {
            return Err(self.server_failure());
        };
        match parse(&bytes)? {
            WireMessage::StepResult { outcome, now, events } => Ok(StepReply { outcome, now, events }),
            _ => Err(BridgeError::BrokenStream("expected a STEP-RESULT".to_string())),
        }
    }

    /// The server's own error, if it stopped with one.
    fn server_failure(&mut self) -> BridgeError {
        match self.server.take().map(JoinHandle::join) {
            Some(Ok(Err(e))) => e,
            _ => BridgeError::BrokenStream("simulator closed the stream".to_string()),
        }
    }
}

impl HsaLink for FramedHsa {
    fn step(&mut self, commands: &[ActionCommand], until: Time) -> Result<StepReply, BridgeError> {
        self.exchange(&WireMessage::Step {
            until,
            commands: commands.to_vec(),
        })
    }
}

impl Drop for FramedHsa {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
        if let Some(h) = self.server.take() {
            let _ = h.join();
        }
    }
}

/// Runs a simulator for one client: a SETUP, then STEP requests until the
/// client hangs up. Every request gets a STEP-RESULT; the SETUP's carries
/// the initial clock and no events.
pub fn serve_hsa(mut stream: TcpStream, limit: usize) -> Result<(), BridgeError> {
    stream.set_nodelay(true).map_err(|e| BridgeError::BrokenStream(e.to_string()))?;
    let mut dec = FrameDecoder::new(limit);
    let Some(first) = read_frame(&mut stream, &mut dec)? else { return Ok(()) };
    let WireMessage::Setup { seed, net } = parse(&first)? else {
        return Err(BridgeError::BrokenStream("expected SETUP first".to_string()));
    };
    let mut hsa = InProcessHsa::new(net, seed)?;
    let hello = WireMessage::StepResult {
        outcome: StepOutcome::Fired,
        now: hsa.sim.now(),
        events: Vec::new(),
    };
    write_frame(&mut stream, &serialize(&hello)?, limit)?;
    while let Some(bytes) = read_frame(&mut stream, &mut dec).or_else(|e| match e {
        // The client may close mid-conversation once it is done.
        BridgeError::BrokenStream(_) => Ok(None),
        e => Err(e),
    })? {
        let WireMessage::Step { until, commands } = parse(&bytes)? else {
            return Err(BridgeError::BrokenStream("expected STEP".to_string()));
        };
        let reply = hsa.step(&commands, until)?;
        let out = WireMessage::StepResult {
            outcome: reply.outcome,
            now: reply.now,
            events: reply.events,
        };
        if write_frame(&mut stream, &serialize(&out)?, limit).is_err() {
            break;
        }
    }
    Ok(())
}
