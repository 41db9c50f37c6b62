//! Byte-exact communication accounting.
//!
//! A [`CommLedger`] records every simulated message. [`simulate_round`]
//! emits the per-round schedules of three decentralized topologies and
//! [`closed_form`] gives the matching analytic counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetsimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TopologyKind {
    P2P,
    FlGossip,
    Rdfl,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 3] = [TopologyKind::P2P, TopologyKind::FlGossip, TopologyKind::Rdfl];
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::P2P => "P2P",
            TopologyKind::FlGossip => "FLGossip",
            TopologyKind::Rdfl => "RDFL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PayloadKind {
    ModelBytes,
    EnvelopeBytes,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub sender: String,
    pub receiver: String,
    pub kind: PayloadKind,
    pub bytes: u64,
    /// Communication-time index within the round.
    pub time: u64,
}

/// Every message of one round (or one run) plus the node roster.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    model_size: u64,
    nodes: BTreeSet<String>,
    messages: Vec<Message>,
}

impl CommLedger {
    pub fn new<I, T>(model_size: u64, nodes: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        Self {
            model_size,
            nodes: nodes.into_iter().map(Into::into).collect(),
            messages: Vec::new(),
        }
    }

    pub fn model_size(&self) -> u64 {
        self.model_size
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    /// Records a message. Self-delivery is only accepted when `allow_self`.
    pub fn record(&mut self, msg: Message, allow_self: bool) -> Result<(), NetsimError> {
        if msg.bytes == 0 {
            return Err(NetsimError::InvalidArgument("zero-length message".into()));
        }
        if msg.sender == msg.receiver && !allow_self {
            return Err(NetsimError::InvalidArgument(format!("{} sends to itself", msg.sender)));
        }
        for id in [&msg.sender, &msg.receiver] {
            if !self.nodes.contains(id) {
                return Err(NetsimError::UnknownNode(id.clone()));
            }
        }
        self.messages.push(msg);
        Ok(())
    }

    pub(crate) fn send(&mut self, sender: &str, receiver: &str, kind: PayloadKind, bytes: u64, time: u64) -> Result<(), NetsimError> {
        self.record(
            Message {
                sender: sender.to_string(),
                receiver: receiver.to_string(),
                kind,
                bytes,
                time,
            },
            false,
        )
    }

    /// Appends all messages of `other`, shifting its time indices by `time_offset`.
    pub fn absorb(&mut self, other: &CommLedger, time_offset: u64) {
        self.nodes.extend(other.nodes.iter().cloned());
        self.messages.extend(other.messages.iter().map(|m| Message {
            time: m.time + time_offset,
            ..m.clone()
        }));
    }

    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.bytes).sum()
    }

    pub fn message_count(&self) -> usize {
        self.messages.len()
    }

    pub fn sent_by(&self, node: &str) -> u64 {
        self.messages.iter().filter(|m| m.sender == node).map(|m| m.bytes).sum()
    }

    pub fn received_by(&self, node: &str) -> u64 {
        self.messages.iter().filter(|m| m.receiver == node).map(|m| m.bytes).sum()
    }

    pub fn messages_sent_by(&self, node: &str) -> usize {
        self.messages.iter().filter(|m| m.sender == node).count()
    }

    pub fn messages_received_by(&self, node: &str) -> usize {
        self.messages.iter().filter(|m| m.receiver == node).count()
    }

    /// Distinct communication-time indices, ascending.
    pub fn times(&self) -> Vec<u64> {
        self.messages.iter().map(|m| m.time).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn communication_times(&self) -> u64 {
        self.times().len() as u64
    }

    /// Bytes sent by `node` at communication time `time`.
    pub fn egress_at(&self, node: &str, time: u64) -> u64 {
        self.messages
            .iter()
            .filter(|m| m.sender == node && m.time == time)
            .map(|m| m.bytes)
            .sum()
    }

    pub fn bytes_of_kind(&self, kind: PayloadKind) -> u64 {
        self.messages.iter().filter(|m| m.kind == kind).map(|m| m.bytes).sum()
    }
}

/// Analytic per-round communication cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosedForm {
    /// Communication times per round.
    pub times: u64,
    /// Bytes per node per communication time.
    pub pressure: u64,
    /// Bytes moved per round.
    pub total: u64,
}

/// `round(x / 2)` with halves rounded up.
fn half_up_div2(x: u64) -> u64 {
    x.div_ceil(2)
}

pub fn closed_form(kind: TopologyKind, n: u64, model_size: u64) -> Result<ClosedForm, NetsimError> {
    if n < 2 {
        return Err(NetsimError::InvalidArgument(format!("need at least 2 nodes, got {n}")));
    }
    if model_size == 0 {
        return Err(NetsimError::InvalidArgument("model size must be positive".into()));
    }
    let m = model_size;
    Ok(match kind {
        TopologyKind::P2P => ClosedForm {
            times: 1,
            pressure: n * m,
            total: n * n * m,
        },
        TopologyKind::FlGossip => {
            let r = half_up_div2(n - 1);
            ClosedForm {
                times: r,
                pressure: 2 * m,
                total: 2 * n * m * r,
            }
        }
        TopologyKind::Rdfl => ClosedForm {
            times: n - 1,
            pressure: m,
            total: n * (n - 1) * m,
        },
    })
}

/// P2P total without self-delivery, `N(N-1)M`.
pub fn p2p_physical_total(n: u64, model_size: u64) -> u64 {
    n * n.saturating_sub(1) * model_size
}

pub fn node_names(n: u64) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("n{i:0width$}")).collect()
}

/// Emits one round of the given topology's message schedule.
///
/// P2P counts self-delivery so its total is `N^2 M`. Gossip pairs every
/// node with one seeded random peer per communication time and exchanges
/// models in both directions.
pub fn simulate_round(kind: TopologyKind, n: u64, model_size: u64, seed: u64) -> Result<CommLedger, NetsimError> {
    let cf = closed_form(kind, n, model_size)?;
    let names = node_names(n);
    let mut ledger = CommLedger::new(model_size, names.iter().cloned());
    let msg = |s: &str, r: &str, time: u64| Message {
        sender: s.to_string(),
        receiver: r.to_string(),
        kind: PayloadKind::ModelBytes,
        bytes: model_size,
        time,
    };
    let n = n as usize;
    match kind {
        TopologyKind::P2P => {
            for s in &names {
                for r in &names {
                    ledger.record(msg(s, r, 0), true)?;
                }
            }
        }
        TopologyKind::FlGossip => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for time in 0..cf.times {
                for i in 0..n {
                    let mut j = rng.gen_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    ledger.record(msg(&names[i], &names[j], time), false)?;
                    ledger.record(msg(&names[j], &names[i], time), false)?;
                }
            }
        }
        TopologyKind::Rdfl => {
            for time in 0..cf.times {
                for i in 0..n {
                    ledger.record(msg(&names[i], &names[(i + 1) % n], time), false)?;
                }
            }
        }
    }
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodePressure {
    pub sent: u64,
    pub received: u64,
    /// Largest egress at any single communication time.
    pub peak_egress: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureReport {
    pub per_node: BTreeMap<String, NodePressure>,
    /// Total volume / (N x communication times).
    pub pressure: f64,
    pub max_node_egress: u64,
    /// Max over mean of per-node sent bytes.
    pub max_over_mean: f64,
}

pub fn pressure_report(ledger: &CommLedger) -> Result<PressureReport, NetsimError> {
    if ledger.messages.is_empty() || ledger.nodes.is_empty() {
        return Err(NetsimError::InvalidArgument("empty ledger".into()));
    }
    let times = ledger.times();
    let per_node: BTreeMap<String, NodePressure> = ledger
        .nodes
        .iter()
        .map(|id| {
            let peak_egress = times.iter().map(|&t| ledger.egress_at(id, t)).max().unwrap_or(0);
            (
                id.clone(),
                NodePressure {
                    sent: ledger.sent_by(id),
                    received: ledger.received_by(id),
                    peak_egress,
                },
            )
        })
        .collect();
    let n = ledger.nodes.len() as f64;
    let total = ledger.total_bytes() as f64;
    let mean_sent = total / n;
    let max_sent = per_node.values().map(|p| p.sent).max().unwrap_or(0) as f64;
    Ok(PressureReport {
        pressure: total / (n * times.len() as f64),
        max_node_egress: per_node.values().map(|p| p.peak_egress).max().unwrap_or(0),
        max_over_mean: max_sent / mean_sent,
        per_node,
    })
}
