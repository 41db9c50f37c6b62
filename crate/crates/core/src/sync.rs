//! The synchronization round and the training loop around it.
//!
//! Every `K` local steps: untrusted nodes hand their models to their
//! clockwise trusted successor, trusted nodes run an `m - 1` hop ring
//! allgather of whole models, and each trusted node averages the trusted
//! models it holds and installs the result. Untrusted models are held for
//! audit only and never forwarded or averaged.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{self, apply_update, fedavg, ModelError, ModelPair, NodeWeight};
use crate::netsim::{CommLedger, NetsimError, PayloadKind};
use crate::ring::RingTopology;
use crate::scalar::Scalar;
use crate::train::{TrainError, Trainer, TrainerConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("trainer of node {node} failed at t={t}: {source}")]
    Trainer {
        node: String,
        t: u64,
        #[source]
        source: TrainError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ledger(#[from] NetsimError),
}

/// `t mod K == 0`.
pub fn should_sync(t: u64, interval: u64) -> Result<bool, SyncError> {
    if interval == 0 {
        return Err(SyncError::InvalidArgument("synchronizing interval K must be positive".into()));
    }
    Ok(t.is_multiple_of(interval))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeldModel<S> {
    pub pair: ModelPair<S>,
    /// False for models delivered by untrusted nodes.
    pub trusted: bool,
}

/// A trusted node's view during one round.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncState<S> {
    pub node: String,
    pub local: ModelPair<S>,
    pub held: BTreeMap<String, HeldModel<S>>,
    pub hop: usize,
    forward: Option<String>,
}

impl<S: Scalar> SyncState<S> {
    /// Hop-0 state holding only the node's own submission.
    pub fn new(node: &str, local: ModelPair<S>, submission: ModelPair<S>) -> Self {
        let mut held = BTreeMap::new();
        held.insert(
            node.to_string(),
            HeldModel {
                pair: submission,
                trusted: true,
            },
        );
        Self {
            node: node.to_string(),
            local,
            held,
            hop: 0,
            forward: Some(node.to_string()),
        }
    }

    pub fn trusted_origins(&self) -> BTreeSet<&str> {
        self.held
            .iter()
            .filter(|(_, h)| h.trusted)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn untrusted_origins(&self) -> BTreeSet<&str> {
        self.held
            .iter()
            .filter(|(_, h)| !h.trusted)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Delivers each untrusted sender's model to its clockwise trusted successor.
///
/// Deliveries are recorded in `ledger` at communication time `time`.
pub fn route_untrusted<S: Scalar>(
    ring: &RingTopology,
    senders: &[(String, ModelPair<S>)],
    ledger: &mut CommLedger,
    time: u64,
) -> Result<Vec<(String, ModelPair<S>)>, SyncError> {
    senders
        .iter()
        .map(|(id, pair)| {
            let node = ring.node(id).ok_or_else(|| SyncError::UnknownNode(id.clone()))?;
            if node.trust.is_trusted() {
                return Err(SyncError::InvalidArgument(format!("{id} is trusted; only untrusted nodes are routed")));
            }
            let from = ring.physical_position(id).expect("physical node has an entry");
            let to = ring.trusted_successor(from).id.clone();
            ledger.send(id, &to, PayloadKind::ModelBytes, model::size_bytes(pair) as u64, time)?;
            Ok((to, pair.clone()))
        })
        .collect()
}

/// Runs the `m - 1` hop allgather in lockstep.
///
/// At hop `h` every trusted node forwards the model it received at hop
/// `h - 1` (its own at hop 1) to its successor in the trusted cycle. Hop
/// `h` is logged at communication time `first_time + h - 1`.
pub fn ring_pass<S: Scalar>(
    states: &mut BTreeMap<String, SyncState<S>>,
    ring: &RingTopology,
    ledger: &mut CommLedger,
    first_time: u64,
) -> Result<(), SyncError> {
    let cycle: Vec<String> = ring.trusted_cycle().iter().map(|n| n.id.clone()).collect();
    let m = cycle.len();
    if m == 0 {
        return Err(SyncError::InvalidTopology("no trusted nodes".into()));
    }
    if states.len() != m || cycle.iter().any(|id| !states.contains_key(id)) {
        return Err(SyncError::Protocol("one state per trusted node required".into()));
    }
    for s in states.values() {
        if s.hop != 0 || s.trusted_origins().len() != 1 {
            return Err(SyncError::Protocol(format!("{} is not at hop 0", s.node)));
        }
    }
    for hop in 1..m {
        let mut outgoing = Vec::with_capacity(m);
        for (i, id) in cycle.iter().enumerate() {
            let state = &states[id];
            let origin = state
                .forward
                .as_ref()
                .ok_or_else(|| SyncError::Protocol(format!("{id} has nothing to forward")))?;
            let pair = state.held[origin].pair.clone();
            let to = cycle[(i + 1) % m].clone();
            ledger.send(id, &to, PayloadKind::ModelBytes, model::size_bytes(&pair) as u64, first_time + hop as u64 - 1)?;
            outgoing.push((to, origin.clone(), pair));
        }
        for (to, origin, pair) in outgoing {
            let state = states.get_mut(&to).expect("successor has a state");
            if state.held.get(&origin).is_some_and(|h| h.trusted) {
                return Err(SyncError::Protocol(format!("{to} received {origin} twice")));
            }
            state.held.insert(origin.clone(), HeldModel { pair, trusted: true });
            state.forward = Some(origin);
            state.hop = hop;
        }
    }
    Ok(())
}

/// Result of one synchronization round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport<S> {
    /// 1-based round index.
    pub round: usize,
    /// Local step at which the round ran.
    pub t: u64,
    pub aggregate: ModelPair<S>,
    /// Trusted subset `B` whose models were averaged.
    pub participants: Vec<String>,
    /// Untrusted nodes whose models were received but not averaged.
    pub excluded: Vec<String>,
    /// Messages of this round.
    pub ledger: CommLedger,
    /// Post-round quality figure per node.
    pub metrics: BTreeMap<String, f64>,
}

impl<S: Scalar> RoundReport<S> {
    /// First 16 hex digits of SHA-256 over the encoded aggregate.
    pub fn aggregate_checksum(&self) -> String {
        checksum(&self.aggregate)
    }
}

pub fn checksum<S: Scalar>(pair: &ModelPair<S>) -> String {
    Sha256::digest(model::serialize(pair))[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Aggregate, trusted subset `B` and excluded untrusted origins.
pub type Aggregation<S> = (ModelPair<S>, Vec<String>, Vec<String>);

/// [`Aggregation`] plus the round's message ledger.
pub type SyncRoundResult<S> = (ModelPair<S>, Vec<String>, Vec<String>, CommLedger);

/// Every trusted node averages its held trusted models and installs the
/// result. Fails unless every node holds exactly the trusted set `B` and
/// all nodes compute bitwise-identical aggregates.
pub fn aggregate_and_install<S: Scalar>(
    states: &mut BTreeMap<String, SyncState<S>>,
    weights: &BTreeMap<String, NodeWeight>,
) -> Result<Aggregation<S>, SyncError> {
    let owned: Vec<String> = states.keys().cloned().collect();
    let participants: BTreeSet<&str> = owned.iter().map(String::as_str).collect();
    if participants.is_empty() {
        return Err(SyncError::InvalidTopology("no trusted nodes".into()));
    }
    if weights.keys().map(String::as_str).collect::<BTreeSet<_>>() != participants {
        return Err(SyncError::Protocol("weights must cover exactly the trusted set".into()));
    }
    let mut results = Vec::with_capacity(states.len());
    for state in states.values() {
        if state.trusted_origins() != participants {
            return Err(SyncError::Protocol(format!("{} holds an incomplete trusted set", state.node)));
        }
        let inputs: Vec<(ModelPair<S>, NodeWeight)> = state
            .held
            .iter()
            .filter(|(_, h)| h.trusted)
            .map(|(id, h)| (h.pair.snapshot(id, h.pair.iteration), weights[id]))
            .collect();
        results.push(fedavg(&inputs)?);
    }
    let aggregate = results[0].clone();
    if results.iter().any(|r| !r.same_params(&aggregate)) {
        return Err(SyncError::Protocol("trusted nodes disagree on the aggregate".into()));
    }
    let mut excluded = BTreeSet::new();
    for state in states.values_mut() {
        excluded.extend(state.untrusted_origins().into_iter().map(str::to_string));
        state.local.d = aggregate.d.clone();
        state.local.g = aggregate.g.clone();
    }
    Ok((aggregate, owned, excluded.into_iter().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightsMode {
    Uniform,
    /// Proportional to each trusted node's dataset size.
    BySize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStreams {
    /// Each node's batch stream is seeded from `(seed, node id)`.
    PerNode,
    /// Every node replays the same batch stream.
    Shared,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Training period `T`.
    pub horizon: u64,
    /// Synchronizing interval `K`.
    pub interval: u64,
    pub trainer: TrainerConfig,
    pub weights: WeightsMode,
    pub streams: RngStreams,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome<S> {
    pub reports: Vec<RoundReport<S>>,
    /// Each node's local model after step `T`.
    pub finals: BTreeMap<String, ModelPair<S>>,
    /// Quality figure of the shared initial model, per node.
    pub initial_metrics: BTreeMap<String, f64>,
}

pub fn node_seed(seed: u64, node: &str) -> u64 {
    let h = Sha256::digest(node.as_bytes());
    seed ^ u64::from_le_bytes(h[..8].try_into().unwrap())
}

pub fn trust_weights(
    ring: &RingTopology,
    sizes: &BTreeMap<String, usize>,
    mode: WeightsMode,
) -> Result<BTreeMap<String, NodeWeight>, SyncError> {
    let trusted: Vec<&str> = ring.nodes().filter(|n| n.trust.is_trusted()).map(|n| n.id.as_str()).collect();
    let ws = match mode {
        WeightsMode::Uniform => NodeWeight::uniform(trusted.len()),
        WeightsMode::BySize => {
            let s: Vec<usize> = trusted.iter().map(|id| sizes.get(*id).copied().unwrap_or(0)).collect();
            NodeWeight::by_size(&s)?
        }
    };
    Ok(trusted.into_iter().map(str::to_string).zip(ws).collect())
}

/// Executes one full synchronization round over the nodes' current local
/// models. Submissions come from `submit`.
pub fn sync_round<S: Scalar>(
    ring: &RingTopology,
    locals: &mut BTreeMap<String, ModelPair<S>>,
    submissions: &BTreeMap<String, ModelPair<S>>,
    weights: &BTreeMap<String, NodeWeight>,
) -> Result<SyncRoundResult<S>, SyncError> {
    let model_size = locals.values().next().map_or(0, |m| model::size_bytes(m) as u64);
    let mut ledger = CommLedger::new(model_size, ring.nodes().map(|n| n.id.clone()));
    let untrusted: Vec<(String, ModelPair<S>)> = ring
        .nodes()
        .filter(|n| !n.trust.is_trusted())
        .map(|n| {
            submissions
                .get(&n.id)
                .map(|m| (n.id.clone(), m.clone()))
                .ok_or_else(|| SyncError::UnknownNode(n.id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let delivered = route_untrusted(ring, &untrusted, &mut ledger, 0)?;

    let mut states: BTreeMap<String, SyncState<S>> = BTreeMap::new();
    for n in ring.nodes().filter(|n| n.trust.is_trusted()) {
        let local = locals.get(&n.id).ok_or_else(|| SyncError::UnknownNode(n.id.clone()))?;
        let sub = submissions.get(&n.id).ok_or_else(|| SyncError::UnknownNode(n.id.clone()))?;
        states.insert(n.id.clone(), SyncState::new(&n.id, local.clone(), sub.clone()));
    }
    ring_pass(&mut states, ring, &mut ledger, 1)?;
    for ((to, pair), (from, _)) in delivered.into_iter().zip(&untrusted) {
        let state = states.get_mut(&to).expect("routed to a trusted node");
        state.held.insert(from.clone(), HeldModel { pair, trusted: false });
    }
    let (aggregate, participants, excluded) = aggregate_and_install(&mut states, weights)?;
    for (id, state) in states {
        locals.insert(id, state.local);
    }
    Ok((aggregate, participants, excluded, ledger))
}

/// Algorithm driver: `T` local steps per node with a synchronization round
/// whenever `t mod K == 0`.
pub fn run_training<S: Scalar>(
    ring: &RingTopology,
    trainers: &mut BTreeMap<String, Box<dyn Trainer<S>>>,
    initial: &ModelPair<S>,
    config: &RunConfig,
    seed: u64,
) -> Result<TrainingOutcome<S>, SyncError> {
    if config.horizon == 0 {
        return Err(SyncError::InvalidArgument("training period T must be positive".into()));
    }
    should_sync(1, config.interval)?;
    for n in ring.nodes() {
        if !trainers.contains_key(&n.id) {
            return Err(SyncError::UnknownNode(format!("no trainer for {}", n.id)));
        }
    }
    if trainers.len() != ring.node_count() {
        return Err(SyncError::InvalidArgument("trainer registered for a node outside the ring".into()));
    }
    let sizes: BTreeMap<String, usize> = trainers.iter().map(|(id, t)| (id.clone(), t.dataset_size())).collect();
    let weights = trust_weights(ring, &sizes, config.weights)?;

    let mut rngs: BTreeMap<String, ChaCha8Rng> = trainers
        .keys()
        .map(|id| {
            let s = match config.streams {
                RngStreams::PerNode => node_seed(seed, id),
                RngStreams::Shared => seed,
            };
            (id.clone(), ChaCha8Rng::seed_from_u64(s))
        })
        .collect();
    let mut locals: BTreeMap<String, ModelPair<S>> = trainers.keys().map(|id| (id.clone(), initial.snapshot(id, 0))).collect();
    let initial_metrics = trainers.iter().map(|(id, t)| (id.clone(), t.evaluate(&locals[id]))).collect();

    let mut reports = Vec::new();
    for t in 1..=config.horizon {
        let lr_d = S::of(config.trainer.lr_d.at(t));
        let lr_g = S::of(config.trainer.lr_g.at(t));
        for (id, trainer) in trainers.iter_mut() {
            let local = locals.get_mut(id).expect("local model per trainer");
            let fail = |source: TrainError| SyncError::Trainer { node: id.clone(), t, source };
            let grads = trainer
                .local_step(local, &config.trainer, rngs.get_mut(id).expect("rng per trainer"))
                .map_err(fail)?;
            local.d = apply_update(&local.d, &grads.discriminator, lr_d).map_err(|e| fail(e.into()))?;
            local.g = apply_update(&local.g, &grads.generator, lr_g).map_err(|e| fail(e.into()))?;
            local.iteration = t;
        }
        if should_sync(t, config.interval)? {
            let submissions = trainers.iter().map(|(id, tr)| (id.clone(), tr.submission(&locals[id]))).collect();
            let (aggregate, participants, excluded, ledger) = sync_round(ring, &mut locals, &submissions, &weights)?;
            let metrics = trainers.iter().map(|(id, tr)| (id.clone(), tr.evaluate(&locals[id]))).collect();
            reports.push(RoundReport {
                round: reports.len() + 1,
                t,
                aggregate,
                participants,
                excluded,
                ledger,
                metrics,
            });
        }
    }
    Ok(TrainingOutcome {
        reports,
        finals: locals,
        initial_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamVector;
    use crate::ring::NodeDescriptor;

    fn pair(origin: &str, d: &[f64]) -> ModelPair<f64> {
        ModelPair::new(ParamVector::new("d", d.to_vec()).unwrap(), ParamVector::zeros("g", 0), origin, 0)
    }

    fn ring_of(trusted: usize, untrusted: usize) -> RingTopology {
        let mut nodes = Vec::new();
        for i in 0..trusted {
            nodes.push(NodeDescriptor::trusted(format!("t{i}"), format!("10.1.0.{i}")));
        }
        for i in 0..untrusted {
            nodes.push(NodeDescriptor::untrusted(format!("u{i}"), format!("10.2.0.{i}")));
        }
        RingTopology::build(&nodes, 0).unwrap()
    }

    fn ledger_for(ring: &RingTopology) -> CommLedger {
        CommLedger::new(0, ring.nodes().map(|n| n.id.clone()))
    }

    fn states_for(ring: &RingTopology, value: impl Fn(usize) -> f64) -> BTreeMap<String, SyncState<f64>> {
        ring.trusted_cycle()
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let p = pair(&n.id, &[value(i)]);
                (n.id.clone(), SyncState::new(&n.id, p.clone(), p))
            })
            .collect()
    }

    #[test]
    fn sync_predicate() {
        assert!(should_sync(10, 5).unwrap());
        assert!(!should_sync(7, 5).unwrap());
        assert!(should_sync(5, 5).unwrap());
        assert!(!should_sync(4, 5).unwrap());
        assert!(should_sync(3, 0).is_err());
    }

    #[test]
    fn ring_pass_single_node_is_noop() {
        let ring = ring_of(1, 0);
        let mut states = states_for(&ring, |_| 1.0);
        let mut ledger = ledger_for(&ring);
        ring_pass(&mut states, &ring, &mut ledger, 1).unwrap();
        assert_eq!(ledger.message_count(), 0);
        assert_eq!(states["t0"].trusted_origins().len(), 1);
    }

    #[test]
    fn ring_pass_two_nodes() {
        let ring = ring_of(2, 0);
        let mut states = states_for(&ring, |i| i as f64);
        let mut ledger = ledger_for(&ring);
        ring_pass(&mut states, &ring, &mut ledger, 1).unwrap();
        assert_eq!(ledger.message_count(), 2);
        assert!(states.values().all(|s| s.trusted_origins().len() == 2));
    }

    #[test]
    fn ring_pass_matches_broadcast_oracle() {
        let ring = ring_of(5, 0);
        let mut states = states_for(&ring, |i| i as f64 * 10.0);
        // all-to-all broadcast: every node ends with every origin's exact model
        let everything: BTreeMap<String, ModelPair<f64>> =
            states.iter().map(|(id, s)| (id.clone(), s.held[id].pair.clone())).collect();
        let mut ledger = ledger_for(&ring);
        ring_pass(&mut states, &ring, &mut ledger, 1).unwrap();
        assert_eq!(ledger.message_count(), 20);
        for s in states.values() {
            let held: BTreeMap<String, ModelPair<f64>> = s.held.iter().map(|(k, h)| (k.clone(), h.pair.clone())).collect();
            assert_eq!(held, everything);
            assert_eq!(ledger.messages_sent_by(&s.node), 4);
            assert_eq!(ledger.messages_received_by(&s.node), 4);
            assert_eq!(s.hop, 4);
        }
    }

    #[test]
    fn ring_pass_hop_invariant() {
        // run the pass on progressively longer schedules by truncating m
        for m in 1..=6 {
            let ring = ring_of(m, 0);
            let mut states = states_for(&ring, |i| i as f64);
            let mut ledger = ledger_for(&ring);
            ring_pass(&mut states, &ring, &mut ledger, 1).unwrap();
            for s in states.values() {
                assert_eq!(s.trusted_origins().len(), (s.hop + 1).min(m));
            }
            assert_eq!(ledger.communication_times(), m as u64 - 1);
        }
    }

    #[test]
    fn aggregate_mean_on_every_node() {
        let ring = ring_of(3, 0);
        let mut states = states_for(&ring, |i| 3.0 * i as f64);
        let mut ledger = ledger_for(&ring);
        ring_pass(&mut states, &ring, &mut ledger, 1).unwrap();
        let weights = ring.nodes().map(|n| (n.id.clone(), NodeWeight::new(1.0 / 3.0).unwrap())).collect();
        let (agg, b, excluded) = aggregate_and_install(&mut states, &weights).unwrap();
        assert!((agg.d.values()[0] - 3.0).abs() < 1e-15);
        assert_eq!(b.len(), 3);
        assert!(excluded.is_empty());
        for s in states.values() {
            assert_eq!(s.local.d.values(), agg.d.values());
        }
    }

    #[test]
    fn aggregate_single_node_is_identity() {
        let ring = ring_of(1, 0);
        let mut states = states_for(&ring, |_| 4.5);
        let weights = [("t0".to_string(), NodeWeight::new(1.0).unwrap())].into();
        let (agg, _, _) = aggregate_and_install(&mut states, &weights).unwrap();
        assert_eq!(agg.d.values(), &[4.5]);
    }

    #[test]
    fn aggregate_rejects_incomplete_sets() {
        let ring = ring_of(3, 0);
        let mut states = states_for(&ring, |i| i as f64);
        let weights = ring.nodes().map(|n| (n.id.clone(), NodeWeight::new(1.0 / 3.0).unwrap())).collect();
        assert!(matches!(aggregate_and_install(&mut states, &weights), Err(SyncError::Protocol(_))));
    }

    #[test]
    fn routing_errors() {
        let ring = ring_of(2, 1);
        let mut ledger = ledger_for(&ring);
        assert!(route_untrusted::<f64>(&ring, &[], &mut ledger, 0).unwrap().is_empty());
        let r = route_untrusted(&ring, &[("ghost".to_string(), pair("ghost", &[1.0]))], &mut ledger, 0);
        assert!(matches!(r, Err(SyncError::UnknownNode(_))));
        let r = route_untrusted(&ring, &[("t0".to_string(), pair("t0", &[1.0]))], &mut ledger, 0);
        assert!(matches!(r, Err(SyncError::InvalidArgument(_))));
    }

    #[test]
    fn untrusted_models_do_not_change_the_aggregate() {
        let ring = ring_of(3, 2);
        let locals: BTreeMap<String, ModelPair<f64>> =
            ring.nodes().enumerate().map(|(i, n)| (n.id.clone(), pair(&n.id, &[i as f64, 1.0]))).collect();
        let weights = trust_weights(&ring, &BTreeMap::new(), WeightsMode::Uniform).unwrap();
        let mut subs = locals.clone();
        let (a, _, excluded, ledger) = sync_round(&ring, &mut locals.clone(), &subs, &weights).unwrap();
        assert_eq!(excluded, vec!["u0".to_string(), "u1".to_string()]);
        assert_eq!(ledger.messages().iter().filter(|m| m.time == 0).count(), 2);
        for id in ["u0", "u1"] {
            subs.insert(id.into(), pair(id, &[1e9, -1e9]));
        }
        let (b, ..) = sync_round(&ring, &mut locals.clone(), &subs, &weights).unwrap();
        assert!(a.same_params(&b));
    }
}
