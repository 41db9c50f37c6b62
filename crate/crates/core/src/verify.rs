//! Invariant suite run by the `verify` subcommand: one seeded check per
//! module property, each reported as a pass/fail line.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{self, apply_update, fedavg_ordered, ModelPair, NodeWeight, ParamVector, SummationOrder};
use crate::netsim::{closed_form, simulate_round, CommLedger, TopologyKind};
use crate::ring::{remap_delta, NodeDescriptor, RingPosition, RingTopology};
use crate::store::{receive, share, ContentId, ContentStore, KeyPair, StoreError, CONTENT_ID_LEN};
use crate::sync::{run_training, sync_round, RngStreams, RunConfig, WeightsMode};
use crate::train::{
    dirichlet_partition, emd, gan_direction, gan_losses, iid_partition, inception_score, least_squares_direction,
    least_squares_loss, regression_dataset, ConstantOracle, GanBatch, GanToyParams, LeastSquaresTrainer,
    LookupOracle, Sample, Trainer, TrainerConfig,
};

/// Deliberate defects for negative-control runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Aggregate in arrival order instead of the canonical order.
    FedavgOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub millis: u128,
}

impl PropertyResult {
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{status} {}::{} ({} ms) {}", self.module, self.name, self.millis, self.detail)
    }
}

type Check = fn(Fault) -> Result<String, String>;

const PROPERTIES: &[(&str, &str, Check)] = &[
    ("ring", "placement_deterministic", ring_deterministic),
    ("ring", "routing_total_to_trusted", ring_routing_total),
    ("ring", "successor_matches_scan", ring_successor_scan),
    ("ring", "monotone_on_insert", ring_monotone),
    ("model", "fedavg_order_invariant", fedavg_order_invariant),
    ("model", "fedavg_matches_mean", fedavg_matches_mean),
    ("model", "update_additive", update_additive),
    ("model", "codec_roundtrip", codec_roundtrip),
    ("sync", "consensus_and_oracle", sync_consensus),
    ("sync", "message_count", sync_message_count),
    ("sync", "untrusted_excluded", sync_untrusted_excluded),
    ("sync", "run_deterministic", sync_deterministic),
    ("store", "content_addressing", store_content_addressing),
    ("store", "envelope_roundtrip_and_rejection", store_envelope),
    ("train", "gradient_checks", train_gradients),
    ("train", "partitions_exact", train_partitions),
    ("train", "metric_sanity", train_metrics),
    ("netsim", "closed_form_agreement", netsim_agreement),
    ("netsim", "conservation", netsim_conservation),
    ("netsim", "rdfl_egress_is_m", netsim_rdfl_egress),
];

/// Runs every property and returns one result per property.
pub fn run_all(fault: Fault) -> Vec<PropertyResult> {
    PROPERTIES
        .iter()
        .map(|&(module, name, check)| {
            let start = Instant::now();
            let outcome = check(fault);
            let millis = start.elapsed().as_millis();
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            PropertyResult {
                module,
                name,
                passed,
                detail,
                millis,
            }
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn mixed_nodes(n: usize, seed: u64) -> Vec<NodeDescriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let addr = format!("172.16.{}.{}", i / 256, i % 256);
            if i == 0 || rng.gen_bool(0.4) {
                NodeDescriptor::trusted(format!("t{i}"), addr)
            } else {
                NodeDescriptor::untrusted(format!("u{i}"), addr)
            }
        })
        .collect()
}

fn ring_deterministic(_: Fault) -> Result<String, String> {
    let nodes = mixed_nodes(40, 1);
    let a = RingTopology::build(&nodes, 4).map_err(err)?;
    let mut shuffled = nodes.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    let b = RingTopology::build(&shuffled, 4).map_err(err)?;
    ensure(a == b && a.dump() == b.dump(), || "input order changed the ring".into())?;
    let expected = 40 + 4 * a.trusted_count();
    ensure(a.entries().len() == expected, || format!("{} entries, expected {expected}", a.entries().len()))?;
    Ok(format!("{expected} entries"))
}

fn ring_routing_total(_: Fault) -> Result<String, String> {
    let ring = RingTopology::build(&mixed_nodes(60, 3), 8).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20_000 {
        let to = ring.trusted_successor(RingPosition(rng.gen()));
        ensure(to.trust.is_trusted() && !to.is_virtual(), || format!("routed to {}", to.id))?;
    }
    Ok("20000 positions".into())
}

fn ring_successor_scan(_: Fault) -> Result<String, String> {
    let ring = RingTopology::build(&mixed_nodes(30, 5), 3).map_err(err)?;
    let trusted: Vec<_> = ring.entries().iter().filter(|e| e.node.trust.is_trusted()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..5_000 {
        let p: u32 = rng.gen();
        let scan = trusted.iter().find(|e| e.position.0 > p).unwrap_or(&trusted[0]);
        let owner = scan.node.virtual_of.as_deref().unwrap_or(&scan.node.id);
        let got = ring.trusted_successor(RingPosition(p));
        ensure(got.id == owner, || format!("position {p}: {} vs scan {owner}", got.id))?;
    }
    Ok("5000 positions".into())
}

fn ring_monotone(_: Fault) -> Result<String, String> {
    let nodes = mixed_nodes(20, 7);
    let before = RingTopology::build(&nodes, 2).map_err(err)?;
    let mut grown = nodes.clone();
    grown.push(NodeDescriptor::trusted("new", "172.31.0.1"));
    let after = RingTopology::build(&grown, 2).map_err(err)?;
    let arcs = remap_delta(&before, &after).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20_000 {
        let p = RingPosition(rng.gen());
        if before.trusted_successor(p).id != after.trusted_successor(p).id {
            ensure(arcs.iter().any(|a| a.contains(p)), || format!("{} moved outside the delta", p.0))?;
        }
    }
    Ok(format!("{} arcs", arcs.len()))
}

fn random_pair(rng: &mut ChaCha8Rng, origin: &str, dim: usize) -> ModelPair<f64> {
    let d = (0..dim).map(|_| rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-3..4))).collect();
    let g = (0..dim / 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ModelPair::new(
        ParamVector::new("d", d).expect("finite"),
        ParamVector::new("g", g).expect("finite"),
        origin,
        0,
    )
}

fn fedavg_order_invariant(fault: Fault) -> Result<String, String> {
    let order = match fault {
        Fault::FedavgOrder => SummationOrder::AsGiven,
        Fault::None => SummationOrder::Canonical,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut inputs: Vec<(ModelPair<f64>, NodeWeight)> = NodeWeight::by_size(&[120, 80, 300, 55, 445, 17, 9])
        .map_err(err)?
        .into_iter()
        .enumerate()
        .map(|(i, w)| (random_pair(&mut rng, &format!("n{i}"), 2000), w))
        .collect();
    let reference = fedavg_ordered(&inputs, order).map_err(err)?;
    for trial in 0..20 {
        inputs.shuffle(&mut rng);
        let got = fedavg_ordered(&inputs, order).map_err(err)?;
        ensure(got.same_params(&reference), || format!("permutation {trial} changed the aggregate bits"))?;
    }
    Ok("20 permutations bitwise equal".into())
}

fn fedavg_matches_mean(_: Fault) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let inputs: Vec<_> = NodeWeight::uniform(4)
        .into_iter()
        .enumerate()
        .map(|(i, w)| (random_pair(&mut rng, &format!("n{i}"), 500), w))
        .collect();
    let agg = model::fedavg(&inputs).map_err(err)?;
    for k in 0..500 {
        let mean = inputs.iter().map(|(m, _)| m.d.values()[k]).sum::<f64>() / 4.0;
        let got = agg.d.values()[k];
        ensure((got - mean).abs() <= 1e-12 * mean.abs().max(1.0), || format!("coordinate {k}: {got} vs {mean}"))?;
    }
    Ok("500 coordinates".into())
}

fn update_additive(_: Fault) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v = random_pair(&mut rng, "v", 200).d;
    let g = random_pair(&mut rng, "g", 200).d;
    let once = apply_update(&v, &g, 0.5).map_err(err)?;
    let twice = apply_update(&apply_update(&v, &g, 0.25).map_err(err)?, &g, 0.25).map_err(err)?;
    for (a, b) in once.values().iter().zip(twice.values()) {
        ensure((a - b).abs() <= 1e-9 * a.abs().max(1.0), || format!("{a} vs {b}"))?;
    }
    ensure(apply_update(&v, &g, 0.0).is_err(), || "zero learning rate accepted".into())?;
    Ok("lr additivity".into())
}

fn codec_roundtrip(_: Fault) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for dim in [0, 1, 7, 1000] {
        let m = random_pair(&mut rng, "DP_1", dim);
        let bytes = model::serialize(&m);
        ensure(bytes.len() == model::size_bytes(&m), || "size_bytes disagrees".into())?;
        let back: ModelPair<f64> = model::deserialize(&bytes).map_err(err)?;
        ensure(back == m, || format!("dim {dim} changed in roundtrip"))?;
        ensure(model::deserialize::<f64>(&bytes[..bytes.len().saturating_sub(1)]).is_err(), || {
            "truncated encoding accepted".into()
        })?;
    }
    Ok("4 shapes".into())
}

fn ring_of(trusted: usize, untrusted: usize) -> RingTopology {
    let mut nodes: Vec<NodeDescriptor> =
        (0..trusted).map(|i| NodeDescriptor::trusted(format!("t{i}"), format!("10.8.0.{i}"))).collect();
    nodes.extend((0..untrusted).map(|i| NodeDescriptor::untrusted(format!("u{i}"), format!("10.9.0.{i}"))));
    RingTopology::build(&nodes, 0).expect("valid ring")
}

type Round = (ModelPair<f64>, BTreeMap<String, ModelPair<f64>>, CommLedger, Vec<String>);

fn one_round(ring: &RingTopology, seed: u64, dim: usize, poison: f64) -> Result<Round, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locals = BTreeMap::new();
    let mut submissions = BTreeMap::new();
    for n in ring.nodes() {
        let m = random_pair(&mut rng, &n.id, dim);
        let mut sub = m.clone();
        if !n.trust.is_trusted() {
            sub.d = ParamVector::new("d", sub.d.values().iter().map(|x| x * poison).collect()).map_err(err)?;
        }
        locals.insert(n.id.clone(), m);
        submissions.insert(n.id.clone(), sub);
    }
    let trusted: Vec<String> = ring.nodes().filter(|n| n.trust.is_trusted()).map(|n| n.id.clone()).collect();
    let weights: BTreeMap<String, NodeWeight> = trusted.iter().cloned().zip(NodeWeight::uniform(trusted.len())).collect();
    let (agg, b, excluded, ledger) = sync_round(ring, &mut locals, &submissions, &weights).map_err(err)?;
    ensure(b == trusted, || format!("B = {b:?}"))?;
    Ok((agg, locals, ledger, excluded))
}

fn sync_consensus(_: Fault) -> Result<String, String> {
    for m in [2, 5, 8] {
        let ring = ring_of(m, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(20 + m as u64);
        let originals: Vec<ModelPair<f64>> = ring.nodes().map(|n| random_pair(&mut rng, &n.id, 1000)).collect();
        let (agg, locals, _, _) = one_round(&ring, 20 + m as u64, 1000, 1.0)?;
        for (id, local) in &locals {
            ensure(local.same_params(&agg), || format!("m={m}: {id} differs from the aggregate"))?;
        }
        for k in 0..1000 {
            let mean = originals.iter().map(|o| o.d.values()[k]).sum::<f64>() / m as f64;
            let got = agg.d.values()[k];
            ensure((got - mean).abs() <= 1e-12 * mean.abs().max(1e-300), || format!("m={m} coordinate {k}"))?;
        }
    }
    Ok("m in {2, 5, 8}".into())
}

fn sync_message_count(_: Fault) -> Result<String, String> {
    for (m, u) in [(2, 0), (4, 3), (7, 1)] {
        let (_, _, ledger, _) = one_round(&ring_of(m, u), 30, 10, 1.0)?;
        let expected = m * (m - 1) + u;
        ensure(ledger.message_count() == expected, || {
            format!("m={m}, u={u}: {} messages, expected {expected}", ledger.message_count())
        })?;
    }
    Ok("m(m-1) ring messages plus one per untrusted node".into())
}

fn sync_untrusted_excluded(_: Fault) -> Result<String, String> {
    let ring = ring_of(3, 2);
    let (honest, _, _, excluded) = one_round(&ring, 40, 50, 1.0)?;
    let (poisoned, _, _, _) = one_round(&ring, 40, 50, -1e6)?;
    ensure(excluded == ["u0", "u1"], || format!("excluded {excluded:?}"))?;
    ensure(honest.same_params(&poisoned), || "poisoned submissions changed the aggregate".into())?;
    Ok("aggregate bitwise unchanged".into())
}

fn small_run(seed: u64) -> Result<Vec<String>, String> {
    let ring = ring_of(3, 1);
    let (data, _) = regression_dataset(400, 4, 0.1, seed);
    let parts = iid_partition(400, 4, 0.5, seed + 1).map_err(err)?;
    let mut trainers: BTreeMap<String, Box<dyn Trainer<f64>>> = BTreeMap::new();
    for (n, p) in ring.nodes().zip(&parts) {
        trainers.insert(n.id.clone(), Box::new(LeastSquaresTrainer::new(data.subset(p)).map_err(err)?));
    }
    let config = RunConfig {
        horizon: 50,
        interval: 10,
        trainer: TrainerConfig::constant(0.05, 0.05, 16),
        weights: WeightsMode::BySize,
        streams: RngStreams::PerNode,
    };
    let out = run_training(&ring, &mut trainers, &LeastSquaresTrainer::initial_model(4), &config, seed).map_err(err)?;
    Ok(out.reports.iter().map(|r| r.aggregate_checksum()).collect())
}

fn sync_deterministic(_: Fault) -> Result<String, String> {
    let a = small_run(50)?;
    ensure(a.len() == 5, || format!("{} rounds, expected 5", a.len()))?;
    ensure(a == small_run(50)?, || "same seed gave different aggregates".into())?;
    ensure(a != small_run(51)?, || "different seeds gave identical aggregates".into())?;
    Ok("5 rounds reproduced".into())
}

fn store_content_addressing(_: Fault) -> Result<String, String> {
    let store = ContentStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let mut blobs = Vec::new();
    for i in 0..500 {
        let mut blob = vec![0u8; i % 97];
        rng.fill(blob.as_mut_slice());
        let id = store.put(&blob);
        ensure(id.as_str().len() == CONTENT_ID_LEN, || format!("id {} has wrong length", id.as_str()))?;
        ensure(ContentId::parse(id.as_str()).map_err(err)? == id, || "id does not parse back".into())?;
        blobs.push((id, blob));
    }
    for (id, blob) in &blobs {
        ensure(store.get(id).map_err(err)? == *blob, || format!("{} returned other bytes", id.as_str()))?;
    }
    let (id, blob) = &blobs[10];
    let mut bad = blob.clone();
    bad.push(1);
    store.overwrite_raw(id, bad);
    ensure(matches!(store.get(id), Err(StoreError::Corruption(_))), || "corruption undetected".into())?;
    Ok("500 blobs".into())
}

fn store_envelope(_: Fault) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let receiver = KeyPair::generate(&mut rng, 2048).map_err(err)?;
    let stranger = KeyPair::generate(&mut rng, 2048).map_err(err)?;
    let store = ContentStore::new();
    let mut ledger = CommLedger::new(0, ["DP_1", "DP_4"]);
    let blob: Vec<u8> = (0..10_000u32).map(|i| (i * 31 % 251) as u8).collect();
    let env = share(&store, "DP_1", "DP_4", &blob, receiver.public(), &mut rng, &mut ledger, 0).map_err(err)?;
    ensure(receive(&env, &receiver, &store).map_err(err)? == blob, || "roundtrip changed the blob".into())?;
    ensure(matches!(receive(&env, &stranger, &store), Err(StoreError::Crypto(_))), || {
        "wrong key was not rejected".into()
    })?;
    let mut tampered = env.clone();
    tampered.encrypted_cid[20] ^= 1;
    ensure(matches!(receive(&tampered, &receiver, &store), Err(StoreError::Authentication)), || {
        "tampered envelope was not rejected".into()
    })?;
    ensure(ledger.total_bytes() == env.wire_len() as u64, || "envelope traffic not recorded".into())?;
    Ok(format!("envelope {} bytes", env.wire_len()))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn train_gradients(_: Fault) -> Result<String, String> {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let (data, _) = regression_dataset(64, 5, 0.3, 81);
    let batch: Vec<(&[f64], f64)> = data.features.iter().map(Vec::as_slice).zip(data.labels.iter().copied()).collect();
    for _ in 0..10 {
        let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dir = least_squares_direction(&w, &batch).map_err(err)?;
        for k in 0..5 {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (least_squares_loss(&up, &batch) - least_squares_loss(&down, &batch)) / (2.0 * h);
            ensure(rel_err(-dir[k], fd) <= 1e-4, || format!("least squares coordinate {k}: {} vs {fd}", -dir[k]))?;
        }
    }
    for _ in 0..10 {
        let p = GanToyParams {
            a: rng.gen_range(0.2..2.0),
            b: rng.gen_range(-1.0..1.0),
            w0: rng.gen_range(-1.0..1.0),
            w1: rng.gen_range(-1.0..1.0),
            w2: rng.gen_range(-0.3..0.3),
        };
        let batch = GanBatch {
            real: (0..32).map(|_| rng.gen_range(0.0..6.0)).collect(),
            noise: (0..32).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        };
        let (dw, dg) = gan_direction(&p, &batch).map_err(err)?;
        let fd = |f: &dyn Fn(&mut GanToyParams<f64>, f64), pick: fn((f64, f64)) -> f64| {
            let (mut up, mut down) = (p, p);
            f(&mut up, h);
            f(&mut down, -h);
            (pick(gan_losses(&up, &batch)) - pick(gan_losses(&down, &batch))) / (2.0 * h)
        };
        let disc = [
            fd(&|q, e| q.w0 += e, |l| l.0),
            fd(&|q, e| q.w1 += e, |l| l.0),
            fd(&|q, e| q.w2 += e, |l| l.0),
        ];
        let gen = [fd(&|q, e| q.a += e, |l| l.1), fd(&|q, e| q.b += e, |l| l.1)];
        for (k, f) in disc.iter().enumerate() {
            ensure(rel_err(-dw[k], *f) <= 1e-4, || format!("discriminator {k}: {} vs {f}", -dw[k]))?;
        }
        for (k, f) in gen.iter().enumerate() {
            ensure(rel_err(-dg[k], *f) <= 1e-4, || format!("generator {k}: {} vs {f}", -dg[k]))?;
        }
    }
    Ok("10 batches per trainer".into())
}

fn train_partitions(_: Fault) -> Result<String, String> {
    let labels: Vec<i64> = (0..3000).map(|i| i % 10).collect();
    for alpha in [0.1, 1.0, 100.0] {
        let parts = dirichlet_partition(&labels, alpha, 7, 90).map_err(err)?;
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        ensure(all == (0..3000).collect::<Vec<_>>(), || format!("alpha {alpha}: not an exact partition"))?;
    }
    let parts = iid_partition(1000, 5, 0.5, 91).map_err(err)?;
    ensure(parts.iter().all(|p| p.len() == 500 && p.iter().all(|&i| i < 1000)), || "iid sizes".into())?;
    Ok("dirichlet exact, iid sized".into())
}

fn train_metrics(_: Fault) -> Result<String, String> {
    let samples: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 3) as f64]).collect();
    let is = inception_score(&samples, &ConstantOracle(vec![0.2, 0.3, 0.5]), 3).map_err(err)?;
    ensure(is == 1.0, || format!("constant classifier IS {is}"))?;
    let one_hot = LookupOracle(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    let is = inception_score(&samples, &one_hot, 1).map_err(err)?;
    ensure((is - 3.0).abs() < 1e-12, || format!("one-hot IS {is}"))?;
    let s: Vec<Sample<f64>> = (0..3).map(|i| Sample { x: vec![i as f64], y: 1.0 }).collect();
    let e = emd(&s, &s, &one_hot).map_err(err)?;
    ensure(e == 0.0, || format!("emd(S, S) = {e}"))?;
    Ok("IS bounds and emd identity".into())
}

fn netsim_agreement(_: Fault) -> Result<String, String> {
    for kind in TopologyKind::ALL {
        for n in 2..=16 {
            let cf = closed_form(kind, n, 1000).map_err(err)?;
            let l = simulate_round(kind, n, 1000, 100 + n).map_err(err)?;
            ensure(l.total_bytes() == cf.total && l.communication_times() == cf.times, || {
                format!("{kind} N={n}: simulated ({}, {})", l.communication_times(), l.total_bytes())
            })?;
        }
    }
    Ok("3 kinds, N in [2, 16]".into())
}

fn netsim_conservation(_: Fault) -> Result<String, String> {
    for kind in TopologyKind::ALL {
        for n in [2, 5, 9] {
            let l = simulate_round(kind, n, 77, 7).map_err(err)?;
            let sent: u64 = l.nodes().iter().map(|id| l.sent_by(id)).sum();
            let received: u64 = l.nodes().iter().map(|id| l.received_by(id)).sum();
            ensure(sent == received && sent == l.total_bytes(), || format!("{kind} N={n}"))?;
        }
    }
    let a = simulate_round(TopologyKind::FlGossip, 9, 1, 3).map_err(err)?;
    ensure(a == simulate_round(TopologyKind::FlGossip, 9, 1, 3).map_err(err)?, || "gossip not seeded".into())?;
    Ok("sent = received = total".into())
}

fn netsim_rdfl_egress(_: Fault) -> Result<String, String> {
    for n in 2..=16 {
        let l = simulate_round(TopologyKind::Rdfl, n, 4096, 0).map_err(err)?;
        for id in l.nodes() {
            for t in l.times() {
                ensure(l.egress_at(id, t) == 4096, || format!("N={n} {id} at {t}: {}", l.egress_at(id, t)))?;
            }
        }
    }
    Ok("N in [2, 16]".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_properties_pass() {
        for r in run_all(Fault::None) {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn fedavg_fault_breaks_ordering_only() {
        assert!(fedavg_order_invariant(Fault::FedavgOrder).is_err());
        assert!(fedavg_order_invariant(Fault::None).is_ok());
    }
}
