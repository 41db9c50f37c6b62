//! Scenario files and the subcommands built on them.
//!
//! A scenario is a TOML document (shipped with a `.cfg` extension):
//!
//! ```toml
//! name = "iid5"
//! seed = 7
//! T = 2000
//! K = 10
//! virtual_count = 0          # default 0
//! weights = "by_size"        # or "uniform"; default by_size
//! streams = "per_node"       # or "shared"
//! output = "out/iid5.csv"    # optional
//!
//! [trainer]
//! kind = "least_squares"     # or "toy_gan"
//! lr_d = 0.05
//! batch_size = 32
//! dim = 10
//!
//! [data]
//! partition = "iid"          # or "dirichlet"
//! fraction = 0.5
//!
//! [[nodes]]
//! id = "DP_1"
//! address = "10.0.0.1"
//! trusted = true
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelPair;
use crate::netsim::{self, closed_form, p2p_physical_total, pressure_report, simulate_round, TopologyKind};
use crate::ring::{NodeDescriptor, RingError, RingTopology, Trust};
use crate::store::StoreError;
use crate::sync::{run_training, RngStreams, RunConfig, SyncError, TrainingOutcome, WeightsMode};
use crate::train::{
    dirichlet_partition, evaluate_gan, iid_partition, least_squares_loss, normal_equations, parse_dataset,
    parse_partitions, regression_dataset, GanToyParams, GanTrainer, LeastSquaresTrainer, LocalDataset,
    PoisonedTrainer, TrainError, Trainer, TrainerConfig,
};

/// Samples drawn from the final generator for the run summary.
pub const SUMMARY_SAMPLES: usize = 5000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("crypto error: {0}")]
    Crypto(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Protocol(_) => 3,
            CliError::Crypto(_) => 4,
            CliError::Verification(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl From<SyncError> for CliError {
    fn from(e: SyncError) -> Self {
        match e {
            SyncError::InvalidArgument(_) | SyncError::InvalidTopology(_) => CliError::Config(e.to_string()),
            SyncError::Trainer { .. } => CliError::Other(e.to_string()),
            _ => CliError::Protocol(e.to_string()),
        }
    }
}

impl From<RingError> for CliError {
    fn from(e: RingError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Crypto(_) | StoreError::Authentication => CliError::Crypto(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<netsim::NetsimError> for CliError {
    fn from(e: netsim::NetsimError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Deserialize)]
struct RawScenario {
    name: Option<String>,
    seed: Option<u64>,
    #[serde(rename = "T")]
    horizon: Option<u64>,
    #[serde(rename = "K")]
    interval: Option<u64>,
    virtual_count: Option<usize>,
    weights: Option<String>,
    streams: Option<String>,
    output: Option<PathBuf>,
    trainer: RawTrainer,
    #[serde(default)]
    data: RawData,
    nodes: Vec<RawNode>,
}

#[derive(Debug, Deserialize)]
struct RawTrainer {
    kind: String,
    lr_d: Option<f64>,
    lr_g: Option<f64>,
    batch_size: Option<usize>,
    samples: Option<usize>,
    dim: Option<usize>,
    noise: Option<f64>,
    target_mean: Option<f64>,
    target_std: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawData {
    partition: Option<String>,
    fraction: Option<f64>,
    alpha: Option<f64>,
    classes: Option<usize>,
    file: Option<PathBuf>,
    partition_file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct RawNode {
    id: String,
    address: String,
    #[serde(default = "default_trusted")]
    trusted: bool,
    poison: Option<RawPoison>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct RawPoison {
    scale: f64,
    shift: f64,
}

fn default_trusted() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainerKind {
    LeastSquares { dim: usize, noise: f64 },
    ToyGan { target_mean: f64, target_std: f64 },
}

impl TrainerKind {
    pub fn name(&self) -> &'static str {
        match self {
            TrainerKind::LeastSquares { .. } => "least_squares",
            TrainerKind::ToyGan { .. } => "toy_gan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionSpec {
    Iid { fraction: f64 },
    Dirichlet { alpha: f64, classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub partition: PartitionSpec,
    /// Global samples to synthesize when no `file` is given.
    pub samples: usize,
    pub file: Option<PathBuf>,
    pub partition_file: Option<PathBuf>,
}

/// Adversarial submission of an untrusted node: `x * scale + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poison {
    pub scale: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub descriptor: NodeDescriptor,
    pub poison: Option<Poison>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub horizon: u64,
    pub interval: u64,
    pub virtual_count: usize,
    pub weights: WeightsMode,
    pub streams: RngStreams,
    pub output: Option<PathBuf>,
    pub trainer: TrainerKind,
    pub lr_d: f64,
    pub lr_g: f64,
    pub batch_size: usize,
    pub data: DataSpec,
    pub nodes: Vec<NodeSpec>,
}

impl Scenario {
    pub fn descriptors(&self) -> Vec<NodeDescriptor> {
        self.nodes.iter().map(|n| n.descriptor.clone()).collect()
    }

    pub fn ring(&self) -> Result<RingTopology, CliError> {
        Ok(RingTopology::build(&self.descriptors(), self.virtual_count)?)
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config(format!("{key} must be positive, got {v}")))
    }
}

/// Parses and validates a scenario, applying defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::new(text);
    let raw: RawScenario = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| config(e.to_string().trim().to_string()))?;
    if let Some(key) = unknown.first() {
        return Err(config(format!("unknown key `{key}`")));
    }

    let horizon = raw.horizon.unwrap_or(100);
    if horizon == 0 {
        return Err(config("T must be at least 1"));
    }
    let interval = raw.interval.unwrap_or(10);
    if interval == 0 {
        return Err(config("K must be at least 1"));
    }
    let weights = match raw.weights.as_deref().unwrap_or("by_size") {
        "by_size" => WeightsMode::BySize,
        "uniform" => WeightsMode::Uniform,
        other => return Err(config(format!("weights: expected by_size or uniform, got `{other}`"))),
    };
    let streams = match raw.streams.as_deref().unwrap_or("per_node") {
        "per_node" => RngStreams::PerNode,
        "shared" => RngStreams::Shared,
        other => return Err(config(format!("streams: expected per_node or shared, got `{other}`"))),
    };

    let t = &raw.trainer;
    let (trainer, lr_default, batch_default, samples_default) = match t.kind.as_str() {
        "least_squares" => {
            for (key, set) in [("target_mean", t.target_mean.is_some()), ("target_std", t.target_std.is_some())] {
                if set {
                    return Err(config(format!("trainer.{key} does not apply to least_squares")));
                }
            }
            let dim = t.dim.unwrap_or(10);
            if dim == 0 {
                return Err(config("trainer.dim must be at least 1"));
            }
            let noise = t.noise.unwrap_or(0.1);
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(config("trainer.noise must be non-negative"));
            }
            (TrainerKind::LeastSquares { dim, noise }, 0.05, 32, 2000)
        }
        "toy_gan" => {
            for (key, set) in [("dim", t.dim.is_some()), ("noise", t.noise.is_some())] {
                if set {
                    return Err(config(format!("trainer.{key} does not apply to toy_gan")));
                }
            }
            let target_mean = t.target_mean.unwrap_or(3.0);
            if !target_mean.is_finite() {
                return Err(config("trainer.target_mean must be finite"));
            }
            let target_std = positive("trainer.target_std", t.target_std.unwrap_or(1.5))?;
            (TrainerKind::ToyGan { target_mean, target_std }, 0.02, 64, 5000)
        }
        other => return Err(config(format!("trainer.kind: expected least_squares or toy_gan, got `{other}`"))),
    };
    let lr_d = positive("trainer.lr_d", t.lr_d.unwrap_or(lr_default))?;
    let lr_g = positive("trainer.lr_g", t.lr_g.unwrap_or(lr_default))?;
    let batch_size = t.batch_size.unwrap_or(batch_default);
    if batch_size == 0 {
        return Err(config("trainer.batch_size must be at least 1"));
    }

    let d = &raw.data;
    let partition = match d.partition.as_deref().unwrap_or("iid") {
        "iid" => {
            if d.alpha.is_some() || d.classes.is_some() {
                return Err(config("data.alpha and data.classes apply only to dirichlet partitions"));
            }
            let fraction = d.fraction.unwrap_or(0.5);
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(config(format!("data.fraction must be in (0, 1], got {fraction}")));
            }
            PartitionSpec::Iid { fraction }
        }
        "dirichlet" => {
            if d.fraction.is_some() {
                return Err(config("data.fraction applies only to iid partitions"));
            }
            let alpha = positive("data.alpha", d.alpha.unwrap_or(0.5))?;
            let classes = d.classes.unwrap_or(10);
            if classes == 0 {
                return Err(config("data.classes must be at least 1"));
            }
            PartitionSpec::Dirichlet { alpha, classes }
        }
        other => return Err(config(format!("data.partition: expected iid or dirichlet, got `{other}`"))),
    };
    let samples = t.samples.unwrap_or(samples_default);

    if raw.nodes.is_empty() {
        return Err(config("nodes: at least one node is required"));
    }
    let mut seen = BTreeSet::new();
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for (i, n) in raw.nodes.iter().enumerate() {
        if n.id.is_empty() || n.address.is_empty() {
            return Err(config(format!("nodes[{i}]: id and address must be non-empty")));
        }
        if !seen.insert(n.id.as_str()) {
            return Err(config(format!("nodes[{i}]: duplicate id `{}`", n.id)));
        }
        if n.poison.is_some() && n.trusted {
            return Err(config(format!("nodes[{i}].poison requires trusted = false")));
        }
        let trust = if n.trusted { Trust::Trusted } else { Trust::Untrusted };
        let poison = match n.poison {
            Some(p) if !(p.scale.is_finite() && p.shift.is_finite()) => {
                return Err(config(format!("nodes[{i}].poison must be finite")))
            }
            p => p.map(|p| Poison { scale: p.scale, shift: p.shift }),
        };
        nodes.push(NodeSpec {
            descriptor: NodeDescriptor::new(&n.id, &n.address, trust),
            poison,
        });
    }
    if !nodes.iter().any(|n| n.descriptor.trust.is_trusted()) {
        return Err(config("nodes: at least one node must be trusted"));
    }
    if d.file.is_none() && samples < nodes.len() {
        return Err(config(format!("trainer.samples ({samples}) is smaller than the node count")));
    }

    Ok(Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        seed: raw.seed.unwrap_or(0),
        horizon,
        interval,
        virtual_count: raw.virtual_count.unwrap_or(0),
        weights,
        streams,
        output: raw.output,
        trainer,
        lr_d,
        lr_g,
        batch_size,
        data: DataSpec {
            partition,
            samples,
            file: d.file.clone(),
            partition_file: d.partition_file.clone(),
        },
        nodes,
    })
}

/// Reads a scenario file; relative data paths resolve against its directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let mut sc = parse_scenario(&text).map_err(|e| match e {
        CliError::Config(m) => config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut sc.data.file, &mut sc.data.partition_file].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(sc)
}

/// Everything needed to call [`run_training`].
pub struct Setup {
    pub ring: RingTopology,
    pub trainers: BTreeMap<String, Box<dyn Trainer<f64>>>,
    pub initial: ModelPair<f64>,
    pub config: RunConfig,
    /// The global dataset before partitioning.
    pub data: LocalDataset,
    /// Global indices held by each node, in scenario node order.
    pub partitions: Vec<Vec<usize>>,
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))
}

/// Global dataset for a scenario. Toy-GAN rows carry the sample both as the
/// single feature and as the label.
pub fn scenario_dataset(sc: &Scenario, seed: u64) -> Result<LocalDataset, CliError> {
    if let Some(path) = &sc.data.file {
        let data = parse_dataset(&read_file(path)?)?;
        return match sc.trainer {
            TrainerKind::LeastSquares { dim, .. } if data.dim() != dim => Err(config(format!(
                "{}: {} features per row, trainer.dim is {dim}",
                path.display(),
                data.dim()
            ))),
            TrainerKind::ToyGan { .. } if data.dim() != 1 => {
                Err(config(format!("{}: toy_gan data needs exactly one feature", path.display())))
            }
            _ => Ok(data),
        };
    }
    Ok(match sc.trainer {
        TrainerKind::LeastSquares { dim, noise } => regression_dataset(sc.data.samples, dim, noise, seed).0,
        TrainerKind::ToyGan { target_mean, target_std } => {
            let normal = Normal::new(target_mean, target_std).map_err(|e| config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..sc.data.samples).map(|_| normal.sample(&mut rng)).collect();
            LocalDataset::new(xs.iter().map(|&x| vec![x]).collect(), xs)?
        }
    })
}

/// Data, partitions, ring and trainers for a scenario under `seed`.
pub fn build_setup(sc: &Scenario, seed: u64) -> Result<Setup, CliError> {
    let ring = sc.ring()?;
    let data = scenario_dataset(sc, seed)?;
    let n = sc.nodes.len();
    let partitions = match &sc.data.partition_file {
        Some(path) => {
            let parts = parse_partitions(&read_file(path)?)?;
            if parts.len() != n {
                return Err(config(format!("{}: {} partitions for {n} nodes", path.display(), parts.len())));
            }
            if parts.iter().flatten().any(|&i| i >= data.size()) {
                return Err(config(format!("{}: index outside the dataset", path.display())));
            }
            parts
        }
        None => match sc.data.partition {
            PartitionSpec::Iid { fraction } => iid_partition(data.size(), n, fraction, seed.wrapping_add(1))?,
            PartitionSpec::Dirichlet { alpha, classes } => {
                dirichlet_partition(&data.quantile_classes(classes), alpha, n, seed.wrapping_add(1))?
            }
        },
    };

    let mut trainers: BTreeMap<String, Box<dyn Trainer<f64>>> = BTreeMap::new();
    for (node, idx) in sc.nodes.iter().zip(&partitions) {
        let local = data.subset(idx);
        let trainer: Box<dyn Trainer<f64>> = match sc.trainer {
            TrainerKind::LeastSquares { .. } => {
                let t = LeastSquaresTrainer::new(local)
                    .map_err(|e| config(format!("node {}: {e}", node.descriptor.id)))?;
                wrap(t, node.poison)
            }
            TrainerKind::ToyGan { target_mean, target_std } => {
                let t = GanTrainer::new(local.labels, (target_mean, target_std), seed ^ 0x5eed)
                    .map_err(|e| config(format!("node {}: {e}", node.descriptor.id)))?;
                wrap(t, node.poison)
            }
        };
        trainers.insert(node.descriptor.id.clone(), trainer);
    }
    let initial = match sc.trainer {
        TrainerKind::LeastSquares { dim, .. } => LeastSquaresTrainer::initial_model(dim),
        TrainerKind::ToyGan { .. } => GanTrainer::initial_model(),
    };
    Ok(Setup {
        ring,
        trainers,
        initial,
        config: RunConfig {
            horizon: sc.horizon,
            interval: sc.interval,
            trainer: TrainerConfig::constant(sc.lr_d, sc.lr_g, sc.batch_size),
            weights: sc.weights,
            streams: sc.streams,
        },
        data,
        partitions,
    })
}

fn wrap<T: Trainer<f64> + 'static>(t: T, poison: Option<Poison>) -> Box<dyn Trainer<f64>> {
    match poison {
        Some(p) => Box::new(PoisonedTrainer {
            inner: t,
            scale: p.scale,
            shift: p.shift,
        }),
        None => Box::new(t),
    }
}

/// Final generator statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorSummary {
    pub mean: f64,
    pub std: f64,
    pub emd: f64,
}

/// Structured record closing every metrics file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub trainer: String,
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(rename = "K")]
    pub interval: u64,
    pub rounds: usize,
    pub total_bytes: u64,
    pub final_checksum: Option<String>,
    /// Trusted node whose final model is summarized.
    pub reference_node: String,
    pub initial_metrics: BTreeMap<String, f64>,
    pub final_metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSummary>,
}

/// Full result of a scenario run.
pub struct RunOutput {
    pub csv: String,
    pub summary: RunSummary,
    pub outcome: TrainingOutcome<f64>,
}

/// Runs a scenario. `seed` overrides the scenario's own seed.
pub fn run_scenario(sc: &Scenario, seed: Option<u64>) -> Result<RunOutput, CliError> {
    let seed = seed.unwrap_or(sc.seed);
    let mut setup = build_setup(sc, seed)?;
    let outcome = run_training(&setup.ring, &mut setup.trainers, &setup.initial, &setup.config, seed)?;
    let ids: Vec<&String> = setup.trainers.keys().collect();

    let mut csv = String::from("round,t,participants,excluded,checksum,round_bytes,max_node_egress");
    for id in &ids {
        let _ = write!(csv, ",metric:{id}");
    }
    for id in &ids {
        let _ = write!(csv, ",sent:{id}");
    }
    csv.push('\n');
    let mut total_bytes = 0;
    for r in &outcome.reports {
        let egress = pressure_report(&r.ledger).map_or(0, |p| p.max_node_egress);
        total_bytes += r.ledger.total_bytes();
        let _ = write!(
            csv,
            "{},{},{},{},{},{},{}",
            r.round,
            r.t,
            r.participants.join(";"),
            r.excluded.join(";"),
            r.aggregate_checksum(),
            r.ledger.total_bytes(),
            egress
        );
        for id in &ids {
            let _ = write!(csv, ",{}", r.metrics[id.as_str()]);
        }
        for id in &ids {
            let _ = write!(csv, ",{}", r.ledger.sent_by(id));
        }
        csv.push('\n');
    }

    let reference = setup
        .ring
        .nodes()
        .find(|n| n.trust.is_trusted())
        .map(|n| n.id.clone())
        .expect("ring has a trusted node");
    let model = &outcome.finals[&reference];
    let final_metrics = match outcome.reports.last() {
        Some(r) => r.metrics.clone(),
        None => setup.trainers.iter().map(|(id, t)| (id.clone(), t.evaluate(&outcome.finals[id]))).collect(),
    };
    let mut summary = RunSummary {
        scenario: sc.name.clone(),
        trainer: sc.trainer.name().into(),
        seed,
        horizon: sc.horizon,
        interval: sc.interval,
        rounds: outcome.reports.len(),
        total_bytes,
        final_checksum: outcome.reports.last().map(|r| r.aggregate_checksum()),
        reference_node: reference.clone(),
        initial_metrics: outcome.initial_metrics.clone(),
        final_metrics,
        final_loss: None,
        oracle_distance: None,
        generator: None,
    };
    match sc.trainer {
        TrainerKind::LeastSquares { .. } => {
            let rows: Vec<(&[f64], f64)> =
                setup.data.features.iter().map(Vec::as_slice).zip(setup.data.labels.iter().copied()).collect();
            summary.final_loss = Some(least_squares_loss(model.d.values(), &rows));
            if let Ok(w) = normal_equations(&setup.data) {
                let dist = model.d.values().iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                summary.oracle_distance = Some(dist);
            }
        }
        TrainerKind::ToyGan { target_mean, target_std } => {
            let p = GanToyParams::from_model(model)?;
            let e = evaluate_gan(&p, (target_mean, target_std), SUMMARY_SAMPLES, seed)?;
            summary.generator = Some(GeneratorSummary {
                mean: e.mean,
                std: e.std,
                emd: e.emd,
            });
        }
    }
    let json = serde_json::to_string(&summary).map_err(|e| CliError::Other(e.to_string()))?;
    let _ = writeln!(csv, "# summary {json}");
    Ok(RunOutput { csv, summary, outcome })
}

/// Runs a scenario and writes its metrics file to `out`.
pub fn cmd_run(sc: &Scenario, seed: Option<u64>, out: &Path) -> Result<RunSummary, CliError> {
    let run = run_scenario(sc, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(out, &run.csv).map_err(|e| CliError::Other(format!("{}: {e}", out.display())))?;
    Ok(run.summary)
}

/// Untrusted node to trusted successor, in ring order.
pub fn routing_table(ring: &RingTopology) -> Result<Vec<(String, String)>, CliError> {
    let mut table = Vec::new();
    for e in ring.entries().iter().filter(|e| !e.node.trust.is_trusted()) {
        let to = ring.trusted_successor(e.position);
        table.push((e.node.id.clone(), to.id.clone()));
    }
    Ok(table)
}

/// Ring entry dump followed by the routing table.
pub fn cmd_topology(sc: &Scenario) -> Result<String, CliError> {
    let ring = sc.ring()?;
    let mut out = String::from("# position\tid\ttrust\tvirtual_of\n");
    out.push_str(&ring.dump());
    out.push_str("# routing: untrusted -> trusted successor\n");
    for (from, to) in routing_table(&ring)? {
        let _ = writeln!(out, "{from} -> {to}");
    }
    Ok(out)
}

/// Closed-form and simulated per-round costs for every topology and `N` in
/// `n_min..=n_max`. The flag is true when every row agrees.
pub fn cmd_bench_comm(n_min: u64, n_max: u64, model_bytes: u64, seed: u64) -> Result<(String, bool), CliError> {
    if n_min < 2 || n_max > 64 || n_min > n_max {
        return Err(config(format!("N range {n_min}..={n_max} must lie within [2, 64]")));
    }
    if model_bytes == 0 {
        return Err(config("M must be positive"));
    }
    let mut out = String::from(
        "kind,N,M_bytes,times,pressure_bytes,total_bytes,max_node_egress,sim_times,sim_pressure_bytes,sim_total_bytes,match\n",
    );
    let mut all_match = true;
    for kind in TopologyKind::ALL {
        for n in n_min..=n_max {
            let cf = closed_form(kind, n, model_bytes)?;
            let ledger = simulate_round(kind, n, model_bytes, seed)?;
            let report = pressure_report(&ledger)?;
            let sim_times = ledger.communication_times();
            let sim_total = ledger.total_bytes();
            let ok = sim_times == cf.times && sim_total == cf.total && report.pressure == cf.pressure as f64;
            all_match &= ok;
            let _ = writeln!(
                out,
                "{kind},{n},{model_bytes},{},{},{},{},{sim_times},{},{sim_total},{ok}",
                cf.times, cf.pressure, cf.total, report.max_node_egress, report.pressure
            );
        }
    }
    out.push_str("# P2P rows count self-delivery (N^2 M); physical totals without it are N(N-1)M:\n");
    for n in n_min..=n_max {
        let _ = writeln!(out, "# P2P,{n},{model_bytes},physical_total={}", p2p_physical_total(n, model_bytes));
    }
    Ok((out, all_match))
}
