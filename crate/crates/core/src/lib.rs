//! Ring-topology decentralized federated learning.
//!
//! Data nodes are placed on a consistent-hash ring. Untrusted nodes hand
//! their models to the nearest trusted node clockwise; trusted nodes run a
//! whole-model ring allgather every `K` local steps and install the
//! weighted average of the trusted models. Model blobs can also be shared
//! out of band through a content-addressed store with envelope encryption,
//! and every transfer is accounted byte-exactly for topology comparisons.

pub mod model;
pub mod netsim;
pub mod ring;
pub mod scalar;
pub mod scenario;
pub mod store;
pub mod sync;
pub mod train;
pub mod verify;

pub use model::{apply_update, fedavg, ModelError, ModelPair, NodeWeight, ParamVector};
pub use netsim::{closed_form, simulate_round, CommLedger, TopologyKind};
pub use ring::{position_of, NodeDescriptor, RingError, RingPosition, RingTopology, Trust};
pub use scalar::Scalar;
pub use store::{ContentId, ContentStore, Envelope, StoreError};
pub use sync::{run_training, RoundReport, RunConfig, SyncError};

pub type ParamVectorF64 = ParamVector<f64>;
pub type ParamVectorF32 = ParamVector<f32>;
pub type ModelPairF64 = ModelPair<f64>;
pub type ModelPairF32 = ModelPair<f32>;
pub type RoundReportF64 = RoundReport<f64>;
