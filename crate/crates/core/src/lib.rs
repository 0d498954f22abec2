//! Unsupervised relation extraction toolkit: corpus handling, the entity-type
//! baseline, the EType+ classifier trained through a bilinear link predictor,
//! clustering metrics, and the oracle-loss experiment.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod etype;
pub mod features;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod scalar;
pub mod train;

pub use corpus::{load_corpus, synth_corpus, Corpus, RelationInstance, SynthConfig, TypedSpan};
pub use error::{CheckpointError, CorpusError, MetricsError, ModelError, TrainError};
pub use etype::{etype_cluster, Clustering};
pub use features::{FeatureIndex, FeatureSet, FeatureTemplate, SparseFeatureVector};
pub use metrics::{evaluate, ClusteringReport};
pub use model::{ModelParams, RelationPosterior};
pub use oracle::{oracle_loss_curve, OracleConfig, OracleSetting};
pub use scalar::Scalar;
pub use train::{induce_clustering, train, TrainConfig, TrainedModel};

pub type Params = ModelParams<f64>;
pub type Params32 = ModelParams<f32>;
pub type Posterior = RelationPosterior<f64>;
pub type Posterior32 = RelationPosterior<f32>;
pub type Model = TrainedModel<f64>;
pub type Model32 = TrainedModel<f32>;
