//! JSON checkpoints of trained models.
//!
//! A checkpoint embeds the vocabularies and feature index so it can be applied
//! to new corpora, together with their sha256 fingerprints, the parameter
//! dtype and shapes. Loading verifies all of them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabularies;
use crate::error::CheckpointError;
use crate::features::FeatureIndex;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::train::{TrainConfig, TrainHistory, TrainedModel};

pub const FORMAT: &str = "urex-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shapes {
    pub n_relations: usize,
    pub n_features: usize,
    pub n_entities: usize,
    pub dim: usize,
}

impl Shapes {
    fn of<T: Scalar>(p: &ModelParams<T>) -> Self {
        Shapes {
            n_relations: p.n_relations(),
            n_features: p.n_features(),
            n_entities: p.n_entities(),
            dim: p.dim(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Checkpoint<T> {
    format: String,
    dtype: String,
    shapes: Shapes,
    vocabulary_hash: String,
    feature_index_hash: String,
    config: TrainConfig,
    history: TrainHistory,
    vocabularies: Vocabularies,
    feature_index: FeatureIndex,
    params: ModelParams<T>,
}

pub fn to_json<T: Scalar>(model: &TrainedModel<T>) -> Result<String, CheckpointError> {
    let ckpt = Checkpoint {
        format: FORMAT.to_string(),
        dtype: T::DTYPE.to_string(),
        shapes: Shapes::of(&model.params),
        vocabulary_hash: model.vocabularies.fingerprint(),
        feature_index_hash: model.feature_index.fingerprint(),
        config: model.config.clone(),
        history: model.history.clone(),
        vocabularies: model.vocabularies.clone(),
        feature_index: model.feature_index.clone(),
        params: model.params.clone(),
    };
    Ok(serde_json::to_string(&ckpt)?)
}

pub fn from_json<T: Scalar>(text: &str) -> Result<TrainedModel<T>, CheckpointError> {
    let header: Header = serde_json::from_str(text)?;
    if header.format != FORMAT {
        return Err(CheckpointError::Shape(format!(
            "unknown format `{}`, expected `{FORMAT}`",
            header.format
        )));
    }
    if header.dtype != T::DTYPE {
        return Err(CheckpointError::Dtype {
            expected: T::DTYPE.to_string(),
            found: header.dtype,
        });
    }
    let ckpt: Checkpoint<T> = serde_json::from_str(text)?;
    ckpt.params.check_shapes().map_err(CheckpointError::Shape)?;
    let found = Shapes::of(&ckpt.params);
    if found != ckpt.shapes {
        return Err(CheckpointError::Shape(format!(
            "recorded {:?}, parameters have {found:?}",
            ckpt.shapes
        )));
    }
    let computed = ckpt.vocabularies.fingerprint();
    if computed != ckpt.vocabulary_hash {
        return Err(CheckpointError::VocabularyHash {
            recorded: ckpt.vocabulary_hash,
            computed,
        });
    }
    let computed = ckpt.feature_index.fingerprint();
    if computed != ckpt.feature_index_hash {
        return Err(CheckpointError::FeatureIndexHash {
            recorded: ckpt.feature_index_hash,
            computed,
        });
    }
    if ckpt.feature_index.dimension() != found.n_features {
        return Err(CheckpointError::Shape(format!(
            "feature index has {} features, classifier expects {}",
            ckpt.feature_index.dimension(),
            found.n_features
        )));
    }
    if ckpt.vocabularies.entities.len() != found.n_entities {
        return Err(CheckpointError::Shape(format!(
            "vocabulary has {} entities, embedding table has {}",
            ckpt.vocabularies.entities.len(),
            found.n_entities
        )));
    }
    Ok(TrainedModel {
        config: ckpt.config,
        vocabularies: ckpt.vocabularies,
        feature_index: ckpt.feature_index,
        params: ckpt.params,
        history: ckpt.history,
    })
}

pub fn save<T: Scalar>(model: &TrainedModel<T>, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fs::write(path, to_json(model)?).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<TrainedModel<T>, CheckpointError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(&text)
}
