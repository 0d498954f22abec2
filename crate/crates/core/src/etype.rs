//! The training-free EType inducer: an instance's cluster is its
//! `head type-tail type` string.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::ModelError;

/// One cluster label per corpus instance, aligned by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub labels: Vec<String>,
}

impl Clustering {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels
            .iter()
            .collect::<std::collections::HashSet<_>>()
            .len()
    }
}

/// Order-sensitive concatenation of the two entity types.
pub fn etype_label(head_type: &str, tail_type: &str) -> Result<String, ModelError> {
    if head_type.is_empty() || tail_type.is_empty() {
        return Err(ModelError::EmptyType);
    }
    Ok(format!("{head_type}-{tail_type}"))
}

pub fn etype_cluster(corpus: &Corpus) -> Clustering {
    Clustering {
        // types are validated non-empty at parse time
        labels: corpus
            .iter()
            .map(|i| format!("{}-{}", i.head.etype, i.tail.etype))
            .collect(),
    }
}
