use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Corpus;

/// Label of the bucket holding unaligned (unlabelled) instances.
pub const UNALIGNED_BUCKET: &str = "∅";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationCount {
    pub label: String,
    pub count: usize,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationStats {
    pub n_instances: usize,
    pub n_labelled: usize,
    pub relations: Vec<RelationCount>,
}

/// Gold-relation histogram, most frequent first (ties by label).
///
/// Percentages of real relations are relative to the labelled instances and sum
/// to 100. The unaligned bucket, when present, comes last and its percentage is
/// relative to all instances.
pub fn relation_distribution(corpus: &Corpus) -> RelationStats {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut unaligned = 0usize;
    for inst in corpus {
        match &inst.gold_relation {
            Some(r) => *counts.entry(r.as_str()).or_default() += 1,
            None => unaligned += 1,
        }
    }
    let n_labelled = corpus.len() - unaligned;
    let mut sorted: Vec<(&str, usize)> = counts.into_iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut relations: Vec<RelationCount> = sorted
        .into_iter()
        .map(|(label, count)| RelationCount {
            label: label.to_string(),
            count,
            pct: 100.0 * count as f64 / n_labelled as f64,
        })
        .collect();
    if unaligned > 0 {
        relations.push(RelationCount {
            label: UNALIGNED_BUCKET.to_string(),
            count: unaligned,
            pct: 100.0 * unaligned as f64 / corpus.len() as f64,
        });
    }
    RelationStats {
        n_instances: corpus.len(),
        n_labelled,
        relations,
    }
}

/// Share (%) of labelled instances covered by the `k` most frequent relations.
pub fn top_k_share(stats: &RelationStats, k: usize) -> f64 {
    if stats.n_labelled == 0 {
        return 0.0;
    }
    let covered: usize = stats
        .relations
        .iter()
        .filter(|r| r.label != UNALIGNED_BUCKET)
        .take(k)
        .map(|r| r.count)
        .sum();
    100.0 * covered as f64 / stats.n_labelled as f64
}
