//! Clustering evaluation: B³, V-measure, adjusted Rand index and the
//! trivial-homogeneity diagnostic.
//!
//! Every metric is computed from one contingency table between predicted
//! clusters and gold classes. Entropies use the natural logarithm. Label values
//! are only compared for equality, so all metrics are invariant under renaming
//! either side.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::MetricsError;
use crate::etype::Clustering;

/// Contingency counts between a predicted clustering and gold classes.
#[derive(Debug, Clone)]
pub struct Contingency {
    n: usize,
    /// Non-zero cells `(cluster, class, count)`, sorted for a fixed summation order.
    cells: Vec<(usize, usize, usize)>,
    cluster_sizes: Vec<usize>,
    class_sizes: Vec<usize>,
}

fn dense_ids<L: Hash + Eq>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut map: HashMap<&L, usize> = HashMap::new();
    let ids = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

impl Contingency {
    pub fn new<P: Hash + Eq, G: Hash + Eq>(pred: &[P], gold: &[G]) -> Result<Self, MetricsError> {
        if pred.len() != gold.len() {
            return Err(MetricsError::LengthMismatch {
                pred: pred.len(),
                gold: gold.len(),
            });
        }
        if pred.is_empty() {
            return Err(MetricsError::Empty);
        }
        let (p, n_clusters) = dense_ids(pred);
        let (g, n_classes) = dense_ids(gold);
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        let mut cluster_sizes = vec![0; n_clusters];
        let mut class_sizes = vec![0; n_classes];
        for (&i, &j) in p.iter().zip(&g) {
            *counts.entry((i, j)).or_default() += 1;
            cluster_sizes[i] += 1;
            class_sizes[j] += 1;
        }
        let mut cells: Vec<_> = counts.into_iter().map(|((i, j), c)| (i, j, c)).collect();
        cells.sort_unstable();
        Ok(Contingency {
            n: pred.len(),
            cells,
            cluster_sizes,
            class_sizes,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_sizes.len()
    }

    /// True when the two partitions coincide up to renaming.
    pub fn is_bijective(&self) -> bool {
        self.cells.len() == self.n_clusters() && self.cells.len() == self.n_classes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BCubed {
    #[serde(with = "percent")]
    pub precision: f64,
    #[serde(with = "percent")]
    pub recall: f64,
    #[serde(with = "percent")]
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VMeasure {
    #[serde(with = "percent")]
    pub homogeneity: f64,
    #[serde(with = "percent")]
    pub completeness: f64,
    #[serde(with = "percent")]
    pub v: f64,
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

impl Contingency {
    /// Bagga–Baldwin B³: F1 of the averaged per-item precision and recall.
    pub fn b_cubed(&self) -> BCubed {
        let (mut p, mut r) = (0.0, 0.0);
        for &(i, j, c) in &self.cells {
            let c = c as f64;
            p += c * c / self.cluster_sizes[i] as f64;
            r += c * c / self.class_sizes[j] as f64;
        }
        let n = self.n as f64;
        let (precision, recall) = (p / n, r / n);
        BCubed {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }

    pub fn v_measure(&self) -> VMeasure {
        let n = self.n as f64;
        let entropy = |sizes: &[usize]| -> f64 {
            sizes
                .iter()
                .map(|&s| {
                    let q = s as f64 / n;
                    -q * q.ln()
                })
                .sum()
        };
        let h_class = entropy(&self.class_sizes);
        let h_cluster = entropy(&self.cluster_sizes);
        let (mut h_class_given_cluster, mut h_cluster_given_class) = (0.0, 0.0);
        for &(i, j, c) in &self.cells {
            let c = c as f64;
            h_class_given_cluster -= c / n * (c / self.cluster_sizes[i] as f64).ln();
            h_cluster_given_class -= c / n * (c / self.class_sizes[j] as f64).ln();
        }
        let homogeneity = if h_class == 0.0 {
            1.0
        } else {
            1.0 - h_class_given_cluster / h_class
        };
        let completeness = if h_cluster == 0.0 {
            1.0
        } else {
            1.0 - h_cluster_given_class / h_cluster
        };
        VMeasure {
            homogeneity,
            completeness,
            v: harmonic(homogeneity, completeness),
        }
    }

    /// Hubert–Arabie adjusted Rand index.
    pub fn ari(&self) -> f64 {
        let pairs = |c: usize| (c as u128) * (c as u128).saturating_sub(1) / 2;
        let index: u128 = self.cells.iter().map(|&(_, _, c)| pairs(c)).sum();
        let sum_a: u128 = self.cluster_sizes.iter().map(|&c| pairs(c)).sum();
        let sum_b: u128 = self.class_sizes.iter().map(|&c| pairs(c)).sum();
        let total = pairs(self.n);
        // Max == Expected  <=>  (sum_a + sum_b) * total == 2 * sum_a * sum_b
        if total == 0 || (sum_a + sum_b) * total == 2 * sum_a * sum_b {
            return if self.is_bijective() { 1.0 } else { 0.0 };
        }
        let expected = sum_a as f64 * sum_b as f64 / total as f64;
        let max = (sum_a + sum_b) as f64 / 2.0;
        (index as f64 - expected) / (max - expected)
    }
}

pub fn b_cubed<P: Hash + Eq, G: Hash + Eq>(pred: &[P], gold: &[G]) -> Result<BCubed, MetricsError> {
    Ok(Contingency::new(pred, gold)?.b_cubed())
}

pub fn v_measure<P: Hash + Eq, G: Hash + Eq>(pred: &[P], gold: &[G]) -> Result<VMeasure, MetricsError> {
    Ok(Contingency::new(pred, gold)?.v_measure())
}

pub fn ari<P: Hash + Eq, G: Hash + Eq>(pred: &[P], gold: &[G]) -> Result<f64, MetricsError> {
    Ok(Contingency::new(pred, gold)?.ari())
}

/// V-measure of the all-singleton clustering against `gold`.
///
/// Every singleton cluster is pure, so homogeneity is 1 and the score is driven
/// by completeness alone; it is a floor any real system should beat.
pub fn trivial_homogeneity_v<G: Hash + Eq>(gold: &[G]) -> Result<f64, MetricsError> {
    let singletons: Vec<usize> = (0..gold.len()).collect();
    Ok(v_measure(&singletons, gold)?.v)
}

/// All three metrics for one (prediction, gold) pair. Values are fractions in
/// memory and percentages in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub b3: BCubed,
    pub v: VMeasure,
    #[serde(with = "percent")]
    pub ari: f64,
    pub n_evaluated: usize,
}

impl ClusteringReport {
    pub fn from_labels<P: Hash + Eq, G: Hash + Eq>(pred: &[P], gold: &[G]) -> Result<Self, MetricsError> {
        let table = Contingency::new(pred, gold)?;
        Ok(ClusteringReport {
            b3: table.b_cubed(),
            v: table.v_measure(),
            ari: table.ari(),
            n_evaluated: table.n(),
        })
    }

    /// Component-wise mean over several runs.
    pub fn mean(reports: &[ClusteringReport]) -> Option<ClusteringReport> {
        if reports.is_empty() {
            return None;
        }
        let k = reports.len() as f64;
        let avg = |f: &dyn Fn(&ClusteringReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        Some(ClusteringReport {
            b3: BCubed {
                precision: avg(&|r| r.b3.precision),
                recall: avg(&|r| r.b3.recall),
                f1: avg(&|r| r.b3.f1),
            },
            v: VMeasure {
                homogeneity: avg(&|r| r.v.homogeneity),
                completeness: avg(&|r| r.v.completeness),
                v: avg(&|r| r.v.v),
            },
            ari: avg(&|r| r.ari),
            n_evaluated: reports[0].n_evaluated,
        })
    }
}

impl fmt::Display for ClusteringReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "B3 F1 {:.1} (P {:.1}, R {:.1})  V {:.1} (hom {:.1}, comp {:.1})  ARI {:.1}  [n={}]",
            100.0 * self.b3.f1,
            100.0 * self.b3.precision,
            100.0 * self.b3.recall,
            100.0 * self.v.v,
            100.0 * self.v.homogeneity,
            100.0 * self.v.completeness,
            100.0 * self.ari,
            self.n_evaluated
        )
    }
}

/// Score `pred` against a corpus's gold labels, skipping unlabelled instances.
pub fn evaluate_labels<P: Hash + Eq, G: Hash + Eq>(
    pred: &[P],
    gold: &[Option<G>],
) -> Result<ClusteringReport, MetricsError> {
    if pred.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let (p, g): (Vec<&P>, Vec<&G>) = pred
        .iter()
        .zip(gold)
        .filter_map(|(p, g)| g.as_ref().map(|g| (p, g)))
        .unzip();
    ClusteringReport::from_labels(&p, &g)
}

pub fn evaluate(pred: &Clustering, corpus: &Corpus) -> Result<ClusteringReport, MetricsError> {
    evaluate_labels(&pred.labels, &corpus.gold_labels())
}

mod percent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(100.0 * v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(f64::deserialize(d)? / 100.0)
    }
}
