use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, RelationInstance, TypePair, TypedSpan};
use crate::error::CorpusError;

/// Configuration of the planted synthetic corpus.
///
/// Relation `k` is drawn with Zipf probability ∝ 1/(k+1)^`relation_skew`,
/// its entities come from the type pair `relation_to_typepair[k]`, and with
/// `entity_affinity > 0` each (relation, slot) draws only from a fixed subset
/// holding that fraction of the type's entities. Subsets of one type are
/// disjoint as long as the type has enough entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_instances: usize,
    pub n_relation_types: usize,
    pub entity_types: Vec<String>,
    pub entities_per_type: usize,
    /// Explicit relation → type-pair map. When absent, relation `k` takes the
    /// `k`-th pair of the row-major enumeration of `entity_types²` (cyclically).
    pub relation_to_typepair: Option<Vec<TypePair>>,
    pub relation_skew: f64,
    pub entity_affinity: f64,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_instances: 10_000,
            n_relation_types: 10,
            entity_types: ["PERSON", "LOCATION", "ORGANIZATION", "MISC"]
                .map(String::from)
                .to_vec(),
            entities_per_type: 40,
            relation_to_typepair: None,
            relation_skew: 0.5,
            entity_affinity: 0.15,
            noise_rate: 0.0,
            seed: 13,
        }
    }
}

impl SynthConfig {
    pub fn relation_name(k: usize) -> String {
        format!("/synth/rel_{k:02}")
    }

    /// The effective relation → type-pair map.
    pub fn type_pairs(&self) -> Vec<TypePair> {
        if let Some(map) = &self.relation_to_typepair {
            return map.clone();
        }
        let all: Vec<TypePair> = self
            .entity_types
            .iter()
            .flat_map(|h| self.entity_types.iter().map(move |t| TypePair::new(h, t)))
            .collect();
        if all.is_empty() {
            return Vec::new();
        }
        (0..self.n_relation_types)
            .map(|k| all[k % all.len()].clone())
            .collect()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSynthConfig(m));
        if self.n_instances == 0 || self.n_relation_types == 0 || self.entities_per_type == 0 {
            return bad("n_instances, n_relation_types and entities_per_type must be positive".into());
        }
        if self.entity_types.is_empty() || self.entity_types.iter().any(|t| t.is_empty()) {
            return bad("entity_types must be a non-empty list of non-empty names".into());
        }
        let mut seen = std::collections::HashSet::new();
        if !self.entity_types.iter().all(|t| seen.insert(t)) {
            return bad("entity_types contains duplicates".into());
        }
        if !(self.relation_skew.is_finite() && self.relation_skew >= 0.0) {
            return bad(format!("relation_skew must be ≥ 0, got {}", self.relation_skew));
        }
        if !(0.0..=1.0).contains(&self.entity_affinity) {
            return bad(format!("entity_affinity must lie in [0, 1], got {}", self.entity_affinity));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate must lie in [0, 1), got {}", self.noise_rate));
        }
        if self.noise_rate > 0.0 && self.n_relation_types < 2 {
            return bad("label noise needs at least two relation types".into());
        }
        let pairs = self.type_pairs();
        if pairs.len() != self.n_relation_types {
            return bad(format!(
                "relation_to_typepair has {} entries for {} relation types",
                pairs.len(),
                self.n_relation_types
            ));
        }
        for p in &pairs {
            for t in [&p.head, &p.tail] {
                if !self.entity_types.contains(t) {
                    return bad(format!("relation mapped to unknown entity type {t:?}"));
                }
            }
        }
        Ok(())
    }
}

/// Exact Zipf mass function over `n` ranks with exponent `s`.
pub fn zipf_pmf(n: usize, s: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-s)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// What the generator actually drew, aligned with the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthLog {
    /// Relation index sampled for each instance (before corruption).
    pub sampled_relation: Vec<usize>,
    /// Whether the instance's gold label was replaced by a different relation.
    pub corrupted: Vec<bool>,
}

pub fn synth_corpus(config: &SynthConfig) -> Result<Corpus, CorpusError> {
    synth_corpus_with_log(config).map(|(c, _)| c)
}

fn entity_surface(etype: &str, j: usize) -> String {
    format!("{}_{j:03}", etype.to_lowercase())
}

/// Generate the corpus together with the generator's sampling log.
pub fn synth_corpus_with_log(config: &SynthConfig) -> Result<(Corpus, SynthLog), CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pairs = config.type_pairs();
    let n_rel = config.n_relation_types;
    let per_type = config.entities_per_type;

    // Candidate entity indices per (relation, slot).
    let pool_size = if config.entity_affinity > 0.0 {
        ((config.entity_affinity * per_type as f64).round() as usize).clamp(1, per_type)
    } else {
        per_type
    };
    // Each type's entities are permuted once and every (relation, slot) role
    // of that type takes the next `pool_size` of them, wrapping around, so
    // roles overlap only when the type runs out of entities.
    let mut order: Vec<Vec<usize>> = Vec::with_capacity(config.entity_types.len());
    for _ in &config.entity_types {
        let mut all: Vec<usize> = (0..per_type).collect();
        all.shuffle(&mut rng);
        order.push(all);
    }
    let type_idx = |name: &str| {
        config
            .entity_types
            .iter()
            .position(|t| t == name)
            .expect("validated type pair")
    };
    let mut cursor = vec![0usize; config.entity_types.len()];
    let mut take = |ty: usize| {
        let mut pool: Vec<usize> = (0..pool_size)
            .map(|j| order[ty][(cursor[ty] + j) % per_type])
            .collect();
        cursor[ty] = (cursor[ty] + pool_size) % per_type;
        pool.sort_unstable();
        pool
    };
    let pools: Vec<[Vec<usize>; 2]> = pairs[..n_rel]
        .iter()
        .map(|p| {
            let head = take(type_idx(&p.head));
            let tail = take(type_idx(&p.tail));
            [head, tail]
        })
        .collect();

    let relation_dist =
        WeightedIndex::new(zipf_pmf(n_rel, config.relation_skew)).expect("Zipf weights are positive");
    let mut instances = Vec::with_capacity(config.n_instances);
    let mut log = SynthLog {
        sampled_relation: Vec::with_capacity(config.n_instances),
        corrupted: Vec::with_capacity(config.n_instances),
    };
    for _ in 0..config.n_instances {
        let rel = relation_dist.sample(&mut rng);
        let corrupted = config.noise_rate > 0.0 && rng.gen::<f64>() < config.noise_rate;
        let label = if corrupted {
            let other = rng.gen_range(0..n_rel - 1);
            if other >= rel {
                other + 1
            } else {
                other
            }
        } else {
            rel
        };
        let [head_pool, tail_pool] = &pools[rel];
        let h = head_pool[rng.gen_range(0..head_pool.len())];
        let t = tail_pool[rng.gen_range(0..tail_pool.len())];
        let pair = &pairs[rel];
        instances.push(render(
            entity_surface(&pair.head, h),
            &pair.head,
            entity_surface(&pair.tail, t),
            &pair.tail,
            SynthConfig::relation_name(label),
        ));
        log.sampled_relation.push(rel);
        log.corrupted.push(corrupted);
    }
    Ok((Corpus::new(instances), log))
}

fn render(head: String, head_type: &str, tail: String, tail_type: &str, relation: String) -> RelationInstance {
    let tokens = vec![
        head.clone(),
        "is".to_string(),
        "related".to_string(),
        "to".to_string(),
        tail.clone(),
        ".".to_string(),
    ];
    RelationInstance {
        tokens,
        head: TypedSpan {
            start: 0,
            end: 1,
            etype: head_type.to_string(),
            surface: vec![head],
        },
        tail: TypedSpan {
            start: 4,
            end: 5,
            etype: tail_type.to_string(),
            surface: vec![tail],
        },
        pos: None,
        dep_path: None,
        gold_relation: Some(relation),
    }
}
