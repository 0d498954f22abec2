//! Oracle-loss experiment: fix the relation assignment of every instance and
//! train only the link predictor, recording how well each assignment lets the
//! predictor explain the observed entity pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabularies, Corpus};
use crate::error::TrainError;
use crate::model::{
    batch_objective, link_score, Example, Gradients, ModelParams, ObjectiveWeights, ParamMask,
    PosteriorSource, RelationPosterior,
};
use crate::optim::build_optimizer;
use crate::scalar::Scalar;
use crate::train::{entity_counts, entity_pairs, NegativeSampler, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleSetting {
    /// Uniformly random slot among 10.
    Rand10,
    /// Random slot drawn from the grouped top-10 silver relation frequencies.
    Rand10SilverFreq,
    /// Every instance in one slot.
    OneRelation,
    /// Slot given by the (head type, tail type) pair, 4 types.
    Etype16,
    /// Silver relation, top 9 kept and the rest grouped into a tenth slot.
    SilverTop10,
    /// Silver relation, one slot per relation.
    SilverFull,
}

impl OracleSetting {
    pub const ALL: [OracleSetting; 6] = [
        OracleSetting::Rand10,
        OracleSetting::Rand10SilverFreq,
        OracleSetting::OneRelation,
        OracleSetting::Etype16,
        OracleSetting::SilverTop10,
        OracleSetting::SilverFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OracleSetting::Rand10 => "rand10",
            OracleSetting::Rand10SilverFreq => "rand10-silver-freq",
            OracleSetting::OneRelation => "one-relation",
            OracleSetting::Etype16 => "etype16",
            OracleSetting::SilverTop10 => "silver-top10",
            OracleSetting::SilverFull => "silver-full",
        }
    }

    fn needs_labels(self) -> bool {
        matches!(self, OracleSetting::SilverTop10 | OracleSetting::SilverFull)
    }
}

impl fmt::Display for OracleSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OracleSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OracleSetting::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = OracleSetting::ALL.iter().map(|o| o.name()).collect();
                format!("unknown oracle setting `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Fixed slot of every instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleAssignment {
    pub slots: Vec<usize>,
    pub n_slots: usize,
}

const TOP_GROUPS: usize = 10;

/// Silver relation → slot, most frequent first (ties by label); with more
/// than ten relations the ninth onwards share slot 9.
fn silver_slots(corpus: &Corpus, grouped: bool) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for label in corpus.gold_labels().into_iter().flatten() {
        *counts.entry(label).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (label, _))| {
            let slot = if grouped { rank.min(TOP_GROUPS - 1) } else { rank };
            (label.to_string(), slot)
        })
        .collect()
}

pub fn oracle_assign(
    corpus: &Corpus,
    setting: OracleSetting,
    seed: u64,
) -> Result<OracleAssignment, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if setting.needs_labels() {
        if let Some(index) = corpus.iter().position(|i| !i.is_labelled()) {
            return Err(TrainError::MissingLabel {
                setting: setting.name().to_string(),
                index,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = corpus.len();
    let assignment = match setting {
        OracleSetting::Rand10 => OracleAssignment {
            slots: (0..n).map(|_| rng.gen_range(0..TOP_GROUPS)).collect(),
            n_slots: TOP_GROUPS,
        },
        OracleSetting::Rand10SilverFreq => {
            let slots = silver_slots(corpus, true);
            let n_slots = slots.values().max().map(|m| m + 1).ok_or_else(|| {
                TrainError::OracleSetting {
                    setting: setting.name().to_string(),
                    detail: "no labelled instances to estimate relation frequencies".into(),
                }
            })?;
            let mut freq = vec![0usize; n_slots];
            for label in corpus.gold_labels().into_iter().flatten() {
                freq[slots[label]] += 1;
            }
            let dist = WeightedIndex::new(&freq).expect("positive counts");
            OracleAssignment {
                slots: (0..n).map(|_| dist.sample(&mut rng)).collect(),
                n_slots,
            }
        }
        OracleSetting::OneRelation => OracleAssignment {
            slots: vec![0; n],
            n_slots: 1,
        },
        OracleSetting::Etype16 => {
            let types: BTreeSet<&str> = corpus
                .iter()
                .flat_map(|i| [i.head.etype.as_str(), i.tail.etype.as_str()])
                .collect();
            if types.len() > 4 {
                return Err(TrainError::OracleSetting {
                    setting: setting.name().to_string(),
                    detail: format!("needs at most 4 entity types, corpus has {}", types.len()),
                });
            }
            let idx: BTreeMap<&str, usize> = types.into_iter().zip(0..).collect();
            OracleAssignment {
                slots: corpus
                    .iter()
                    .map(|i| idx[i.head.etype.as_str()] * 4 + idx[i.tail.etype.as_str()])
                    .collect(),
                n_slots: 16,
            }
        }
        OracleSetting::SilverTop10 | OracleSetting::SilverFull => {
            let slots = silver_slots(corpus, setting == OracleSetting::SilverTop10);
            let n_slots = slots.values().max().map_or(1, |m| m + 1);
            OracleAssignment {
                slots: corpus
                    .iter()
                    .map(|i| slots[i.gold_relation.as_deref().expect("checked above")])
                    .collect(),
                n_slots,
            }
        }
    };
    Ok(assignment)
}

/// Settings of an oracle-loss run. The link-predictor hyperparameters come
/// from `train`; its classifier fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub epochs: usize,
    pub runs: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            epochs: 10,
            runs: 3,
            seed: 0,
            train: TrainConfig {
                learning_rate: 0.01,
                l2: 0.0,
                ..TrainConfig::etype_plus()
            },
        }
    }
}

/// Per-position losses at one epoch, averaged over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    /// Mean of `-log σ(ψ̄(h, t))` over instances and positions.
    pub nll_pos: f64,
    /// Mean negative-sample term per position (not logged at epoch 0).
    pub nll_neg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCurve {
    pub setting: OracleSetting,
    pub n_slots: usize,
    pub epochs: Vec<CurvePoint>,
}

impl OracleCurve {
    pub fn final_nll_pos(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |p| p.nll_pos)
    }
}

/// Epoch 0 is an evaluation pass before any update; epoch `e ≥ 1` reports the
/// running average over that epoch's minibatches.
fn run_once<T: Scalar>(
    corpus: &Corpus,
    setting: OracleSetting,
    config: &OracleConfig,
    seed: u64,
) -> Result<(usize, Vec<(f64, Option<f64>)>), TrainError> {
    let tc = &config.train;
    let assignment = oracle_assign(corpus, setting, seed)?;
    let vocabs = build_vocabularies(corpus, tc.min_entity_freq);
    let pairs = entity_pairs(corpus, &vocabs);
    let posteriors: Vec<RelationPosterior<f64>> = (0..assignment.n_slots)
        .map(|k| RelationPosterior::one_hot(assignment.n_slots, k))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::<T>::init(
        assignment.n_slots,
        1,
        vocabs.entities.len(),
        tc.dim,
        tc.relation_init,
        &mut rng,
    );
    let sampler = NegativeSampler::from_counts(&entity_counts(&pairs, vocabs.entities.len()))
        .expect("a non-empty corpus has entity counts");
    let mut optimizer = build_optimizer(tc.optimizer, &params, tc.learning_rate);
    let mut grads = Gradients::zeros_like(&params);
    let weights = ObjectiveWeights {
        alpha: 0.0,
        beta: 0.0,
        k: tc.negatives,
    };
    let l2 = T::of(tc.l2);

    let initial: f64 = pairs
        .iter()
        .zip(&assignment.slots)
        .map(|(&(h, t), &k)| {
            let q = RelationPosterior::<T>::one_hot(assignment.n_slots, k);
            link_score(&params, h, t, &q).map(|s| (-s).softplus().as_f64())
        })
        .sum::<Result<f64, _>>()?
        / pairs.len() as f64;
    let mut curve = vec![(initial, None)];

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut pos, mut neg) = (0.0, 0.0);
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<Example<'_>> = chunk
                .iter()
                .map(|&i| Example {
                    head: pairs[i].0,
                    tail: pairs[i].1,
                    source: PosteriorSource::Fixed(&posteriors[assignment.slots[i]]),
                    negatives: sampler.negatives(tc.negatives, &mut rng),
                })
                .collect();
            let loss = batch_objective(&params, &batch, weights, &mut grads)?;
            if tc.l2 > 0.0 {
                grads.add_l2(&params, l2, ParamMask::LINK_ONLY);
            }
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    detail: format!("{loss:?}"),
                });
            }
            optimizer.step(&mut params, &grads, ParamMask::LINK_ONLY);
            let w = chunk.len() as f64;
            pos += w * loss.link_nll_pos;
            neg += w * loss.link_nll_neg;
        }
        // the batch loss counts both positions; report per position
        let denom = 2.0 * corpus.len() as f64;
        curve.push((pos / denom, Some(neg / denom)));
    }
    Ok((assignment.n_slots, curve))
}

/// Average curve over `config.runs` runs seeded `seed, seed + 1, …`.
pub fn oracle_loss_curve<T: Scalar>(
    corpus: &Corpus,
    setting: OracleSetting,
    config: &OracleConfig,
) -> Result<OracleCurve, TrainError> {
    if config.runs == 0 || config.train.batch_size == 0 || config.train.dim == 0 {
        return Err(TrainError::InvalidConfig(
            "runs, batch_size and dim must be positive".into(),
        ));
    }
    let runs = (0..config.runs as u64)
        .map(|r| run_once::<T>(corpus, setting, config, config.seed + r))
        .collect::<Result<Vec<_>, _>>()?;
    let n_slots = runs[0].0;
    let n_runs = runs.len() as f64;
    let epochs = (0..=config.epochs)
        .map(|e| {
            let pos = runs.iter().map(|r| r.1[e].0).sum::<f64>() / n_runs;
            let neg = runs
                .iter()
                .map(|r| r.1[e].1)
                .sum::<Option<f64>>()
                .map(|s| s / n_runs);
            CurvePoint {
                epoch: e,
                nll_pos: pos,
                nll_neg: neg,
            }
        })
        .collect();
    Ok(OracleCurve {
        setting,
        n_slots,
        epochs,
    })
}
