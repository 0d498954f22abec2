//! Minibatch training of EType+ (and feature-based variants) through the link
//! predictor, with dev-set early stopping and clustering induction.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabularies, Corpus, Vocabularies};
use crate::error::TrainError;
use crate::etype::Clustering;
use crate::features::{extract_all, FeatureIndex, FeatureSet, SparseFeatureVector};
use crate::metrics::{evaluate_labels, ClusteringReport};
use crate::model::{
    batch_objective, classifier_posterior, Example, Gradients, LossBreakdown, ModelParams,
    Negatives, ObjectiveWeights, ParamMask, PosteriorSource, RelationInit,
};
use crate::optim::{build_optimizer, OptimizerKind};
use crate::scalar::Scalar;

/// Hyperparameters. [`Default`] is the EType+ configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of relation slots `c`.
    pub c: usize,
    /// Entity embedding dimension.
    pub dim: usize,
    pub features: FeatureSet,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Multiply the learning rate by this factor whenever dev B³ F1 fails to improve.
    pub lr_anneal: Option<f64>,
    pub batch_size: usize,
    pub l2: f64,
    /// `L_s` coefficient.
    pub alpha: f64,
    /// `L_d` coefficient.
    pub beta: f64,
    /// Negative samples per position.
    pub negatives: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub min_entity_freq: usize,
    pub relation_init: RelationInit,
    /// Keep `W`, `b` at zero and fit only the link predictor.
    pub freeze_classifier: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::etype_plus()
    }
}

impl TrainConfig {
    pub fn etype_plus() -> Self {
        TrainConfig {
            c: 10,
            dim: 10,
            features: FeatureSet::type_pair_only(),
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            lr_anneal: None,
            batch_size: 100,
            l2: 1e-5,
            alpha: 1e-4,
            beta: 0.02,
            negatives: 5,
            max_epochs: 30,
            patience: 10,
            seed: 0,
            min_entity_freq: 2,
            relation_init: RelationInit::Uniform,
            freeze_classifier: false,
        }
    }

    /// Feature-based classifier with both regularizers, AdaGrad, 10 epochs.
    pub fn march_ls_ld() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::AdaGrad,
            learning_rate: 0.005,
            l2: 1e-7,
            alpha: 0.01,
            beta: 0.02,
            max_epochs: 10,
            ..TrainConfig::etype_plus()
        }
    }

    /// Adam at 0.005 with plateau annealing by 0.5^0.25.
    pub fn simon_style() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            lr_anneal: Some(0.5f64.powf(0.25)),
            l2: 2e-11,
            alpha: 0.01,
            beta: 0.02,
            ..TrainConfig::etype_plus()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.c < 2 {
            return bad("c must be at least 2");
        }
        if self.dim == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("dim, batch_size and max_epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        for (name, v) in [("l2", self.l2), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TrainError::InvalidConfig(format!("{name} must be ≥ 0")));
            }
        }
        if let Some(f) = self.lr_anneal {
            if !(f > 0.0 && f <= 1.0) {
                return bad("lr_anneal must lie in (0, 1]");
            }
        }
        Ok(())
    }

    fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            alpha: self.alpha,
            beta: self.beta,
            k: self.negatives,
        }
    }

    fn mask(&self) -> ParamMask {
        if self.freeze_classifier {
            ParamMask::LINK_ONLY
        } else {
            ParamMask::ALL
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's minibatches.
    pub loss: LossBreakdown,
    pub l2_penalty: f64,
    pub learning_rate: f64,
    pub dev_b3_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
}

/// Samples negative entities from the unigram distribution raised to 0.75.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    pub fn from_counts(counts: &[usize]) -> Option<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        WeightedIndex::new(weights).ok().map(|dist| NegativeSampler { dist })
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        (0..k).map(|_| self.dist.sample(rng)).collect()
    }

    pub fn negatives<R: rand::Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Negatives {
        let head = self.sample(k, rng);
        let tail = self.sample(k, rng);
        Negatives { head, tail }
    }
}

/// Entity ids of every instance's (head, tail) under `vocabs`.
pub fn entity_pairs(corpus: &Corpus, vocabs: &Vocabularies) -> Vec<(usize, usize)> {
    corpus
        .iter()
        .map(|i| {
            (
                vocabs.entity_id(&i.head.surface_text()),
                vocabs.entity_id(&i.tail.surface_text()),
            )
        })
        .collect()
}

pub(crate) fn entity_counts(pairs: &[(usize, usize)], n_entities: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_entities];
    for &(h, t) in pairs {
        counts[h] += 1;
        counts[t] += 1;
    }
    counts
}

/// Label of slot `k` in induced clusterings.
pub fn slot_label(k: usize) -> String {
    k.to_string()
}

/// Argmax of the classifier posterior per instance; ties go to the lowest slot.
pub fn induce_clustering<T: Scalar>(
    params: &ModelParams<T>,
    features: &[SparseFeatureVector],
) -> Result<Clustering, TrainError> {
    let labels = features
        .iter()
        .map(|x| classifier_posterior(params, x).map(|q| slot_label(q.argmax())))
        .collect::<Result<_, _>>()?;
    Ok(Clustering { labels })
}

/// A trained classifier with everything needed to apply it to new corpora.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub config: TrainConfig,
    pub vocabularies: Vocabularies,
    pub feature_index: FeatureIndex,
    pub params: ModelParams<T>,
    pub history: TrainHistory,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn features(&self, corpus: &Corpus) -> Vec<SparseFeatureVector> {
        extract_all(corpus, &self.config.features, &self.vocabularies, &self.feature_index)
    }

    pub fn cluster(&self, corpus: &Corpus) -> Result<Clustering, TrainError> {
        induce_clustering(&self.params, &self.features(corpus))
    }

    pub fn evaluate(&self, corpus: &Corpus) -> Result<ClusteringReport, TrainError> {
        let clustering = self.cluster(corpus)?;
        Ok(evaluate_labels(&clustering.labels, &corpus.gold_labels())?)
    }
}

struct DevSet {
    features: Vec<SparseFeatureVector>,
    gold: Vec<Option<String>>,
}

impl DevSet {
    fn b3_f1<T: Scalar>(&self, params: &ModelParams<T>) -> Result<f64, TrainError> {
        let clustering = induce_clustering(params, &self.features)?;
        Ok(evaluate_labels(&clustering.labels, &self.gold)?.b3.f1)
    }
}

/// Train on `train_corpus`, selecting the epoch with the best dev B³ F1.
///
/// Without a dev corpus the labelled part of the training corpus is used for
/// selection (the transductive setting); if nothing is labelled the last epoch
/// is kept.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    train_corpus: &Corpus,
    dev_corpus: Option<&Corpus>,
) -> Result<TrainedModel<T>, TrainError> {
    config.validate()?;
    if train_corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let vocabs = build_vocabularies(train_corpus, config.min_entity_freq);
    let index = FeatureIndex::build(train_corpus, &vocabs, &config.features);
    let features = extract_all(train_corpus, &config.features, &vocabs, &index);
    let pairs = entity_pairs(train_corpus, &vocabs);

    let dev = {
        let source = match dev_corpus {
            Some(d) if d.n_labelled() == 0 => return Err(TrainError::UnlabelledDev),
            Some(d) => Some(d.labelled_only()),
            None if train_corpus.n_labelled() > 0 => Some(train_corpus.labelled_only()),
            None => None,
        };
        source.map(|d| DevSet {
            features: extract_all(&d, &config.features, &vocabs, &index),
            gold: d.instances.into_iter().map(|i| i.gold_relation).collect(),
        })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::<T>::init(
        config.c,
        index.dimension(),
        vocabs.entities.len(),
        config.dim,
        config.relation_init,
        &mut rng,
    );
    let sampler = NegativeSampler::from_counts(&entity_counts(&pairs, vocabs.entities.len()))
        .expect("a non-empty corpus has entity counts");
    let mut optimizer = build_optimizer(config.optimizer, &params, config.learning_rate);
    let mut grads = Gradients::zeros_like(&params);
    let mask = config.mask();
    let l2 = T::of(config.l2);

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams<T>)> = None;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train_corpus.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut seen = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example<'_>> = chunk
                .iter()
                .map(|&i| Example {
                    head: pairs[i].0,
                    tail: pairs[i].1,
                    source: PosteriorSource::Features(&features[i]),
                    negatives: sampler.negatives(config.negatives, &mut rng),
                })
                .collect();
            let loss = batch_objective(&params, &batch, config.weights(), &mut grads)?;
            if config.l2 > 0.0 {
                grads.add_l2(&params, l2, mask);
            }
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    detail: format!("{loss:?}"),
                });
            }
            optimizer.step(&mut params, &grads, mask);
            let w = chunk.len() as f64;
            sums[0] += w * loss.link_nll_pos;
            sums[1] += w * loss.link_nll_neg;
            sums[2] += w * loss.l_s;
            sums[3] += w * loss.l_d;
            seen += chunk.len();
        }
        let n = seen as f64;
        let loss = LossBreakdown::new(
            sums[0] / n,
            sums[1] / n,
            sums[2] / n,
            sums[3] / n,
            config.alpha,
            config.beta,
        );
        let lr_used = optimizer.learning_rate();
        let dev_f1 = dev.as_ref().map(|d| d.b3_f1(&params)).transpose()?;
        history.epochs.push(EpochRecord {
            epoch,
            loss,
            l2_penalty: config.l2 * params.sq_norm(mask).as_f64(),
            learning_rate: lr_used,
            dev_b3_f1: dev_f1,
        });

        match dev_f1 {
            Some(f1) if best.as_ref().is_none_or(|(b, _)| f1 > *b) => {
                best = Some((f1, params.clone()));
                history.best_epoch = epoch;
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if let Some(factor) = config.lr_anneal {
                    optimizer.set_learning_rate(lr_used * factor);
                }
                if stale >= config.patience {
                    break;
                }
            }
            None => history.best_epoch = epoch,
        }
    }

    let params = best.map(|(_, p)| p).unwrap_or(params);
    Ok(TrainedModel {
        config: config.clone(),
        vocabularies: vocabs,
        feature_index: index,
        params,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthConfig};
    use crate::etype::etype_cluster;
    use crate::features::FeatureTemplate;
    use crate::metrics::evaluate;

    fn corpus(n: usize) -> Corpus {
        synth_corpus(&SynthConfig {
            n_instances: n,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_params_put_everything_in_slot_zero() {
        let p = ModelParams::<f64>::zeros(5, 3, 1, 1);
        let xs: Vec<_> = (0..3).map(|j| SparseFeatureVector::one_hot(j, 3)).collect();
        let c = induce_clustering(&p, &xs).unwrap();
        assert!(c.labels.iter().all(|l| l == "0"));
    }

    #[test]
    fn same_seed_same_history() {
        let data = corpus(600);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let a: TrainedModel<f64> = train(&cfg, &data, None).unwrap();
        let b: TrainedModel<f64> = train(&cfg, &data, None).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        let c: TrainedModel<f64> = train(&TrainConfig { seed: 1, ..cfg }, &data, None).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn frozen_classifier_fits_link_predictor() {
        let data = corpus(2000);
        let cfg = TrainConfig {
            alpha: 0.0,
            beta: 0.0,
            freeze_classifier: true,
            negatives: 1,
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let m: TrainedModel<f64> = train(&cfg, &data, None).unwrap();
        assert!(m.params.w.iter().all(|&x| x == 0.0));
        assert!(m.params.b.iter().all(|&x| x == 0.0));
        let pos: Vec<f64> = m.history.epochs.iter().map(|e| e.loss.link_nll_pos).collect();
        assert_eq!(pos.len(), 5);
        for w in pos.windows(2) {
            assert!(w[1] < w[0], "{pos:?}");
        }
        // the posterior stays uniform, so every instance lands in slot 0
        assert!(m.cluster(&data).unwrap().labels.iter().all(|l| l == "0"));
    }

    #[test]
    fn frozen_classifier_total_loss_decreases_with_more_negatives() {
        let data = corpus(2000);
        let cfg = TrainConfig {
            alpha: 0.0,
            beta: 0.0,
            freeze_classifier: true,
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let m: TrainedModel<f64> = train(&cfg, &data, None).unwrap();
        let total: Vec<f64> = m.history.epochs.iter().map(|e| e.loss.total).collect();
        for w in total.windows(2) {
            assert!(w[1] < w[0], "{total:?}");
        }
    }

    #[test]
    fn recovers_type_pair_relations() {
        let data = synth_corpus(&SynthConfig {
            entity_affinity: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            c: 16,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let m: TrainedModel<f64> = train(&cfg, &data, None).unwrap();
        let report = m.evaluate(&data).unwrap();
        assert!(report.b3.f1 >= 0.95, "{report}");
        assert!(report.v.homogeneity >= 0.9, "{report}");
        assert!(m.cluster(&data).unwrap().n_clusters() <= 16);
    }

    #[test]
    fn type_pair_clustering_refines_etype() {
        let data = corpus(1000);
        let cfg = TrainConfig {
            max_epochs: 2,
            ..TrainConfig::default()
        };
        let m: TrainedModel<f64> = train(&cfg, &data, None).unwrap();
        let induced = m.cluster(&data).unwrap();
        let etype = etype_cluster(&data);
        let mut seen = std::collections::HashMap::new();
        for (e, i) in etype.labels.iter().zip(&induced.labels) {
            assert_eq!(seen.entry(e.clone()).or_insert_with(|| i.clone()), i);
        }
        assert!(induced.n_clusters() <= cfg.c);
        assert!(evaluate(&induced, &data).is_ok());
    }

    #[test]
    fn l2_is_reported_outside_total() {
        let data = corpus(300);
        let cfg = TrainConfig {
            max_epochs: 2,
            l2: 0.5,
            ..TrainConfig::default()
        };
        let m: TrainedModel<f64> = train(&cfg, &data, None).unwrap();
        for e in &m.history.epochs {
            let l = e.loss;
            let expected = l.link_nll_pos + l.link_nll_neg + cfg.alpha * l.l_s + cfg.beta * l.l_d;
            assert!((l.total - expected).abs() < 1e-12);
            assert!(e.l2_penalty > 0.0);
        }
    }

    #[test]
    fn richer_features_train_and_f32_runs() {
        let data = corpus(400);
        let cfg = TrainConfig {
            max_epochs: 2,
            features: FeatureSet::type_pair_only()
                .with(FeatureTemplate::Entity)
                .with(FeatureTemplate::Bow),
            ..TrainConfig::march_ls_ld()
        };
        let m: TrainedModel<f32> = train(&cfg, &data, None).unwrap();
        assert!(m.params.is_finite());
        assert!(m.params.n_features() > m.vocabularies.type_pairs.len());
        assert_eq!(m.cluster(&data).unwrap().len(), 400);
    }

    #[test]
    fn annealing_and_early_stop() {
        let data = corpus(500);
        let cfg = TrainConfig {
            max_epochs: 40,
            patience: 2,
            ..TrainConfig::simon_style()
        };
        let m: TrainedModel<f64> = train(&cfg, &data, None).unwrap();
        let h = &m.history;
        assert!(h.epochs.len() <= 40);
        let best = h.epochs[h.best_epoch - 1].dev_b3_f1.unwrap();
        assert!(h.epochs.iter().all(|e| e.dev_b3_f1.unwrap() <= best));
        // kept parameters reproduce the best dev score
        assert!((m.evaluate(&data.labelled_only()).unwrap().b3.f1 - best).abs() < 1e-12);
        if h.epochs.len() < 40 {
            let lrs: Vec<f64> = h.epochs.iter().map(|e| e.learning_rate).collect();
            assert!(lrs.last().unwrap() < &lrs[0]);
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig { c: 1, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { patience: 0, ..TrainConfig::default() },
            TrainConfig { lr_anneal: Some(2.0), ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(TrainError::InvalidConfig(_))));
        }
        let data = corpus(10);
        let unlabelled = Corpus::new(
            data.instances
                .iter()
                .cloned()
                .map(|mut i| {
                    i.gold_relation = None;
                    i
                })
                .collect(),
        );
        assert!(matches!(
            train::<f64>(&TrainConfig::default(), &data, Some(&unlabelled)),
            Err(TrainError::UnlabelledDev)
        ));
        assert!(matches!(
            train::<f64>(&TrainConfig::default(), &Corpus::default(), None),
            Err(TrainError::EmptyCorpus)
        ));
    }

    #[test]
    fn config_json_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"c": 16, "features": ["trigger"]}"#).unwrap();
        assert_eq!(cfg.c, 16);
        assert_eq!(cfg.learning_rate, 0.001);
        assert!(cfg.features.contains(FeatureTemplate::TypePair));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
