//! EType+ model: a linear-softmax relation classifier over sparse features and
//! a bilinear link predictor scored under the classifier's soft relation.
//!
//! For an instance `(h, t)` with relation posterior `q`, the link predictor
//! scores any entity pair as the posterior-weighted bilinear score
//!
//! ```text
//! ψ̄(x, y) = Σ_r q_r · E[x]ᵀ A_r E[y]
//! ```
//!
//! and each position `i ∈ {head, tail}` contributes
//! `−log σ(ψ̄(h, t)) − Σ_k log σ(−ψ̄(ẽ_k, ·))` where the negatives replace
//! position `i`. All gradients are analytic.

use ndarray::{Array1, Array2, Array3, ArrayView1, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::features::SparseFeatureVector;
use crate::scalar::Scalar;

/// Clamp applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationInit {
    /// `U(−1/√d, 1/√d)`, like the entity table.
    #[default]
    Uniform,
    Zero,
}

/// Classifier weights, entity embeddings and per-relation bilinear matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelParams<T> {
    /// `c × n_features`
    pub w: Array2<T>,
    /// `c`
    pub b: Array1<T>,
    /// `n_entities × d`
    pub entities: Array2<T>,
    /// `c × d × d`
    pub relations: Array3<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(n_relations: usize, n_features: usize, n_entities: usize, dim: usize) -> Self {
        ModelParams {
            w: Array2::zeros((n_relations, n_features)),
            b: Array1::zeros(n_relations),
            entities: Array2::zeros((n_entities, dim)),
            relations: Array3::zeros((n_relations, dim, dim)),
        }
    }

    /// Zero classifier; entity table (and relation matrices unless
    /// `relation_init` is `Zero`) drawn from `U(−1/√d, 1/√d)`.
    pub fn init<R: Rng + ?Sized>(
        n_relations: usize,
        n_features: usize,
        n_entities: usize,
        dim: usize,
        relation_init: RelationInit,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(n_relations, n_features, n_entities, dim);
        let bound = T::one() / T::of(dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        p.entities.iter_mut().for_each(|x| *x = dist.sample(rng));
        if relation_init == RelationInit::Uniform {
            p.relations.iter_mut().for_each(|x| *x = dist.sample(rng));
        }
        p
    }

    pub fn n_relations(&self) -> usize {
        self.b.len()
    }

    pub fn n_features(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_entities(&self) -> usize {
        self.entities.nrows()
    }

    pub fn dim(&self) -> usize {
        self.entities.ncols()
    }

    pub fn check_shapes(&self) -> Result<(), String> {
        let c = self.n_relations();
        let d = self.dim();
        if self.w.nrows() != c {
            return Err(format!("w has {} rows for {c} relations", self.w.nrows()));
        }
        if self.relations.dim() != (c, d, d) {
            return Err(format!(
                "relation tensor is {:?}, expected ({c}, {d}, {d})",
                self.relations.dim()
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite())
            && self.b.iter().all(|x| x.is_finite())
            && self.entities.iter().all(|x| x.is_finite())
            && self.relations.iter().all(|x| x.is_finite())
    }

    /// Squared L2 norm of every block selected by `mask`.
    pub fn sq_norm(&self, mask: ParamMask) -> T {
        let sq = |a: &mut dyn Iterator<Item = &T>| a.fold(T::zero(), |s, &x| s + x * x);
        let mut total = T::zero();
        if mask.classifier {
            total += sq(&mut self.w.iter()) + sq(&mut self.b.iter());
        }
        if mask.link {
            total += sq(&mut self.entities.iter()) + sq(&mut self.relations.iter());
        }
        total
    }

    fn check_entity(&self, id: usize) -> Result<(), ModelError> {
        if id >= self.n_entities() {
            Err(ModelError::InvalidEntity {
                id,
                n_entities: self.n_entities(),
            })
        } else {
            Ok(())
        }
    }

    fn check_posterior(&self, q: &RelationPosterior<T>) -> Result<(), ModelError> {
        if q.len() != self.n_relations() {
            Err(ModelError::PosteriorSize {
                expected: self.n_relations(),
                got: q.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Posterior-weighted relation matrix `Σ_r q_r A_r`.
    fn mixed_relation(&self, q: &RelationPosterior<T>) -> Array2<T> {
        let d = self.dim();
        let mut m = Array2::zeros((d, d));
        for (r, &qr) in q.probs.iter().enumerate() {
            if qr != T::zero() {
                m.scaled_add(qr, &self.relations.index_axis(Axis(0), r));
            }
        }
        m
    }
}

/// Which parameter blocks take part in an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamMask {
    /// `w` and `b`
    pub classifier: bool,
    /// entity table and relation matrices
    pub link: bool,
}

impl ParamMask {
    pub const ALL: ParamMask = ParamMask {
        classifier: true,
        link: true,
    };
    pub const LINK_ONLY: ParamMask = ParamMask {
        classifier: false,
        link: true,
    };
}

/// Probability vector over the `c` relation slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RelationPosterior<T> {
    pub probs: Array1<T>,
}

impl<T: Scalar> RelationPosterior<T> {
    pub fn uniform(c: usize) -> Self {
        RelationPosterior {
            probs: Array1::from_elem(c, T::one() / T::of(c as f64)),
        }
    }

    pub fn one_hot(c: usize, k: usize) -> Self {
        let mut probs = Array1::zeros(c);
        probs[k] = T::one();
        RelationPosterior { probs }
    }

    pub fn from_logits(logits: ArrayView1<'_, T>) -> Self {
        let max = logits.fold(T::neg_infinity(), |m, &x| m.max(x));
        let mut probs = logits.mapv(|z| (z - max).exp());
        let z = probs.sum();
        probs.mapv_inplace(|p| p / z);
        RelationPosterior { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Most probable slot; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> T {
        self.probs.iter().map(|&p| neg_p_ln_p(p)).sum()
    }
}

fn floor<T: Scalar>() -> T {
    T::of(PROB_FLOOR)
}

fn neg_p_ln_p<T: Scalar>(p: T) -> T {
    if p <= T::zero() {
        T::zero()
    } else {
        -p * p.max(floor()).ln()
    }
}

pub fn classifier_logits<T: Scalar>(
    params: &ModelParams<T>,
    x: &SparseFeatureVector,
) -> Result<Array1<T>, ModelError> {
    if x.dimension() != params.n_features() {
        return Err(ModelError::DimensionMismatch {
            expected: params.n_features(),
            got: x.dimension(),
        });
    }
    let mut logits = params.b.clone();
    for &j in x.indices() {
        logits += &params.w.column(j);
    }
    Ok(logits)
}

/// `softmax(W·x + b)`.
pub fn classifier_posterior<T: Scalar>(
    params: &ModelParams<T>,
    x: &SparseFeatureVector,
) -> Result<RelationPosterior<T>, ModelError> {
    classifier_logits(params, x).map(|z| RelationPosterior::from_logits(z.view()))
}

/// Bilinear score of one relation, `E[h]ᵀ A_r E[t]`.
pub fn relation_score<T: Scalar>(params: &ModelParams<T>, head: usize, tail: usize, r: usize) -> T {
    let a = params.relations.index_axis(Axis(0), r);
    params.entities.row(head).dot(&a.dot(&params.entities.row(tail)))
}

/// Expected score `ψ̄ = Σ_r q_r E[h]ᵀ A_r E[t]`.
pub fn link_score<T: Scalar>(
    params: &ModelParams<T>,
    head: usize,
    tail: usize,
    posterior: &RelationPosterior<T>,
) -> Result<T, ModelError> {
    params.check_entity(head)?;
    params.check_entity(tail)?;
    params.check_posterior(posterior)?;
    let m = params.mixed_relation(posterior);
    Ok(params.entities.row(head).dot(&m.dot(&params.entities.row(tail))))
}

/// Negative entity ids. `head` negatives replace the head, `tail` ones the tail.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Negatives {
    pub head: Vec<usize>,
    pub tail: Vec<usize>,
}

/// Dense gradient buffers shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub entities: Array2<T>,
    pub relations: Array3<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(p: &ModelParams<T>) -> Self {
        Gradients {
            w: Array2::zeros(p.w.raw_dim()),
            b: Array1::zeros(p.b.raw_dim()),
            entities: Array2::zeros(p.entities.raw_dim()),
            relations: Array3::zeros(p.relations.raw_dim()),
        }
    }

    pub fn fill_zero(&mut self) {
        self.w.fill(T::zero());
        self.b.fill(T::zero());
        self.entities.fill(T::zero());
        self.relations.fill(T::zero());
    }

    /// `grad += 2·l2·θ` on the masked blocks.
    pub fn add_l2(&mut self, params: &ModelParams<T>, l2: T, mask: ParamMask) {
        let k = T::of(2.0) * l2;
        if mask.classifier {
            self.w.scaled_add(k, &params.w);
            self.b.scaled_add(k, &params.b);
        }
        if mask.link {
            self.entities.scaled_add(k, &params.entities);
            self.relations.scaled_add(k, &params.relations);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite())
            && self.b.iter().all(|x| x.is_finite())
            && self.entities.iter().all(|x| x.is_finite())
            && self.relations.iter().all(|x| x.is_finite())
    }
}

/// Link loss of one instance with its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkLoss<T> {
    /// Positive terms of both positions, `2·softplus(−ψ̄(h, t))`.
    pub nll_pos: T,
    /// Negative-sample terms of both positions.
    pub nll_neg: T,
    /// `∂loss/∂q`
    pub grad_posterior: Array1<T>,
    /// Gradients w.r.t. the entity table and relation matrices (`w`, `b` stay zero).
    pub grads: Gradients<T>,
}

impl<T: Scalar> LinkLoss<T> {
    pub fn total(&self) -> T {
        self.nll_pos + self.nll_neg
    }
}

/// Link loss for `(head, tail)` under `posterior`, returning all gradients.
///
/// `k` is the configured number of negatives per position; with `k > 0` both
/// negative lists must be non-empty.
pub fn link_loss<T: Scalar>(
    params: &ModelParams<T>,
    head: usize,
    tail: usize,
    posterior: &RelationPosterior<T>,
    negatives: &Negatives,
    k: usize,
) -> Result<LinkLoss<T>, ModelError> {
    let mut grads = Gradients::zeros_like(params);
    let (nll_pos, nll_neg, grad_posterior) =
        link_loss_accumulate(params, head, tail, posterior, negatives, k, T::one(), &mut grads)?;
    Ok(LinkLoss {
        nll_pos,
        nll_neg,
        grad_posterior,
        grads,
    })
}

/// Like [`link_loss`] but adds `scale ×` the entity/relation gradients into
/// `grads` and returns `(nll_pos, nll_neg, ∂loss/∂q)` unscaled.
#[allow(clippy::too_many_arguments)]
pub fn link_loss_accumulate<T: Scalar>(
    params: &ModelParams<T>,
    head: usize,
    tail: usize,
    posterior: &RelationPosterior<T>,
    negatives: &Negatives,
    k: usize,
    scale: T,
    grads: &mut Gradients<T>,
) -> Result<(T, T, Array1<T>), ModelError> {
    params.check_posterior(posterior)?;
    if k > 0 {
        if negatives.head.is_empty() {
            return Err(ModelError::EmptyNegatives("head"));
        }
        if negatives.tail.is_empty() {
            return Err(ModelError::EmptyNegatives("tail"));
        }
    }
    for &id in [head, tail]
        .iter()
        .chain(&negatives.head)
        .chain(&negatives.tail)
    {
        params.check_entity(id)?;
    }

    let d = params.dim();
    let m = params.mixed_relation(posterior);
    let e = &params.entities;
    // Σ over scored pairs of (∂loss/∂ψ̄) · E[x] E[y]ᵀ
    let mut outer = Array2::<T>::zeros((d, d));
    let mut score_pair = |x: usize, y: usize, positive: bool, weight: T| -> T {
        let ex = e.row(x);
        let ey = e.row(y);
        let m_ey = m.dot(&ey);
        let s = ex.dot(&m_ey);
        let (loss, g) = if positive {
            ((-s).softplus(), -(-s).sigmoid())
        } else {
            (s.softplus(), s.sigmoid())
        };
        let g = g * weight;
        // outer += g · ex eyᵀ
        for (i, &xi) in ex.iter().enumerate() {
            let gx = g * xi;
            if gx != T::zero() {
                outer.row_mut(i).scaled_add(gx, &ey);
            }
        }
        let gs = g * scale;
        grads.entities.row_mut(x).scaled_add(gs, &m_ey);
        let mt_ex = m.t().dot(&ex);
        grads.entities.row_mut(y).scaled_add(gs, &mt_ex);
        loss * weight
    };

    // the positive pair appears once per position
    let nll_pos = score_pair(head, tail, true, T::of(2.0));
    let mut nll_neg = T::zero();
    for &n in &negatives.head {
        nll_neg += score_pair(n, tail, false, T::one());
    }
    for &n in &negatives.tail {
        nll_neg += score_pair(head, n, false, T::one());
    }

    let c = params.n_relations();
    let mut grad_q = Array1::zeros(c);
    for r in 0..c {
        let a = params.relations.index_axis(Axis(0), r);
        grad_q[r] = Zip::from(&a).and(&outer).fold(T::zero(), |s, &x, &y| s + x * y);
        let qr = posterior.probs[r];
        if qr != T::zero() {
            grads
                .relations
                .index_axis_mut(Axis(0), r)
                .scaled_add(qr * scale, &outer);
        }
    }
    Ok((nll_pos, nll_neg, grad_q))
}

fn check_batch<T: Scalar>(batch: &[RelationPosterior<T>]) -> Result<usize, ModelError> {
    let first = batch.first().ok_or(ModelError::EmptyBatch)?;
    let c = first.len();
    if let Some(bad) = batch.iter().find(|q| q.len() != c) {
        return Err(ModelError::PosteriorSize {
            expected: c,
            got: bad.len(),
        });
    }
    Ok(c)
}

/// Skewness `L_s`: mean posterior entropy (nats), with `∂L_s/∂q` per instance.
pub fn skewness_loss<T: Scalar>(
    batch: &[RelationPosterior<T>],
) -> Result<(T, Vec<Array1<T>>), ModelError> {
    check_batch(batch)?;
    let n = T::of(batch.len() as f64);
    let value = batch.iter().map(|q| q.entropy()).sum::<T>() / n;
    let grads = batch
        .iter()
        .map(|q| q.probs.mapv(|p| -(p.max(floor()).ln() + T::one()) / n))
        .collect();
    Ok((value, grads))
}

/// Dispersion `L_d = KL(q̄ ‖ uniform) = Σ_r q̄_r ln(c·q̄_r)` over the batch mean
/// `q̄`, with `∂L_d/∂q` per instance.
pub fn dispersion_loss<T: Scalar>(
    batch: &[RelationPosterior<T>],
) -> Result<(T, Vec<Array1<T>>), ModelError> {
    let c = check_batch(batch)?;
    let n = T::of(batch.len() as f64);
    let c_t = T::of(c as f64);
    let mut mean = Array1::<T>::zeros(c);
    for q in batch {
        mean += &q.probs;
    }
    mean.mapv_inplace(|x| x / n);
    let value = mean
        .iter()
        .map(|&p| {
            if p <= T::zero() {
                T::zero()
            } else {
                p * (c_t * p.max(floor())).ln()
            }
        })
        .sum();
    let g = mean.mapv(|p| ((c_t * p.max(floor())).ln() + T::one()) / n);
    Ok((value, vec![g; batch.len()]))
}

/// Backpropagate `∂loss/∂q` through the softmax into `W` and `b`.
pub fn classifier_backward<T: Scalar>(
    posterior: &RelationPosterior<T>,
    grad_posterior: &Array1<T>,
    x: &SparseFeatureVector,
    grads: &mut Gradients<T>,
) {
    let q = &posterior.probs;
    let dot = q.dot(grad_posterior);
    let grad_logits = Zip::from(q)
        .and(grad_posterior)
        .map_collect(|&qr, &gr| qr * (gr - dot));
    grads.b += &grad_logits;
    for &j in x.indices() {
        grads.w.column_mut(j).scaled_add(T::one(), &grad_logits);
    }
}

/// Loss components averaged over a batch. `total` excludes the L2 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub link_nll_pos: f64,
    pub link_nll_neg: f64,
    pub l_s: f64,
    pub l_d: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(link_nll_pos: f64, link_nll_neg: f64, l_s: f64, l_d: f64, alpha: f64, beta: f64) -> Self {
        LossBreakdown {
            link_nll_pos,
            link_nll_neg,
            l_s,
            l_d,
            total: link_nll_pos + link_nll_neg + alpha * l_s + beta * l_d,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.link_nll_pos, self.link_nll_neg, self.l_s, self.l_d, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// One training example for [`batch_objective`].
#[derive(Debug, Clone)]
pub struct Example<'a> {
    pub head: usize,
    pub tail: usize,
    pub source: PosteriorSource<'a>,
    pub negatives: Negatives,
}

/// Where an example's relation posterior comes from.
#[derive(Debug, Clone)]
pub enum PosteriorSource<'a> {
    /// Computed by the classifier from these features; gradients reach `W`, `b`.
    Features(&'a SparseFeatureVector),
    /// Held fixed (oracle assignments).
    Fixed(&'a RelationPosterior<f64>),
}

/// Coefficients of the batch objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
}

/// `mean link loss + α·L_s + β·L_d` over a batch, writing gradients into `grads`
/// (which is zeroed first). Regularizers only apply to classifier posteriors.
pub fn batch_objective<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[Example<'_>],
    weights: ObjectiveWeights,
    grads: &mut Gradients<T>,
) -> Result<LossBreakdown, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    grads.fill_zero();
    let n = T::of(batch.len() as f64);
    let inv_n = T::one() / n;

    let mut posteriors = Vec::with_capacity(batch.len());
    for ex in batch {
        posteriors.push(match &ex.source {
            PosteriorSource::Features(x) => classifier_posterior(params, x)?,
            PosteriorSource::Fixed(q) => RelationPosterior {
                probs: q.probs.mapv(T::of),
            },
        });
    }

    let (mut pos, mut neg) = (T::zero(), T::zero());
    let mut grad_q = Vec::with_capacity(batch.len());
    for (ex, q) in batch.iter().zip(&posteriors) {
        let (p, ng, gq) =
            link_loss_accumulate(params, ex.head, ex.tail, q, &ex.negatives, weights.k, inv_n, grads)?;
        pos += p;
        neg += ng;
        grad_q.push(gq.mapv(|g| g * inv_n));
    }

    let learned: Vec<usize> = batch
        .iter()
        .enumerate()
        .filter(|(_, ex)| matches!(ex.source, PosteriorSource::Features(_)))
        .map(|(i, _)| i)
        .collect();
    let (mut l_s, mut l_d) = (0.0, 0.0);
    if !learned.is_empty() {
        let qs: Vec<RelationPosterior<T>> = learned.iter().map(|&i| posteriors[i].clone()).collect();
        let (s, gs) = skewness_loss(&qs)?;
        let (dsp, gd) = dispersion_loss(&qs)?;
        l_s = s.as_f64();
        l_d = dsp.as_f64();
        let (alpha, beta) = (T::of(weights.alpha), T::of(weights.beta));
        for (slot, &i) in learned.iter().enumerate() {
            let g = &mut grad_q[i];
            if weights.alpha != 0.0 {
                g.scaled_add(alpha, &gs[slot]);
            }
            if weights.beta != 0.0 {
                g.scaled_add(beta, &gd[slot]);
            }
            if let PosteriorSource::Features(x) = batch[i].source {
                classifier_backward(&posteriors[i], g, x, grads);
            }
        }
    }

    Ok(LossBreakdown::new(
        (pos / n).as_f64(),
        (neg / n).as_f64(),
        l_s,
        l_d,
        weights.alpha,
        weights.beta,
    ))
}
