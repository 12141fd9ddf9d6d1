//! Triplet losses with in-batch hard mining.
//!
//! Three variants share one mining and back-propagation path:
//!
//! * `FixedMargin`: `max(0, Δ + s(a,n) − s(a,p))` with the hardest negative.
//! * `RelevanceMargin`: the margin becomes `1 − R(a,n)`, so partially
//!   relevant negatives are pushed away less.
//! * `Ranp`: a threshold τ splits the batch into a relevant pool
//!   (`R ≥ τ`) and an irrelevant pool (`R < τ`). The negative is mined from
//!   the irrelevant pool only, and a second hinge with margin Δp pulls the
//!   least similar relevant item toward the anchor.
//!
//! Within-modality directions reuse the same machinery on video-video and
//! text-text similarities; the anchor is its own ground-truth counterpart.

use serde::{Deserialize, Serialize};

use crate::encoder::{DualEncoder, Side};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::relevance::RelevanceMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    FixedMargin,
    RelevanceMargin,
    Ranp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Δ: fixed margin, also the margin of RANP's negative term.
    pub margin: f64,
    /// Δp: margin of RANP's hard-positive term.
    pub margin_pos: f64,
    /// τ: RANP pool threshold.
    pub tau: f64,
    /// Use `1 − R(a,n)` instead of Δ for RANP's negative term.
    pub ranp_relevance_margin: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Ranp,
            margin: 0.2,
            margin_pos: 0.2,
            tau: 0.15,
            ranp_relevance_margin: false,
        }
    }
}

impl LossConfig {
    pub fn fixed(margin: f64) -> Self {
        Self {
            variant: LossVariant::FixedMargin,
            margin,
            ..Self::default()
        }
    }

    pub fn relevance_margin() -> Self {
        Self {
            variant: LossVariant::RelevanceMargin,
            ..Self::default()
        }
    }

    pub fn ranp(tau: f64, margin_pos: f64) -> Self {
        Self {
            variant: LossVariant::Ranp,
            tau,
            margin_pos,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::arg(format!("margin must be finite and >= 0, got {}", self.margin)));
        }
        if !(self.margin_pos.is_finite() && self.margin_pos >= 0.0) {
            return Err(Error::arg(format!(
                "margin_pos must be finite and >= 0, got {}",
                self.margin_pos
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::arg(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "v2t")]
    VideoToText,
    #[serde(rename = "t2v")]
    TextToVideo,
    #[serde(rename = "v2v")]
    VideoToVideo,
    #[serde(rename = "t2t")]
    TextToText,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::VideoToText,
        Direction::TextToVideo,
        Direction::VideoToVideo,
        Direction::TextToText,
    ];
}

/// Per-direction loss weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectionWeights {
    pub t2v: f64,
    pub v2t: f64,
    pub v2v: f64,
    pub t2t: f64,
}

impl Default for DirectionWeights {
    fn default() -> Self {
        Self::cross_modal()
    }
}

impl DirectionWeights {
    pub fn cross_modal() -> Self {
        Self {
            t2v: 1.0,
            v2t: 1.0,
            v2v: 0.0,
            t2t: 0.0,
        }
    }

    pub fn all() -> Self {
        Self {
            t2v: 1.0,
            v2t: 1.0,
            v2v: 1.0,
            t2t: 1.0,
        }
    }

    pub fn get(&self, dir: Direction) -> f64 {
        match dir {
            Direction::VideoToText => self.v2t,
            Direction::TextToVideo => self.t2v,
            Direction::VideoToVideo => self.v2v,
            Direction::TextToText => self.t2t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.t2v, self.v2t, self.v2v, self.t2t];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::arg("direction weights must be finite and >= 0"));
        }
        if ws.iter().all(|&w| w == 0.0) {
            return Err(Error::arg("at least one direction weight must be > 0"));
        }
        Ok(())
    }
}

pub fn triplet_hinge<T: Scalar>(s_ap: T, s_an: T, margin: T) -> T {
    (margin + s_an - s_ap).max(T::zero())
}

/// Relevance-based margin `1 − R(a, n)`.
pub fn relevance_margin(r_an: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r_an) {
        return Err(Error::arg(format!("relevance must lie in [0, 1], got {r_an}")));
    }
    Ok(1.0 - r_an)
}

/// RANP's two hinge terms: the negative term against the ground-truth
/// positive, and the hard-positive term.
pub fn ranp_terms<T: Scalar>(s_ap: T, s_ahp: T, s_ahn: T, margin: T, margin_pos: T) -> T {
    triplet_hinge(s_ap, s_ahn, margin) + triplet_hinge(s_ahp, s_ahn, margin_pos)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripletPools {
    /// Index of the anchor's ground-truth counterpart within the batch.
    pub anchor_index: usize,
    pub positive_pool: Vec<usize>,
    pub negative_pool: Vec<usize>,
}

/// Splits a batch by relevance to the anchor: `R ≥ τ` is relevant, `R < τ`
/// (excluding the counterpart) is irrelevant.
pub fn ranp_pools(anchor: usize, relevance_row: &[f32], tau: f64) -> TripletPools {
    let mut positive_pool = Vec::new();
    let mut negative_pool = Vec::new();
    for (j, &r) in relevance_row.iter().enumerate() {
        if f64::from(r) >= tau {
            positive_pool.push(j);
        } else if j != anchor {
            negative_pool.push(j);
        }
    }
    TripletPools {
        anchor_index: anchor,
        positive_pool,
        negative_pool,
    }
}

/// One batch of matched video/text pairs. `relevance` is the batch-local
/// relevance matrix (row i, column j relate items i and j).
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub video: Matrix<T>,
    pub text: Matrix<T>,
    pub relevance: RelevanceMatrix,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.video.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.video.rows() == 0
    }

    fn validate(&self) -> Result<()> {
        let n = self.video.rows();
        if n < 2 {
            return Err(Error::arg(format!("batch size must be >= 2, got {n}")));
        }
        if self.text.rows() != n {
            return Err(Error::DimensionMismatch {
                what: "text rows in batch",
                expected: n,
                got: self.text.rows(),
            });
        }
        if self.relevance.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "batch relevance size",
                expected: n,
                got: self.relevance.rows().max(self.relevance.cols()),
            });
        }
        Ok(())
    }
}

/// Triplet selected for one anchor in one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct MinedTriplet {
    pub direction: Direction,
    pub anchor: usize,
    /// `None` when the anchor was skipped (empty RANP negative pool).
    pub negative: Option<usize>,
    /// Only set for RANP.
    pub hard_positive: Option<usize>,
    pub negative_relevance: Option<f32>,
    pub hard_positive_relevance: Option<f32>,
}

#[derive(Clone, Debug)]
pub struct BatchLoss<T> {
    pub loss: T,
    /// Same layout as the model parameters.
    pub grads: DualEncoder<T>,
    /// Anchors skipped because their RANP negative pool was empty.
    pub skipped_anchors: usize,
    pub triplets: Vec<MinedTriplet>,
    /// Smallest distance of any hinge argument or mining comparison from its
    /// switching point. The loss is smooth within a similarity perturbation
    /// smaller than this.
    pub decision_margin: T,
}

/// Index of the extreme similarity among `candidates` (ties: lowest index),
/// plus its distance to the closest other candidate.
fn mine<T: Scalar>(
    sims: &[T],
    candidates: impl Iterator<Item = usize> + Clone,
    highest: bool,
) -> Option<(usize, Option<T>)> {
    let mut best: Option<usize> = None;
    for j in candidates.clone() {
        best = match best {
            Some(b) if !(if highest { sims[j] > sims[b] } else { sims[j] < sims[b] }) => Some(b),
            _ => Some(j),
        };
    }
    let best = best?;
    let gap = candidates
        .filter(|&j| j != best)
        .map(|j| (sims[best] - sims[j]).abs())
        .reduce(T::min);
    Some((best, gap))
}

struct AnchorTerm<T> {
    loss: T,
    /// (candidate index, ∂loss/∂s_candidate)
    coefs: Vec<(usize, T)>,
    triplet: MinedTriplet,
    skipped: bool,
    margin: T,
}

fn anchor_term<T: Scalar>(
    direction: Direction,
    anchor: usize,
    sims: &[T],
    rel: &[f32],
    cfg: &LossConfig,
) -> Result<AnchorTerm<T>> {
    let n = sims.len();
    let s_p = sims[anchor];
    let mut triplet = MinedTriplet {
        direction,
        anchor,
        negative: None,
        hard_positive: None,
        negative_relevance: None,
        hard_positive_relevance: None,
    };
    let mut coefs = Vec::with_capacity(4);
    let mut margin = T::infinity();
    let note = |m: &mut T, gap: Option<T>| {
        if let Some(g) = gap {
            *m = m.min(g);
        }
    };

    let loss = match cfg.variant {
        LossVariant::FixedMargin | LossVariant::RelevanceMargin => {
            let (neg, gap) =
                mine(sims, (0..n).filter(|&j| j != anchor), true).expect("batch size >= 2");
            note(&mut margin, gap);
            let r_n = rel[neg];
            let delta = match cfg.variant {
                LossVariant::FixedMargin => T::of(cfg.margin),
                _ => T::of(relevance_margin(f64::from(r_n))?),
            };
            let arg = delta + sims[neg] - s_p;
            margin = margin.min(arg.abs());
            triplet.negative = Some(neg);
            triplet.negative_relevance = Some(r_n);
            if arg > T::zero() {
                coefs.push((neg, T::one()));
                coefs.push((anchor, -T::one()));
                arg
            } else {
                T::zero()
            }
        }
        LossVariant::Ranp => {
            let pools = ranp_pools(anchor, rel, cfg.tau);
            let Some((neg, gap_n)) = mine(sims, pools.negative_pool.iter().copied(), true) else {
                return Ok(AnchorTerm {
                    loss: T::zero(),
                    coefs,
                    triplet,
                    skipped: true,
                    margin,
                });
            };
            let (pos, gap_p) = mine(sims, pools.positive_pool.iter().copied(), false)
                .expect("positive pool holds the counterpart");
            note(&mut margin, gap_n);
            note(&mut margin, gap_p);
            let r_n = rel[neg];
            let delta = if cfg.ranp_relevance_margin {
                T::of(relevance_margin(f64::from(r_n))?)
            } else {
                T::of(cfg.margin)
            };
            triplet.negative = Some(neg);
            triplet.negative_relevance = Some(r_n);
            triplet.hard_positive = Some(pos);
            triplet.hard_positive_relevance = Some(rel[pos]);

            let neg_arg = delta + sims[neg] - s_p;
            let pos_arg = T::of(cfg.margin_pos) + sims[neg] - sims[pos];
            margin = margin.min(neg_arg.abs()).min(pos_arg.abs());
            let mut loss = T::zero();
            if neg_arg > T::zero() {
                loss += neg_arg;
                coefs.push((neg, T::one()));
                coefs.push((anchor, -T::one()));
            }
            if pos_arg > T::zero() {
                loss += pos_arg;
                coefs.push((neg, T::one()));
                coefs.push((pos, -T::one()));
            }
            loss
        }
    };
    Ok(AnchorTerm {
        loss,
        coefs,
        triplet,
        skipped: false,
        margin,
    })
}

/// Direction-weighted mean triplet loss over the anchors of a batch, with
/// exact gradients for every model parameter.
///
/// Skipped anchors contribute zero but still count in the mean.
pub fn batch_loss<T: Scalar>(
    model: &DualEncoder<T>,
    batch: &Batch<T>,
    config: &LossConfig,
    weights: &DirectionWeights,
) -> Result<BatchLoss<T>> {
    batch.validate()?;
    config.validate()?;
    weights.validate()?;
    let n = batch.len();
    let (ev, nv) = model.embed_rows(Side::Video, &batch.video)?;
    let (et, nt) = model.embed_rows(Side::Text, &batch.text)?;

    let cross = ev.matmul_transposed(&et)?;
    let within_v = if weights.v2v > 0.0 {
        Some(ev.matmul_transposed(&ev)?)
    } else {
        None
    };
    let within_t = if weights.t2t > 0.0 {
        Some(et.matmul_transposed(&et)?)
    } else {
        None
    };

    // ∂L/∂S for the cross, video-video and text-text similarity matrices.
    let mut g_cross = Matrix::<T>::zeros(n, n);
    let mut g_vv = Matrix::<T>::zeros(n, n);
    let mut g_tt = Matrix::<T>::zeros(n, n);

    let inv_n = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    let mut skipped = 0;
    let mut triplets = Vec::new();
    let mut decision_margin = T::infinity();
    let mut sims = vec![T::zero(); n];
    let mut rel = vec![0f32; n];

    for dir in Direction::ALL {
        let w = weights.get(dir);
        if w == 0.0 {
            continue;
        }
        let scale = T::of(w) * inv_n;
        let mut dir_loss = T::zero();
        for i in 0..n {
            for j in 0..n {
                let (s, r) = match dir {
                    Direction::VideoToText => (cross.get(i, j), batch.relevance.get(i, j)),
                    Direction::TextToVideo => (cross.get(j, i), batch.relevance.get(j, i)),
                    Direction::VideoToVideo => (
                        within_v.as_ref().expect("computed").get(i, j),
                        batch.relevance.get(i, j),
                    ),
                    Direction::TextToText => (
                        within_t.as_ref().expect("computed").get(i, j),
                        batch.relevance.get(i, j),
                    ),
                };
                sims[j] = s;
                rel[j] = r;
            }
            let term = anchor_term(dir, i, &sims, &rel, config)?;
            dir_loss += term.loss;
            skipped += usize::from(term.skipped);
            decision_margin = decision_margin.min(term.margin);
            for (j, c) in term.coefs {
                let c = c * scale;
                match dir {
                    Direction::VideoToText => g_cross.set(i, j, g_cross.get(i, j) + c),
                    Direction::TextToVideo => g_cross.set(j, i, g_cross.get(j, i) + c),
                    Direction::VideoToVideo => g_vv.set(i, j, g_vv.get(i, j) + c),
                    Direction::TextToText => g_tt.set(i, j, g_tt.get(i, j) + c),
                }
            }
            triplets.push(term.triplet);
        }
        loss += scale * dir_loss;
    }

    // ∂L/∂embedding
    let d = model.dim();
    let mut d_ev = Matrix::<T>::zeros(n, d);
    let mut d_et = Matrix::<T>::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            let gc = g_cross.get(i, j);
            if gc != T::zero() {
                axpy(d_ev.row_mut(i), gc, et.row(j));
                axpy(d_et.row_mut(j), gc, ev.row(i));
            }
            let gv = g_vv.get(i, j);
            if gv != T::zero() {
                axpy(d_ev.row_mut(i), gv, ev.row(j));
                axpy(d_ev.row_mut(j), gv, ev.row(i));
            }
            let gt = g_tt.get(i, j);
            if gt != T::zero() {
                axpy(d_et.row_mut(i), gt, et.row(j));
                axpy(d_et.row_mut(j), gt, et.row(i));
            }
        }
    }

    let mut grads = model.zeros_like();
    backprop_side(&batch.video, &ev, &nv, &d_ev, &mut grads.w_video, &mut grads.b_video);
    backprop_side(&batch.text, &et, &nt, &d_et, &mut grads.w_text, &mut grads.b_text);

    Ok(BatchLoss {
        loss,
        grads,
        skipped_anchors: skipped,
        triplets,
        decision_margin,
    })
}

fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Back-propagates through `e = u/‖u‖`, `u = Wᵀx + b`.
fn backprop_side<T: Scalar>(
    features: &Matrix<T>,
    emb: &Matrix<T>,
    norms: &[T],
    d_emb: &Matrix<T>,
    d_w: &mut Matrix<T>,
    d_b: &mut [T],
) {
    let d = emb.cols();
    let mut d_u = vec![T::zero(); d];
    for (i, &norm) in norms.iter().enumerate() {
        let e = emb.row(i);
        let g = d_emb.row(i);
        if g.iter().all(|&x| x == T::zero()) {
            continue;
        }
        let proj = crate::matrix::dot(e, g);
        for k in 0..d {
            d_u[k] = (g[k] - e[k] * proj) / norm;
        }
        for (bk, &du) in d_b.iter_mut().zip(&d_u) {
            *bk += du;
        }
        for (a, &x) in features.row(i).iter().enumerate() {
            axpy(d_w.row_mut(a), x, &d_u);
        }
    }
}
