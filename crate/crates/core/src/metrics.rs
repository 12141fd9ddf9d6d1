//! Rank-aware retrieval metrics: graded-relevance nDCG and binarized mAP,
//! reported per direction (video→text, text→video) and averaged.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::relevance::RelevanceMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub ndcg_v2t: f64,
    pub ndcg_t2v: f64,
    pub ndcg_avg: f64,
    pub map_v2t: f64,
    pub map_t2v: f64,
    pub map_avg: f64,
}

impl MetricReport {
    fn from_directions(ndcg_v2t: f64, ndcg_t2v: f64, map_v2t: f64, map_t2v: f64) -> Self {
        Self {
            ndcg_v2t,
            ndcg_t2v,
            ndcg_avg: 0.5 * (ndcg_v2t + ndcg_t2v),
            map_v2t,
            map_t2v,
            map_avg: 0.5 * (map_v2t + map_t2v),
        }
    }

    /// The same report scaled to percentages.
    pub fn to_percent(&self) -> Self {
        Self {
            ndcg_v2t: 100.0 * self.ndcg_v2t,
            ndcg_t2v: 100.0 * self.ndcg_t2v,
            ndcg_avg: 100.0 * self.ndcg_avg,
            map_v2t: 100.0 * self.map_v2t,
            map_t2v: 100.0 * self.map_t2v,
            map_avg: 100.0 * self.map_avg,
        }
    }
}

fn dcg(gains: impl Iterator<Item = f64>) -> f64 {
    gains
        .enumerate()
        .map(|(i, g)| g / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG of one ranked list of gains. All-zero gains score 0.
pub fn ndcg_query(gains_in_ranked_order: &[f64]) -> f64 {
    let mut ideal = gains_in_ranked_order.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(ideal.into_iter());
    if idcg <= 0.0 {
        return 0.0;
    }
    dcg(gains_in_ranked_order.iter().copied()) / idcg
}

/// Average precision of one ranked list of relevance flags. No positives
/// scores 0.
pub fn average_precision(relevant_flags_in_ranked_order: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (p, &flag) in relevant_flags_in_ranked_order.iter().enumerate() {
        if flag {
            hits += 1;
            sum += hits as f64 / (p + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Ranks item indices by descending score; ties keep ascending index.
pub fn rank_descending<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Mean with a summation order that does not depend on the order of the
/// inputs.
fn canonical_mean(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn score_queries<T: Scalar>(
    n_queries: usize,
    n_items: usize,
    sim: impl Fn(usize, usize) -> T,
    rel: impl Fn(usize, usize) -> f32,
    map_threshold: f64,
) -> (f64, f64) {
    let mut ndcgs = Vec::with_capacity(n_queries);
    let mut aps = Vec::with_capacity(n_queries);
    let mut scores = Vec::with_capacity(n_items);
    for q in 0..n_queries {
        scores.clear();
        scores.extend((0..n_items).map(|j| sim(q, j)));
        let order = rank_descending(&scores);
        let gains: Vec<f64> = order.iter().map(|&j| f64::from(rel(q, j))).collect();
        let flags: Vec<bool> = gains.iter().map(|&g| g > map_threshold).collect();
        ndcgs.push(ndcg_query(&gains));
        aps.push(average_precision(&flags));
    }
    (canonical_mean(ndcgs), canonical_mean(aps))
}

/// Scores a videos × texts similarity matrix against graded relevance.
///
/// Video→text ranks every text for each video (row), text→video ranks every
/// video for each text (column). nDCG uses relevance as gain; mAP counts an
/// item as relevant when its relevance exceeds `map_threshold`.
pub fn evaluate_retrieval<T: Scalar>(
    similarity: &Matrix<T>,
    relevance: &RelevanceMatrix,
    map_threshold: f64,
) -> Result<MetricReport> {
    if similarity.shape() != relevance.shape() {
        return Err(Error::arg(format!(
            "similarity is {}x{} but relevance is {}x{}",
            similarity.rows(),
            similarity.cols(),
            relevance.rows(),
            relevance.cols()
        )));
    }
    let (nv, nt) = similarity.shape();
    let (ndcg_v2t, map_v2t) = score_queries(
        nv,
        nt,
        |q, j| similarity.get(q, j),
        |q, j| relevance.get(q, j),
        map_threshold,
    );
    let (ndcg_t2v, map_t2v) = score_queries(
        nt,
        nv,
        |q, j| similarity.get(j, q),
        |q, j| relevance.get(j, q),
        map_threshold,
    );
    Ok(MetricReport::from_directions(
        ndcg_v2t, ndcg_t2v, map_v2t, map_t2v,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force DCG ratio over explicit positions.
    fn ndcg_oracle(gains: &[f64]) -> f64 {
        let mut dcg = 0.0;
        for (pos, g) in gains.iter().enumerate() {
            dcg += g / (2.0 + pos as f64).ln() * std::f64::consts::LN_2;
        }
        let mut sorted = gains.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut idcg = 0.0;
        for (pos, g) in sorted.iter().enumerate() {
            idcg += g / (2.0 + pos as f64).ln() * std::f64::consts::LN_2;
        }
        if idcg == 0.0 {
            0.0
        } else {
            dcg / idcg
        }
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_query(&[1.0, 0.5, 0.0]), 1.0);
        let oracle = ndcg_oracle(&[0.0, 0.5, 1.0]);
        assert!((oracle - 0.61990).abs() < 1e-5, "{oracle}");
        assert!((ndcg_query(&[0.0, 0.5, 1.0]) - oracle).abs() < 1e-12);
        assert_eq!(ndcg_query(&[0.3, 0.3, 0.3]), 1.0);
        assert_eq!(ndcg_query(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true, true, false]), 1.0);
        let oracle: f64 = (1.0 / 2.0 + 2.0 / 3.0) / 2.0;
        assert!((oracle - 0.58333).abs() < 1e-5);
        assert!((average_precision(&[false, true, true]) - oracle).abs() < 1e-15);
        assert_eq!(average_precision(&[false, false]), 0.0);
    }

    #[test]
    fn perfect_retrieval() {
        let sim = Matrix::from_rows(&[vec![0.9f32, 0.1], vec![0.2, 0.8]]).unwrap();
        let rel = Matrix::from_rows(&[vec![1.0f32, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = evaluate_retrieval(&sim, &rel, 0.0).unwrap();
        assert_eq!(
            r,
            MetricReport {
                ndcg_v2t: 1.0,
                ndcg_t2v: 1.0,
                ndcg_avg: 1.0,
                map_v2t: 1.0,
                map_t2v: 1.0,
                map_avg: 1.0
            }
        );
    }

    #[test]
    fn adversarial_single_row() {
        let rel = Matrix::from_rows(&[vec![1.0f32, 0.5, 0.0]]).unwrap();
        let sim = rel.map(|r| -r);
        let r = evaluate_retrieval(&sim, &rel, 0.0).unwrap();
        assert!((r.ndcg_v2t - 0.61990).abs() < 1e-5);
    }

    #[test]
    fn shape_mismatch() {
        let sim = Matrix::<f32>::zeros(2, 3);
        let rel = Matrix::<f32>::zeros(3, 2);
        assert!(evaluate_retrieval(&sim, &rel, 0.0).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(rank_descending(&[0.5f32, 0.7, 0.5, 0.7]), vec![1, 3, 0, 2]);
    }

    proptest! {
        #[test]
        fn bounded_and_one_iff_ideal(gains in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let v = ndcg_query(&gains);
            prop_assert!((0.0..=1.0).contains(&v));
            let nonincreasing = gains.windows(2).all(|w| w[0] >= w[1]);
            if gains.iter().any(|&g| g > 0.0) {
                prop_assert_eq!(v == 1.0, nonincreasing);
            }
        }

        #[test]
        fn ap_bounded(flags in prop::collection::vec(any::<bool>(), 1..30)) {
            let v = average_precision(&flags);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
