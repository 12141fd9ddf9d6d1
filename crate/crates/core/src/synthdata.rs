//! Seeded synthetic retrieval data with graded verb/noun relevance.
//!
//! Every class owns a random unit vector per modality. An item's prototype
//! is the normalized sum of its verb and noun vectors, so items that share
//! classes have correlated features in both modalities and relevance is
//! recoverable by a linear model. Features are prototype plus i.i.d.
//! Gaussian noise.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::relevance::CaptionAnnotation;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_items: usize,
    pub n_verb_classes: usize,
    pub n_noun_classes: usize,
    pub nouns_per_item: usize,
    pub d_video: usize,
    pub d_text: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_items: 512,
            n_verb_classes: 8,
            n_noun_classes: 20,
            nouns_per_item: 2,
            d_video: 64,
            d_text: 64,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_items", self.n_items),
            ("n_verb_classes", self.n_verb_classes),
            ("n_noun_classes", self.n_noun_classes),
            ("nouns_per_item", self.nouns_per_item),
            ("d_video", self.d_video),
            ("d_text", self.d_text),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::arg(format!("{name} must be >= 1")));
        }
        if self.nouns_per_item > self.n_noun_classes {
            return Err(Error::arg(format!(
                "nouns_per_item ({}) exceeds n_noun_classes ({})",
                self.nouns_per_item, self.n_noun_classes
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::arg("noise_sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub video: Matrix<T>,
    pub text: Matrix<T>,
    pub annotations: Vec<CaptionAnnotation>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(video: Matrix<T>, text: Matrix<T>, annotations: Vec<CaptionAnnotation>) -> Result<Self> {
        let n = annotations.len();
        for (what, rows) in [("video rows", video.rows()), ("text rows", text.rows())] {
            if rows != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: rows,
                });
            }
        }
        Ok(Self {
            video,
            text,
            annotations,
        })
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            video: self.video.select_rows(indices),
            text: self.text.select_rows(indices),
            annotations: indices.iter().map(|&i| self.annotations[i].clone()).collect(),
        }
    }
}

fn unit_vectors(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

fn prototype(verb: &[f64], nouns: &[&[f64]]) -> Vec<f64> {
    let mut p = verb.to_vec();
    for n in nouns {
        for (a, b) in p.iter_mut().zip(*n) {
            *a += b;
        }
    }
    let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        p.iter_mut().for_each(|x| *x /= norm);
    }
    p
}

pub fn generate_dataset<T: Scalar>(config: &SynthConfig) -> Result<Dataset<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let verbs_v = unit_vectors(&mut rng, config.n_verb_classes, config.d_video);
    let nouns_v = unit_vectors(&mut rng, config.n_noun_classes, config.d_video);
    let verbs_t = unit_vectors(&mut rng, config.n_verb_classes, config.d_text);
    let nouns_t = unit_vectors(&mut rng, config.n_noun_classes, config.d_text);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::arg(e.to_string()))?;

    let n = config.n_items;
    let mut video = Matrix::zeros(n, config.d_video);
    let mut text = Matrix::zeros(n, config.d_text);
    let mut annotations = Vec::with_capacity(n);
    for i in 0..n {
        let verb = rng.random_range(0..config.n_verb_classes);
        let mut nouns = sample(&mut rng, config.n_noun_classes, config.nouns_per_item).into_vec();
        nouns.sort_unstable();

        let pv = prototype(&verbs_v[verb], &nouns.iter().map(|&k| nouns_v[k].as_slice()).collect::<Vec<_>>());
        let pt = prototype(&verbs_t[verb], &nouns.iter().map(|&k| nouns_t[k].as_slice()).collect::<Vec<_>>());
        for (o, p) in video.row_mut(i).iter_mut().zip(&pv) {
            *o = T::of(p + noise.sample(&mut rng));
        }
        for (o, p) in text.row_mut(i).iter_mut().zip(&pt) {
            *o = T::of(p + noise.sample(&mut rng));
        }
        annotations.push(CaptionAnnotation::new(
            format!("s{i:05}"),
            [verb as u32],
            nouns.iter().map(|&k| k as u32),
        )?);
    }
    Dataset::new(video, text, annotations)
}
