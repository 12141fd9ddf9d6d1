//! Dual linear encoder into a shared, unit-normalized embedding space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::scalar::Scalar;

/// Pre-normalization norms at or below this are rejected.
pub const MIN_EMBEDDING_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Video,
    Text,
}

/// Two affine projections `x ↦ Wᵀx + b`, one per modality, followed by L2
/// normalization.
///
/// `w_video` is `d_video × d`, `w_text` is `d_text × d`, both row-major.
/// The same layout doubles as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct DualEncoder<T> {
    pub w_video: Matrix<T>,
    pub b_video: Vec<T>,
    pub w_text: Matrix<T>,
    pub b_text: Vec<T>,
}

/// Names of the four parameter blocks, in storage order.
pub const PARAM_BLOCKS: [&str; 4] = ["w_video", "b_video", "w_text", "b_text"];

impl<T: Scalar> DualEncoder<T> {
    pub fn zeros(d_video: usize, d_text: usize, d: usize) -> Self {
        Self {
            w_video: Matrix::zeros(d_video, d),
            b_video: vec![T::zero(); d],
            w_text: Matrix::zeros(d_text, d),
            b_text: vec![T::zero(); d],
        }
    }

    pub fn from_parts(
        w_video: Matrix<T>,
        b_video: Vec<T>,
        w_text: Matrix<T>,
        b_text: Vec<T>,
    ) -> Result<Self> {
        let d = w_video.cols();
        let check = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { what, expected, got })
            }
        };
        check("embedding dimension", 1usize.max(d), d)?;
        check("text projection width", d, w_text.cols())?;
        check("video bias length", d, b_video.len())?;
        check("text bias length", d, b_text.len())?;
        if w_video.rows() == 0 || w_text.rows() == 0 {
            return Err(Error::arg("feature dimensions must be >= 1"));
        }
        Ok(Self {
            w_video,
            b_video,
            w_text,
            b_text,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d_video(), self.d_text(), self.dim())
    }

    pub fn dim(&self) -> usize {
        self.w_video.cols()
    }

    pub fn d_video(&self) -> usize {
        self.w_video.rows()
    }

    pub fn d_text(&self) -> usize {
        self.w_text.rows()
    }

    pub fn input_dim(&self, side: Side) -> usize {
        match side {
            Side::Video => self.d_video(),
            Side::Text => self.d_text(),
        }
    }

    fn projection(&self, side: Side) -> (&Matrix<T>, &[T]) {
        match side {
            Side::Video => (&self.w_video, &self.b_video),
            Side::Text => (&self.w_text, &self.b_text),
        }
    }

    /// Parameter blocks in storage order (see [`PARAM_BLOCKS`]).
    pub fn blocks(&self) -> [&[T]; 4] {
        [
            self.w_video.as_slice(),
            &self.b_video,
            self.w_text.as_slice(),
            &self.b_text,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.w_video.as_mut_slice(),
            &mut self.b_video,
            self.w_text.as_mut_slice(),
            &mut self.b_text,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// Affine projection without normalization.
    pub fn project(&self, side: Side, features: &[T]) -> Result<Vec<T>> {
        let (w, b) = self.projection(side);
        if features.len() != w.rows() {
            return Err(Error::DimensionMismatch {
                what: "feature length",
                expected: w.rows(),
                got: features.len(),
            });
        }
        let mut out = b.to_vec();
        for (a, &x) in features.iter().enumerate() {
            for (o, &wk) in out.iter_mut().zip(w.row(a)) {
                *o += x * wk;
            }
        }
        Ok(out)
    }

    /// Unit-norm embedding of one feature vector.
    pub fn embed(&self, side: Side, features: &[T]) -> Result<Vec<T>> {
        let mut u = self.project(side, features)?;
        let norm = normalize(&mut u)?;
        debug_assert!(norm > T::zero());
        Ok(u)
    }

    /// Embeds every row of `features`. Returns unit embeddings and their
    /// pre-normalization norms.
    pub fn embed_rows(&self, side: Side, features: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
        let expected = self.input_dim(side);
        if features.cols() != expected {
            return Err(Error::DimensionMismatch {
                what: "feature length",
                expected,
                got: features.cols(),
            });
        }
        let mut emb = Matrix::zeros(features.rows(), self.dim());
        let mut norms = Vec::with_capacity(features.rows());
        for i in 0..features.rows() {
            let mut u = self.project(side, features.row(i))?;
            norms.push(normalize(&mut u)?);
            emb.row_mut(i).copy_from_slice(&u);
        }
        Ok((emb, norms))
    }

    /// Cosine similarities, videos × texts.
    pub fn similarity_matrix(
        &self,
        video_features: &Matrix<T>,
        text_features: &Matrix<T>,
    ) -> Result<Matrix<T>> {
        let (ev, _) = self.embed_rows(Side::Video, video_features)?;
        let (et, _) = self.embed_rows(Side::Text, text_features)?;
        ev.matmul_transposed(&et)
    }
}

/// Normalizes in place, returning the original norm.
pub(crate) fn normalize<T: Scalar>(v: &mut [T]) -> Result<T> {
    let norm = dot(v, v).sqrt();
    if norm.as_f64().is_nan() || norm.as_f64() <= MIN_EMBEDDING_NORM {
        return Err(Error::DegenerateEmbedding { norm: norm.as_f64() });
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(norm)
}

/// Xavier-uniform weights, zero biases, deterministic in `seed`.
pub fn init_model<T: Scalar>(
    seed: u64,
    d_video: usize,
    d_text: usize,
    d: usize,
) -> Result<DualEncoder<T>> {
    if d_video == 0 || d_text == 0 || d == 0 {
        return Err(Error::arg(format!(
            "model dimensions must be >= 1 (got d_video={d_video}, d_text={d_text}, d={d})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xavier = |fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Matrix::from_fn(fan_in, fan_out, |_, _| {
            T::of(rng.random_range(-bound..=bound))
        })
    };
    let w_video = xavier(d_video, d);
    let w_text = xavier(d_text, d);
    Ok(DualEncoder {
        w_video,
        b_video: vec![T::zero(); d],
        w_text,
        b_text: vec![T::zero(); d],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_features(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model::<f32>(7, 16, 12, 8).unwrap();
        let b = init_model::<f32>(7, 16, 12, 8).unwrap();
        assert_eq!(a, b);
        let c = init_model::<f32>(8, 16, 12, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_biases_zero_and_weights_bounded() {
        let m = init_model::<f64>(1, 16, 12, 8).unwrap();
        assert!(m.b_video.iter().chain(&m.b_text).all(|&b| b == 0.0));
        let bv = (6.0f64 / 24.0).sqrt();
        let bt = (6.0f64 / 20.0).sqrt();
        assert!(m.w_video.as_slice().iter().all(|w| w.abs() <= bv));
        assert!(m.w_text.as_slice().iter().all(|w| w.abs() <= bt));
        // the video bound from (16, 8) is the one quoted for this shape
        assert!(m.w_video.as_slice().iter().any(|w| w.abs() > bt * 0.5));
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(init_model::<f32>(0, 0, 3, 2).is_err());
        assert!(init_model::<f32>(0, 3, 0, 2).is_err());
        assert!(init_model::<f32>(0, 3, 3, 0).is_err());
    }

    #[test]
    fn embed_unit_norm_and_scale_invariant() {
        let m = init_model::<f64>(3, 5, 4, 6).unwrap();
        let x = [0.3, -1.2, 0.5, 2.0, -0.1];
        let e = m.embed(Side::Video, &x).unwrap();
        assert!((dot(&e, &e).sqrt() - 1.0).abs() < 1e-6);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let e2 = m.embed(Side::Video, &x2).unwrap();
        for (a, b) in e.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn embed_errors() {
        let m = init_model::<f32>(3, 5, 4, 6).unwrap();
        assert!(matches!(
            m.embed(Side::Video, &[0.0; 5]),
            Err(Error::DegenerateEmbedding { .. })
        ));
        assert!(matches!(
            m.embed(Side::Text, &[1.0; 5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn orthogonal_embeddings_give_zero_similarity() {
        let w = Matrix::from_rows(&[vec![1.0f32, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = DualEncoder::from_parts(w.clone(), vec![0.0; 2], w, vec![0.0; 2]).unwrap();
        let v = Matrix::from_rows(&[vec![3.0f32, 0.0]]).unwrap();
        let t = Matrix::from_rows(&[vec![0.0f32, 0.5]]).unwrap();
        let s = m.similarity_matrix(&v, &t).unwrap();
        assert!(s.get(0, 0).abs() < 1e-6);
    }

    #[test]
    fn identical_sides_give_unit_diagonal() {
        let mut m = init_model::<f32>(9, 6, 6, 4).unwrap();
        m.w_text = m.w_video.clone();
        let x = random_features(5, 6, 2).map(|v| v as f32);
        let s = m.similarity_matrix(&x, &x).unwrap();
        for i in 0..5 {
            assert!((s.get(i, i) - 1.0).abs() < 1e-6);
        }
        assert!(s.as_slice().iter().all(|v| (-1.0 - 1e-6..=1.0 + 1e-6).contains(v)));
    }

    #[test]
    fn similarity_matches_pointwise_recomputation() {
        let m = init_model::<f64>(4, 7, 5, 3).unwrap();
        let v = random_features(4, 7, 10);
        let t = random_features(3, 5, 11);
        let s = m.similarity_matrix(&v, &t).unwrap();
        for i in 0..4 {
            let ev = m.embed(Side::Video, v.row(i)).unwrap();
            for j in 0..3 {
                let et = m.embed(Side::Text, t.row(j)).unwrap();
                assert_eq!(s.get(i, j), dot(&ev, &et));
            }
        }
    }

    #[test]
    fn similarity_dimension_mismatch() {
        let m = init_model::<f64>(4, 7, 5, 3).unwrap();
        let v = random_features(2, 6, 1);
        let t = random_features(2, 5, 1);
        assert!(m.similarity_matrix(&v, &t).is_err());
    }
}
