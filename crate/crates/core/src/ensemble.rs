//! Late fusion of per-model similarity matrices.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Elementwise mean of equally shaped similarity matrices.
///
/// Each entry is accumulated in f64 over the model values sorted ascending,
/// so the result is independent of model order.
pub fn ensemble_mean<T: Scalar>(inputs: &[Matrix<T>]) -> Result<Matrix<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::arg("ensemble needs at least one similarity matrix"))?;
    let shape = first.shape();
    if let Some((k, m)) = inputs.iter().enumerate().find(|(_, m)| m.shape() != shape) {
        return Err(Error::arg(format!(
            "similarity matrix {k} is {}x{}, expected {}x{}",
            m.rows(),
            m.cols(),
            shape.0,
            shape.1
        )));
    }
    let count = inputs.len() as f64;
    let mut values = vec![0f64; inputs.len()];
    let mut out = Vec::with_capacity(shape.0 * shape.1);
    for idx in 0..shape.0 * shape.1 {
        for (v, m) in values.iter_mut().zip(inputs) {
            *v = m.as_slice()[idx].as_f64();
        }
        values.sort_by(f64::total_cmp);
        out.push(T::of(values.iter().sum::<f64>() / count));
    }
    Matrix::from_vec(shape.0, shape.1, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_matrix_mean() {
        let a = Matrix::from_rows(&[vec![1.0f32, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0f32, 1.0], vec![1.0, 0.0]]).unwrap();
        let m = ensemble_mean(&[a, b]).unwrap();
        assert_eq!(m.as_slice(), &[0.5; 4]);
    }

    #[test]
    fn idempotent() {
        let a = Matrix::from_rows(&[vec![0.3f32, -0.7, 0.123_456_7]]).unwrap();
        for k in 1..7 {
            let inputs = vec![a.clone(); k];
            assert_eq!(ensemble_mean(&inputs).unwrap(), a);
        }
    }

    #[test]
    fn errors_name_offender() {
        assert!(ensemble_mean::<f32>(&[]).is_err());
        let a = Matrix::<f32>::zeros(2, 2);
        let b = Matrix::<f32>::zeros(2, 3);
        let err = ensemble_mean(&[a.clone(), a, b]).unwrap_err();
        assert!(err.to_string().contains("matrix 2"), "{err}");
    }
}
