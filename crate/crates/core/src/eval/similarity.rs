use super::EvalError;
use crate::scalar::{dot, norm, Scalar};

/// Cosine similarity, also expressed as a percentage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityResult<T> {
    pub cosine: T,
    pub percentage: T,
}

impl<T: Scalar> SimilarityResult<T> {
    fn from_cosine(cosine: T) -> Self {
        Self {
            cosine,
            percentage: T::lit(100.0) * cosine,
        }
    }
}

pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<SimilarityResult<T>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        return Err(EvalError::ZeroVector);
    }
    let cosine = (dot(a, b) / (na * nb)).max(-T::one()).min(T::one());
    Ok(SimilarityResult::from_cosine(cosine))
}

/// Speaker similarity of a manipulated rendition against its normal-style counterpart.
pub fn relative_ssim<T: Scalar>(manipulated: &[T], normal: &[T]) -> Result<SimilarityResult<T>, EvalError> {
    cosine_similarity(manipulated, normal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_angles() {
        let a = [1.0f64, 2.0, -0.5];
        assert!((cosine_similarity(&a, &a).unwrap().cosine - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap().cosine, 0.0);
        let sixty = [0.5, 3f64.sqrt() / 2.0];
        let c = cosine_similarity(&[1.0, 0.0], &sixty).unwrap();
        assert!((c.cosine - 0.5).abs() < 1e-15);
        assert!((c.percentage - 50.0).abs() < 1e-12);
    }

    #[test]
    fn relative_ssim_geometry() {
        let normal = [3.0f64, 4.0, 0.0];
        assert!((relative_ssim(&normal, &normal).unwrap().percentage - 100.0).abs() < 1e-12);
        assert_eq!(relative_ssim(&[0.0, 0.0, 2.0], &normal).unwrap().percentage, 0.0);
        // orthogonal perturbation of norm eps * |normal| -> cos(atan(eps))
        let eps = 0.1;
        let manipulated = [3.0, 4.0, eps * 5.0];
        let expect = 100.0 * f64::atan(eps).cos();
        assert!((relative_ssim(&manipulated, &normal).unwrap().percentage - expect).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EvalError::ZeroVector)
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(EvalError::DimensionMismatch(1, 2))
        ));
    }
}
