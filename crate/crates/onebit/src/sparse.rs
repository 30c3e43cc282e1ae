//! Sparse vectors and the scalar primitives of the recovery schemes.

use crate::error::{Error, Result};

/// A one-bit measurement outcome.  Stored as `i8` so that sign vectors
/// serialize to the documented 0x01 / 0xFF byte layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i8)]
pub enum Sign {
    Plus = 1,
    Minus = -1,
}

impl Sign {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    #[inline]
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Sign::Plus => 0x01,
            Sign::Minus => 0xFF,
        }
    }

    pub fn from_byte(b: u8) -> Result<Sign> {
        match b {
            0x01 => Ok(Sign::Plus),
            0xFF => Ok(Sign::Minus),
            other => Err(Error::Format(format!(
                "sign byte must be 0x01 or 0xFF, got {other:#04x}"
            ))),
        }
    }
}

/// The sign convention used throughout: `sign(0) = +1`.
pub fn sign(t: f64) -> Result<Sign> {
    if !t.is_finite() {
        return Err(Error::invalid(format!("sign of non-finite value {t}")));
    }
    Ok(if t >= 0.0 { Sign::Plus } else { Sign::Minus })
}

/// Dense-indexed real vector with an optional declared sparsity bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    values: Vec<f64>,
    declared_sparsity: Option<usize>,
}

impl SparseVector {
    /// Wraps a dense vector with no sparsity declaration.
    pub fn dense(values: Vec<f64>) -> Self {
        Self {
            values,
            declared_sparsity: None,
        }
    }

    /// Wraps a vector declaring at most `s` nonzeros; checked.
    pub fn with_sparsity(values: Vec<f64>, s: usize) -> Result<Self> {
        let nnz = values.iter().filter(|v| **v != 0.0).count();
        if nnz > s {
            return Err(Error::invalid(format!(
                "vector has {nnz} nonzeros, more than declared sparsity {s}"
            )));
        }
        Ok(Self {
            values,
            declared_sparsity: Some(s),
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self::dense(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn declared_sparsity(&self) -> Option<usize> {
        self.declared_sparsity
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i] != 0.0)
            .collect()
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.values)
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Indices of the `s` largest-magnitude entries, ties broken by lowest index.
fn top_indices(v: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_unstable_by(|&a, &b| {
        v[b].abs()
            .total_cmp(&v[a].abs())
            .then_with(|| a.cmp(&b))
    });
    idx.truncate(s);
    idx
}

/// Keeps the `s` largest-magnitude entries and zeroes the rest.
///
/// Equal magnitudes keep the lower index, so the result is a deterministic
/// function of the input.
pub fn hard_threshold(v: &[f64], s: usize) -> Result<SparseVector> {
    if s == 0 || s > v.len() {
        return Err(Error::invalid(format!(
            "hard_threshold needs 1 <= s <= n, got s={s}, n={}",
            v.len()
        )));
    }
    let mut out = vec![0.0; v.len()];
    for i in top_indices(v, s) {
        out[i] = v[i];
    }
    Ok(SparseVector {
        values: out,
        declared_sparsity: Some(s),
    })
}

/// `hard_threshold` followed by l2 normalization.
///
/// The zero vector has no normalized best s-term approximation; callers that
/// need a fallback direction substitute a canonical basis vector themselves.
pub fn hard_threshold_normalized(v: &[f64], s: usize) -> Result<SparseVector> {
    let kept = hard_threshold(v, s)?;
    let norm = kept.norm2();
    if norm == 0.0 {
        return Err(Error::DegenerateInput(
            "cannot normalize the zero vector".into(),
        ));
    }
    let values = kept.values.iter().map(|x| x / norm).collect();
    Ok(SparseVector {
        values,
        declared_sparsity: kept.declared_sparsity,
    })
}

/// A unit vector orthogonal to `u`, supported on `supp(u)` whenever that is
/// possible.
///
/// Rule: take the two largest-magnitude support coordinates `i < j` of `u`
/// and swap them with one sign change (`v_i = u_j`, `v_j = -u_i`), zero
/// elsewhere, then normalize.  Orthogonality is exact by cancellation.
///
/// When `u` has a single-point support the same-support requirement is
/// unsatisfiable; the support is enlarged by the smallest free index `k` and
/// `v = e_k`, which preserves orthogonality and unit norm.
pub fn orthogonal_same_support(u: &SparseVector) -> Result<SparseVector> {
    let vals = u.values();
    let support = u.support();
    match support.len() {
        0 => Err(Error::DegenerateInput(
            "orthogonal_same_support of the zero vector".into(),
        )),
        1 => {
            if u.len() < 2 {
                return Err(Error::invalid(
                    "orthogonal_same_support needs dimension >= 2",
                ));
            }
            let taken = support[0];
            let k = (0..u.len()).find(|&i| i != taken).expect("n >= 2");
            let mut v = vec![0.0; u.len()];
            v[k] = 1.0;
            Ok(SparseVector {
                values: v,
                declared_sparsity: u.declared_sparsity,
            })
        }
        _ => {
            let mut by_mag = support.clone();
            by_mag.sort_unstable_by(|&a, &b| {
                vals[b].abs().total_cmp(&vals[a].abs()).then_with(|| a.cmp(&b))
            });
            let (mut i, mut j) = (by_mag[0], by_mag[1]);
            if i > j {
                std::mem::swap(&mut i, &mut j);
            }
            let mut v = vec![0.0; u.len()];
            v[i] = vals[j];
            v[j] = -vals[i];
            let norm = norm2(&v);
            for x in &mut v {
                *x /= norm;
            }
            Ok(SparseVector {
                values: v,
                declared_sparsity: u.declared_sparsity,
            })
        }
    }
}

/// The magnitude map `f(xi) = 1 - sqrt(1 - xi^2) / xi` on the domain (0, 1].
pub fn magnitude_map(xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::Domain(format!(
            "magnitude_map requires xi in (0, 1], got {xi}"
        )));
    }
    Ok(1.0 - (1.0 - xi * xi).sqrt() / xi)
}

/// Number of positions in which two sign vectors disagree.
pub fn hamming_distance(y1: &[Sign], y2: &[Sign]) -> Result<usize> {
    if y1.len() != y2.len() {
        return Err(Error::invalid(format!(
            "hamming_distance length mismatch: {} vs {}",
            y1.len(),
            y2.len()
        )));
    }
    Ok(y1.iter().zip(y2).filter(|(a, b)| a != b).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn sign_convention() {
        assert_eq!(sign(0.0).unwrap(), Sign::Plus);
        assert_eq!(sign(-0.3).unwrap(), Sign::Minus);
        assert_eq!(sign(5.0).unwrap(), Sign::Plus);
        assert!(sign(f64::NAN).is_err());
        assert!(sign(f64::INFINITY).is_err());
    }

    #[test]
    fn hard_threshold_examples() {
        let ht = hard_threshold(&[3.0, -1.0, 0.0, 5.0], 2).unwrap();
        assert_eq!(ht.values(), &[3.0, 0.0, 0.0, 5.0]);
        // Tie on magnitude keeps the lower index.
        let ht = hard_threshold(&[2.0, -2.0, 1.0], 1).unwrap();
        assert_eq!(ht.values(), &[2.0, 0.0, 0.0]);
        // The zero vector is a fixed point.
        let ht = hard_threshold(&[0.0, 0.0], 1).unwrap();
        assert_eq!(ht.values(), &[0.0, 0.0]);
        assert!(hard_threshold(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn hard_threshold_normalized_examples() {
        let h = hard_threshold_normalized(&[3.0, 4.0], 1).unwrap();
        assert_eq!(h.values(), &[0.0, 1.0]);
        let h = hard_threshold_normalized(&[1.0, 1.0, 0.0], 2).unwrap();
        assert!((h.values()[0] - SQRT_HALF).abs() < 1e-15);
        assert!((h.values()[1] - SQRT_HALF).abs() < 1e-15);
        assert_eq!(h.values()[2], 0.0);
        assert!(matches!(
            hard_threshold_normalized(&[0.0, 0.0, 0.0], 1),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn orthogonal_examples() {
        let u = SparseVector::dense(vec![0.6, 0.8, 0.0]);
        let v = orthogonal_same_support(&u).unwrap();
        assert!((v.values()[0] - 0.8).abs() < 1e-15);
        assert!((v.values()[1] + 0.6).abs() < 1e-15);
        assert_eq!(v.values()[2], 0.0);

        let u = SparseVector::dense(vec![SQRT_HALF, 0.0, SQRT_HALF]);
        let v = orthogonal_same_support(&u).unwrap();
        assert!((v.values()[0] - SQRT_HALF).abs() < 1e-15);
        assert!((v.values()[2] + SQRT_HALF).abs() < 1e-15);

        // Single-point support falls back to an enlarged support.
        let u = SparseVector::dense(vec![0.0, 1.0, 0.0]);
        let v = orthogonal_same_support(&u).unwrap();
        assert!(dot(u.values(), v.values()).abs() <= 1e-12);
        assert!((v.norm2() - 1.0).abs() <= 1e-12);

        assert!(orthogonal_same_support(&SparseVector::zeros(3)).is_err());
    }

    #[test]
    fn magnitude_map_examples() {
        assert!(magnitude_map(SQRT_HALF).unwrap().abs() < 1e-15);
        let xi = 2.0 / 5.0_f64.sqrt();
        assert!((magnitude_map(xi).unwrap() - 0.5).abs() < 1e-15);
        assert!((magnitude_map(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(magnitude_map(0.0).is_err());
        assert!(magnitude_map(1.1).is_err());
        assert!(magnitude_map(-0.5).is_err());
    }

    #[test]
    fn hamming_examples() {
        use Sign::*;
        assert_eq!(hamming_distance(&[Plus, Minus, Plus], &[Plus, Plus, Plus]).unwrap(), 1);
        let y = [Plus, Minus, Minus, Plus];
        assert_eq!(hamming_distance(&y, &y).unwrap(), 0);
        assert_eq!(hamming_distance(&[Plus, Plus], &[Minus, Minus]).unwrap(), 2);
        assert!(hamming_distance(&[Plus], &[Plus, Plus]).is_err());
    }

    #[test]
    fn declared_sparsity_is_checked() {
        assert!(SparseVector::with_sparsity(vec![1.0, 2.0, 0.0], 2).is_ok());
        assert!(SparseVector::with_sparsity(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn sign_byte_round_trip() {
        assert_eq!(Sign::from_byte(Sign::Plus.to_byte()).unwrap(), Sign::Plus);
        assert_eq!(Sign::from_byte(Sign::Minus.to_byte()).unwrap(), Sign::Minus);
        assert!(Sign::from_byte(0x00).is_err());
    }
}
