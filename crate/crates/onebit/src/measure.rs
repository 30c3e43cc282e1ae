//! Gaussian measurement ensembles, the thresholded-sign quantizer, and the
//! serialized record the decoder receives.

use crate::error::{Error, Result};
use crate::rng::{gaussian_vector, CounterRng, RngSeed};
use crate::sparse::{norm2, sign, Sign, SparseVector};

/// Dense m x n matrix with i.i.d. standard normal entries, generated row by
/// row from per-row substreams of one seed.
///
/// Row `i` of an ensemble with row offset `o` is
/// `gaussian_vector(seed.substream(o + i), n)`, so any contiguous row block
/// can be regenerated independently and bit-identically.
#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    seed: RngSeed,
    row_offset: u64,
    m: usize,
    n: usize,
    rows: Vec<f64>, // row-major
}

impl MeasurementEnsemble {
    /// Builds the full m x n ensemble.
    pub fn generate(seed: RngSeed, m: usize, n: usize) -> Result<Self> {
        Self::generate_rows(seed, n, 0, m)
    }

    /// Wraps an explicit row-major matrix.  Used for exact-geometry tests
    /// and external fixtures; the recorded seed is the zero stream.
    pub fn from_rows(rows: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 || rows.is_empty() || rows.len() % n != 0 {
            return Err(Error::invalid(format!(
                "row data of length {} is not a positive multiple of n={n}",
                rows.len()
            )));
        }
        Ok(Self {
            seed: RngSeed::new(0, 0),
            row_offset: 0,
            m: rows.len() / n,
            n,
            rows,
        })
    }

    /// Builds only rows `[row_offset, row_offset + count)` of the ensemble
    /// identified by `seed`, without materializing the rest.
    pub fn generate_rows(seed: RngSeed, n: usize, row_offset: u64, count: usize) -> Result<Self> {
        if count == 0 || n == 0 {
            return Err(Error::invalid(format!(
                "ensemble dimensions must be positive, got m={count}, n={n}"
            )));
        }
        let mut rows = Vec::with_capacity(count * n);
        for i in 0..count {
            rows.extend_from_slice(&gaussian_vector(seed.substream(row_offset + i as u64), n)?);
        }
        Ok(Self {
            seed,
            row_offset,
            m: count,
            n,
            rows,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    pub fn row_offset(&self) -> u64 {
        self.row_offset
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n..(i + 1) * self.n]
    }

    /// Copies a contiguous row block out as a sub-ensemble; the block carries
    /// its absolute row offset so its rows stay identified with the parent's.
    pub fn block(&self, start: usize, count: usize) -> Result<MeasurementEnsemble> {
        if start + count > self.m || count == 0 {
            return Err(Error::invalid(format!(
                "block rows [{start}, {}) out of range for m={}",
                start + count,
                self.m
            )));
        }
        Ok(MeasurementEnsemble {
            seed: self.seed,
            row_offset: self.row_offset + start as u64,
            m: count,
            n: self.n,
            rows: self.rows[start * self.n..(start + count) * self.n].to_vec(),
        })
    }

    /// `A x`.
    pub fn mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::invalid(format!(
                "mul dimension mismatch: n={}, x has {}",
                self.n,
                x.len()
            )));
        }
        Ok((0..self.m)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `A^T y` for a real vector y of length m.
    pub fn transpose_mul(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.m {
            return Err(Error::invalid(format!(
                "transpose_mul dimension mismatch: m={}, y has {}",
                self.m,
                y.len()
            )));
        }
        let mut out = vec![0.0; self.n];
        for i in 0..self.m {
            let row = self.row(i);
            let yi = y[i];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        Ok(out)
    }

    /// `A^T y` for a sign vector.
    pub fn backproject(&self, y: &[Sign]) -> Result<Vec<f64>> {
        let as_reals: Vec<f64> = y.iter().map(|s| s.value()).collect();
        self.transpose_mul(&as_reals)
    }
}

/// `A x - shift`, computed with plain floating-point dot products.
pub fn measure_affine(
    ens: &MeasurementEnsemble,
    x: &SparseVector,
    shift: &[f64],
) -> Result<Vec<f64>> {
    if shift.len() != ens.m() {
        return Err(Error::invalid(format!(
            "shift length {} does not match m={}",
            shift.len(),
            ens.m()
        )));
    }
    let mut ax = ens.mul(x.values())?;
    for (v, s) in ax.iter_mut().zip(shift) {
        *v -= s;
    }
    Ok(ax)
}

/// `make_ensemble` in operation terms: the full matrix from one seed.
pub fn make_ensemble(seed: RngSeed, m: usize, n: usize) -> Result<MeasurementEnsemble> {
    MeasurementEnsemble::generate(seed, m, n)
}

/// Measurement corruption: additive pre-quantization error and
/// post-quantization sign flips.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub e: Vec<f64>,
    pub f: Vec<Sign>,
    pub flip_budget: usize,
    pub amplitude_bound: f64,
}

impl NoiseSpec {
    /// No corruption.
    pub fn clean(m: usize) -> Self {
        Self {
            e: vec![0.0; m],
            f: vec![Sign::Plus; m],
            flip_budget: 0,
            amplitude_bound: 0.0,
        }
    }

    /// Checked constructor: enforces the amplitude bound relative to the
    /// declared signal norm and the flip budget.
    pub fn bounded(
        e: Vec<f64>,
        f: Vec<Sign>,
        amplitude_bound: f64,
        declared_norm: f64,
        flip_budget: usize,
    ) -> Result<Self> {
        if e.len() != f.len() {
            return Err(Error::invalid("noise vectors must have equal length"));
        }
        let e_max = e.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if e_max > amplitude_bound * declared_norm {
            return Err(Error::invalid(format!(
                "||e||_inf = {e_max} exceeds bound {}",
                amplitude_bound * declared_norm
            )));
        }
        let flips = f.iter().filter(|s| **s == Sign::Minus).count();
        if flips > flip_budget {
            return Err(Error::invalid(format!(
                "{flips} sign flips exceed budget {flip_budget}"
            )));
        }
        Ok(Self {
            e,
            f,
            flip_budget,
            amplitude_bound,
        })
    }

    /// Experiment-style corruption: `e ~ N(0, sigma^2 I)` and
    /// `round(flip_frac * m)` flips placed uniformly without replacement.
    pub fn monte_carlo(
        seed: RngSeed,
        m: usize,
        sigma: f64,
        flip_frac: f64,
        declared_norm: f64,
    ) -> Result<Self> {
        if sigma < 0.0 || flip_frac < 0.0 || flip_frac > 1.0 {
            return Err(Error::invalid(
                "sigma must be >= 0 and flip_frac in [0, 1]",
            ));
        }
        let e = if sigma == 0.0 {
            vec![0.0; m]
        } else {
            gaussian_vector(seed.substream(0), m)?
                .into_iter()
                .map(|g| sigma * g)
                .collect()
        };
        let flips = (flip_frac * m as f64).round() as usize;
        let mut f = vec![Sign::Plus; m];
        if flips > 0 {
            let mut rng = CounterRng::new(seed.substream(1));
            for i in rng.distinct_indices(m, flips) {
                f[i] = Sign::Minus;
            }
        }
        let e_max = e.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let amplitude_bound = if declared_norm > 0.0 {
            e_max / declared_norm
        } else {
            e_max
        };
        Ok(Self {
            e,
            f,
            flip_budget: flips,
            amplitude_bound,
        })
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn flip_count(&self) -> usize {
        self.f.iter().filter(|s| **s == Sign::Minus).count()
    }
}

/// Applies the corrupted thresholded-sign quantizer entrywise:
/// `y_i = f_i * sign(ax_i - tau_i + e_i)` with `sign(0) = +1`.
pub fn quantize(ax: &[f64], tau: &[f64], noise: &NoiseSpec) -> Result<Vec<Sign>> {
    if ax.len() != tau.len() || ax.len() != noise.len() {
        return Err(Error::invalid(format!(
            "quantize length mismatch: ax={}, tau={}, noise={}",
            ax.len(),
            tau.len(),
            noise.len()
        )));
    }
    ax.iter()
        .zip(tau)
        .zip(noise.e.iter().zip(&noise.f))
        .map(|((&a, &t), (&e, &f))| {
            let s = sign(a - t + e)?;
            Ok(if f == Sign::Minus { s.flip() } else { s })
        })
        .collect()
}

/// Everything the decoder receives: sign bits, thresholds, and the batch
/// layout.  Entries at index `>= used_len()` belong to the discarded tail
/// when `q` does not divide `m`; they are stored as `+1` / `0.0` fillers.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedRecord {
    pub y: Vec<Sign>,
    pub tau: Vec<f64>,
    pub batch_size: usize,
}

impl QuantizedRecord {
    pub fn new(y: Vec<Sign>, tau: Vec<f64>, batch_size: usize) -> Result<Self> {
        if y.len() != tau.len() {
            return Err(Error::invalid("record sign/threshold length mismatch"));
        }
        if batch_size == 0 || batch_size > y.len() {
            return Err(Error::invalid(format!(
                "batch size {batch_size} out of range for m={}",
                y.len()
            )));
        }
        Ok(Self { y, tau, batch_size })
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    /// Number of complete batches, `T = floor(m / q)`.
    pub fn batch_count(&self) -> usize {
        self.m() / self.batch_size
    }

    /// Measurements actually consumed by the decoder (`T * q`).
    pub fn used_len(&self) -> usize {
        self.batch_count() * self.batch_size
    }

    pub fn is_used(&self, i: usize) -> bool {
        i < self.used_len()
    }

    /// Signs and thresholds of batch `t` (0-based).
    pub fn batch(&self, t: usize) -> (&[Sign], &[f64]) {
        let lo = t * self.batch_size;
        let hi = lo + self.batch_size;
        (&self.y[lo..hi], &self.tau[lo..hi])
    }

    /// Little-endian binary layout:
    /// `[m: u64][q: u64][y: m bytes of +-1 as 0x01/0xFF][tau: m f64]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.m();
        let mut out = Vec::with_capacity(16 + m + 8 * m);
        out.extend_from_slice(&(m as u64).to_le_bytes());
        out.extend_from_slice(&(self.batch_size as u64).to_le_bytes());
        out.extend(self.y.iter().map(|s| s.to_byte()));
        for t in &self.tau {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format("record shorter than its header".into()));
        }
        let m = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let q = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let expect = 16 + m + 8 * m;
        if bytes.len() != expect {
            return Err(Error::Format(format!(
                "record length {} does not match header (expected {expect})",
                bytes.len()
            )));
        }
        let y = bytes[16..16 + m]
            .iter()
            .map(|&b| Sign::from_byte(b))
            .collect::<Result<Vec<_>>>()?;
        let tau = bytes[16 + m..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        QuantizedRecord::new(y, tau, q)
    }
}

/// Draws an s-sparse signal with standard normal nonzeros on a uniformly
/// random support, then rescales so its norm equals `target_norm`.
pub fn random_sparse_signal(
    seed: RngSeed,
    n: usize,
    s: usize,
    target_norm: f64,
) -> Result<SparseVector> {
    if s == 0 || s > n {
        return Err(Error::invalid(format!("need 1 <= s <= n, got s={s}, n={n}")));
    }
    let mut rng = CounterRng::new(seed.substream(0));
    let support = rng.distinct_indices(n, s);
    let values = gaussian_vector(seed.substream(1), s)?;
    let mut x = vec![0.0; n];
    for (idx, v) in support.iter().zip(&values) {
        x[*idx] = *v;
    }
    let norm = norm2(&x);
    if norm == 0.0 {
        // Probability zero, but keep the contract total.
        x[support[0]] = target_norm;
    } else {
        let scale = target_norm / norm;
        for v in &mut x {
            *v *= scale;
        }
    }
    SparseVector::with_sparsity(x, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensembles_are_deterministic() {
        let seed = RngSeed::new(5, 0);
        let a = make_ensemble(seed, 2, 3).unwrap();
        let b = make_ensemble(seed, 2, 3).unwrap();
        assert_eq!(a.rows, b.rows);
        assert!(make_ensemble(seed, 0, 3).is_err());
    }

    #[test]
    fn column_variances_at_scale() {
        let ens = make_ensemble(RngSeed::new(11, 2), 10_000, 10).unwrap();
        for j in 0..10 {
            let col: Vec<f64> = (0..ens.m()).map(|i| ens.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / col.len() as f64;
            assert!(
                (0.95..=1.05).contains(&var),
                "column {j} variance {var} out of window"
            );
        }
    }

    #[test]
    fn blocks_match_full_matrix() {
        let ens = make_ensemble(RngSeed::new(8, 1), 10, 4).unwrap();
        let block = ens.block(3, 4).unwrap();
        for i in 0..4 {
            assert_eq!(block.row(i), ens.row(3 + i));
        }
        // A block regenerated from scratch has identical bits.
        let fresh = MeasurementEnsemble::generate_rows(ens.seed(), 4, 3, 4).unwrap();
        assert_eq!(fresh.rows, block.rows);
    }

    #[test]
    fn quantize_examples() {
        let noise = NoiseSpec {
            e: vec![-0.8],
            f: vec![Sign::Minus],
            flip_budget: 1,
            amplitude_bound: 1.0,
        };
        assert_eq!(quantize(&[1.0], &[0.5], &noise).unwrap(), vec![Sign::Plus]);

        let clean = NoiseSpec::clean(1);
        assert_eq!(quantize(&[0.0], &[0.0], &clean).unwrap(), vec![Sign::Plus]);

        let clean2 = NoiseSpec::clean(2);
        assert_eq!(
            quantize(&[2.0, -3.0], &[0.0, 0.0], &clean2).unwrap(),
            vec![Sign::Plus, Sign::Minus]
        );

        assert!(quantize(&[1.0], &[0.0, 0.0], &clean2).is_err());
    }

    #[test]
    fn measure_affine_examples() {
        // Identity-like 2x2 rows via a hand-built ensemble.
        let ens = MeasurementEnsemble::from_rows(vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        let x = SparseVector::dense(vec![3.0, 4.0]);
        let out = measure_affine(&ens, &x, &[1.0, 1.0]).unwrap();
        assert_eq!(out, vec![2.0, 3.0]);

        let ax = ens.mul(x.values()).unwrap();
        let zero = measure_affine(&ens, &x, &ax).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);

        let z = SparseVector::zeros(2);
        assert_eq!(measure_affine(&ens, &z, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn record_round_trip_and_layout() {
        let rec = QuantizedRecord::new(
            vec![Sign::Plus, Sign::Minus, Sign::Plus, Sign::Plus, Sign::Minus],
            vec![0.5, -1.25, 0.0, 3.5, -0.125],
            2,
        )
        .unwrap();
        assert_eq!(rec.batch_count(), 2);
        assert_eq!(rec.used_len(), 4);
        assert!(rec.is_used(3));
        assert!(!rec.is_used(4));

        let bytes = rec.to_bytes();
        assert_eq!(&bytes[0..8], &5u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(bytes[16], 0x01);
        assert_eq!(bytes[17], 0xFF);
        let back = QuantizedRecord::from_bytes(&bytes).unwrap();
        assert_eq!(back, rec);

        let mut corrupt = bytes.clone();
        corrupt[16] = 0x07;
        assert!(QuantizedRecord::from_bytes(&corrupt).is_err());
        assert!(QuantizedRecord::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn noise_spec_budgets() {
        let ok = NoiseSpec::bounded(
            vec![0.05, -0.02],
            vec![Sign::Plus, Sign::Minus],
            0.1,
            1.0,
            1,
        );
        assert!(ok.is_ok());
        let too_big = NoiseSpec::bounded(vec![0.5], vec![Sign::Plus], 0.1, 1.0, 0);
        assert!(too_big.is_err());
        let too_many = NoiseSpec::bounded(
            vec![0.0, 0.0],
            vec![Sign::Minus, Sign::Minus],
            0.1,
            1.0,
            1,
        );
        assert!(too_many.is_err());

        let mc = NoiseSpec::monte_carlo(RngSeed::new(3, 3), 100, 0.1, 0.05, 1.0).unwrap();
        assert_eq!(mc.flip_count(), 5);
        assert_eq!(mc.flip_budget, 5);
    }

    #[test]
    fn random_signals_hit_target_norm() {
        let x = random_sparse_signal(RngSeed::new(2, 9), 50, 5, 0.75).unwrap();
        assert_eq!(x.nnz(), 5);
        assert!((x.norm2() - 0.75).abs() < 1e-12);
    }
}
