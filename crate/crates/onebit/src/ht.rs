//! Order-one recovery scheme based on hard thresholding.
//!
//! The batch is split in half.  The first half carries zero thresholds and
//! its signs give a direction estimate `u`.  The second half is dithered by
//! `A_2 w` for `w = 2R (u + v)` with `v` a unit vector orthogonal to `u` on
//! the same support; its signs estimate the direction of `w - x`, whose
//! angle against `v` encodes the magnitude of `x` through
//! `f(xi) = 1 - sqrt(1 - xi^2) / xi`.  Unlike the convex scheme this one
//! tolerates post-quantization sign flips, at the price of adaptive dithers.

use crate::error::{Error, Result};
use crate::measure::MeasurementEnsemble;
use crate::sparse::{
    dot, hard_threshold_normalized, magnitude_map, orthogonal_same_support, sign, Sign,
    SparseVector,
};

/// Clamp window for the measured cosine before applying the magnitude map;
/// the interval on which `|f'|` stays bounded.
pub const COSINE_CLAMP_LO: f64 = std::f64::consts::FRAC_1_SQRT_2 - 0.05;
pub const COSINE_CLAMP_HI: f64 = 0.8944271909999159 + 0.05; // 2/sqrt(5) + 1/20

/// Degenerate-input and clamping events observed during one scheme call.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct HtEvents {
    /// Zero back-projections replaced by the first canonical basis vector.
    pub degenerate_direction: u32,
    /// Measured cosines pulled back into the clamp window.
    pub clamped_cosine: u32,
}

impl HtEvents {
    pub fn merge(self, other: HtEvents) -> HtEvents {
        HtEvents {
            degenerate_direction: self.degenerate_direction + other.degenerate_direction,
            clamped_cosine: self.clamped_cosine + other.clamped_cosine,
        }
    }

    pub fn any(&self) -> bool {
        self.degenerate_direction > 0 || self.clamped_cosine > 0
    }
}

/// Configuration of the hard-thresholding scheme.
#[derive(Debug, Clone, Copy)]
pub struct HtSchemeConfig {
    /// Measurements per batch; must be even (the batch is halved).
    pub q: usize,
    /// Sparsity parameter of the direction estimates.
    pub s: usize,
    /// Norm bound on the signal to recover.
    pub r_bound: f64,
    /// Optional override for the sparsity of the second-half estimate `t`.
    /// Defaults to `s`, matching the recovery procedure as written, even
    /// though the measured difference vector is `2s`-sparse.
    pub t_sparsity: Option<usize>,
}

impl HtSchemeConfig {
    pub fn new(q: usize, s: usize, r_bound: f64) -> Self {
        Self {
            q,
            s,
            r_bound,
            t_sparsity: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 || self.q % 2 != 0 {
            return Err(Error::invalid(format!(
                "ht scheme requires even q >= 2, got {}",
                self.q
            )));
        }
        if self.s == 0 {
            return Err(Error::invalid("ht scheme requires s >= 1"));
        }
        if self.r_bound <= 0.0 {
            return Err(Error::invalid("ht scheme requires R > 0"));
        }
        Ok(())
    }

    fn half(&self) -> usize {
        self.q / 2
    }
}

/// `H'_s(A^T y)`: the normalized best s-term approximation of the
/// back-projection.  A zero back-projection (possible only on degenerate
/// inputs) falls back to the first canonical basis vector and is flagged.
pub fn direction_estimate(
    ens_half: &MeasurementEnsemble,
    y_half: &[Sign],
    s: usize,
) -> Result<(SparseVector, HtEvents)> {
    if y_half.len() != ens_half.m() {
        return Err(Error::invalid(format!(
            "direction_estimate got {} signs for {} rows",
            y_half.len(),
            ens_half.m()
        )));
    }
    let back = ens_half.backproject(y_half)?;
    match hard_threshold_normalized(&back, s.min(ens_half.n())) {
        Ok(u) => Ok((u, HtEvents::default())),
        Err(Error::DegenerateInput(_)) => {
            let mut e1 = vec![0.0; ens_half.n()];
            e1[0] = 1.0;
            let u = SparseVector::with_sparsity(e1, s.min(ens_half.n()))?;
            Ok((
                u,
                HtEvents {
                    degenerate_direction: 1,
                    clamped_cosine: 0,
                },
            ))
        }
        Err(e) => Err(e),
    }
}

/// Threshold production: zeros for the first half-batch, `A_2 w` for the
/// second, where `w = 2R (u + v)` is built from the first half's signs of
/// the clean linear measurements `ax`.
pub fn ht_thresholds(
    ax: &[f64],
    ens: &MeasurementEnsemble,
    cfg: &HtSchemeConfig,
) -> Result<(Vec<f64>, HtEvents)> {
    cfg.validate()?;
    if ax.len() != cfg.q || ens.m() != cfg.q {
        return Err(Error::invalid(format!(
            "ht_thresholds expects q={} measurements, got ax={}, rows={}",
            cfg.q,
            ax.len(),
            ens.m()
        )));
    }
    let half = cfg.half();
    let first_signs: Vec<Sign> = ax[..half]
        .iter()
        .map(|&v| sign(v))
        .collect::<Result<_>>()?;
    let a1 = ens.block(0, half)?;
    let (u, events) = direction_estimate(&a1, &first_signs, cfg.s)?;
    let v = orthogonal_same_support(&u)?;
    let w: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| 2.0 * cfg.r_bound * (a + b))
        .collect();
    let a2 = ens.block(half, half)?;
    let second = a2.mul(&w)?;
    let mut tau = vec![0.0; half];
    tau.extend(second);
    Ok((tau, events))
}

/// Recovery: direction from the first half, magnitude from the angle the
/// second half's direction makes with `v`.
pub fn ht_recover(
    y: &[Sign],
    ens: &MeasurementEnsemble,
    cfg: &HtSchemeConfig,
) -> Result<(SparseVector, HtEvents)> {
    cfg.validate()?;
    if y.len() != cfg.q || ens.m() != cfg.q {
        return Err(Error::invalid(format!(
            "ht_recover expects q={} measurements, got y={}, rows={}",
            cfg.q,
            y.len(),
            ens.m()
        )));
    }
    let half = cfg.half();
    let a1 = ens.block(0, half)?;
    let a2 = ens.block(half, half)?;

    let (u, ev1) = direction_estimate(&a1, &y[..half], cfg.s)?;
    let v = orthogonal_same_support(&u)?;
    let (t_dir, ev2) = direction_estimate(&a2, &y[half..], cfg.t_sparsity.unwrap_or(cfg.s))?;
    let t: Vec<f64> = t_dir.values().iter().map(|x| -x).collect();

    let cosine = dot(&t, v.values());
    let mut events = ev1.merge(ev2);
    let clamped = cosine.clamp(COSINE_CLAMP_LO, COSINE_CLAMP_HI);
    if clamped != cosine {
        events.clamped_cosine += 1;
    }
    let magnitude = 2.0 * cfg.r_bound * magnitude_map(clamped)?;
    let estimate: Vec<f64> = u.values().iter().map(|x| magnitude * x).collect();
    let estimate = SparseVector::with_sparsity(estimate, cfg.s)?;
    Ok((estimate, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{make_ensemble, quantize, random_sparse_signal, NoiseSpec};
    use crate::rng::RngSeed;
    use crate::sparse::norm2;

    #[test]
    fn direction_estimate_tie_rule() {
        // Backprojection [1, 1]: the tie keeps index 0.
        let ens = MeasurementEnsemble::from_rows(vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        let (u, events) = direction_estimate(&ens, &[Sign::Plus, Sign::Plus], 1).unwrap();
        assert_eq!(u.values(), &[1.0, 0.0]);
        assert!(!events.any());
    }

    #[test]
    fn thresholds_layout_and_w_norm() {
        let cfg = HtSchemeConfig::new(40, 3, 1.0);
        let ens = make_ensemble(RngSeed::new(31, 0), cfg.q, 16).unwrap();
        let x = random_sparse_signal(RngSeed::new(31, 1), 16, 3, 0.8).unwrap();
        let ax = ens.mul(x.values()).unwrap();
        let (tau, _) = ht_thresholds(&ax, &ens, &cfg).unwrap();
        assert_eq!(tau.len(), cfg.q);
        // First half is always zero.
        assert!(tau[..20].iter().all(|&t| t == 0.0));
        assert!(tau.iter().all(|t| t.is_finite()));

        // ||w|| = 2 sqrt(2) R for any nondegenerate u: reconstruct w from
        // the second-half thresholds by solving nothing -- instead check
        // through the definition.
        let half = ens.block(0, 20).unwrap();
        let signs: Vec<Sign> = ax[..20].iter().map(|&v| sign(v).unwrap()).collect();
        let (u, _) = direction_estimate(&half, &signs, cfg.s).unwrap();
        let v = orthogonal_same_support(&u).unwrap();
        let w: Vec<f64> = u
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| 2.0 * cfg.r_bound * (a + b))
            .collect();
        assert!((norm2(&w) - 2.0 * 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn thresholds_of_zero_signal_are_finite() {
        let cfg = HtSchemeConfig::new(20, 2, 1.0);
        let ens = make_ensemble(RngSeed::new(32, 0), cfg.q, 8).unwrap();
        let ax = vec![0.0; cfg.q];
        let (tau, _) = ht_thresholds(&ax, &ens, &cfg).unwrap();
        assert!(tau.iter().all(|t| t.is_finite()));
    }

    #[test]
    fn odd_q_rejected() {
        let cfg = HtSchemeConfig::new(21, 2, 1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn exact_geometry_recovers_magnitude() {
        // With an exact cosine, 2R f(cos theta) returns the projected norm:
        // for x_sharp = alpha u and w = 2R(u + v),
        // cos theta = 2R / ||w - x_sharp|| and 2R f(cos theta) = alpha.
        let r = 1.0;
        let alpha = 0.7;
        let u = [1.0, 0.0];
        let v = [0.0, -1.0]; // unit, orthogonal to u
        let w = [2.0 * r * (u[0] + v[0]), 2.0 * r * (u[1] + v[1])];
        let diff = [w[0] - alpha * u[0], w[1] - alpha * u[1]];
        let norm = norm2(&diff);
        let t = [diff[0] / norm, diff[1] / norm];
        let cosine = dot(&t, &v);
        let recovered = 2.0 * r * magnitude_map(cosine).unwrap();
        assert!((recovered - alpha).abs() < 1e-12);
    }

    #[test]
    fn scheme_round_trip_on_easy_instance() {
        // Generous q so a single batch recovers x to within R/4.
        let n = 30;
        let s = 3;
        let cfg = HtSchemeConfig::new(2000, s, 1.0);
        let ens = make_ensemble(RngSeed::new(33, 0), cfg.q, n).unwrap();
        let x = random_sparse_signal(RngSeed::new(33, 1), n, s, 0.7).unwrap();
        let ax = ens.mul(x.values()).unwrap();
        let (tau, _) = ht_thresholds(&ax, &ens, &cfg).unwrap();
        let y = quantize(&ax, &tau, &NoiseSpec::clean(cfg.q)).unwrap();
        let (xhat, _) = ht_recover(&y, &ens, &cfg).unwrap();
        let err: f64 = x
            .values()
            .iter()
            .zip(xhat.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 0.25, "error {err}");
    }
}
