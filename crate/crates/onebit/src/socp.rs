//! Order-one recovery scheme based on random Gaussian dithers and l1
//! minimization over a cone of sign constraints.
//!
//! The thresholds are non-adaptive: plain `N(0, (variance_factor * R)^2)`
//! dithers, independent of the signal.  Recovery solves
//!
//! ```text
//! min ||z||_1   s.t.   ||z||_2 <= ball_factor * R,
//!                      y_i (<a_i, z> - tau_i) >= 0  for all i
//! ```
//!
//! The `(variance_factor, ball_factor)` presets are `(1, 1)` (practical,
//! default) and `(2, 2)` (theoretical, tolerating pre-quantization error at
//! the cost of a looser ball).

use crate::error::{Error, Result};
use crate::measure::MeasurementEnsemble;
use crate::rng::{gaussian_vector, RngSeed};
use crate::sparse::Sign;
use crate::solver::{solve_l1, MeasurementSet, Solution, SolverConfig};

/// Parameter preset for the dither variance and constraint ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocpPreset {
    /// `(variance_factor, ball_factor) = (1, 1)`; better in practice.
    Practical,
    /// `(variance_factor, ball_factor) = (2, 2)`; the analyzed setting.
    Theoretical,
}

/// Configuration of the convex-programming scheme.
#[derive(Debug, Clone)]
pub struct SocpSchemeConfig {
    /// Measurements consumed per batch.
    pub q: usize,
    /// Norm bound on the signal to recover.
    pub r_bound: f64,
    /// Dither standard deviation is `variance_factor * r_bound`.
    pub variance_factor: f64,
    /// The l2 constraint radius is `ball_factor * r_bound`.
    pub ball_factor: f64,
    pub solver: SolverConfig,
}

impl SocpSchemeConfig {
    pub fn new(q: usize, r_bound: f64, preset: SocpPreset) -> Self {
        let (variance_factor, ball_factor) = match preset {
            SocpPreset::Practical => (1.0, 1.0),
            SocpPreset::Theoretical => (2.0, 2.0),
        };
        Self {
            q,
            r_bound,
            variance_factor,
            ball_factor,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::invalid("socp scheme requires q >= 1"));
        }
        if self.r_bound <= 0.0 {
            return Err(Error::invalid("socp scheme requires R > 0"));
        }
        if self.variance_factor <= 0.0 || self.ball_factor <= 0.0 {
            return Err(Error::invalid("socp factors must be positive"));
        }
        self.solver.validate()
    }
}

/// Draws the batch dithers `tau ~ N(0, (variance_factor * R)^2 I_q)`.
///
/// Deterministic in the seed and independent of the signal.
pub fn socp_thresholds(cfg: &SocpSchemeConfig, seed: RngSeed) -> Result<Vec<f64>> {
    cfg.validate()?;
    let std = cfg.variance_factor * cfg.r_bound;
    Ok(gaussian_vector(seed, cfg.q)?
        .into_iter()
        .map(|g| std * g)
        .collect())
}

/// Solves the l1-over-cone program with an explicit ball radius.
///
/// On success the returned point satisfies, within the solver tolerances:
/// the ball constraint, every sign constraint, and near-optimality of the
/// l1 objective (certified by a dual bound).  Sign flips typically empty the
/// feasible set, which surfaces as `Error::Infeasible`.
pub fn solve_l1_cone(
    ens: &MeasurementEnsemble,
    y: &[Sign],
    tau: &[f64],
    radius: f64,
    solver: &SolverConfig,
) -> Result<Solution> {
    if ens.m() == 0 || y.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if y.len() != ens.m() || tau.len() != ens.m() {
        return Err(Error::invalid(format!(
            "cone dimensions mismatch: m={}, y={}, tau={}",
            ens.m(),
            y.len(),
            tau.len()
        )));
    }
    if radius <= 0.0 {
        return Err(Error::invalid("cone radius must be positive"));
    }
    solve_l1(ens, MeasurementSet::SignCone { y, tau }, Some(radius), solver)
}

/// Recovery procedure: `solve_l1_cone` at radius `ball_factor * R`.
pub fn socp_recover(
    y: &[Sign],
    ens: &MeasurementEnsemble,
    tau: &[f64],
    cfg: &SocpSchemeConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if y.len() != cfg.q {
        return Err(Error::invalid(format!(
            "batch carries {} signs, config says q={}",
            y.len(),
            cfg.q
        )));
    }
    let radius = cfg.ball_factor * cfg.r_bound;
    Ok(solve_l1_cone(ens, y, tau, radius, &cfg.solver)?.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{make_ensemble, quantize, NoiseSpec};
    use crate::sparse::norm2;

    #[test]
    fn threshold_variance_tracks_preset() {
        let mut cfg = SocpSchemeConfig::new(100_000, 1.0, SocpPreset::Practical);
        let tau = socp_thresholds(&cfg, RngSeed::new(4, 0)).unwrap();
        let var = tau.iter().map(|t| t * t).sum::<f64>() / tau.len() as f64;
        assert!((0.98..=1.02).contains(&var), "variance {var}");

        // (2 * 0.5)^2 = 1 again.
        cfg.r_bound = 0.5;
        cfg.variance_factor = 2.0;
        let tau = socp_thresholds(&cfg, RngSeed::new(4, 1)).unwrap();
        let var = tau.iter().map(|t| t * t).sum::<f64>() / tau.len() as f64;
        assert!((0.97..=1.03).contains(&var), "variance {var}");

        cfg.r_bound = 0.0;
        assert!(socp_thresholds(&cfg, RngSeed::new(4, 2)).is_err());
    }

    #[test]
    fn trivial_single_constraint_returns_zero() {
        let ens = MeasurementEnsemble::from_rows(vec![1.0], 1).unwrap();
        let sol = solve_l1_cone(
            &ens,
            &[Sign::Plus],
            &[0.0],
            1.0,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.z, vec![0.0]);
    }

    #[test]
    fn recovery_from_zero_signal_stays_small() {
        // y from x = 0: the origin is feasible and l1-minimal.
        let cfg = SocpSchemeConfig::new(120, 1.0, SocpPreset::Practical);
        let ens = make_ensemble(RngSeed::new(17, 0), cfg.q, 20).unwrap();
        let tau = socp_thresholds(&cfg, RngSeed::new(17, 1)).unwrap();
        let ax = vec![0.0; cfg.q];
        let y = quantize(&ax, &tau, &NoiseSpec::clean(cfg.q)).unwrap();
        let xhat = socp_recover(&y, &ens, &tau, &cfg).unwrap();
        assert!(norm2(&xhat) <= 0.1, "norm {}", norm2(&xhat));
    }

    #[test]
    fn empty_batch_rejected() {
        let cfg = SocpSchemeConfig::new(0, 1.0, SocpPreset::Practical);
        let ens = MeasurementEnsemble::from_rows(vec![1.0], 1).unwrap();
        assert!(socp_recover(&[], &ens, &[], &cfg).is_err());
    }
}
