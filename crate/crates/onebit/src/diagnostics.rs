//! Monte Carlo checks of the random-matrix properties the recovery
//! guarantees lean on: restricted isometry, sign product embedding, random
//! hyperplane tessellation, and the l1-quotient property.
//!
//! These are sampled estimates over random sparse vectors, not certified
//! suprema over the sparse set; every report labels itself accordingly.

use crate::error::{Error, Result};
use crate::measure::{random_sparse_signal, MeasurementEnsemble};
use crate::rng::{CounterRng, RngSeed};
use crate::solver::{solve_l1, MeasurementSet, SolverConfig};
use crate::sparse::{dot, norm1, norm2, sign, Sign};

/// Outcome of one property check.
///
/// `worst_ratio` is the largest observed value of the checked quantity
/// relative to its allowed bound, so any value above 1 marks a violation.
#[derive(Debug, Clone)]
pub struct PropertyReport {
    pub property: String,
    pub q: usize,
    pub n: usize,
    pub s: usize,
    pub delta: f64,
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub worst_ratio: f64,
}

impl PropertyReport {
    fn new(property: &str, q: usize, n: usize, s: usize, delta: f64, trials: usize) -> Self {
        Self {
            property: property.to_string(),
            q,
            n,
            s,
            delta,
            trials,
            violations: 0,
            violation_rate: 0.0,
            worst_ratio: 0.0,
        }
    }

    fn record(&mut self, ratio: f64) {
        if ratio > 1.0 {
            self.violations += 1;
        }
        if ratio > self.worst_ratio {
            self.worst_ratio = ratio;
        }
    }

    fn finish(mut self) -> Self {
        self.violation_rate = self.violations as f64 / self.trials as f64;
        self
    }
}

fn check_args(trials: usize, delta: f64) -> Result<()> {
    if trials == 0 {
        return Err(Error::invalid("property checks need trials >= 1"));
    }
    if delta <= 0.0 {
        return Err(Error::invalid("property checks need delta > 0"));
    }
    Ok(())
}

/// Restricted isometry: `(1 - delta) <= ||A x||^2 / q <= (1 + delta)` over
/// random unit s-sparse `x`.
pub fn check_rip(
    ens: &MeasurementEnsemble,
    s: usize,
    delta: f64,
    trials: usize,
    seed: RngSeed,
) -> Result<PropertyReport> {
    check_args(trials, delta)?;
    let q = ens.m();
    let mut report = PropertyReport::new("rip", q, ens.n(), s, delta, trials);
    for trial in 0..trials {
        let x = random_sparse_signal(seed.substream(trial as u64), ens.n(), s, 1.0)?;
        let ax = ens.mul(x.values())?;
        let ratio_raw = ax.iter().map(|v| v * v).sum::<f64>() / q as f64;
        // Distance to the two-sided band, expressed as a bound ratio.
        let ratio = (ratio_raw / (1.0 + delta)).max((1.0 - delta) / ratio_raw);
        report.record(ratio);
    }
    Ok(report.finish())
}

/// Sign product embedding: `|sqrt(pi/2)/q <A w, sign(A x)> - <w, x>| <= delta`
/// over random unit s-sparse pairs.  Trials alternate between independent
/// pairs and the identical pair `w = x` (the extreme point `<w, x> = 1`).
pub fn check_spep(
    ens: &MeasurementEnsemble,
    s: usize,
    delta: f64,
    trials: usize,
    seed: RngSeed,
) -> Result<PropertyReport> {
    check_args(trials, delta)?;
    let q = ens.m();
    let scale = (std::f64::consts::PI / 2.0).sqrt() / q as f64;
    let mut report = PropertyReport::new("spep", q, ens.n(), s, delta, trials);
    for trial in 0..trials {
        let stream = seed.substream(trial as u64);
        let x = random_sparse_signal(stream.substream(0), ens.n(), s, 1.0)?;
        let w = if trial % 2 == 0 {
            random_sparse_signal(stream.substream(1), ens.n(), s, 1.0)?
        } else {
            x.clone()
        };
        let ax_signs: Vec<f64> = ens
            .mul(x.values())?
            .into_iter()
            .map(|v| sign(v).map(Sign::value))
            .collect::<Result<_>>()?;
        let aw = ens.mul(w.values())?;
        let statistic = scale * dot(&aw, &ax_signs);
        let deviation = (statistic - dot(w.values(), x.values())).abs();
        report.record(deviation / delta);
    }
    Ok(report.finish())
}

/// Random hyperplane tessellation of the sparse ball: points of
/// `sqrt(s) B_1 cap B_2` falling in the same sign cell must lie within
/// `delta / 4` of each other.
///
/// Pairs alternate between independent draws (which share a cell only by
/// luck) and a point paired with a small same-support perturbation of
/// itself, so co-cell pairs actually occur at well-sampled scales.
pub fn check_tessellation(
    ens: &MeasurementEnsemble,
    tau: &[f64],
    s: usize,
    delta: f64,
    pair_trials: usize,
    seed: RngSeed,
) -> Result<PropertyReport> {
    check_args(pair_trials, delta)?;
    if tau.len() != ens.m() {
        return Err(Error::invalid(format!(
            "tessellation needs one threshold per row: m={}, tau={}",
            ens.m(),
            tau.len()
        )));
    }
    let mut report =
        PropertyReport::new("tessellation", ens.m(), ens.n(), s, delta, pair_trials);

    let pattern = |x: &[f64]| -> Result<Vec<Sign>> {
        let ax = ens.mul(x)?;
        ax.iter().zip(tau).map(|(&a, &t)| sign(a - t)).collect()
    };

    for trial in 0..pair_trials {
        let stream = seed.substream(trial as u64);
        let x = random_sparse_signal(stream.substream(0), ens.n(), s, 1.0)?;
        let x_prime = if trial % 2 == 0 {
            random_sparse_signal(stream.substream(1), ens.n(), s, 1.0)?
                .into_values()
        } else {
            // Same-support perturbation at a radius up to delta.
            let mut rng = CounterRng::new(stream.substream(1));
            let radius = delta * rng.next_uniform();
            let support = x.support();
            let mut bump = vec![0.0; support.len()];
            for b in bump.iter_mut() {
                *b = rng.next_gaussian();
            }
            let bump_norm = norm2(&bump).max(f64::MIN_POSITIVE);
            let mut xp = x.values().to_vec();
            for (idx, b) in support.iter().zip(&bump) {
                xp[*idx] += radius * b / bump_norm;
            }
            let norm = norm2(&xp);
            if norm > 1.0 {
                for v in xp.iter_mut() {
                    *v /= norm;
                }
            }
            xp
        };

        if pattern(x.values())? == pattern(&x_prime)? {
            let dist = x
                .values()
                .iter()
                .zip(&x_prime)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            report.record(dist / (delta / 4.0));
        }
    }
    Ok(report.finish())
}

/// Witness produced by the l1-quotient solve `e = A u`.
#[derive(Debug, Clone)]
pub struct QuotientWitness {
    pub u: Vec<f64>,
    pub l1_norm: f64,
    /// Achieved residual `||A u - e||_2 / ||e||_2`.
    pub residual: f64,
    pub within_budget: bool,
    /// `||u||_1 sqrt(q) / (sqrt(q / ln(n/q)) ||e||_2)`: the quotient
    /// constant this witness exhibits.
    pub quotient_ratio: f64,
}

/// Finds `u` with `A u = e` (to relative accuracy 1e-6) of near-minimal
/// l1 norm and reports it against the given budget.
pub fn quotient_witness(
    ens: &MeasurementEnsemble,
    e: &[f64],
    l1_budget: f64,
    solver: &SolverConfig,
) -> Result<QuotientWitness> {
    let (q, n) = (ens.m(), ens.n());
    if q >= n {
        return Err(Error::invalid(format!(
            "quotient witness needs an underdetermined system (q < n), got q={q}, n={n}"
        )));
    }
    if e.len() != q {
        return Err(Error::invalid(format!(
            "error vector length {} does not match q={q}",
            e.len()
        )));
    }
    let mut cfg = *solver;
    cfg.feasibility_tol = cfg.feasibility_tol.min(1e-6);
    let sol = solve_l1(ens, MeasurementSet::Point { target: e }, None, &cfg)?;
    let e_norm = norm2(e);
    if e_norm > 0.0 && sol.feasibility > 1e-6 {
        return Err(Error::Numerical(format!(
            "quotient solve stalled at relative residual {:.3e}",
            sol.feasibility
        )));
    }
    let l1 = norm1(&sol.z);
    let s_star = q as f64 / (n as f64 / q as f64).ln();
    let quotient_ratio = if e_norm > 0.0 {
        l1 * (q as f64).sqrt() / (s_star.sqrt() * e_norm)
    } else {
        0.0
    };
    Ok(QuotientWitness {
        within_budget: l1 <= l1_budget,
        l1_norm: l1,
        residual: sol.feasibility,
        quotient_ratio,
        u: sol.z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::make_ensemble;
    use crate::rng::gaussian_vector;

    #[test]
    fn rip_holds_oversampled_and_fails_dense() {
        let ens = make_ensemble(RngSeed::new(50, 0), 2000, 100).unwrap();
        let report = check_rip(&ens, 5, 0.5, 200, RngSeed::new(50, 1)).unwrap();
        assert_eq!(report.violations, 0, "worst {}", report.worst_ratio);

        let small = make_ensemble(RngSeed::new(50, 2), 10, 30).unwrap();
        let report = check_rip(&small, 30, 0.01, 200, RngSeed::new(50, 3)).unwrap();
        assert!(report.violation_rate > 0.0);
        assert!(check_rip(&small, 5, 0.5, 0, RngSeed::new(50, 4)).is_err());
    }

    #[test]
    fn spep_fails_with_too_few_rows() {
        let small = make_ensemble(RngSeed::new(51, 0), 10, 30).unwrap();
        let report = check_spep(&small, 3, 0.01, 100, RngSeed::new(51, 1)).unwrap();
        assert!(report.violation_rate > 0.9, "rate {}", report.violation_rate);
        assert!(check_spep(&small, 3, 0.0, 10, RngSeed::new(51, 2)).is_err());
    }

    #[test]
    fn tessellation_identical_points_never_violate() {
        let ens = make_ensemble(RngSeed::new(52, 0), 50, 20).unwrap();
        let tau = gaussian_vector(RngSeed::new(52, 1), 50).unwrap();
        // delta huge: distance can never exceed delta/4 for points of the
        // unit ball (diameter 2 < delta/4 = 2.5).
        let report =
            check_tessellation(&ens, &tau, 3, 10.0, 500, RngSeed::new(52, 2)).unwrap();
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn single_hyperplane_tessellation_violates() {
        let ens = make_ensemble(RngSeed::new(53, 0), 1, 20).unwrap();
        let tau = vec![0.0];
        let report =
            check_tessellation(&ens, &tau, 3, 1.0, 400, RngSeed::new(53, 1)).unwrap();
        assert!(report.violation_rate > 0.0);
    }

    #[test]
    fn quotient_witness_zero_and_column() {
        let ens = make_ensemble(RngSeed::new(54, 0), 10, 40).unwrap();
        let zero = vec![0.0; 10];
        let w = quotient_witness(&ens, &zero, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(w.u, vec![0.0; 40]);
        assert!(w.within_budget);

        let mut e1 = vec![0.0; 40];
        e1[0] = 1.0;
        let target = ens.mul(&e1).unwrap();
        let w = quotient_witness(&ens, &target, 1.0 + 1e-2, &SolverConfig::default()).unwrap();
        assert!(w.l1_norm <= 1.0 + 1e-2, "l1 {}", w.l1_norm);
        assert!(w.within_budget);

        let square = make_ensemble(RngSeed::new(54, 1), 10, 10).unwrap();
        assert!(quotient_witness(&square, &vec![0.0; 10], 1.0, &SolverConfig::default()).is_err());
    }
}
