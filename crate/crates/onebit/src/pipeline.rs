//! The adaptive quantization / recovery loop.
//!
//! Measurements are consumed in batches of `q` rows.  Batch `t` quantizes at
//! thresholds `tau_t + A_t x_{t-1}`, where `tau_t` comes from the order-one
//! scheme run at radius `R_t = R 2^{1-t}` on the residual's linear
//! measurements, and the decoder applies the matching update
//! `x_t = H_s(x_{t-1} + recover(y_t))`.  Each successful batch halves the
//! error bound, so the final error decays like `R 2^{-T}` — exponentially in
//! the oversampling factor.
//!
//! Encoder and decoder run the same deterministic update on the same inputs,
//! so their iterate sequences agree bit for bit.

use crate::error::{Error, Result};
use crate::ht::{ht_recover, ht_thresholds, HtEvents, HtSchemeConfig};
use crate::measure::{measure_affine, quantize, MeasurementEnsemble, NoiseSpec, QuantizedRecord};
use crate::rng::RngSeed;
use crate::socp::{socp_thresholds, solve_l1_cone, SocpPreset, SocpSchemeConfig};
use crate::solver::SolverConfig;
use crate::sparse::{hard_threshold, Sign, SparseVector};

/// Anything that can hand out contiguous row blocks of one measurement
/// ensemble: a fully materialized matrix, or a seed that generates blocks on
/// demand so large-`m` sweeps never hold all of `A`.
pub trait BlockSource {
    fn n(&self) -> usize;
    fn total_rows(&self) -> usize;
    fn block(&self, start: usize, count: usize) -> Result<MeasurementEnsemble>;
}

impl BlockSource for MeasurementEnsemble {
    fn n(&self) -> usize {
        MeasurementEnsemble::n(self)
    }

    fn total_rows(&self) -> usize {
        self.m()
    }

    fn block(&self, start: usize, count: usize) -> Result<MeasurementEnsemble> {
        MeasurementEnsemble::block(self, start, count)
    }
}

/// Generates each requested row block directly from the seed.
#[derive(Debug, Clone, Copy)]
pub struct LazyEnsemble {
    pub seed: RngSeed,
    pub m: usize,
    pub n: usize,
}

impl BlockSource for LazyEnsemble {
    fn n(&self) -> usize {
        self.n
    }

    fn total_rows(&self) -> usize {
        self.m
    }

    fn block(&self, start: usize, count: usize) -> Result<MeasurementEnsemble> {
        if start + count > self.m {
            return Err(Error::invalid(format!(
                "block rows [{start}, {}) out of range for m={}",
                start + count,
                self.m
            )));
        }
        MeasurementEnsemble::generate_rows(self.seed, self.n, start as u64, count)
    }
}

/// Declared corruption budget of a scheme: `||e||_inf <= eta ||x||_2` and at
/// most `flip_budget` sign flips per batch.  Metadata only — experiments may
/// exceed it on purpose to expose the noise floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseResilience {
    pub eta: f64,
    pub flip_budget: usize,
}

/// An order-one recovery scheme: produces one batch of thresholds and
/// recovers an estimate with error at most `radius / 4` from that batch,
/// with high probability under its declared noise budget.
pub trait OrderOneScheme {
    /// Measurements consumed per batch.
    fn measurement_complexity(&self) -> usize;

    /// Sparsity parameter the scheme is instantiated with.
    fn sparsity(&self) -> usize;

    fn noise_resilience(&self) -> NoiseResilience;

    /// Thresholds for batch `batch_index` (1-based).  `linear` carries the
    /// clean linear measurements of the current residual; non-adaptive
    /// schemes ignore it.
    fn produce_thresholds(
        &self,
        batch_index: usize,
        linear: &[f64],
        ens: &MeasurementEnsemble,
        radius: f64,
    ) -> Result<(Vec<f64>, HtEvents)>;

    /// Estimate of the measured vector from one batch of quantized signs.
    fn recover(
        &self,
        y: &[Sign],
        ens: &MeasurementEnsemble,
        radius: f64,
        tau: &[f64],
    ) -> Result<(Vec<f64>, HtEvents)>;
}

/// Hard-thresholding scheme adapter used inside the pipeline.
#[derive(Debug, Clone, Copy)]
pub struct HtScheme {
    pub q: usize,
    pub s: usize,
    pub t_sparsity: Option<usize>,
}

impl OrderOneScheme for HtScheme {
    fn measurement_complexity(&self) -> usize {
        self.q
    }

    fn sparsity(&self) -> usize {
        self.s
    }

    fn noise_resilience(&self) -> NoiseResilience {
        // Empirical declarations; the paper's absolute constants are not
        // pinned.
        NoiseResilience {
            eta: 0.05,
            flip_budget: (self.q as f64 * 0.01).ceil() as usize,
        }
    }

    fn produce_thresholds(
        &self,
        _batch_index: usize,
        linear: &[f64],
        ens: &MeasurementEnsemble,
        radius: f64,
    ) -> Result<(Vec<f64>, HtEvents)> {
        let cfg = HtSchemeConfig {
            q: self.q,
            s: self.s,
            r_bound: radius,
            t_sparsity: self.t_sparsity,
        };
        ht_thresholds(linear, ens, &cfg)
    }

    fn recover(
        &self,
        y: &[Sign],
        ens: &MeasurementEnsemble,
        radius: f64,
        _tau: &[f64],
    ) -> Result<(Vec<f64>, HtEvents)> {
        let cfg = HtSchemeConfig {
            q: self.q,
            s: self.s,
            r_bound: radius,
            t_sparsity: self.t_sparsity,
        };
        let (estimate, events) = ht_recover(y, ens, &cfg)?;
        Ok((estimate.into_values(), events))
    }
}

/// Convex-programming scheme adapter used inside the pipeline.
#[derive(Debug, Clone)]
pub struct SocpScheme {
    pub q: usize,
    pub s: usize,
    pub preset: SocpPreset,
    pub solver: SolverConfig,
    /// Base stream for the per-batch dithers.
    pub dither_seed: RngSeed,
}

impl SocpScheme {
    fn batch_config(&self, radius: f64) -> SocpSchemeConfig {
        let mut cfg = SocpSchemeConfig::new(self.q, radius, self.preset);
        cfg.solver = self.solver;
        cfg
    }
}

impl OrderOneScheme for SocpScheme {
    fn measurement_complexity(&self) -> usize {
        self.q
    }

    fn sparsity(&self) -> usize {
        self.s
    }

    fn noise_resilience(&self) -> NoiseResilience {
        // Sign flips empty the constraint set, hence a zero flip budget.
        NoiseResilience {
            eta: 0.05,
            flip_budget: 0,
        }
    }

    fn produce_thresholds(
        &self,
        batch_index: usize,
        _linear: &[f64],
        _ens: &MeasurementEnsemble,
        radius: f64,
    ) -> Result<(Vec<f64>, HtEvents)> {
        let cfg = self.batch_config(radius);
        let tau = socp_thresholds(&cfg, self.dither_seed.substream(batch_index as u64))?;
        Ok((tau, HtEvents::default()))
    }

    fn recover(
        &self,
        y: &[Sign],
        ens: &MeasurementEnsemble,
        radius: f64,
        tau: &[f64],
    ) -> Result<(Vec<f64>, HtEvents)> {
        let cfg = self.batch_config(radius);
        let sol = solve_l1_cone(ens, y, tau, cfg.ball_factor * radius, &cfg.solver)?;
        Ok((sol.z, HtEvents::default()))
    }
}

/// Which order-one scheme the pipeline runs, with its per-scheme knobs.
#[derive(Debug, Clone)]
pub enum SchemeSpec {
    Ht {
        t_sparsity: Option<usize>,
    },
    Socp {
        solver: SolverConfig,
        dither_seed: RngSeed,
    },
}

/// The variance/ball variant of the convex scheme.  `Practical` uses unit
/// factors; `Theoretical` doubles both, which reproduces the analyzed
/// `2^{2-t}` scaling on top of the common `R_t = R 2^{1-t}` schedule.  The
/// hard-thresholding scheme always follows the plain schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusPreset {
    #[default]
    Practical,
    Theoretical,
}

impl RadiusPreset {
    pub fn socp_preset(self) -> SocpPreset {
        match self {
            RadiusPreset::Practical => SocpPreset::Practical,
            RadiusPreset::Theoretical => SocpPreset::Theoretical,
        }
    }
}

/// Batch radius multiplier: `R_t = R * 2^{1-t}` for 1-based `t`.
pub fn radius_schedule(t: usize) -> f64 {
    2f64.powi(1 - t as i32)
}

/// Full pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Outer sparsity; the embedded scheme runs with `2 s`.
    pub s: usize,
    /// Initial norm bound on the signal.
    pub r_bound: f64,
    /// Measurements per batch.
    pub q: usize,
    /// Total measurements; `T = floor(m / q)` batches are consumed.
    pub m: usize,
    pub scheme: SchemeSpec,
    pub radius_preset: RadiusPreset,
}

impl PipelineConfig {
    pub fn batch_count(&self) -> usize {
        self.m / self.q
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.s == 0 || self.s > n {
            return Err(Error::invalid(format!(
                "pipeline needs 1 <= s <= n, got s={}, n={n}",
                self.s
            )));
        }
        if self.r_bound <= 0.0 {
            return Err(Error::invalid("pipeline needs R > 0"));
        }
        if self.q == 0 || self.m < self.q {
            return Err(Error::invalid(format!(
                "pipeline needs at least one batch: q={}, m={}",
                self.q, self.m
            )));
        }
        if matches!(self.scheme, SchemeSpec::Ht { .. }) && self.q % 2 != 0 {
            return Err(Error::invalid("ht scheme needs an even batch size"));
        }
        Ok(())
    }

    /// Instantiates the embedded scheme with sparsity parameter `2 s`.
    pub fn build_scheme(&self) -> SchemeInstance {
        match &self.scheme {
            SchemeSpec::Ht { t_sparsity } => SchemeInstance::Ht(HtScheme {
                q: self.q,
                s: 2 * self.s,
                t_sparsity: *t_sparsity,
            }),
            SchemeSpec::Socp {
                solver,
                dither_seed,
            } => SchemeInstance::Socp(SocpScheme {
                q: self.q,
                s: 2 * self.s,
                preset: self.radius_preset.socp_preset(),
                solver: *solver,
                dither_seed: *dither_seed,
            }),
        }
    }
}

/// Concrete scheme selected by a [`PipelineConfig`].
#[derive(Debug, Clone)]
pub enum SchemeInstance {
    Ht(HtScheme),
    Socp(SocpScheme),
}

impl OrderOneScheme for SchemeInstance {
    fn measurement_complexity(&self) -> usize {
        match self {
            SchemeInstance::Ht(s) => s.measurement_complexity(),
            SchemeInstance::Socp(s) => s.measurement_complexity(),
        }
    }

    fn sparsity(&self) -> usize {
        match self {
            SchemeInstance::Ht(s) => s.sparsity(),
            SchemeInstance::Socp(s) => s.sparsity(),
        }
    }

    fn noise_resilience(&self) -> NoiseResilience {
        match self {
            SchemeInstance::Ht(s) => s.noise_resilience(),
            SchemeInstance::Socp(s) => s.noise_resilience(),
        }
    }

    fn produce_thresholds(
        &self,
        batch_index: usize,
        linear: &[f64],
        ens: &MeasurementEnsemble,
        radius: f64,
    ) -> Result<(Vec<f64>, HtEvents)> {
        match self {
            SchemeInstance::Ht(s) => s.produce_thresholds(batch_index, linear, ens, radius),
            SchemeInstance::Socp(s) => s.produce_thresholds(batch_index, linear, ens, radius),
        }
    }

    fn recover(
        &self,
        y: &[Sign],
        ens: &MeasurementEnsemble,
        radius: f64,
        tau: &[f64],
    ) -> Result<(Vec<f64>, HtEvents)> {
        match self {
            SchemeInstance::Ht(s) => s.recover(y, ens, radius, tau),
            SchemeInstance::Socp(s) => s.recover(y, ens, radius, tau),
        }
    }
}

/// Encoder output with full iterate trace.
#[derive(Debug)]
pub struct EncodeRun {
    pub record: QuantizedRecord,
    /// `x_1 .. x_T'` where `T'` is the last completed batch.
    pub iterates: Vec<Vec<f64>>,
    pub events: Vec<HtEvents>,
    /// Set when a batch's recovery failed; holds the wrapped error.
    pub failure: Option<Error>,
}

/// Decoder output with full iterate trace.
#[derive(Debug)]
pub struct DecodeRun {
    pub estimate: SparseVector,
    pub iterates: Vec<Vec<f64>>,
    pub events: Vec<HtEvents>,
    pub failure: Option<Error>,
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Runs the quantizer, keeping iterates and per-batch events.
///
/// On a batch failure the run stops there: the record holds the batches
/// quantized so far (the rest stays at filler values) and `failure` carries
/// the error tagged with its 1-based batch index.
pub fn run_encoder<S: BlockSource>(
    x: &SparseVector,
    src: &S,
    noise: &NoiseSpec,
    cfg: &PipelineConfig,
) -> Result<EncodeRun> {
    let n = src.n();
    cfg.validate(n)?;
    if x.len() != n {
        return Err(Error::invalid(format!(
            "signal has dimension {}, ensemble has n={n}",
            x.len()
        )));
    }
    if x.norm2() > cfg.r_bound * (1.0 + 1e-9) {
        return Err(Error::invalid(format!(
            "||x||_2 = {} exceeds the bound R = {}",
            x.norm2(),
            cfg.r_bound
        )));
    }
    if x.nnz() > cfg.s {
        return Err(Error::invalid(format!(
            "signal has {} nonzeros, sparsity budget is {}",
            x.nnz(),
            cfg.s
        )));
    }
    if src.total_rows() < cfg.m {
        return Err(Error::invalid(format!(
            "ensemble provides {} rows, config wants m={}",
            src.total_rows(),
            cfg.m
        )));
    }
    if noise.len() != cfg.m {
        return Err(Error::invalid(format!(
            "noise length {} does not match m={}",
            noise.len(),
            cfg.m
        )));
    }

    let scheme = cfg.build_scheme();
    let t_count = cfg.batch_count();
    let mut y_all = vec![Sign::Plus; cfg.m];
    let mut tau_all = vec![0.0; cfg.m];
    let mut iterates = Vec::with_capacity(t_count);
    let mut events = Vec::with_capacity(t_count);
    let mut failure = None;
    let mut x_prev = vec![0.0; n];

    for t in 1..=t_count {
        let lo = (t - 1) * cfg.q;
        let block = src.block(lo, cfg.q)?;
        let radius = cfg.r_bound * radius_schedule(t);

        let residual = sub(x.values(), &x_prev);
        let (tau_t, ev_a) = match scheme.produce_thresholds(t, &block.mul(&residual)?, &block, radius) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e.in_batch(t));
                break;
            }
        };

        // sign(A x - sigma - tau + e) with sigma = A x_{t-1}.
        let sigma = block.mul(&x_prev)?;
        let shifted = measure_affine(&block, x, &sigma)?;
        let noise_t = NoiseSpec {
            e: noise.e[lo..lo + cfg.q].to_vec(),
            f: noise.f[lo..lo + cfg.q].to_vec(),
            flip_budget: noise.flip_budget,
            amplitude_bound: noise.amplitude_bound,
        };
        let y_t = quantize(&shifted, &tau_t, &noise_t)?;

        y_all[lo..lo + cfg.q].copy_from_slice(&y_t);
        tau_all[lo..lo + cfg.q].copy_from_slice(&tau_t);

        let (estimate, ev_b) = match scheme.recover(&y_t, &block, radius, &tau_t) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e.in_batch(t));
                break;
            }
        };
        let x_t = hard_threshold(&add(&x_prev, &estimate), cfg.s)?;
        x_prev = x_t.into_values();
        iterates.push(x_prev.clone());
        events.push(ev_a.merge(ev_b));
    }

    Ok(EncodeRun {
        record: QuantizedRecord::new(y_all, tau_all, cfg.q)?,
        iterates,
        events,
        failure,
    })
}

/// Runs the decoder, re-deriving the iterate sequence from the record.
pub fn run_decoder<S: BlockSource>(
    rec: &QuantizedRecord,
    src: &S,
    cfg: &PipelineConfig,
) -> Result<DecodeRun> {
    let n = src.n();
    cfg.validate(n)?;
    if rec.batch_size != cfg.q || rec.m() != cfg.m {
        return Err(Error::invalid(format!(
            "record layout (m={}, q={}) does not match config (m={}, q={})",
            rec.m(),
            rec.batch_size,
            cfg.m,
            cfg.q
        )));
    }
    if src.total_rows() < cfg.m {
        return Err(Error::invalid(format!(
            "ensemble provides {} rows, config wants m={}",
            src.total_rows(),
            cfg.m
        )));
    }

    let scheme = cfg.build_scheme();
    let t_count = cfg.batch_count();
    let mut iterates = Vec::with_capacity(t_count);
    let mut events = Vec::with_capacity(t_count);
    let mut failure = None;
    let mut x_prev = vec![0.0; n];

    for t in 1..=t_count {
        let lo = (t - 1) * cfg.q;
        let block = src.block(lo, cfg.q)?;
        let radius = cfg.r_bound * radius_schedule(t);
        let (y_t, tau_t) = rec.batch(t - 1);
        let (estimate, ev) = match scheme.recover(y_t, &block, radius, tau_t) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e.in_batch(t));
                break;
            }
        };
        let x_t = hard_threshold(&add(&x_prev, &estimate), cfg.s)?;
        x_prev = x_t.into_values();
        iterates.push(x_prev.clone());
        events.push(ev);
    }

    Ok(DecodeRun {
        estimate: SparseVector::with_sparsity(x_prev, cfg.s)?,
        iterates,
        events,
        failure,
    })
}

/// Adaptive quantization: the record of signs and thresholds.  The internal
/// shifts `sigma_t` are recomputed by the decoder and never serialized.
pub fn quantize_adaptive<S: BlockSource>(
    x: &SparseVector,
    src: &S,
    noise: &NoiseSpec,
    cfg: &PipelineConfig,
) -> Result<QuantizedRecord> {
    let run = run_encoder(x, src, noise, cfg)?;
    match run.failure {
        Some(e) => Err(e),
        None => Ok(run.record),
    }
}

/// Adaptive recovery: the final iterate `x_T`.
pub fn recover_adaptive<S: BlockSource>(
    rec: &QuantizedRecord,
    src: &S,
    cfg: &PipelineConfig,
) -> Result<SparseVector> {
    let run = run_decoder(rec, src, cfg)?;
    match run.failure {
        Some(e) => Err(e),
        None => Ok(run.estimate),
    }
}

/// `lambda = m / (s ln(n/s))`.
pub fn oversampling_factor(m: usize, s: usize, n: usize) -> Result<f64> {
    if s == 0 || n <= s {
        return Err(Error::invalid(format!(
            "oversampling factor needs n > s >= 1, got n={n}, s={s}"
        )));
    }
    Ok(m as f64 / (s as f64 * (n as f64 / s as f64).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{make_ensemble, random_sparse_signal};
    use crate::sparse::norm2;

    fn ht_config(s: usize, q: usize, m: usize) -> PipelineConfig {
        PipelineConfig {
            s,
            r_bound: 1.0,
            q,
            m,
            scheme: SchemeSpec::Ht { t_sparsity: None },
            radius_preset: RadiusPreset::Practical,
        }
    }

    #[test]
    fn batch_arithmetic() {
        let cfg = ht_config(5, 300, 1000);
        assert_eq!(cfg.batch_count(), 3);
        let lambda = oversampling_factor(2303, 10, 100).unwrap();
        assert!((lambda - 100.0).abs() < 0.1, "lambda {lambda}");
        assert!(oversampling_factor(100, 10, 10).is_err());
        // m = s ln(n/s) exactly gives lambda = 1.
        let m = (3.0 * (30.0_f64 / 3.0).ln()).round() as usize;
        let lambda = oversampling_factor(m, 3, 30).unwrap();
        assert!((lambda - 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_signal_contracts_to_zero() {
        let n = 24;
        let cfg = ht_config(3, 200, 800);
        let ens = make_ensemble(RngSeed::new(40, 0), cfg.m, n).unwrap();
        let x = SparseVector::with_sparsity(vec![0.0; n], 3).unwrap();
        let run = run_encoder(&x, &ens, &NoiseSpec::clean(cfg.m), &cfg).unwrap();
        assert!(run.failure.is_none());
        let t_count = cfg.batch_count();
        let last = run.iterates.last().unwrap();
        assert!(
            norm2(last) <= 2f64.powi(-(t_count as i32)),
            "||x_T|| = {}",
            norm2(last)
        );
    }

    #[test]
    fn encoder_and_decoder_iterates_agree_bitwise() {
        let n = 40;
        let cfg = ht_config(4, 400, 1600);
        let ens = make_ensemble(RngSeed::new(41, 0), cfg.m, n).unwrap();
        let x = random_sparse_signal(RngSeed::new(41, 1), n, 4, 0.9).unwrap();
        let enc = run_encoder(&x, &ens, &NoiseSpec::clean(cfg.m), &cfg).unwrap();
        let dec = run_decoder(&enc.record, &ens, &cfg).unwrap();
        assert!(enc.failure.is_none());
        assert!(dec.failure.is_none());
        assert_eq!(enc.iterates, dec.iterates);
    }

    #[test]
    fn lazy_source_matches_materialized() {
        let n = 30;
        let cfg = ht_config(3, 200, 600);
        let seed = RngSeed::new(42, 0);
        let ens = make_ensemble(seed, cfg.m, n).unwrap();
        let lazy = LazyEnsemble {
            seed,
            m: cfg.m,
            n,
        };
        let x = random_sparse_signal(RngSeed::new(42, 1), n, 3, 0.6).unwrap();
        let noise = NoiseSpec::clean(cfg.m);
        let a = run_encoder(&x, &ens, &noise, &cfg).unwrap();
        let b = run_encoder(&x, &lazy, &noise, &cfg).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.iterates, b.iterates);
    }

    #[test]
    fn record_round_trips_through_bytes() {
        let n = 20;
        let cfg = ht_config(2, 100, 350); // tail of 50 rows stays unused
        let ens = make_ensemble(RngSeed::new(43, 0), cfg.m, n).unwrap();
        let x = random_sparse_signal(RngSeed::new(43, 1), n, 2, 0.5).unwrap();
        let rec = quantize_adaptive(&x, &ens, &NoiseSpec::clean(cfg.m), &cfg).unwrap();
        assert_eq!(rec.batch_count(), 3);
        assert_eq!(rec.used_len(), 300);
        let back = QuantizedRecord::from_bytes(&rec.to_bytes()).unwrap();
        assert_eq!(back, rec);
        let xhat = recover_adaptive(&back, &ens, &cfg).unwrap();
        assert_eq!(xhat.len(), n);
    }

    #[test]
    fn config_mismatch_rejected() {
        let n = 20;
        let cfg = ht_config(2, 100, 400);
        let ens = make_ensemble(RngSeed::new(44, 0), cfg.m, n).unwrap();
        let x = random_sparse_signal(RngSeed::new(44, 1), n, 2, 0.5).unwrap();
        let rec = quantize_adaptive(&x, &ens, &NoiseSpec::clean(cfg.m), &cfg).unwrap();
        let mut other = ht_config(2, 200, 400);
        assert!(recover_adaptive(&rec, &ens, &other).is_err());
        other = ht_config(2, 100, 300);
        assert!(recover_adaptive(&rec, &ens, &other).is_err());
    }
}
