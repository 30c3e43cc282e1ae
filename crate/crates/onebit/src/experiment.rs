//! Seeded Monte Carlo experiment sweeps with CSV and binary fixture output.
//!
//! Every run is a pure function of its [`ExperimentSpec`]: per-trial seeds
//! derive from the base seed as documented on [`trial_stream`], trials
//! execute independently (in parallel when the `parallel` feature is on),
//! and rows are emitted in canonical trial order, so serial and parallel
//! runs produce byte-identical CSV.  Wall-clock timing is deliberately kept
//! out of the CSV to preserve that property; the `elapsed_ms` column is
//! reserved and always zero.

use std::path::{Path, PathBuf};

use crate::diagnostics::{
    check_rip, check_spep, check_tessellation, quotient_witness, PropertyReport,
};
use crate::error::{Error, Result};
use crate::measure::{make_ensemble, measure_affine, quantize, random_sparse_signal, NoiseSpec};
use crate::pipeline::{
    oversampling_factor, run_decoder, run_encoder, HtScheme, LazyEnsemble, OrderOneScheme,
    PipelineConfig, RadiusPreset, SchemeInstance, SchemeSpec, SocpScheme,
};
use crate::rng::{gaussian_vector, CounterRng, RngSeed};
use crate::solver::SolverConfig;
use crate::sparse::norm2;

/// Which order-one scheme an experiment exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Ht,
    Socp,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Ht => "ht",
            SchemeKind::Socp => "socp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ht" => Ok(SchemeKind::Ht),
            "socp" => Ok(SchemeKind::Socp),
            other => Err(Error::invalid(format!(
                "unknown scheme '{other}', expected 'ht' or 'socp'"
            ))),
        }
    }
}

/// Experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    DecaySweep,
    NoiseCurve,
    SchemeUnit,
    Diagnostics,
}

/// Full description of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub n: usize,
    pub s: usize,
    pub r_bound: f64,
    /// Measurement grid for decay sweeps.
    pub m_grid: Vec<usize>,
    /// Batch count for noise curves and fixtures.
    pub t_batches: usize,
    /// Measurements per batch.
    pub q: usize,
    pub scheme: SchemeKind,
    pub sigma: f64,
    pub flip_frac: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub radius_preset: RadiusPreset,
    /// Distortion level for diagnostics checks.
    pub delta: f64,
    pub solver: SolverConfig,
}

impl ExperimentSpec {
    /// Sensible defaults; callers override what each experiment needs.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            n: 100,
            s: 10,
            r_bound: 1.0,
            m_grid: Vec::new(),
            t_batches: 5,
            q: 0,
            scheme: SchemeKind::Ht,
            sigma: 0.0,
            flip_frac: 0.0,
            trials: 50,
            base_seed: 1,
            radius_preset: RadiusPreset::Practical,
            delta: 0.5,
            solver: SolverConfig::default(),
        }
    }

    /// Fills `q` from the per-scheme calibration when left at zero.
    pub fn effective_q(&self) -> usize {
        if self.q > 0 {
            self.q
        } else {
            default_batch_size(self.scheme, self.n, self.s)
        }
    }

    fn validate_common(&self) -> Result<()> {
        if self.n == 0 || self.s == 0 || self.s >= self.n {
            return Err(Error::invalid(format!(
                "experiment needs 1 <= s < n, got s={}, n={}",
                self.s, self.n
            )));
        }
        if self.r_bound <= 0.0 {
            return Err(Error::invalid("experiment needs R > 0"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("experiment needs trials >= 1"));
        }
        if self.sigma < 0.0 || self.flip_frac < 0.0 || self.flip_frac > 1.0 {
            return Err(Error::invalid("sigma >= 0 and flip_frac in [0, 1] required"));
        }
        Ok(())
    }

    fn scheme_spec(&self, trial: RngSeed) -> SchemeSpec {
        match self.scheme {
            SchemeKind::Ht => SchemeSpec::Ht { t_sparsity: None },
            SchemeKind::Socp => SchemeSpec::Socp {
                solver: self.solver,
                dither_seed: trial.substream(2),
            },
        }
    }
}

/// Calibration constants for the default batch size
/// `q = ceil(kappa * s * ln(n/s))`, rounded up to even for the
/// hard-thresholding scheme.  Determined empirically at desk scale.
pub const KAPPA_HT: f64 = 5.0;
pub const KAPPA_SOCP: f64 = 12.0;

pub fn default_batch_size(scheme: SchemeKind, n: usize, s: usize) -> usize {
    let kappa = match scheme {
        SchemeKind::Ht => KAPPA_HT,
        SchemeKind::Socp => KAPPA_SOCP,
    };
    let q = (kappa * s as f64 * (n as f64 / s as f64).ln()).ceil() as usize;
    let q = q.max(2);
    if scheme == SchemeKind::Ht {
        q + q % 2
    } else {
        q
    }
}

/// Per-trial stream derivation: `base = (base_seed, 0)`, one substream per
/// grid point, one sub-substream per trial.  Within a trial: substream 0 is
/// the ensemble, 1 the signal, 2 the dithers, 3 the noise, 4 auxiliary
/// draws.
pub fn trial_stream(base_seed: u64, config_index: u64, trial: u64) -> RngSeed {
    RngSeed::new(base_seed, 0)
        .substream(config_index)
        .substream(trial)
}

fn par_map<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// 17-significant-digit decimal form used in every CSV cell holding a real.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Least-squares line fit returning `(slope, intercept, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Outcome of a single pipeline trial.
#[derive(Debug, Clone)]
struct PipelineTrial {
    rel_error: f64,
    /// Relative error after each batch; frozen at the last completed iterate
    /// once a batch fails.
    per_batch: Vec<f64>,
    failed_batch: Option<usize>,
}

fn pipeline_trial(spec: &ExperimentSpec, m: usize, stream: RngSeed) -> Result<PipelineTrial> {
    let q = spec.effective_q();
    let x = random_sparse_signal(stream.substream(1), spec.n, spec.s, spec.r_bound)?;
    let noise = NoiseSpec::monte_carlo(
        stream.substream(3),
        m,
        spec.sigma,
        spec.flip_frac,
        spec.r_bound,
    )?;
    let cfg = PipelineConfig {
        s: spec.s,
        r_bound: spec.r_bound,
        q,
        m,
        scheme: spec.scheme_spec(stream),
        radius_preset: spec.radius_preset,
    };
    let src = LazyEnsemble {
        seed: stream.substream(0),
        m,
        n: spec.n,
    };
    let run = run_encoder(&x, &src, &noise, &cfg)?;
    let failed_batch = match &run.failure {
        Some(Error::Batch { batch, source }) if source.is_infeasible() => Some(*batch),
        Some(Error::Infeasible { .. }) => Some(1),
        Some(other) => {
            return Err(Error::Numerical(format!(
                "trial failed outside the infeasibility path: {other}"
            )))
        }
        None => None,
    };

    let x_norm = x.norm2().max(f64::MIN_POSITIVE);
    let err_of = |iter: &[f64]| -> f64 {
        let d: f64 = x
            .values()
            .iter()
            .zip(iter)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d.sqrt() / x_norm
    };
    let zero = vec![0.0; spec.n];
    let t_count = cfg.batch_count();
    let mut per_batch = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let iterate = if run.iterates.is_empty() {
            &zero
        } else {
            &run.iterates[t.min(run.iterates.len() - 1)]
        };
        per_batch.push(err_of(iterate));
    }
    let rel_error = per_batch.last().copied().unwrap_or(1.0);
    Ok(PipelineTrial {
        rel_error,
        per_batch,
        failed_batch,
    })
}

// ---------------------------------------------------------------------------
// Decay sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DecayRow {
    pub m: usize,
    pub lambda: f64,
    pub scheme: SchemeKind,
    pub trial: usize,
    pub rel_error: f64,
    pub infeasible: usize,
}

#[derive(Debug, Clone)]
pub struct DecayAggregate {
    pub m: usize,
    pub lambda: f64,
    pub mean_rel_error: f64,
    pub median_rel_error: f64,
}

#[derive(Debug)]
pub struct DecayOutput {
    pub rows: Vec<DecayRow>,
    pub aggregates: Vec<DecayAggregate>,
}

pub const DECAY_HEADER: &str = "m,lambda,scheme,trial,rel_error,elapsed_ms,infeasible";
pub const DECAY_AGG_HEADER: &str = "m,lambda,mean_rel_error,median_rel_error";

impl DecayOutput {
    pub fn trials_csv(&self) -> String {
        let mut out = String::from(DECAY_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},0,{}\n",
                r.m,
                fmt_real(r.lambda),
                r.scheme.name(),
                r.trial,
                fmt_real(r.rel_error),
                r.infeasible
            ));
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from(DECAY_AGG_HEADER);
        out.push('\n');
        for a in &self.aggregates {
            out.push_str(&format!(
                "{},{},{},{}\n",
                a.m,
                fmt_real(a.lambda),
                fmt_real(a.mean_rel_error),
                fmt_real(a.median_rel_error)
            ));
        }
        out
    }
}

/// Runs `trials` independent pipeline executions for every `m` in the grid.
pub fn run_decay_sweep(spec: &ExperimentSpec) -> Result<DecayOutput> {
    spec.validate_common()?;
    if spec.m_grid.is_empty() {
        return Err(Error::invalid("decay sweep needs a nonempty m grid"));
    }
    let q = spec.effective_q();
    for &m in &spec.m_grid {
        if m < q {
            return Err(Error::invalid(format!(
                "grid point m={m} is smaller than the batch size q={q}"
            )));
        }
    }

    let jobs = spec.m_grid.len() * spec.trials;
    let outcomes: Vec<Result<PipelineTrial>> = par_map(jobs, |j| {
        let m_idx = j / spec.trials;
        let trial = j % spec.trials;
        let stream = trial_stream(spec.base_seed, m_idx as u64, trial as u64);
        pipeline_trial(spec, spec.m_grid[m_idx], stream)
    });

    let mut rows = Vec::with_capacity(jobs);
    for (j, outcome) in outcomes.into_iter().enumerate() {
        let m_idx = j / spec.trials;
        let trial = j % spec.trials;
        let m = spec.m_grid[m_idx];
        let t = outcome?;
        rows.push(DecayRow {
            m,
            lambda: oversampling_factor(m, spec.s, spec.n)?,
            scheme: spec.scheme,
            trial,
            rel_error: t.rel_error,
            infeasible: t.failed_batch.map_or(0, |_| 1),
        });
    }

    let mut aggregates = Vec::with_capacity(spec.m_grid.len());
    for (m_idx, &m) in spec.m_grid.iter().enumerate() {
        let errs: Vec<f64> = rows[m_idx * spec.trials..(m_idx + 1) * spec.trials]
            .iter()
            .map(|r| r.rel_error)
            .collect();
        aggregates.push(DecayAggregate {
            m,
            lambda: oversampling_factor(m, spec.s, spec.n)?,
            mean_rel_error: errs.iter().sum::<f64>() / errs.len() as f64,
            median_rel_error: median_of(errs),
        });
    }

    Ok(DecayOutput { rows, aggregates })
}

// ---------------------------------------------------------------------------
// Noise curve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NoiseRow {
    pub t: usize,
    pub sigma: f64,
    pub flip_frac: f64,
    pub median_rel_error: f64,
    /// Trials whose pipeline hit an infeasible batch at or before `t`.
    pub infeasible_count: usize,
}

#[derive(Debug)]
pub struct NoiseOutput {
    pub rows: Vec<NoiseRow>,
}

pub const NOISE_HEADER: &str = "t,sigma,flip_frac,median_rel_error,infeasible_count";

impl NoiseOutput {
    pub fn csv(&self) -> String {
        let mut out = String::from(NOISE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.t,
                fmt_real(r.sigma),
                fmt_real(r.flip_frac),
                fmt_real(r.median_rel_error),
                r.infeasible_count
            ));
        }
        out
    }
}

/// Per-iteration error medians at fixed `T = t_batches`, under the spec's
/// noise settings.  Trials that lose a batch to infeasibility keep their
/// last completed iterate for subsequent rows and are counted.
pub fn run_noise_curve(spec: &ExperimentSpec) -> Result<NoiseOutput> {
    spec.validate_common()?;
    if spec.t_batches == 0 {
        return Err(Error::invalid("noise curve needs T >= 1"));
    }
    let q = spec.effective_q();
    let m = q * spec.t_batches;

    let outcomes: Vec<Result<PipelineTrial>> = par_map(spec.trials, |trial| {
        let stream = trial_stream(spec.base_seed, 0, trial as u64);
        pipeline_trial(spec, m, stream)
    });
    let trials: Vec<PipelineTrial> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(spec.t_batches);
    for t in 1..=spec.t_batches {
        let errs: Vec<f64> = trials.iter().map(|tr| tr.per_batch[t - 1]).collect();
        let infeasible_count = trials
            .iter()
            .filter(|tr| tr.failed_batch.is_some_and(|b| b <= t))
            .count();
        rows.push(NoiseRow {
            t,
            sigma: spec.sigma,
            flip_frac: spec.flip_frac,
            median_rel_error: median_of(errs),
            infeasible_count,
        });
    }
    Ok(NoiseOutput { rows })
}

// ---------------------------------------------------------------------------
// Scheme unit (order-one contract)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SchemeUnitRow {
    pub scheme: SchemeKind,
    pub q: usize,
    pub n: usize,
    pub s: usize,
    pub r_bound: f64,
    pub trial: usize,
    /// Absolute l2 recovery error; `R` on infeasibility (worst case bound).
    pub error: f64,
    pub infeasible: bool,
    /// Whether the order-one contract `error <= R / 4` held.
    pub success: bool,
}

#[derive(Debug)]
pub struct SchemeUnitOutput {
    pub rows: Vec<SchemeUnitRow>,
    pub successes: usize,
}

pub const SCHEME_UNIT_HEADER: &str = "scheme,q,n,s,r,trial,error,infeasible,success";

impl SchemeUnitOutput {
    pub fn csv(&self) -> String {
        let mut out = String::from(SCHEME_UNIT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.scheme.name(),
                r.q,
                r.n,
                r.s,
                fmt_real(r.r_bound),
                r.trial,
                fmt_real(r.error),
                u8::from(r.infeasible),
                u8::from(r.success)
            ));
        }
        out
    }
}

/// One direct order-one scheme execution: thresholds, quantization, recovery
/// from a single batch, scored against the `R / 4` contract.  Signal norms
/// are drawn uniformly from `[R/2, R]`.
pub fn run_scheme_unit(spec: &ExperimentSpec) -> Result<SchemeUnitOutput> {
    spec.validate_common()?;
    let q = spec.effective_q();

    let outcomes: Vec<Result<SchemeUnitRow>> = par_map(spec.trials, |trial| {
        let stream = trial_stream(spec.base_seed, 0, trial as u64);
        let mut aux = CounterRng::new(stream.substream(4));
        let norm = spec.r_bound * (0.5 + 0.5 * aux.next_uniform());
        let x = random_sparse_signal(stream.substream(1), spec.n, spec.s, norm)?;
        let ens = make_ensemble(stream.substream(0), q, spec.n)?;

        let scheme: SchemeInstance = match spec.scheme {
            SchemeKind::Ht => SchemeInstance::Ht(HtScheme {
                q,
                s: spec.s,
                t_sparsity: None,
            }),
            SchemeKind::Socp => SchemeInstance::Socp(SocpScheme {
                q,
                s: spec.s,
                preset: spec.radius_preset.socp_preset(),
                solver: spec.solver,
                dither_seed: stream.substream(2),
            }),
        };

        let ax = ens.mul(x.values())?;
        let (tau, _) = scheme.produce_thresholds(1, &ax, &ens, spec.r_bound)?;
        let noise =
            NoiseSpec::monte_carlo(stream.substream(3), q, spec.sigma, spec.flip_frac, norm)?;
        let shifted = measure_affine(&ens, &x, &vec![0.0; q])?;
        let y = quantize(&shifted, &tau, &noise)?;

        let (error, infeasible) = match scheme.recover(&y, &ens, spec.r_bound, &tau) {
            Ok((xhat, _)) => {
                let err = x
                    .values()
                    .iter()
                    .zip(&xhat)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (err, false)
            }
            Err(e) if e.is_infeasible() => (spec.r_bound, true),
            Err(e) => return Err(e),
        };
        Ok(SchemeUnitRow {
            scheme: spec.scheme,
            q,
            n: spec.n,
            s: spec.s,
            r_bound: spec.r_bound,
            trial,
            error,
            infeasible,
            success: error <= spec.r_bound / 4.0,
        })
    });

    let rows: Vec<SchemeUnitRow> = outcomes.into_iter().collect::<Result<_>>()?;
    let successes = rows.iter().filter(|r| r.success).count();
    Ok(SchemeUnitOutput { rows, successes })
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct DiagnosticsOutput {
    pub reports: Vec<PropertyReport>,
}

pub const DIAGNOSTICS_HEADER: &str =
    "property,q,n,s,delta,trials,violation_rate,worst_ratio,kind";

impl DiagnosticsOutput {
    pub fn csv(&self) -> String {
        let mut out = String::from(DIAGNOSTICS_HEADER);
        out.push('\n');
        for r in &self.reports {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},monte-carlo-estimate\n",
                r.property,
                r.q,
                r.n,
                r.s,
                fmt_real(r.delta),
                r.trials,
                fmt_real(r.violation_rate),
                fmt_real(r.worst_ratio)
            ));
        }
        out
    }
}

/// Runs the four empirical matrix-property checks at the spec's scale.
///
/// The quotient check needs an underdetermined system, so it runs at
/// `q' = min(q, n/2)`; having no pinned constant, it reports the observed
/// quotient ratio in `worst_ratio` with a zero violation rate.
pub fn run_diagnostics(spec: &ExperimentSpec) -> Result<DiagnosticsOutput> {
    spec.validate_common()?;
    let q = spec.effective_q();
    let base = RngSeed::new(spec.base_seed, 0);
    let ens = make_ensemble(base.substream(0), q, spec.n)?;
    let tau = gaussian_vector(base.substream(1), q)?;

    let mut reports = vec![
        check_rip(&ens, spec.s, spec.delta, spec.trials, base.substream(2))?,
        check_spep(&ens, spec.s, spec.delta, spec.trials, base.substream(3))?,
        check_tessellation(&ens, &tau, spec.s, spec.delta, spec.trials, base.substream(4))?,
    ];

    let q_quotient = q.min(spec.n / 2).max(1);
    if q_quotient < spec.n {
        let small = make_ensemble(base.substream(5), q_quotient, spec.n)?;
        let trials = spec.trials.min(20);
        let mut worst = 0.0_f64;
        for trial in 0..trials {
            let e = gaussian_vector(base.substream(6).substream(trial as u64), q_quotient)?;
            let w = quotient_witness(&small, &e, f64::INFINITY, &spec.solver)?;
            worst = worst.max(w.quotient_ratio);
        }
        let mut report = PropertyReport {
            property: "quotient".into(),
            q: q_quotient,
            n: spec.n,
            s: spec.s,
            delta: spec.delta,
            trials,
            violations: 0,
            violation_rate: 0.0,
            worst_ratio: worst,
        };
        report.violation_rate = 0.0;
        reports.push(report);
    }

    Ok(DiagnosticsOutput { reports })
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

const FIXTURE_MAGIC: &[u8; 8] = b"1BCSFX01";
const FIXTURE_VERSION: u32 = 1;

/// Parsed fixture contents.
#[derive(Debug)]
pub struct Fixture {
    pub scheme: SchemeKind,
    pub radius_preset: RadiusPreset,
    pub n: usize,
    pub s: usize,
    pub q: usize,
    pub m: usize,
    pub r_bound: f64,
    pub trial_seed: RngSeed,
    pub record: crate::measure::QuantizedRecord,
    pub x_true: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub threshold: f64,
}

/// Serializes one pinned noiseless pipeline run: spec parameters, the
/// quantized record, the true signal, the decoder output, and the error
/// threshold the decode must stay below.  Byte-stable across runs.
pub fn fixture_bytes(spec: &ExperimentSpec, index: usize) -> Result<Vec<u8>> {
    spec.validate_common()?;
    if spec.t_batches == 0 {
        return Err(Error::invalid("fixtures need T >= 1"));
    }
    let q = spec.effective_q();
    let m = q * spec.t_batches;
    let stream = trial_stream(spec.base_seed, 0, index as u64);

    let x = random_sparse_signal(stream.substream(1), spec.n, spec.s, spec.r_bound)?;
    let cfg = PipelineConfig {
        s: spec.s,
        r_bound: spec.r_bound,
        q,
        m,
        scheme: spec.scheme_spec(stream),
        radius_preset: spec.radius_preset,
    };
    let src = LazyEnsemble {
        seed: stream.substream(0),
        m,
        n: spec.n,
    };
    let enc = run_encoder(&x, &src, &NoiseSpec::clean(m), &cfg)?;
    if let Some(e) = enc.failure {
        return Err(e);
    }
    let dec = run_decoder(&enc.record, &src, &cfg)?;
    if let Some(e) = dec.failure {
        return Err(e);
    }
    let x_norm = x.norm2().max(f64::MIN_POSITIVE);
    let rel_error = x
        .values()
        .iter()
        .zip(dec.estimate.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / x_norm;
    let threshold = rel_error + 1e-12;

    let mut out = Vec::new();
    out.extend_from_slice(FIXTURE_MAGIC);
    out.extend_from_slice(&FIXTURE_VERSION.to_le_bytes());
    out.push(match spec.scheme {
        SchemeKind::Ht => 0,
        SchemeKind::Socp => 1,
    });
    out.push(match spec.radius_preset {
        RadiusPreset::Practical => 0,
        RadiusPreset::Theoretical => 1,
    });
    out.extend_from_slice(&[0u8; 2]);
    for v in [spec.n as u64, spec.s as u64, q as u64, m as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&spec.r_bound.to_le_bytes());
    out.extend_from_slice(&stream.seed.to_le_bytes());
    out.extend_from_slice(&stream.stream_id.to_le_bytes());
    out.extend_from_slice(&enc.record.to_bytes());
    for v in x.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in dec.estimate.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&threshold.to_le_bytes());
    Ok(out)
}

fn read_u64(bytes: &[u8], at: &mut usize) -> Result<u64> {
    let end = *at + 8;
    if end > bytes.len() {
        return Err(Error::Format("fixture truncated".into()));
    }
    let v = u64::from_le_bytes(bytes[*at..end].try_into().unwrap());
    *at = end;
    Ok(v)
}

fn read_f64(bytes: &[u8], at: &mut usize) -> Result<f64> {
    Ok(f64::from_bits(read_u64(bytes, at)?))
}

/// Parses a fixture buffer, validating magic, version, and layout.
pub fn parse_fixture(bytes: &[u8]) -> Result<Fixture> {
    if bytes.len() < 16 || &bytes[0..8] != FIXTURE_MAGIC {
        return Err(Error::Format("bad fixture magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FIXTURE_VERSION {
        return Err(Error::Format(format!("unsupported fixture version {version}")));
    }
    let scheme = match bytes[12] {
        0 => SchemeKind::Ht,
        1 => SchemeKind::Socp,
        other => return Err(Error::Format(format!("unknown scheme tag {other}"))),
    };
    let radius_preset = match bytes[13] {
        0 => RadiusPreset::Practical,
        1 => RadiusPreset::Theoretical,
        other => return Err(Error::Format(format!("unknown preset tag {other}"))),
    };
    let mut at = 16;
    let n = read_u64(bytes, &mut at)? as usize;
    let s = read_u64(bytes, &mut at)? as usize;
    let q = read_u64(bytes, &mut at)? as usize;
    let m = read_u64(bytes, &mut at)? as usize;
    let r_bound = read_f64(bytes, &mut at)?;
    let seed = read_u64(bytes, &mut at)?;
    let stream_id = read_u64(bytes, &mut at)?;

    let rec_len = 16 + m + 8 * m;
    if at + rec_len > bytes.len() {
        return Err(Error::Format("fixture record truncated".into()));
    }
    let record = crate::measure::QuantizedRecord::from_bytes(&bytes[at..at + rec_len])?;
    at += rec_len;

    let mut x_true = Vec::with_capacity(n);
    for _ in 0..n {
        x_true.push(read_f64(bytes, &mut at)?);
    }
    let mut x_hat = Vec::with_capacity(n);
    for _ in 0..n {
        x_hat.push(read_f64(bytes, &mut at)?);
    }
    let threshold = read_f64(bytes, &mut at)?;
    if at != bytes.len() {
        return Err(Error::Format("fixture has trailing bytes".into()));
    }
    Ok(Fixture {
        scheme,
        radius_preset,
        n,
        s,
        q,
        m,
        r_bound,
        trial_seed: RngSeed::new(seed, stream_id),
        record,
        x_true,
        x_hat,
        threshold,
    })
}

/// Result of replaying a fixture through the decoder.
#[derive(Debug)]
pub struct FixtureCheck {
    pub rel_error: f64,
    pub threshold: f64,
    /// Decoder output bit-identical to the stored one.
    pub bit_exact: bool,
}

/// Re-runs the decoder on a fixture and scores it against the recorded
/// threshold.
pub fn verify_fixture(fixture: &Fixture) -> Result<FixtureCheck> {
    let scheme = match fixture.scheme {
        SchemeKind::Ht => SchemeSpec::Ht { t_sparsity: None },
        SchemeKind::Socp => SchemeSpec::Socp {
            solver: SolverConfig::default(),
            dither_seed: fixture.trial_seed.substream(2),
        },
    };
    let cfg = PipelineConfig {
        s: fixture.s,
        r_bound: fixture.r_bound,
        q: fixture.q,
        m: fixture.m,
        scheme,
        radius_preset: fixture.radius_preset,
    };
    let src = LazyEnsemble {
        seed: fixture.trial_seed.substream(0),
        m: fixture.m,
        n: fixture.n,
    };
    let dec = run_decoder(&fixture.record, &src, &cfg)?;
    if let Some(e) = dec.failure {
        return Err(e);
    }
    let x_norm = norm2(&fixture.x_true).max(f64::MIN_POSITIVE);
    let rel_error = fixture
        .x_true
        .iter()
        .zip(dec.estimate.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / x_norm;
    Ok(FixtureCheck {
        rel_error,
        threshold: fixture.threshold,
        bit_exact: dec.estimate.values() == fixture.x_hat.as_slice(),
    })
}

/// Writes `spec.trials` fixture files into `dir`, returning their paths.
pub fn generate_fixtures(spec: &ExperimentSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(spec.trials);
    for index in 0..spec.trials {
        let bytes = fixture_bytes(spec, index)?;
        let path = dir.join(format!(
            "fixture_{}_seed{}_{index}.bin",
            spec.scheme.name(),
            spec.base_seed
        ));
        std::fs::write(&path, bytes)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Convenience wrapper for signal reconstruction demos: one pipeline run
/// with full iterate errors.
#[derive(Debug)]
pub struct SingleRun {
    pub x_true: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub per_batch_rel_error: Vec<f64>,
    pub failed_batch: Option<usize>,
    pub lambda: f64,
}

pub fn run_single(spec: &ExperimentSpec, trial: usize) -> Result<SingleRun> {
    spec.validate_common()?;
    let q = spec.effective_q();
    let m = q * spec.t_batches.max(1);
    let stream = trial_stream(spec.base_seed, 0, trial as u64);
    let outcome = pipeline_trial(spec, m, stream)?;
    // Recompute the estimate for reporting.
    let x = random_sparse_signal(stream.substream(1), spec.n, spec.s, spec.r_bound)?;
    let noise = NoiseSpec::monte_carlo(
        stream.substream(3),
        m,
        spec.sigma,
        spec.flip_frac,
        spec.r_bound,
    )?;
    let cfg = PipelineConfig {
        s: spec.s,
        r_bound: spec.r_bound,
        q,
        m,
        scheme: spec.scheme_spec(stream),
        radius_preset: spec.radius_preset,
    };
    let src = LazyEnsemble {
        seed: stream.substream(0),
        m,
        n: spec.n,
    };
    let run = run_encoder(&x, &src, &noise, &cfg)?;
    let x_hat = run
        .iterates
        .last()
        .cloned()
        .unwrap_or_else(|| vec![0.0; spec.n]);
    Ok(SingleRun {
        x_true: x.into_values(),
        x_hat,
        per_batch_rel_error: outcome.per_batch,
        failed_batch: outcome.failed_batch,
        lambda: oversampling_factor(m, spec.s, spec.n)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_decay_spec() -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(ExperimentKind::DecaySweep);
        spec.n = 40;
        spec.s = 3;
        spec.q = 120;
        spec.m_grid = vec![120, 240, 480];
        spec.trials = 4;
        spec.base_seed = 7;
        spec
    }

    #[test]
    fn decay_sweep_is_byte_deterministic() {
        let spec = small_decay_spec();
        let a = run_decay_sweep(&spec).unwrap();
        let b = run_decay_sweep(&spec).unwrap();
        assert_eq!(a.trials_csv(), b.trials_csv());
        assert_eq!(a.aggregate_csv(), b.aggregate_csv());
        assert!(a.trials_csv().starts_with(DECAY_HEADER));
        assert_eq!(a.rows.len(), 12);
        assert_eq!(a.aggregates.len(), 3);
    }

    #[test]
    fn decay_sweep_rejects_empty_grid() {
        let mut spec = small_decay_spec();
        spec.m_grid.clear();
        assert!(run_decay_sweep(&spec).is_err());
    }

    #[test]
    fn noise_curve_shapes() {
        let mut spec = ExperimentSpec::new(ExperimentKind::NoiseCurve);
        spec.n = 40;
        spec.s = 3;
        spec.q = 120;
        spec.t_batches = 4;
        spec.trials = 4;
        let out = run_noise_curve(&spec).unwrap();
        assert_eq!(out.rows.len(), 4);
        // Noiseless medians decrease.
        assert!(out.rows[3].median_rel_error < out.rows[0].median_rel_error);
        assert!(out.csv().starts_with(NOISE_HEADER));
    }

    #[test]
    fn scheme_unit_reports_successes() {
        let mut spec = ExperimentSpec::new(ExperimentKind::SchemeUnit);
        spec.n = 30;
        spec.s = 3;
        spec.q = 600;
        spec.trials = 10;
        let out = run_scheme_unit(&spec).unwrap();
        assert_eq!(out.rows.len(), 10);
        assert!(out.successes >= 8, "successes {}", out.successes);
    }

    #[test]
    fn fixtures_round_trip() {
        let mut spec = ExperimentSpec::new(ExperimentKind::SchemeUnit);
        spec.n = 30;
        spec.s = 3;
        spec.q = 150;
        spec.t_batches = 3;
        spec.trials = 1;
        let bytes = fixture_bytes(&spec, 0).unwrap();
        let again = fixture_bytes(&spec, 0).unwrap();
        assert_eq!(bytes, again);

        let fixture = parse_fixture(&bytes).unwrap();
        let check = verify_fixture(&fixture).unwrap();
        assert!(check.bit_exact);
        assert!(check.rel_error <= check.threshold);

        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(parse_fixture(&corrupt).is_err());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let (slope, intercept, r2) = linear_fit(&xs, &ys);
        assert!((slope + 2.0).abs() < 1e-12);
        assert!((intercept - 3.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
