//! Convergence diagnostics: running metric and bias error curves, frozen-bias
//! consistency, the reweighting estimator, flat histograms and the
//! pseudo-trajectory defect of the time-changed occupation measure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::BiasFunction;
use crate::dynamics::{run_simulation, Checkpoint, RunRecord, RunSetup, SimulationConfig, Variant};
use crate::error::{Error, Result};
use crate::family::TestFunctionFamily;
use crate::measure::{gamma_flow, metric_d};
use crate::oracle::{family_moments, QuadratureGrid};
use crate::potential::Potential;

/// One machine-readable pass/fail row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CriterionResult {
    /// Passes when `value <= threshold`.
    pub fn at_most(criterion: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            criterion: criterion.into(),
            value,
            threshold,
            pass: value <= threshold,
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// `mu_beta` moments of a test family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments {
    pub family: TestFunctionFamily,
    pub values: Vec<f64>,
}

impl OracleMoments {
    pub fn compute(v: &dyn Potential, beta: f64, family: &TestFunctionFamily, grid: &QuadratureGrid) -> Result<Self> {
        Ok(Self {
            family: family.clone(),
            values: family_moments(v, beta, family, grid)?,
        })
    }

    fn check_family(&self, family: &TestFunctionFamily) -> Result<()> {
        if &self.family != family || self.values.len() != family.len() {
            return Err(Error::invalid(format!(
                "oracle family (d={}, N={}) does not match run family (d={}, N={})",
                self.family.dim(),
                self.family.len(),
                family.dim(),
                family.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub metric_terms: usize,
    pub max_final_d: f64,
    /// Bias sup-error limit in units of `1 / beta`.
    pub bias_sup_factor: f64,
    pub final_fraction: f64,
    pub tail_window: usize,
    pub tail_band: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            metric_terms: 20,
            max_final_d: 0.05,
            bias_sup_factor: 0.1,
            final_fraction: 0.2,
            tail_window: 10,
            tail_band: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub variant: Variant,
    pub seed: u64,
    pub times: Vec<f64>,
    pub d_values: Vec<f64>,
    /// `NaN` where the checkpoint carries no bias grid.
    pub bias_sup_errors: Vec<f64>,
    /// `max_b |G p_b - 1|` of the unweighted visit histogram.
    pub flat_histogram_dev: Vec<f64>,
    pub criteria: Vec<CriterionResult>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    /// CSV curves: `t,d,bias_sup_error,flat_histogram_dev`.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("t,d,bias_sup_error,flat_histogram_dev\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{:.6},{:.12e},{:.12e},{:.12e}\n",
                self.times[i], self.d_values[i], self.bias_sup_errors[i], self.flat_histogram_dev[i]
            ));
        }
        crate::output::write_file(path, &out)
    }
}

/// Change across the window predicted by a least-squares fit of `values`
/// against `ln t` over the last `window` points with `t > 0`.
pub fn tail_trend(times: &[f64], values: &[f64], window: usize) -> f64 {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t > 0.0 && v.is_finite())
        .map(|(t, v)| (t.ln(), *v))
        .collect();
    let pts = &pts[pts.len().saturating_sub(window)..];
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    sxy / sxx * (pts[pts.len() - 1].0 - pts[0].0)
}

fn flat_deviation(visits: &[f64]) -> f64 {
    let total: f64 = visits.iter().sum();
    if total <= 0.0 {
        return f64::NAN;
    }
    let g = visits.len() as f64;
    visits.iter().map(|v| (g * v / total - 1.0).abs()).fold(0.0, f64::max)
}

/// Metric and bias error curves of one run against the oracle, with pass
/// flags evaluated on the final `final_fraction` of the run time.
pub fn convergence_report(
    record: &RunRecord,
    oracle: &OracleMoments,
    a_inf: &BiasFunction,
    thresholds: &Thresholds,
) -> Result<ConvergenceReport> {
    oracle.check_family(&record.family)?;
    let n_used = thresholds.metric_terms.min(oracle.values.len());
    let beta = record.config.beta;
    let mut times = Vec::with_capacity(record.checkpoints.len());
    let mut d_values = Vec::new();
    let mut bias_sup_errors = Vec::new();
    let mut flat_histogram_dev = Vec::new();
    for c in &record.checkpoints {
        times.push(c.time);
        d_values.push(metric_d(&c.moments, &oracle.values, n_used)?.value);
        let err = match &c.bias {
            Some(values) => {
                let g = (values.len() as f64).powf(1.0 / a_inf.m() as f64).round() as usize;
                let b = BiasFunction::from_values(a_inf.m(), g, beta, values.clone())?;
                b.sup_distance(a_inf)?
            }
            None => f64::NAN,
        };
        bias_sup_errors.push(err);
        flat_histogram_dev.push(c.visits.as_deref().map(flat_deviation).unwrap_or(f64::NAN));
    }
    let horizon = times.last().copied().unwrap_or(0.0);
    let tail: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= (1.0 - thresholds.final_fraction) * horizon)
        .collect();
    let tail_max = |v: &[f64]| tail.iter().map(|&i| v[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut criteria = vec![
        CriterionResult::at_most("final metric d", tail_max(&d_values), thresholds.max_final_d),
        CriterionResult::at_most(
            "d tail trend",
            tail_trend(&times, &d_values, thresholds.tail_window),
            thresholds.tail_band,
        ),
    ];
    let final_bias_err = match (&record.final_bias, record.config.variant) {
        (Some(b), Variant::Abp | Variant::AbpTimeChanged) => Some(b.sup_distance(a_inf)?),
        _ => None,
    };
    if let Some(err) = final_bias_err {
        criteria.push(CriterionResult::at_most(
            "final bias sup error",
            err,
            thresholds.bias_sup_factor / beta,
        ));
        if bias_sup_errors.iter().filter(|e| e.is_finite()).count() >= 2 {
            criteria.push(CriterionResult::at_most(
                "bias error tail trend",
                tail_trend(&times, &bias_sup_errors, thresholds.tail_window),
                thresholds.tail_band,
            ));
        }
    }
    Ok(ConvergenceReport {
        variant: record.config.variant,
        seed: record.config.seed,
        times,
        d_values,
        bias_sup_errors,
        flat_histogram_dev,
        criteria,
    })
}

/// Mean and standard error of each column.
pub fn mean_and_se(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    let k = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; k];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let mut se = vec![f64::NAN; k];
    if n > 1 {
        for (j, e) in se.iter_mut().enumerate() {
            let var = samples.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1) as f64;
            *e = (var / n as f64).sqrt();
        }
    }
    (mean, se)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Frozen-bias runs for one bias over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenEnsemble {
    pub label: String,
    /// Horizons at which moments were sampled (integrator clock).
    pub horizons: Vec<f64>,
    /// `moments[h][seed]` holds the first `moments_checked` moments.
    pub moments: Vec<Vec<Vec<f64>>>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `max_n |mean_n - oracle_n|` at the last horizon.
    pub max_error: f64,
    /// `max_n |mean_n - oracle_n| / se_n` at the last horizon.
    pub max_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub moments_checked: usize,
    pub ensembles: Vec<FrozenEnsemble>,
    /// `max_n |mean_i - mean_j| / sqrt(se_i^2 + se_j^2)` per pair.
    pub pair_z: Vec<(usize, usize, f64)>,
    /// Seed-averaged `max_n |m_i - m_j|` between the first two biases at
    /// every horizon.
    pub discrepancy: Vec<f64>,
    pub discrepancy_slope: f64,
}

/// Run the frozen-bias dynamics for each bias over `seeds`, sampling the
/// first `moments_checked` moments at each of `horizons`.
#[allow(clippy::too_many_arguments)]
pub fn prop1_check(
    v: &dyn Potential,
    kernel: &crate::kernel::PeriodicKernel,
    biases: &[(String, BiasFunction)],
    base: &SimulationConfig,
    oracle: &OracleMoments,
    seeds: &[u64],
    horizons: &[f64],
    moments_checked: usize,
) -> Result<Prop1Report> {
    if biases.len() < 2 {
        return Err(Error::invalid("frozen-bias comparison needs at least two biases"));
    }
    if seeds.len() < 2 || horizons.is_empty() {
        return Err(Error::invalid("frozen-bias comparison needs two seeds and a horizon"));
    }
    let k = moments_checked.min(oracle.values.len());
    let mut ensembles = Vec::new();
    for (label, b) in biases {
        let setup = RunSetup {
            potential: v,
            kernel,
            family: std::sync::Arc::new(oracle.family.clone()),
            fixed_bias: Some(b.clone()),
            target: None,
            metric_terms: k,
        };
        let runs: Vec<Result<Vec<Vec<f64>>>> = seeds
            .par_iter()
            .map(|&seed| {
                let mut cfg = base.clone();
                cfg.variant = Variant::Frozen;
                cfg.seed = seed;
                cfg.record_grids = false;
                let last = horizons.iter().copied().fold(0.0, f64::max);
                cfg.n_steps = (last / cfg.dt).round() as u64;
                let rec = run_simulation(&cfg, &setup, horizons)?;
                Ok(horizons
                    .iter()
                    .map(|&h| moments_at(&rec.checkpoints, h)[..k].to_vec())
                    .collect())
            })
            .collect();
        let mut per_horizon = vec![Vec::with_capacity(seeds.len()); horizons.len()];
        for run in runs {
            for (h, m) in run?.into_iter().enumerate() {
                per_horizon[h].push(m);
            }
        }
        let (mean, se) = mean_and_se(per_horizon.last().expect("nonempty"));
        let max_error = (0..k).map(|n| (mean[n] - oracle.values[n]).abs()).fold(0.0, f64::max);
        let max_z = (0..k)
            .map(|n| (mean[n] - oracle.values[n]).abs() / se[n])
            .fold(0.0, f64::max);
        ensembles.push(FrozenEnsemble {
            label: label.clone(),
            horizons: horizons.to_vec(),
            moments: per_horizon,
            mean,
            std_error: se,
            max_error,
            max_z,
        });
    }
    let mut pair_z = Vec::new();
    for i in 0..ensembles.len() {
        for j in i + 1..ensembles.len() {
            let (a, b) = (&ensembles[i], &ensembles[j]);
            let z = (0..k)
                .map(|n| (a.mean[n] - b.mean[n]).abs() / a.std_error[n].hypot(b.std_error[n]))
                .fold(0.0, f64::max);
            pair_z.push((i, j, z));
        }
    }
    let discrepancy: Vec<f64> = (0..horizons.len())
        .map(|h| {
            let (a, b) = (&ensembles[0].moments[h], &ensembles[1].moments[h]);
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
                .sum::<f64>()
                / a.len() as f64
        })
        .collect();
    let discrepancy_slope = if horizons.len() >= 2 {
        log_log_slope(horizons, &discrepancy)
    } else {
        f64::NAN
    };
    Ok(Prop1Report {
        moments_checked: k,
        ensembles,
        pair_z,
        discrepancy,
        discrepancy_slope,
    })
}

/// Moments at the first checkpoint at or after `t`.
fn moments_at(checkpoints: &[Checkpoint], t: f64) -> &[f64] {
    let c = checkpoints
        .iter()
        .find(|c| c.time >= t - 1e-9)
        .or(checkpoints.last())
        .expect("records always hold a checkpoint");
    &c.moments
}

/// `phi = constant + sum_n coefficients[n] f_n` over the test family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Observable {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    /// The `n`-th test function (0-based).
    pub fn member(n: usize) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(n, 1.0)],
        }
    }

    /// `phi` applied to moment sums with total weight `w`.
    fn apply(&self, sums: &[f64], w: f64) -> Result<f64> {
        let mut acc = self.constant * w;
        for &(n, a) in &self.terms {
            let s = sums
                .get(n)
                .ok_or_else(|| Error::invalid(format!("observable uses f_{} beyond the family", n + 1)))?;
            acc += a * s;
        }
        Ok(acc)
    }

    /// `mu_beta(phi)` from oracle moments.
    pub fn expectation(&self, oracle: &OracleMoments) -> Result<f64> {
        self.apply(&oracle.values, 1.0)
    }
}

/// Indices of the checkpoints closest to `k T / batches`, `k = 0..=batches`.
fn batch_boundaries(checkpoints: &[Checkpoint], batches: usize) -> Vec<usize> {
    let horizon = checkpoints.last().map_or(0.0, |c| c.time);
    let mut idx: Vec<usize> = (0..=batches)
        .map(|k| {
            let t = horizon * k as f64 / batches as f64;
            (0..checkpoints.len())
                .min_by(|&a, &b| {
                    (checkpoints[a].time - t)
                        .abs()
                        .partial_cmp(&(checkpoints[b].time - t).abs())
                        .expect("finite times")
                })
                .expect("nonempty")
        })
        .collect();
    idx.dedup();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightResult {
    pub estimate: f64,
    pub oracle: f64,
    pub error: f64,
    pub std_error: f64,
    pub batches: usize,
}

impl ReweightResult {
    /// `|error| / std_error`; zero when both vanish.
    pub fn z(&self) -> f64 {
        if self.error == 0.0 {
            0.0
        } else {
            self.error.abs() / self.std_error
        }
    }
}

/// Ratio of weighted time averages of `phi` against `mu_beta(phi)`, with a
/// batch-means standard error over `batches` equal-time batches.
pub fn reweight_check(
    record: &RunRecord,
    phi: &Observable,
    oracle: &OracleMoments,
    batches: usize,
) -> Result<ReweightResult> {
    oracle.check_family(&record.family)?;
    let last = record.checkpoints.last().expect("records always hold a checkpoint");
    let (sums, w) = match (&last.reweighted_sums, last.reweighted_weight) {
        (Some(s), Some(w)) => (s, w),
        _ => return Err(Error::invalid("run carries no reweighted accumulator")),
    };
    if w <= 0.0 {
        return Err(Error::invalid("reweighted accumulator is empty"));
    }
    let estimate = phi.apply(sums, w)? / w;
    let reference = phi.expectation(oracle)?;
    let idx = batch_boundaries(&record.checkpoints, batches.max(2));
    let mut residuals = Vec::new();
    for pair in idx.windows(2) {
        let (a, b) = (&record.checkpoints[pair[0]], &record.checkpoints[pair[1]]);
        let dw = b.reweighted_weight.unwrap_or(0.0) - a.reweighted_weight.unwrap_or(0.0);
        let da: Vec<f64> = match (&a.reweighted_sums, &b.reweighted_sums) {
            (Some(x), Some(y)) => y.iter().zip(x).map(|(p, q)| p - q).collect(),
            _ => continue,
        };
        residuals.push(phi.apply(&da, dw)? - estimate * dw);
    }
    let k = residuals.len() as f64;
    let std_error = if k >= 2.0 {
        (k / (k - 1.0) * residuals.iter().map(|r| r * r).sum::<f64>()).sqrt() / w
    } else {
        f64::NAN
    };
    Ok(ReweightResult {
        estimate,
        oracle: reference,
        error: estimate - reference,
        std_error,
        batches: residuals.len(),
    })
}

/// Coarse bin of fine node `j` when `g` nodes are merged into `bins`.
fn coarse_bin(j: usize, g: usize, bins: usize) -> usize {
    let r = g / bins;
    ((j + r / 2) / r) % bins
}

/// Merge a 1-D node histogram into `bins` bins centered at `b / bins`.
pub fn aggregate_bins(fine: &[f64], bins: usize) -> Result<Vec<f64>> {
    let g = fine.len();
    if bins == 0 || g % bins != 0 {
        return Err(Error::invalid(format!("cannot merge {g} bins into {bins}")));
    }
    let mut out = vec![0.0; bins];
    for (j, v) in fine.iter().enumerate() {
        out[coarse_bin(j, g, bins)] += v;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatHistogramResult {
    pub bins: usize,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    /// Effective number of independent samples from batch means.
    pub effective_samples: f64,
    /// `max_b |observed_b - expected_b| / sqrt(p_b (1 - p_b) / n_eff)`.
    pub max_z: f64,
}

/// Compare the unweighted visit histogram of a one-dimensional reaction
/// coordinate, merged into `bins` bins, with `expected` (uniform when
/// `None`). The binomial band uses an effective sample size estimated by
/// batch means over `batches` equal-time batches.
pub fn flat_histogram_check(
    record: &RunRecord,
    bins: usize,
    expected: Option<&[f64]>,
    batches: usize,
) -> Result<FlatHistogramResult> {
    let visits = |c: &Checkpoint| -> Result<Vec<f64>> {
        let v = c
            .visits
            .as_ref()
            .ok_or_else(|| Error::invalid("run did not record visit histograms"))?;
        aggregate_bins(v, bins)
    };
    let last = record.checkpoints.last().expect("records always hold a checkpoint");
    let total = visits(last)?;
    let mass: f64 = total.iter().sum();
    if mass <= 0.0 {
        return Err(Error::invalid("empty visit histogram"));
    }
    let observed: Vec<f64> = total.iter().map(|v| v / mass).collect();
    let expected = match expected {
        Some(p) if p.len() != bins => {
            return Err(Error::DimensionMismatch {
                expected: bins,
                got: p.len(),
            })
        }
        Some(p) => p.to_vec(),
        None => vec![1.0 / bins as f64; bins],
    };
    let idx = batch_boundaries(&record.checkpoints, batches.max(2));
    let mut fractions: Vec<Vec<f64>> = Vec::new();
    for pair in idx.windows(2) {
        let (a, b) = (visits(&record.checkpoints[pair[0]])?, visits(&record.checkpoints[pair[1]])?);
        let d: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
        let m: f64 = d.iter().sum();
        if m > 0.0 {
            fractions.push(d.iter().map(|x| x / m).collect());
        }
    }
    let k = fractions.len();
    if k < 2 {
        return Err(Error::invalid("flat-histogram check needs at least two batches"));
    }
    let (_, se) = mean_and_se(&fractions);
    let binomial: f64 = expected.iter().map(|p| p * (1.0 - p)).sum();
    let observed_var: f64 = se.iter().map(|s| s * s).sum();
    let effective_samples = binomial / observed_var;
    let max_z = observed
        .iter()
        .zip(&expected)
        .map(|(o, p)| {
            let dev = (o - p).abs();
            if dev == 0.0 {
                0.0
            } else {
                dev / (p * (1.0 - p) / effective_samples).sqrt()
            }
        })
        .fold(0.0, f64::max);
    Ok(FlatHistogramResult {
        bins,
        observed,
        expected,
        effective_samples,
        max_z,
    })
}

/// Moments of the checkpointed measure at time `t`, interpolated linearly.
pub fn interpolate_moments(checkpoints: &[Checkpoint], t: f64) -> Result<Vec<f64>> {
    let (first, last) = match (checkpoints.first(), checkpoints.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::invalid("no checkpoints")),
    };
    if t < first.time || t > last.time * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            requested: t,
            start: first.time,
            end: last.time,
        });
    }
    let hi = checkpoints.partition_point(|c| c.time < t).min(checkpoints.len() - 1);
    if hi == 0 || checkpoints[hi].time == t {
        return Ok(checkpoints[hi].moments.clone());
    }
    let (a, b) = (&checkpoints[hi - 1], &checkpoints[hi]);
    let w = (t - a.time) / (b.time - a.time);
    Ok(a.moments.iter().zip(&b.moments).map(|(x, y)| x + w * (y - x)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AptValue {
    pub s: f64,
    pub window: f64,
    pub delta: f64,
    /// `d(nu_{e^s}, mu_beta)`.
    pub distance_now: f64,
    /// `Delta(s - S, S) + d(Gamma_S(nu_{e^{s-S}}), mu_beta)` when `s >= S`.
    pub shadow_bound: Option<f64>,
}

/// `Delta(s, S) = sup_{sigma in [0, S]} d(nu_{e^{s+sigma}}, Gamma_sigma(nu_{e^s}))`
/// on `grid_points + 1` equally spaced `sigma`. Times are in the record's own
/// clock.
pub fn apt_delta(
    record: &RunRecord,
    oracle: &OracleMoments,
    s: f64,
    window: f64,
    n_used: usize,
    grid_points: usize,
) -> Result<f64> {
    oracle.check_family(&record.family)?;
    if window < 0.0 {
        return Err(Error::invalid("window length must be nonnegative"));
    }
    let start = interpolate_moments(&record.checkpoints, s.exp())?;
    let n = grid_points.max(1);
    let mut delta: f64 = 0.0;
    for i in 0..=n {
        let sigma = window * i as f64 / n as f64;
        let now = interpolate_moments(&record.checkpoints, (s + sigma).exp())?;
        let flowed = gamma_flow(&start, &oracle.values, sigma)?;
        delta = delta.max(metric_d(&now, &flowed, n_used)?.value);
    }
    Ok(delta)
}

/// [`apt_delta`] together with both sides of the shadowing inequality.
pub fn apt_report(
    record: &RunRecord,
    oracle: &OracleMoments,
    s: f64,
    window: f64,
    n_used: usize,
    grid_points: usize,
) -> Result<AptValue> {
    let delta = apt_delta(record, oracle, s, window, n_used, grid_points)?;
    let now = interpolate_moments(&record.checkpoints, s.exp())?;
    let distance_now = metric_d(&now, &oracle.values, n_used)?.value;
    let shadow_bound = if s - window >= 0.0 {
        let earlier = interpolate_moments(&record.checkpoints, (s - window).exp())?;
        let flowed = gamma_flow(&earlier, &oracle.values, window)?;
        Some(
            apt_delta(record, oracle, s - window, window, n_used, grid_points)?
                + metric_d(&flowed, &oracle.values, n_used)?.value,
        )
    } else {
        None
    };
    Ok(AptValue {
        s,
        window,
        delta,
        distance_now,
        shadow_bound,
    })
}
