//! Seeded multi-run experiments with on-disk artifacts.
//!
//! Layout of an output directory:
//!
//! ```text
//! manifest.json                  effective config, run index, timestamp
//! config.toml                    effective config (re-parses to the same run)
//! report.json                    criterion rows and overall verdict
//! oracle/profile.csv             z, A_star, A_infinity
//! oracle/moments.csv             n, kind, k1..kd, value
//! runs/<variant>-seed<s>.csv     step, t, theta, d_to_target, f1..fN
//! bias/<variant>-seed<s>.csv     z, A (final bias grid)
//! curves/<variant>-seed<s>.csv   t, d, bias_sup_error, flat_histogram_dev
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::BiasFunction;
use crate::config::{parse_config, ExperimentConfig, FrozenBias};
use crate::diagnostics::{
    aggregate_bins, apt_delta, convergence_report, flat_histogram_check, reweight_check, CriterionResult, Observable,
    OracleMoments,
};
use crate::dynamics::{checkpoint_schedule, run_simulation, RunRecord, RunSetup, Variant};
use crate::error::{Error, Result};
use crate::family::TestFunctionFamily;
use crate::kernel::PeriodicKernel;
use crate::oracle::{a_infinity, free_energy, write_profile_csv, xi_bin_probabilities, QuadratureGrid};
use crate::output::write_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    #[serde(flatten)]
    pub result: CriterionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub checked: bool,
    pub passed: bool,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub variant: Variant,
    pub seed: u64,
    pub checkpoints_csv: String,
    pub bias_csv: Option<String>,
    pub curves_csv: String,
    pub final_time: f64,
    pub final_theta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub crate_version: String,
    pub created_unix: u64,
    pub config: ExperimentConfig,
    pub oracle_profile_csv: String,
    pub oracle_moments_csv: String,
    pub report_json: String,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub report: ExperimentReport,
    /// Nonzero iff checks were enabled and at least one failed.
    pub exit_code: i32,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Config stored in a manifest written by [`run_experiment`].
pub fn load_manifest_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    manifest.config.validate()?;
    Ok(manifest.config)
}

/// Read and parse a TOML config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn write_moments_csv(path: &Path, oracle: &OracleMoments) -> Result<()> {
    let d = oracle.family.dim();
    let mut out = String::from("n,kind");
    for j in 1..=d {
        out.push_str(&format!(",k{j}"));
    }
    out.push_str(",value\n");
    for (n, v) in oracle.values.iter().enumerate() {
        let (k, is_sin) = oracle.family.mode(n);
        out.push_str(&format!("{},{}", n + 1, if is_sin { "sin" } else { "cos" }));
        for c in k {
            out.push_str(&format!(",{c}"));
        }
        out.push_str(&format!(",{v:.15e}\n"));
    }
    write_file(path, &out)
}

fn run_label(variant: Variant, seed: u64) -> String {
    format!("{}-seed{seed}", variant.name())
}

/// Run every variant for every seed, write artifacts below `output_dir` and,
/// when `check` is set, evaluate the diagnostics criteria.
pub fn run_experiment(config: &ExperimentConfig, output_dir: &Path, check: bool) -> Result<ExperimentOutcome> {
    config.validate()?;
    let (d, m, beta) = (config.d(), config.m(), config.beta());
    let v = config.potential();
    let kernel = PeriodicKernel::new(m, config.kernel.epsilon, config.kernel.floor_delta)?;
    let family = Arc::new(TestFunctionFamily::trigonometric(d, config.family_size)?);
    let grid = match config.oracle.quadrature_points {
        Some(p) => QuadratureGrid::new(p, d)?,
        None => QuadratureGrid::default_for(d),
    };
    let oracle = OracleMoments::compute(&v, beta, &family, &grid)?;
    let profile = free_energy(&v, beta, m, &grid, config.oracle.profile_resolution)?;
    let a_inf = a_infinity(&profile, &kernel)?;

    for sub in ["oracle", "runs", "bias", "curves"] {
        create_dir(&output_dir.join(sub))?;
    }
    write_profile_csv(&output_dir.join("oracle/profile.csv"), &profile, &a_inf)?;
    write_moments_csv(&output_dir.join("oracle/moments.csv"), &oracle)?;

    let g = config.histogram_size;
    let frozen = match config.frozen_bias {
        FrozenBias::Zero => BiasFunction::zero(m, g, beta),
        FrozenBias::AInfinity => a_inf.clone(),
        FrozenBias::Constant(c) => BiasFunction::constant(m, g, beta, c),
    };
    let times = checkpoint_schedule(
        config.total_time,
        config.checkpoints.linear,
        config.checkpoints.geometric_start,
        config.checkpoints.per_e_fold,
    );
    let jobs: Vec<(Variant, u64)> = config
        .variants
        .iter()
        .flat_map(|&var| config.seeds().into_iter().map(move |s| (var, s)))
        .collect();
    let records: Vec<Result<RunRecord>> = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let fixed_bias = match variant {
                Variant::Star => Some(profile.as_bias().clone()),
                Variant::Frozen => Some(frozen.clone()),
                _ => None,
            };
            let setup = RunSetup {
                potential: &v,
                kernel: &kernel,
                family: family.clone(),
                fixed_bias,
                target: Some(oracle.values.clone()),
                metric_terms: config.check.thresholds.metric_terms,
            };
            run_simulation(&config.simulation(variant, seed), &setup, &times)
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let bins = config.check.histogram_bins;
    let histogram_ok = m == 1 && g % bins == 0;
    let oracle_bins = if check && histogram_ok && config.variants.contains(&Variant::Unbiased) {
        Some(aggregate_bins(&xi_bin_probabilities(&v, beta, &grid, g)?, bins)?)
    } else {
        None
    };
    for rec in &records {
        let (variant, seed) = (rec.config.variant, rec.config.seed);
        let label = run_label(variant, seed);
        let checkpoints_csv = format!("runs/{label}.csv");
        rec.write_checkpoints_csv(&output_dir.join(&checkpoints_csv))?;
        let bias_csv = match &rec.final_bias {
            Some(b) if variant != Variant::Star => {
                let p = format!("bias/{label}.csv");
                b.write_csv(&output_dir.join(&p))?;
                Some(p)
            }
            _ => None,
        };
        let report = convergence_report(rec, &oracle, &a_inf, &config.check.thresholds)?;
        let curves_csv = format!("curves/{label}.csv");
        report.write_csv(&output_dir.join(&curves_csv))?;
        let last = rec.checkpoints.last().expect("records always hold a checkpoint");
        entries.push(RunEntry {
            variant,
            seed,
            checkpoints_csv,
            bias_csv,
            curves_csv,
            final_time: last.time,
            final_theta: last.theta,
        });
        if !check {
            continue;
        }
        let push = |rows: &mut Vec<ReportRow>, result: CriterionResult| {
            rows.push(ReportRow {
                run: label.clone(),
                result,
            })
        };
        for c in report.criteria {
            push(&mut rows, c);
        }
        if matches!(variant, Variant::Abp | Variant::AbpTimeChanged) && rec.config.check_admissible {
            push(
                &mut rows,
                CriterionResult::at_most("admissible set violation", rec.worst_admissibility_violation, 0.0)
                    .with_note(format!("{} refreshes checked", rec.admissibility_checks)),
            );
        }
        if variant == Variant::Star {
            let r = reweight_check(rec, &Observable::member(0), &oracle, config.check.batches)?;
            push(
                &mut rows,
                CriterionResult::at_most("reweighting f1 error / std error", r.z(), config.check.reweight_max_z)
                    .with_note(format!("estimate {:.6}, oracle {:.6}", r.estimate, r.oracle)),
            );
        }
        if histogram_ok && matches!(variant, Variant::Star | Variant::Unbiased) {
            let expected = if variant == Variant::Unbiased { oracle_bins.as_deref() } else { None };
            let r = flat_histogram_check(rec, bins, expected, config.check.batches)?;
            push(
                &mut rows,
                CriterionResult::at_most("xi histogram max z", r.max_z, config.check.histogram_max_z)
                    .with_note(format!("{bins} bins, n_eff {:.0}", r.effective_samples)),
            );
        }
    }
    if check {
        rows.extend(apt_rows(config, &records, &oracle)?);
    }

    let passed = rows.iter().all(|r| r.result.pass);
    let report = ExperimentReport {
        name: config.name.clone(),
        checked: check,
        passed,
        rows,
    };
    write_file(&output_dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    let mut effective = config.clone();
    effective.output_dir = Some(output_dir.to_path_buf());
    write_file(&output_dir.join("config.toml"), &effective.to_toml())?;
    let manifest = Manifest {
        name: config.name.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: effective,
        oracle_profile_csv: "oracle/profile.csv".into(),
        oracle_moments_csv: "oracle/moments.csv".into(),
        report_json: "report.json".into(),
        runs: entries,
    };
    write_file(&output_dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExperimentOutcome {
        output_dir: output_dir.to_path_buf(),
        exit_code: if check && !passed { 1 } else { 0 },
        report,
    })
}

/// Seed-averaged `Delta(s, S)` on the time-changed runs must not increase by
/// more than the noise band between consecutive `s`.
fn apt_rows(config: &ExperimentConfig, records: &[RunRecord], oracle: &OracleMoments) -> Result<Vec<ReportRow>> {
    let tc: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.config.variant == Variant::AbpTimeChanged)
        .collect();
    let window = config.check.apt_window;
    let s_values: Vec<f64> = config
        .check
        .apt_s
        .iter()
        .copied()
        .filter(|s| (s + window).exp() <= config.total_time)
        .collect();
    if tc.is_empty() || s_values.len() < 2 {
        return Ok(Vec::new());
    }
    let n_used = config.check.thresholds.metric_terms;
    let mut means = Vec::new();
    for &s in &s_values {
        let mut total = 0.0;
        for r in &tc {
            total += apt_delta(r, oracle, s, window, n_used, 100)?;
        }
        means.push(total / tc.len() as f64);
    }
    let worst_rise = means.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let note = s_values
        .iter()
        .zip(&means)
        .map(|(s, d)| format!("s={s}: {d:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(vec![ReportRow {
        run: "abp_time_changed-all".into(),
        result: CriterionResult::at_most("apt delta rise", worst_rise, config.check.apt_band).with_note(note),
    }])
}
