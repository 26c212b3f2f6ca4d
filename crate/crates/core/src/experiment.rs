//! Replicated estimation studies: error tables, log-rate regression,
//! pointwise bands and the bias-selection diagnostic.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelSpec;
use crate::error::{Error, Result};
use crate::estimate::{estimate_all, relative_error, AgeGrid, Bandwidth};
use crate::kernel::Kernel;
use crate::malthus::{solve_malthus, MalthusData};
use crate::offspring::OffspringLaw;
use crate::rate::{Hazard, RateFunction};
use crate::rng::{stream, stream_id};
use crate::stats::{ks_statistic, mean, ols, quantile_sorted, sample_std, sorted};
use crate::tree::{extract_sample, simulate_tree_capped, ObservedSample, DEFAULT_NODE_CAP};

/// Tables with more failed replicates than this fraction are invalid.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Below this many interior lifetimes the bias check is not asserted.
pub const BIAS_MIN_SAMPLE: usize = 30;

/// Named experiment presets.
pub const EXPERIMENT_PRESETS: [&str; 2] = ["desk", "full-paper"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub horizons: Vec<f64>,
    pub replicates: usize,
    pub grid: AgeGrid,
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub seed: u64,
    pub node_cap: usize,
    /// Pointwise band level.
    pub band_level: f64,
    pub bootstrap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            horizons: vec![11.0, 13.0, 15.0],
            replicates: 50,
            grid: AgeGrid::default(),
            kernel: Kernel::Gaussian,
            bandwidth: Bandwidth::RuleOfThumb,
            seed: 42,
            node_cap: DEFAULT_NODE_CAP,
            band_level: 0.95,
            bootstrap: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::default()),
            "full-paper" => Ok(Self {
                horizons: vec![11.0, 13.0, 15.0, 17.0, 19.0, 21.0, 23.0],
                replicates: 100,
                ..Self::default()
            }),
            other => Err(Error::Config(format!(
                "unknown experiment preset {other:?}; known: {}",
                EXPERIMENT_PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Config("horizons must be positive".into()));
        }
        if self.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("horizons must be increasing".into()));
        }
        if !(self.band_level > 0.0 && self.band_level <= 1.0) {
            return Err(Error::Config("band_level must lie in (0, 1]".into()));
        }
        AgeGrid::new(self.grid.start, self.grid.end, self.grid.step).map(|_| ())
    }
}

/// Two Kolmogorov-Smirnov distances of the interior lifetimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasDiagnostic {
    pub n: usize,
    /// Against the lifetime law `f_B`.
    pub ks_lifetime: f64,
    /// Against the biased law `f_{H_B}`.
    pub ks_biased: f64,
    /// `ks_biased < ks_lifetime`, or `None` for samples too small to tell.
    pub biased_closer: Option<bool>,
}

pub fn bias_diagnostic(sample: &ObservedSample, md: &MalthusData) -> BiasDiagnostic {
    let z = &sample.interior_lifetimes;
    let b = md.rate();
    let h = md.biased();
    let (ks_lifetime, ks_biased) = if z.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            ks_statistic(z, |x| 1.0 - b.survival(x)),
            ks_statistic(z, |x| h.biased_cdf(x)),
        )
    };
    BiasDiagnostic {
        n: z.len(),
        ks_lifetime,
        ks_biased,
        biased_closer: (z.len() >= BIAS_MIN_SAMPLE).then_some(ks_biased < ks_lifetime),
    }
}

/// One replicate at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub replicate: usize,
    pub ok: bool,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub m_hat: f64,
    pub lambda_hat: f64,
    pub h: f64,
    pub error: f64,
    pub guarded_points: usize,
    pub ks_lifetime: f64,
    pub ks_biased: f64,
    pub failure: String,
}

/// Order statistics of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let s = sorted(xs);
        Some(Self {
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
            mean: mean(xs),
            std: if xs.len() > 1 { sample_std(xs) } else { 0.0 },
        })
    }
}

/// Aggregates at one horizon, over successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSummary {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub valid: bool,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_lambda_hat: f64,
    pub interior_size: Option<Summary>,
    pub bias_checked: usize,
    pub bias_held: usize,
}

/// Pointwise band across replicates at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub level: f64,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub truth: Vec<f64>,
}

impl Band {
    /// Fraction of grid points `x ≥ from` where the truth lies in the band.
    pub fn coverage_from(&self, from: f64) -> f64 {
        let idx: Vec<usize> = (0..self.x.len()).filter(|&i| self.x[i] >= from).collect();
        let inside = idx
            .iter()
            .filter(|&&i| self.lower[i] <= self.truth[i] && self.truth[i] <= self.upper[i])
            .count();
        inside as f64 / idx.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub lambda: f64,
    pub rows: Vec<ReplicateRow>,
    pub horizons: Vec<HorizonSummary>,
    pub bands: Vec<Band>,
    #[serde(skip)]
    pub curves: Vec<Vec<Vec<f64>>>,
}

struct Outcome {
    row: ReplicateRow,
    curve: Option<Vec<f64>>,
}

fn run_replicate(
    cfg: &ExperimentConfig,
    rate: &RateFunction,
    law: &OffspringLaw,
    md: &MalthusData,
    t_index: usize,
    replicate: usize,
) -> Outcome {
    let horizon = cfg.horizons[t_index];
    let mut row = ReplicateRow {
        horizon,
        replicate,
        ok: false,
        n_interior: 0,
        n_boundary: 0,
        m_hat: f64::NAN,
        lambda_hat: f64::NAN,
        h: f64::NAN,
        error: f64::NAN,
        guarded_points: 0,
        ks_lifetime: f64::NAN,
        ks_biased: f64::NAN,
        failure: String::new(),
    };
    let mut rng = stream(cfg.seed, stream_id(t_index as u32, replicate as u32));
    let tree = match simulate_tree_capped(rate, law, horizon, cfg.node_cap, &mut rng) {
        Ok(t) => t,
        Err(e) => {
            row.failure = e.to_string();
            return Outcome { row, curve: None };
        }
    };
    let sample = extract_sample(&tree);
    row.n_interior = sample.interior_len();
    row.n_boundary = sample.boundary_len();
    let diag = bias_diagnostic(&sample, md);
    row.ks_lifetime = diag.ks_lifetime;
    row.ks_biased = diag.ks_biased;
    match estimate_all(&sample, cfg.kernel, cfg.bandwidth, &cfg.grid) {
        Ok(est) => {
            row.ok = true;
            row.m_hat = est.m_hat;
            row.lambda_hat = est.lambda_hat;
            row.h = est.bandwidth;
            row.guarded_points = est.guarded_points();
            row.error = relative_error(&est.b_hat, |x| rate.eval(x), &est.grid);
            Outcome {
                row,
                curve: Some(est.b_hat),
            }
        }
        Err(e) => {
            row.failure = e.to_string();
            Outcome { row, curve: None }
        }
    }
}

/// Simulate, estimate and score `replicates` trees at every horizon.
pub fn run_table(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (rate, law) = cfg.model.build()?;
    let md = solve_malthus(&rate, &law)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.horizons.len())
        .flat_map(|t| (0..cfg.replicates).map(move |r| (t, r)))
        .collect();
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(t, r)| run_replicate(cfg, &rate, &law, &md, t, r))
        .collect();
    let xs = cfg.grid.points();
    let truth: Vec<f64> = xs.iter().map(|&x| rate.eval(x)).collect();
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut curves = vec![Vec::new(); cfg.horizons.len()];
    for (k, o) in outcomes.into_iter().enumerate() {
        if let Some(c) = o.curve {
            curves[jobs[k].0].push(c);
        }
        rows.push(o.row);
    }
    let horizons = cfg
        .horizons
        .iter()
        .map(|&t| summarize(t, &rows))
        .collect();
    let bands = cfg
        .horizons
        .iter()
        .zip(&curves)
        .filter(|(_, c)| !c.is_empty())
        .map(|(&t, c)| {
            let (lower, upper) = confidence_bands(c, cfg.band_level);
            let mean = (0..xs.len())
                .map(|i| c.iter().map(|v| v[i]).sum::<f64>() / c.len() as f64)
                .collect();
            Band {
                horizon: t,
                level: cfg.band_level,
                x: xs.clone(),
                mean,
                lower,
                upper,
                truth: truth.clone(),
            }
        })
        .collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        lambda: md.lambda,
        rows,
        horizons,
        bands,
        curves,
    })
}

fn summarize(horizon: f64, rows: &[ReplicateRow]) -> HorizonSummary {
    let at: Vec<&ReplicateRow> = rows.iter().filter(|r| r.horizon == horizon).collect();
    let ok: Vec<&ReplicateRow> = at.iter().copied().filter(|r| r.ok).collect();
    let errors: Vec<f64> = ok.iter().map(|r| r.error).collect();
    let sizes: Vec<f64> = ok.iter().map(|r| r.n_interior as f64).collect();
    let lambdas: Vec<f64> = ok.iter().map(|r| r.lambda_hat).collect();
    let n_failed = at.len() - ok.len();
    let checked: Vec<&&ReplicateRow> = ok.iter().filter(|r| r.n_interior >= BIAS_MIN_SAMPLE).collect();
    HorizonSummary {
        horizon,
        n_ok: ok.len(),
        n_failed,
        valid: !ok.is_empty() && (n_failed as f64) <= MAX_FAILURE_FRACTION * at.len() as f64,
        mean_error: if errors.is_empty() { f64::NAN } else { mean(&errors) },
        std_error: if errors.len() > 1 { sample_std(&errors) } else { 0.0 },
        mean_lambda_hat: if lambdas.is_empty() { f64::NAN } else { mean(&lambdas) },
        interior_size: Summary::of(&sizes),
        bias_checked: checked.len(),
        bias_held: checked.iter().filter(|r| r.ks_biased < r.ks_lifetime).count(),
    }
}

/// Pointwise quantiles at `(1 ∓ level)/2` across rows of `curves`.
pub fn confidence_bands(curves: &[Vec<f64>], level: f64) -> (Vec<f64>, Vec<f64>) {
    let n = curves.first().map_or(0, Vec::len);
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = (1.0 + level) / 2.0;
    (0..n)
        .map(|i| {
            let col = sorted(&curves.iter().map(|c| c[i]).collect::<Vec<_>>());
            (quantile_sorted(&col, lo_p), quantile_sorted(&col, hi_p))
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// `−2λ/5`.
    pub reference_slope: f64,
}

/// Least-squares slope of `log ē` against `T`.
pub fn log_slope(horizons: &[f64], mean_errors: &[f64]) -> Result<(f64, f64)> {
    if horizons.len() < 3 || horizons.len() != mean_errors.len() {
        return Err(Error::InvalidArgument(format!(
            "rate regression needs at least 3 horizons, got {}",
            horizons.len()
        )));
    }
    let logs: Vec<f64> = mean_errors.iter().map(|e| e.ln()).collect();
    Ok(ols(horizons, &logs))
}

/// Slope of `log ē` against `T` with a percentile bootstrap interval that
/// resamples replicates within each horizon.
pub fn rate_regression(report: &ExperimentReport) -> Result<Regression> {
    let ts: Vec<f64> = report.horizons.iter().map(|h| h.horizon).collect();
    let errs: Vec<Vec<f64>> = ts
        .iter()
        .map(|&t| {
            report
                .rows
                .iter()
                .filter(|r| r.ok && r.horizon == t)
                .map(|r| r.error)
                .collect()
        })
        .collect();
    if errs.iter().any(Vec::is_empty) {
        return Err(Error::EmptySample("a horizon has no successful replicate"));
    }
    let means: Vec<f64> = errs.iter().map(|e| mean(e)).collect();
    let (slope, intercept) = log_slope(&ts, &means)?;
    let nb = report.config.bootstrap.max(1);
    let mut rng = stream(report.config.seed, stream_id(u32::MAX, 0));
    let mut slopes: Vec<f64> = (0..nb)
        .map(|_| {
            let m: Vec<f64> = errs
                .iter()
                .map(|e| (0..e.len()).map(|_| e[rng.random_range(0..e.len())]).sum::<f64>() / e.len() as f64)
                .collect();
            log_slope(&ts, &m).map(|(s, _)| s).unwrap_or(f64::NAN)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    Ok(Regression {
        slope,
        intercept,
        ci_lower: quantile_sorted(&slopes, 0.025),
        ci_upper: quantile_sorted(&slopes, 0.975),
        reference_slope: -2.0 * report.lambda / 5.0,
    })
}

/// Pass/fail checks on a finished table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableChecks {
    /// Every horizon has at most 5% failed replicates.
    pub valid: bool,
    /// Mean error decreases in `T`, allowing one inversion between
    /// adjacent horizons.
    pub trend: bool,
    pub inversions: usize,
}

impl TableChecks {
    pub fn passed(&self) -> bool {
        self.valid && self.trend
    }
}

impl ExperimentReport {
    pub fn checks(&self) -> TableChecks {
        let e: Vec<f64> = self.horizons.iter().map(|h| h.mean_error).collect();
        let inversions = e.windows(2).filter(|w| !(w[1] < w[0])).count();
        TableChecks {
            valid: self.horizons.iter().all(|h| h.valid),
            trend: inversions <= 1,
            inversions,
        }
    }

    pub fn summary(&self, t: f64) -> Option<&HorizonSummary> {
        self.horizons.iter().find(|h| h.horizon == t)
    }

    pub fn write_raw_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregate_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "T", "n_ok", "n_failed", "valid", "mean_error", "std_error", "mean_lambda_hat", "interior_min",
            "interior_q1", "interior_median", "interior_q3", "interior_max", "interior_mean", "interior_std",
            "bias_checked", "bias_held",
        ])?;
        for h in &self.horizons {
            let s = h.interior_size;
            let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            w.write_record([
                h.horizon.to_string(),
                h.n_ok.to_string(),
                h.n_failed.to_string(),
                h.valid.to_string(),
                h.mean_error.to_string(),
                h.std_error.to_string(),
                h.mean_lambda_hat.to_string(),
                f(s.map(|s| s.min)),
                f(s.map(|s| s.q1)),
                f(s.map(|s| s.median)),
                f(s.map(|s| s.q3)),
                f(s.map(|s| s.max)),
                f(s.map(|s| s.mean)),
                f(s.map(|s| s.std)),
                h.bias_checked.to_string(),
                h.bias_held.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_band_csv<W: std::io::Write>(band: &Band, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["x", "mean", "lo", "hi", "truth"])?;
        for i in 0..band.x.len() {
            w.write_record([
                band.x[i].to_string(),
                band.mean[i].to_string(),
                band.lower[i].to_string(),
                band.upper[i].to_string(),
                band.truth[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write `raw.csv`, `aggregate.csv`, `summary.json`, `band_T<T>.csv`
    /// and `rate.csv` (plot data for error against `T`) into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_raw_csv(fs::File::create(dir.join("raw.csv"))?)?;
        self.write_aggregate_csv(fs::File::create(dir.join("aggregate.csv"))?)?;
        for b in &self.bands {
            Self::write_band_csv(b, fs::File::create(dir.join(format!("band_T{}.csv", b.horizon)))?)?;
        }
        let mut w = csv::Writer::from_writer(fs::File::create(dir.join("rate.csv"))?);
        w.write_record(["T", "mean_error", "log_mean_error", "reference"])?;
        let first = self.horizons.first().map(|h| (h.horizon, h.mean_error));
        for h in &self.horizons {
            let reference = first.map_or(f64::NAN, |(t0, e0)| e0 * (-2.0 * self.lambda / 5.0 * (h.horizon - t0)).exp());
            w.write_record([
                h.horizon.to_string(),
                h.mean_error.to_string(),
                h.mean_error.ln().to_string(),
                reference.to_string(),
            ])?;
        }
        w.flush()?;
        let regression = rate_regression(self).ok();
        let summary = serde_json::json!({
            "config": self.config,
            "lambda": self.lambda,
            "horizons": self.horizons,
            "regression": regression,
            "checks": self.checks(),
        });
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}
