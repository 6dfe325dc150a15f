//! Report schemas and writers.
//!
//! Trial CSV columns, in order:
//! `variant,n,d,k,s_or_Rq,q,eta,lambda,seed,error_sq,bound_delta,hypotheses_ok,iters,rho_hat,wall_time_ms`.
//! `k` is the number of units (coordinates, groups or atoms), `q` is `0` for
//! hard sparsity, and `rho_hat` is empty when no iterates were recorded.
//! `bound_delta` is empty when the curvature estimate is not positive.
//!
//! Plot-data CSV columns: `n,eta,median_error_sq,q25,q75,theory,theory_scaled`.
//! `theory` is the constant-free corollary rate and `theory_scaled` the same
//! curve multiplied by the least-squares constant in log space.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use hiermap::Variant;

pub const TRIAL_COLUMNS: [&str; 15] = [
    "variant",
    "n",
    "d",
    "k",
    "s_or_Rq",
    "q",
    "eta",
    "lambda",
    "seed",
    "error_sq",
    "bound_delta",
    "hypotheses_ok",
    "iters",
    "rho_hat",
    "wall_time_ms",
];

pub const PLOT_COLUMNS: [&str; 7] = ["n", "eta", "median_error_sq", "q25", "q75", "theory", "theory_scaled"];

/// One solved trial. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub variant: Variant,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    #[serde(rename = "s_or_Rq")]
    pub s_or_rq: f64,
    pub q: f64,
    pub eta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub error_sq: f64,
    /// Certified radius; `None` when the curvature estimate is not positive.
    pub bound_delta: Option<f64>,
    pub hypotheses_ok: bool,
    pub iters: usize,
    pub rho_hat: Option<f64>,
    pub wall_time_ms: f64,
}

impl TrialRecord {
    /// Same record with timing removed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_ms: 0.0,
            ..self.clone()
        }
    }
}

/// One `(n, eta)` grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n: usize,
    pub eta: f64,
    pub lambda: f64,
    pub trials: Vec<TrialRecord>,
    pub median_error_sq: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    /// Constant-free corollary rate at this `n`.
    pub theory: f64,
    /// True when every trial ran and the solver converged.
    pub completed: bool,
    pub failures: Vec<String>,
}

impl CellReport {
    pub fn summarize(&mut self) {
        let errs: Vec<f64> = self.trials.iter().map(|t| t.error_sq).collect();
        self.median_error_sq = quantile(&errs, 0.5);
        self.q25 = quantile(&errs, 0.25);
        self.q75 = quantile(&errs, 0.75);
    }
}

/// Ordinary least-squares fit of `log median_error_sq` on `log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    /// 95% Student-t interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Minimum number of grid points for a slope fit.
pub const MIN_FIT_POINTS: usize = 4;

/// Fit `y = intercept + slope x`; `None` with fewer than
/// [`MIN_FIT_POINTS`] points or a degenerate abscissa.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let m = xs.len();
    if m != ys.len() || m < MIN_FIT_POINTS {
        return None;
    }
    let mf = m as f64;
    let mx = xs.iter().sum::<f64>() / mf;
    let my = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = mf - 2.0;
    let se = (ssr / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).ok()?.inverse_cdf(0.975);
    Some(SlopeFit {
        slope,
        ci_low: slope - t * se,
        ci_high: slope + t * se,
        intercept,
        points: m,
    })
}

/// Log-log fit of median error against `n` over completed cells.
pub fn fit_cells<'a>(cells: impl IntoIterator<Item = &'a CellReport>) -> Option<SlopeFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = cells
        .into_iter()
        .filter_map(|c| c.median_error_sq.filter(|&m| m > 0.0).map(|m| ((c.n as f64).ln(), m.ln())))
        .unzip();
    fit_slope(&xs, &ys)
}

/// Linear-interpolation quantile of the sorted sample (the common "type 7").
pub fn quantile(xs: &[f64], p: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// `{spec, cells, fits}` written by the sweep command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: serde_json::Value,
    pub cells: Vec<CellReport>,
    /// Fit over the cells of the first `eta` in the grid.
    pub fits: Option<SlopeFit>,
}

impl ExperimentReport {
    pub fn trials(&self) -> impl Iterator<Item = &TrialRecord> {
        self.cells.iter().flat_map(|c| c.trials.iter())
    }

    pub fn all_completed(&self) -> bool {
        self.cells.iter().all(|c| c.completed)
    }
}

pub fn trials_to_csv<'a>(trials: impl IntoIterator<Item = &'a TrialRecord>) -> Result<String, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(TRIAL_COLUMNS)?;
    for t in trials {
        w.serialize(t)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn trials_from_csv(text: &str) -> Result<Vec<TrialRecord>, csv::Error> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().collect()
}

pub fn plot_data_csv(cells: &[CellReport]) -> Result<String, csv::Error> {
    // Constant that best aligns the theory curve with the medians in log space.
    let logs: Vec<f64> = cells
        .iter()
        .filter_map(|c| c.median_error_sq.filter(|&m| m > 0.0 && c.theory > 0.0).map(|m| (m / c.theory).ln()))
        .collect();
    let scale = if logs.is_empty() {
        f64::NAN
    } else {
        (logs.iter().sum::<f64>() / logs.len() as f64).exp()
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PLOT_COLUMNS)?;
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    for c in cells {
        w.write_record([
            c.n.to_string(),
            format!("{:e}", c.eta),
            fmt(c.median_error_sq),
            fmt(c.q25),
            fmt(c.q75),
            format!("{:e}", c.theory),
            format!("{:e}", c.theory * scale),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Write `report.json`, `trials.csv` and `plot_data.csv` into `dir`.
pub fn write_experiment(dir: &Path, report: &ExperimentReport) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    std::fs::write(dir.join("trials.csv"), trials_to_csv(report.trials()).map_err(std::io::Error::other)?)?;
    std::fs::write(
        dir.join("plot_data.csv"),
        plot_data_csv(&report.cells).map_err(std::io::Error::other)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, rho: Option<f64>) -> TrialRecord {
        TrialRecord {
            variant: Variant::Group,
            n: 64,
            d: 32,
            k: 8,
            s_or_rq: 2.0,
            q: 0.0,
            eta: 1e-3,
            lambda: 0.25,
            seed,
            error_sq: 0.125,
            bound_delta: None,
            hypotheses_ok: false,
            iters: 17,
            rho_hat: rho,
            wall_time_ms: 1.5,
        }
    }

    #[test]
    fn trial_csv_header_and_round_trip() {
        let rows = vec![record(1, Some(0.5)), record(u64::MAX, None)];
        let text = trials_to_csv(&rows).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRIAL_COLUMNS.join(","));
        assert!(text.lines().nth(1).unwrap().starts_with("group,64,32,8,"));
        assert_eq!(trials_from_csv(&text).unwrap(), rows);
    }

    #[test]
    fn slope_fit_recovers_exact_line() {
        let xs: Vec<f64> = [128.0f64, 256.0, 512.0, 1024.0].iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - x).collect();
        let f = fit_slope(&xs, &ys).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.ci_high - f.ci_low).abs() < 1e-9);
        assert!(fit_slope(&xs[..3], &ys[..3]).is_none());
    }

    #[test]
    fn slope_interval_uses_t_quantile() {
        // Residuals (+1, -1, -1, +1) around slope 0: SSR = 4, Sxx = 5, dof = 2.
        let f = fit_slope(&[0.0, 1.0, 2.0, 3.0], &[1.0, -1.0, -1.0, 1.0]).unwrap();
        assert!(f.slope.abs() < 1e-12);
        let half = 4.302652729911275 * (4.0f64 / 2.0 / 5.0).sqrt();
        assert!((f.ci_high - half).abs() < 1e-9);
    }

    #[test]
    fn quantiles() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.5), Some(2.5));
        assert_eq!(quantile(&xs, 0.25), Some(1.75));
        assert_eq!(quantile(&xs, 1.0), Some(4.0));
        assert_eq!(quantile(&[], 0.5), None);
    }
}
