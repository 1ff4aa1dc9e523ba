//! Metrics streaming: one CSV record per logging interval.
//!
//! `metrics.csv` holds only quantities determined by the configuration and
//! seed, so replays are byte-identical. Wall-clock time goes to the sidecar
//! `timing.csv`.

use std::fs::File;
use std::path::Path;
use std::time::Instant;

use crate::error::Result;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";

/// Header for the configured IW bound sizes.
pub fn header(iw_k: &[usize]) -> Vec<String> {
    let mut h: Vec<String> = vec!["step".into(), "gamma".into(), "elbo".into()];
    h.extend(iw_k.iter().map(|k| format!("iw_lb_k{k}")));
    h.extend(
        ["kl_to_truth", "log_z_gap", "acceptance", "grad_norm"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    pub gamma: f64,
    pub elbo: Option<f64>,
    pub iw_lb: Vec<Option<f64>>,
    /// Exact `KL(p0 || p_theta)` when the model is enumerable or on a grid.
    pub kl_to_truth: Option<f64>,
    /// `c - log Z` for fields with a learned normalizer.
    pub log_z_gap: Option<f64>,
    pub acceptance: Option<f64>,
    /// Infinity norm of the last mean field.
    pub grad_norm: f64,
}

fn num(v: f64) -> String {
    // Shortest round-trip representation; stable across platforms.
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl MetricRecord {
    pub fn fields(&self) -> Vec<String> {
        let mut f = vec![self.step.to_string(), num(self.gamma), opt(self.elbo)];
        f.extend(self.iw_lb.iter().map(|v| opt(*v)));
        f.push(opt(self.kl_to_truth));
        f.push(opt(self.log_z_gap));
        f.push(opt(self.acceptance));
        f.push(num(self.grad_norm));
        f
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_path(path)?)
}

/// Append-only writer for `metrics.csv` and `timing.csv`.
pub struct MetricsWriter {
    metrics: csv::Writer<File>,
    timing: csv::Writer<File>,
    start: Instant,
    columns: usize,
    pub last: Option<MetricRecord>,
}

impl MetricsWriter {
    pub fn create(dir: &Path, iw_k: &[usize]) -> Result<Self> {
        let h = header(iw_k);
        let mut metrics = writer(&dir.join(METRICS_FILE))?;
        metrics.write_record(&h)?;
        metrics.flush()?;
        let mut timing = writer(&dir.join(TIMING_FILE))?;
        timing.write_record(["step", "wall_clock_s"])?;
        timing.flush()?;
        Ok(MetricsWriter {
            metrics,
            timing,
            start: Instant::now(),
            columns: h.len(),
            last: None,
        })
    }

    pub fn write(&mut self, rec: MetricRecord) -> Result<()> {
        let f = rec.fields();
        debug_assert_eq!(f.len(), self.columns);
        self.metrics.write_record(&f)?;
        self.metrics.flush()?;
        let secs = self.start.elapsed().as_secs_f64();
        self.timing.write_record([rec.step.to_string(), format!("{secs:.3}")])?;
        self.timing.flush()?;
        self.last = Some(rec);
        Ok(())
    }
}

/// Header and rows of a metrics file.
pub fn read_metrics(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let h = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((h, rows))
}
