//! Volume accuracy metrics and the CSV report.
//!
//! `relative_error` is `(X − X₀)/X₀·100` with X the real volume and X₀ the
//! measured one. `precision_metric` divides `|RE|` by the real volume X; that
//! reading is the one that reproduces the published per-experiment
//! uncertainties and their averages.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("volume must be positive, got {0}")]
    NonPositive(f64),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub experiment: String,
    pub method: String,
    #[serde(rename = "exp_volume_cm3")]
    pub experimental_volume: f64,
    #[serde(rename = "real_volume_cm3")]
    pub real_volume: f64,
    #[serde(rename = "real_uncertainty_cm3", default = "default_uncertainty")]
    pub real_uncertainty: f64,
}

fn default_uncertainty() -> f64 {
    0.5
}

impl VolumeRecord {
    pub fn new(experiment: impl Into<String>, method: impl Into<String>, experimental: f64, real: f64) -> Self {
        VolumeRecord {
            experiment: experiment.into(),
            method: method.into(),
            experimental_volume: experimental,
            real_volume: real,
            real_uncertainty: default_uncertainty(),
        }
    }

    pub fn relative_error(&self) -> Result<f64, MetricsError> {
        relative_error(self.real_volume, self.experimental_volume)
    }

    pub fn precision(&self) -> Result<f64, MetricsError> {
        precision_metric(self.real_volume, self.experimental_volume)
    }
}

/// Signed relative percent error of `experimental` against `real`.
pub fn relative_error(real: f64, experimental: f64) -> Result<f64, MetricsError> {
    if !(experimental > 0.0) {
        return Err(MetricsError::NonPositive(experimental));
    }
    Ok((real - experimental) / experimental * 100.0)
}

/// `|RE| / X · 100` with X the real volume.
pub fn precision_metric(real: f64, experimental: f64) -> Result<f64, MetricsError> {
    if !(real > 0.0) {
        return Err(MetricsError::NonPositive(real));
    }
    Ok(relative_error(real, experimental)?.abs() / real * 100.0)
}

/// Half-up rounding to two decimals (half away from zero for negatives).
pub fn round2(v: f64) -> f64 {
    // The nudge keeps decimal ties such as 1.005 (stored as 1.00499…) rounding up.
    let r = (v.abs() * 100.0 + 1e-9).round() / 100.0;
    if v < 0.0 {
        -r
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub method: String,
    pub experimental_volume: Option<f64>,
    pub real_volume: Option<f64>,
    pub relative_error: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// One per method, in order of first appearance.
    pub averages: Vec<ReportRow>,
}

impl Report {
    pub fn average_for(&self, method: &str) -> Option<&ReportRow> {
        self.averages.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("experiment,method,exp_volume_cm3,real_volume_cm3,RE_pct,precision_pct\n");
        for r in self.rows.iter().chain(&self.averages) {
            let vol = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{:.2},{:.2}\n",
                csv_field(&r.experiment),
                csv_field(&r.method),
                vol(r.experimental_volume),
                vol(r.real_volume),
                round2(r.relative_error),
                round2(r.precision),
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-record RE and precision plus per-method averages (computed on the
/// unrounded values).
pub fn report(records: &[VolumeRecord]) -> Result<Report, MetricsError> {
    let mut rows = Vec::with_capacity(records.len());
    let mut methods: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for rec in records {
        let re = rec.relative_error()?;
        let prec = rec.precision()?;
        rows.push(ReportRow {
            experiment: rec.experiment.clone(),
            method: rec.method.clone(),
            experimental_volume: Some(rec.experimental_volume),
            real_volume: Some(rec.real_volume),
            relative_error: re,
            precision: prec,
        });
        match methods.iter_mut().find(|(m, _)| *m == rec.method) {
            Some((_, v)) => v.push((re, prec)),
            None => methods.push((rec.method.clone(), vec![(re, prec)])),
        }
    }
    let averages = methods
        .into_iter()
        .map(|(method, vals)| {
            let n = vals.len() as f64;
            ReportRow {
                experiment: "AVERAGE".into(),
                method,
                experimental_volume: None,
                real_volume: None,
                relative_error: vals.iter().map(|v| v.0).sum::<f64>() / n,
                precision: vals.iter().map(|v| v.1).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(Report { rows, averages })
}

pub fn read_records(reader: impl Read) -> Result<Vec<VolumeRecord>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(MetricsError::from)).collect()
}

pub fn write_records(records: &[VolumeRecord], writer: impl Write) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(240.0, 240.0).unwrap(), 0.0);
        assert!((relative_error(565.0, 559.2).unwrap() - 1.0372).abs() < 5e-5);
        assert!((relative_error(240.0, 258.9).unwrap() + 7.3001).abs() < 5e-5);
        assert!(relative_error(1.0, 0.0).is_err());
    }

    #[test]
    fn precision_examples() {
        assert!((precision_metric(240.0, 258.9).unwrap() - 3.04).abs() <= 0.01);
        assert!((precision_metric(565.0, 559.2).unwrap() - 0.18).abs() <= 0.01);
        assert!((precision_metric(720.0, 694.1).unwrap() - 0.52).abs() <= 0.01);
        assert!(precision_metric(0.0, 1.0).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round2(1.005), 1.01);
        assert_eq!(round2(2.675), 2.68);
        assert_eq!(round2(-7.30015), -7.30);
        assert_eq!(round2(-0.125), -0.13);
        assert_eq!(round2(4.98149), 4.98);
    }

    #[test]
    fn empty_report() {
        let r = report(&[]).unwrap();
        assert!(r.rows.is_empty() && r.averages.is_empty());
        assert_eq!(r.to_csv(), "experiment,method,exp_volume_cm3,real_volume_cm3,RE_pct,precision_pct\n");
    }

    #[test]
    fn report_csv_layout() {
        let recs = vec![VolumeRecord::new("1", "a,b", 258.9, 240.0), VolumeRecord::new("2", "a,b", 559.2, 565.0)];
        let csv = report(&recs).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "1,\"a,b\",258.9,240,-7.30,3.04");
        assert_eq!(lines[2], "2,\"a,b\",559.2,565,1.04,0.18");
        assert!(lines[3].starts_with("AVERAGE,\"a,b\",,,"));
    }

    #[test]
    fn records_roundtrip_through_csv() {
        let recs = vec![VolumeRecord::new("1", "proposed", 258.9, 240.0)];
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
        let no_unc = "experiment,method,exp_volume_cm3,real_volume_cm3\n1,p,2,3\n";
        assert_eq!(read_records(no_unc.as_bytes()).unwrap()[0].real_uncertainty, 0.5);
    }
}
