//! Maps measured timeliness onto C-V2X service-level requirements and turns a
//! timely-delivery ratio into the probability of at least one AoI-threshold
//! violation over a hazard window.
//!
//! Update opportunities inside a window are treated as independent, so a
//! window of `n` opportunities fails with probability `1 - tdr^n`. Every
//! verdict carries [`INDEPENDENCE_ASSUMPTION`] so exported results say so.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricsError, MetricsReport, TdrKind};

pub const INDEPENDENCE_ASSUMPTION: &str = "independent update opportunities within the hazard window";

pub const VERDICT_CSV_HEADER: [&str; 6] = ["service", "x", "measured_tdr", "gap", "h_s", "violation_prob"];

#[derive(Debug, Error)]
pub enum SafetyError {
    #[error("window shorter than one update interval ({window_s} s < {rri_ms} ms)")]
    WindowTooShort { window_s: f64, rri_ms: u64 },
    #[error("tdr must lie in [0, 1], got {0}")]
    InvalidTdr(f64),
    #[error("hazard window must be positive and finite, got {0}")]
    InvalidWindow(f64),
    #[error("service `{name}`: {reason}")]
    InvalidService { name: String, reason: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("service catalog: {0}")]
    Catalog(#[from] csv::Error),
}

/// A service and the timeliness it must reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub name: String,
    pub aoi_threshold_ms: u64,
    /// Required fraction of timely deliveries.
    pub target_slr: f64,
}

impl ServiceSpec {
    pub fn new(name: impl Into<String>, aoi_threshold_ms: u64, target_slr: f64) -> Result<Self, SafetyError> {
        let spec = ServiceSpec { name: name.into(), aoi_threshold_ms, target_slr };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SafetyError> {
        let bad = |reason: &str| SafetyError::InvalidService { name: self.name.clone(), reason: reason.into() };
        if self.name.trim().is_empty() {
            return Err(bad("empty name"));
        }
        if self.aoi_threshold_ms == 0 {
            return Err(bad("threshold must be positive"));
        }
        if !(self.target_slr > 0.0 && self.target_slr <= 1.0) {
            return Err(bad("target_slr must lie in (0, 1]"));
        }
        Ok(())
    }
}

pub fn builtin_services() -> Vec<ServiceSpec> {
    vec![
        ServiceSpec { name: "FCW".into(), aoi_threshold_ms: 100, target_slr: 0.9999 },
        ServiceSpec { name: "EBW".into(), aoi_threshold_ms: 120, target_slr: 0.9999 },
        ServiceSpec { name: "LCW".into(), aoi_threshold_ms: 400, target_slr: 0.9990 },
    ]
}

#[derive(Deserialize)]
struct CatalogRow {
    name: String,
    threshold_ms: u64,
    target_slr: f64,
}

/// Reads a `name,threshold_ms,target_slr` catalog.
pub fn load_catalog<R: Read>(input: R) -> Result<Vec<ServiceSpec>, SafetyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: CatalogRow = row?;
        out.push(ServiceSpec::new(row.name, row.threshold_ms, row.target_slr)?);
    }
    Ok(out)
}

/// `0.1, 0.2, ..., 3.0` seconds.
pub fn default_hazard_windows() -> Vec<f64> {
    (1..=30).map(|i| i as f64 / 10.0).collect()
}

/// Update opportunities of period `rri_ms` that fit in `window_s`.
pub fn opportunities(window_s: f64, rri_ms: u64) -> u64 {
    let ms = (window_s * 1000.0).round() as u64;
    ms / rri_ms.max(1)
}

pub fn violation_probability(tdr: f64, window_s: f64, rri_ms: u64) -> Result<f64, SafetyError> {
    if !(0.0..=1.0).contains(&tdr) {
        return Err(SafetyError::InvalidTdr(tdr));
    }
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(SafetyError::InvalidWindow(window_s));
    }
    let n = opportunities(window_s, rri_ms);
    if n == 0 {
        return Err(SafetyError::WindowTooShort { window_s, rri_ms });
    }
    Ok(1.0 - tdr.powi(n.min(i32::MAX as u64) as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub window_s: f64,
    pub violation_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    pub service: String,
    pub aoi_threshold_ms: u64,
    pub target_slr: f64,
    pub x: f64,
    pub tdr_kind: TdrKind,
    pub measured_tdr: f64,
    /// Target minus measured.
    pub slr_gap: f64,
    /// The same gap in percentage points.
    pub gap_pp: f64,
    #[serde(rename = "unsafe")]
    pub unsafe_: bool,
    pub violation_curve: Vec<CurvePoint>,
    pub assumption: String,
}

pub fn evaluate_service(
    spec: &ServiceSpec,
    report: &MetricsReport,
    kind: TdrKind,
    x: f64,
    windows_s: &[f64],
    rri_ms: u64,
) -> Result<SafetyVerdict, SafetyError> {
    spec.validate()?;
    let measured = report.tdr(spec.aoi_threshold_ms, kind)?;
    verdict_from_tdr(spec, measured, kind, x, windows_s, rri_ms)
}

pub fn verdict_from_tdr(
    spec: &ServiceSpec,
    measured_tdr: f64,
    kind: TdrKind,
    x: f64,
    windows_s: &[f64],
    rri_ms: u64,
) -> Result<SafetyVerdict, SafetyError> {
    let slr_gap = spec.target_slr - measured_tdr;
    let violation_curve = windows_s
        .iter()
        .map(|&h| Ok(CurvePoint { window_s: h, violation_prob: violation_probability(measured_tdr, h, rri_ms)? }))
        .collect::<Result<Vec<_>, SafetyError>>()?;
    Ok(SafetyVerdict {
        service: spec.name.clone(),
        aoi_threshold_ms: spec.aoi_threshold_ms,
        target_slr: spec.target_slr,
        x,
        tdr_kind: kind,
        measured_tdr,
        slr_gap,
        gap_pp: slr_gap * 100.0,
        unsafe_: slr_gap > 0.0,
        violation_curve,
        assumption: INDEPENDENCE_ASSUMPTION.into(),
    })
}

pub fn verdicts_to_json(verdicts: &[SafetyVerdict]) -> String {
    serde_json::to_string_pretty(verdicts).expect("verdicts serialize")
}

/// One row per verdict and window.
pub fn write_verdicts_csv<W: Write>(out: W, verdicts: &[SafetyVerdict]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VERDICT_CSV_HEADER)?;
    for v in verdicts {
        for p in &v.violation_curve {
            w.write_record([
                v.service.clone(),
                v.x.to_string(),
                format!("{:.6}", v.measured_tdr),
                format!("{:.6}", v.slr_gap),
                format!("{:.1}", p.window_s),
                format!("{:.6}", p.violation_prob),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn report_with(tdr: &[(u64, f64)]) -> MetricsReport {
        let map: BTreeMap<u64, f64> = tdr.iter().copied().collect();
        let mut r = crate::metrics::MetricsAccumulator::empty(&[]).report();
        r.tdr_gap_per_threshold = map.clone();
        r.tdr_per_threshold = map;
        r
    }

    #[test]
    fn builtins() {
        let s = builtin_services();
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].name.as_str(), s[0].aoi_threshold_ms, s[0].target_slr), ("FCW", 100, 0.9999));
        assert_eq!((s[1].name.as_str(), s[1].aoi_threshold_ms, s[1].target_slr), ("EBW", 120, 0.9999));
        assert_eq!((s[2].name.as_str(), s[2].aoi_threshold_ms, s[2].target_slr), ("LCW", 400, 0.9990));
    }

    #[test]
    fn table_gaps() {
        let s = builtin_services();
        let r = report_with(&[(100, 0.8468), (120, 0.8494), (400, 0.8606)]);
        let w = default_hazard_windows();
        let fcw = evaluate_service(&s[0], &r, TdrKind::UpdateGap, 0.9, &w, 100).unwrap();
        assert!((fcw.gap_pp - 15.31).abs() < 1e-9);
        assert!(fcw.unsafe_);
        let ebw = evaluate_service(&s[1], &r, TdrKind::UpdateGap, 0.9, &w, 100).unwrap();
        assert!((ebw.gap_pp - 15.05).abs() < 1e-9);
        let lcw = evaluate_service(&s[2], &r, TdrKind::ResetAge, 0.9, &w, 100).unwrap();
        assert!((lcw.gap_pp - 13.84).abs() < 1e-9);
        assert_eq!(fcw.assumption, INDEPENDENCE_ASSUMPTION);
    }

    #[test]
    fn boundary_safe() {
        let spec = ServiceSpec::new("X", 100, 0.9).unwrap();
        let v = verdict_from_tdr(&spec, 0.9, TdrKind::UpdateGap, 0.0, &[1.0], 100).unwrap();
        assert_eq!(v.slr_gap, 0.0);
        assert!(!v.unsafe_);
    }

    #[test]
    fn missing_threshold() {
        let r = report_with(&[(100, 0.9)]);
        let err = evaluate_service(&builtin_services()[2], &r, TdrKind::UpdateGap, 0.0, &[1.0], 100).unwrap_err();
        assert!(err.to_string().contains("--threshold 400"), "{err}");
    }

    #[test]
    fn violation_examples() {
        assert_eq!(violation_probability(1.0, 2.5, 100).unwrap(), 0.0);
        assert_eq!(violation_probability(0.5, 0.1, 100).unwrap(), 0.5);
        let p = violation_probability(0.8468, 2.0, 100).unwrap();
        assert!((p - (1.0 - 0.8468f64.powi(20))).abs() < 1e-15);
        assert!((p - 0.964).abs() < 0.001);
        let e = violation_probability(0.9, 0.05, 100).unwrap_err();
        assert!(e.to_string().contains("window shorter than one update interval"));
        assert!(violation_probability(1.1, 1.0, 100).is_err());
        assert!(violation_probability(0.5, 0.0, 100).is_err());
    }

    #[test]
    fn windows_grid() {
        let w = default_hazard_windows();
        assert_eq!(w.len(), 30);
        assert_eq!(w[0], 0.1);
        assert_eq!(w[29], 3.0);
        assert!(w.iter().all(|&h| opportunities(h, 100) as f64 == (h * 10.0).round()));
    }

    #[test]
    fn catalog() {
        let text = "name,threshold_ms,target_slr\nFCW, 100, 0.9999\nCLW,300,0.99\n";
        let c = load_catalog(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1], ServiceSpec { name: "CLW".into(), aoi_threshold_ms: 300, target_slr: 0.99 });
        assert!(load_catalog("name,threshold_ms,target_slr\nA,0,0.5\n".as_bytes()).is_err());
        assert!(load_catalog("name,threshold_ms,target_slr\nA,10,1.5\n".as_bytes()).is_err());
        assert!(load_catalog("name,threshold_ms\nA,10\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_rows() {
        let spec = &builtin_services()[0];
        let v = verdict_from_tdr(spec, 0.5, TdrKind::UpdateGap, 0.9, &[0.1, 0.2], 100).unwrap();
        let mut buf = Vec::new();
        write_verdicts_csv(&mut buf, &[v]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "service,x,measured_tdr,gap,h_s,violation_prob");
        assert_eq!(lines[1], "FCW,0.9,0.500000,0.499900,0.1,0.500000");
        assert_eq!(lines[2], "FCW,0.9,0.500000,0.499900,0.2,0.750000");
    }

    proptest! {
        #[test]
        fn monotone_in_window_and_tdr(a in 0.0f64..=1.0, b in 0.0f64..=1.0, i in 1u32..60, j in 1u32..60) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (hs, hl) = (i.min(j) as f64 / 10.0, i.max(j) as f64 / 10.0);
            let p = |t, h| violation_probability(t, h, 100).unwrap();
            prop_assert!(p(lo, hs) <= p(lo, hl));
            prop_assert!(p(hi, hs) <= p(lo, hs));
            let v = p(lo, hl);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn gap_bounded(t in 0.0f64..=1.0, slr in 0.0001f64..=1.0) {
            let spec = ServiceSpec::new("S", 100, slr).unwrap();
            let v = verdict_from_tdr(&spec, t, TdrKind::UpdateGap, 0.0, &default_hazard_windows(), 100).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v.slr_gap));
            prop_assert!(v.violation_curve.windows(2).all(|w| w[0].violation_prob <= w[1].violation_prob));
        }
    }
}
