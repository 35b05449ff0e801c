//! Age-of-Information sawtooth statistics, PRR, timely-delivery ratios and
//! resource availability, computed from the simulator's event stream.
//!
//! Areas are integrated exactly: between successes the AoI of a pair grows
//! with slope one, so twice the area over `[a, b]` is `(b−g)² − (a−g)²`
//! where `g` is the generation time the last reset refers to.

mod tracker;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Config;
use crate::sim::{run_with_sink, EventSink, RxEvent, RxOutcome, SimError, SimOptions, TxEvent, World};

pub use tracker::{AoiTracker, ResetRule, ResetSample};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("pair ({tx}, {rx}): reception at {now} ms precedes the previous one at {last} ms")]
    NonMonotone { tx: u32, rx: u32, last: u64, now: u64 },
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("threshold {0} ms was not registered; re-run with it registered (e.g. --threshold {0})")]
    ThresholdNotRegistered(u64),
    #[error("cannot merge accumulators with different threshold sets")]
    ThresholdMismatch,
}

/// Which per-packet timeliness a TDR counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdrKind {
    /// Gap between consecutive successful receptions on the pair.
    #[default]
    UpdateGap,
    /// Reset level: reception time minus generation time.
    ResetAge,
    /// Fraction of time the AoI stays at or below the threshold.
    TimeFraction,
}

impl std::str::FromStr for TdrKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "update_gap" | "update-gap" => Ok(TdrKind::UpdateGap),
            "reset_age" | "reset-age" => Ok(TdrKind::ResetAge),
            "time_fraction" | "time-fraction" => Ok(TdrKind::TimeFraction),
            other => Err(format!("unknown TDR kind `{other}` (expected update_gap, reset_age or time_fraction)")),
        }
    }
}

impl std::fmt::Display for TdrKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TdrKind::UpdateGap => "update_gap",
            TdrKind::ResetAge => "reset_age",
            TdrKind::TimeFraction => "time_fraction",
        })
    }
}

/// Raw sums behind a [`MetricsReport`]. Merging is associative and
/// commutative, so replicas can be folded in any order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    pub thresholds_ms: Vec<u64>,
    pub area2: u128,
    pub observed_ms: u64,
    pub pair_mean_sum: f64,
    pub pairs_with_data: u64,
    pub pairs_without_data: u64,
    pub reset_hist: BTreeMap<u64, u64>,
    pub gap_hist: BTreeMap<u64, u64>,
    pub time_at_or_below: Vec<u64>,
    pub tx: u64,
    pub ok: u64,
    pub collision: u64,
    pub phy_loss: u64,
    pub out_of_range: u64,
    pub dropped_packets: u64,
    pub missed_by_drop: u64,
    pub availability_sum: f64,
    pub availability_samples: u64,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

impl MetricsAccumulator {
    pub fn empty(thresholds_ms: &[u64]) -> Self {
        let mut t = thresholds_ms.to_vec();
        t.sort_unstable();
        t.dedup();
        Self { time_at_or_below: vec![0; t.len()], thresholds_ms: t, ..Default::default() }
    }

    pub fn merge(&mut self, other: &MetricsAccumulator) -> Result<(), MetricsError> {
        if self.thresholds_ms != other.thresholds_ms {
            return Err(MetricsError::ThresholdMismatch);
        }
        self.area2 += other.area2;
        self.observed_ms += other.observed_ms;
        self.pair_mean_sum += other.pair_mean_sum;
        self.pairs_with_data += other.pairs_with_data;
        self.pairs_without_data += other.pairs_without_data;
        for (k, v) in &other.reset_hist {
            *self.reset_hist.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.gap_hist {
            *self.gap_hist.entry(*k).or_insert(0) += v;
        }
        for (a, b) in self.time_at_or_below.iter_mut().zip(&other.time_at_or_below) {
            *a += b;
        }
        self.tx += other.tx;
        self.ok += other.ok;
        self.collision += other.collision;
        self.phy_loss += other.phy_loss;
        self.out_of_range += other.out_of_range;
        self.dropped_packets += other.dropped_packets;
        self.missed_by_drop += other.missed_by_drop;
        self.availability_sum += other.availability_sum;
        self.availability_samples += other.availability_samples;
        Ok(())
    }

    /// Updates that should have reached a receiver: received, lost on the
    /// air, or dropped before transmission.
    pub fn expected_updates(&self) -> u64 {
        self.ok + self.collision + self.phy_loss + self.missed_by_drop
    }

    fn hist_tdr(&self, hist: &BTreeMap<u64, u64>, threshold_ms: u64) -> Option<f64> {
        let timely: u64 = hist.range(..=threshold_ms).map(|(_, c)| c).sum();
        ratio(timely as f64, self.expected_updates() as f64)
    }

    pub fn tdr(&self, threshold_ms: u64, kind: TdrKind) -> Result<Option<f64>, MetricsError> {
        let Some(pos) = self.thresholds_ms.iter().position(|&t| t == threshold_ms) else {
            return Err(MetricsError::ThresholdNotRegistered(threshold_ms));
        };
        Ok(match kind {
            TdrKind::ResetAge => self.hist_tdr(&self.reset_hist, threshold_ms),
            TdrKind::UpdateGap => self.hist_tdr(&self.gap_hist, threshold_ms),
            TdrKind::TimeFraction => ratio(self.time_at_or_below[pos] as f64, self.observed_ms as f64),
        })
    }

    pub fn report(&self) -> MetricsReport {
        let mean_of = |h: &BTreeMap<u64, u64>| {
            let n: u64 = h.values().sum();
            ratio(h.iter().map(|(k, c)| *k as f64 * *c as f64).sum(), n as f64)
        };
        let per = |kind| {
            self.thresholds_ms
                .iter()
                .filter_map(|&t| self.tdr(t, kind).ok().flatten().map(|v| (t, v)))
                .collect::<BTreeMap<_, _>>()
        };
        MetricsReport {
            avg_aoi_ms: ratio(self.area2 as f64 / 2.0, self.observed_ms as f64),
            avg_aoi_per_pair_ms: ratio(self.pair_mean_sum, self.pairs_with_data as f64),
            reset_aoi_mean_ms: mean_of(&self.reset_hist),
            mean_update_gap_ms: mean_of(&self.gap_hist),
            prr: ratio(self.ok as f64, (self.ok + self.collision + self.phy_loss) as f64),
            tdr_per_threshold: per(TdrKind::ResetAge),
            tdr_gap_per_threshold: per(TdrKind::UpdateGap),
            time_tdr_per_threshold: per(TdrKind::TimeFraction),
            available_resource_fraction: ratio(self.availability_sum, self.availability_samples as f64),
            n_pairs: self.pairs_with_data,
            n_pairs_no_data: self.pairs_without_data,
            n_tx: self.tx,
            n_receptions: self.ok,
            n_collisions: self.collision,
            n_phy_loss: self.phy_loss,
            n_out_of_range: self.out_of_range,
            n_dropped_packets: self.dropped_packets,
            n_missed_by_drop: self.missed_by_drop,
            observed_ms: self.observed_ms,
        }
    }
}

/// Summary statistics of one run or of merged replicas. `None` means the
/// quantity had no data, never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Pooled time-average AoI: total area over total observed time.
    pub avg_aoi_ms: Option<f64>,
    pub avg_aoi_per_pair_ms: Option<f64>,
    pub reset_aoi_mean_ms: Option<f64>,
    pub mean_update_gap_ms: Option<f64>,
    pub prr: Option<f64>,
    /// Reset-age TDR per registered threshold.
    pub tdr_per_threshold: BTreeMap<u64, f64>,
    pub tdr_gap_per_threshold: BTreeMap<u64, f64>,
    pub time_tdr_per_threshold: BTreeMap<u64, f64>,
    pub available_resource_fraction: Option<f64>,
    pub n_pairs: u64,
    pub n_pairs_no_data: u64,
    pub n_tx: u64,
    pub n_receptions: u64,
    pub n_collisions: u64,
    pub n_phy_loss: u64,
    pub n_out_of_range: u64,
    pub n_dropped_packets: u64,
    pub n_missed_by_drop: u64,
    pub observed_ms: u64,
}

impl MetricsReport {
    pub fn tdr(&self, threshold_ms: u64, kind: TdrKind) -> Result<f64, MetricsError> {
        let map = match kind {
            TdrKind::ResetAge => &self.tdr_per_threshold,
            TdrKind::UpdateGap => &self.tdr_gap_per_threshold,
            TdrKind::TimeFraction => &self.time_tdr_per_threshold,
        };
        map.get(&threshold_ms).copied().ok_or(MetricsError::ThresholdNotRegistered(threshold_ms))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned two-column text.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("no data".to_string(), |v| format!("{v:.4}"));
        let mut rows: Vec<(String, String)> = vec![
            ("avg_aoi_ms".into(), opt(self.avg_aoi_ms)),
            ("avg_aoi_per_pair_ms".into(), opt(self.avg_aoi_per_pair_ms)),
            ("reset_aoi_mean_ms".into(), opt(self.reset_aoi_mean_ms)),
            ("mean_update_gap_ms".into(), opt(self.mean_update_gap_ms)),
            ("prr".into(), opt(self.prr)),
            ("available_resource_fraction".into(), opt(self.available_resource_fraction)),
        ];
        for (name, map) in [
            ("tdr_reset_age", &self.tdr_per_threshold),
            ("tdr_update_gap", &self.tdr_gap_per_threshold),
            ("tdr_time_fraction", &self.time_tdr_per_threshold),
        ] {
            for (t, v) in map {
                rows.push((format!("{name}@{t}ms"), format!("{v:.4}")));
            }
        }
        for (k, v) in [
            ("n_pairs", self.n_pairs),
            ("n_pairs_no_data", self.n_pairs_no_data),
            ("n_tx", self.n_tx),
            ("n_receptions", self.n_receptions),
            ("n_collisions", self.n_collisions),
            ("n_phy_loss", self.n_phy_loss),
            ("n_out_of_range", self.n_out_of_range),
            ("n_dropped_packets", self.n_dropped_packets),
            ("n_missed_by_drop", self.n_missed_by_drop),
            ("observed_ms", self.observed_ms),
        ] {
            rows.push((k.into(), v.to_string()));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

/// Event sink that turns a run into a [`MetricsAccumulator`].
#[derive(Debug, Clone)]
pub struct MetricsCollector {
    tracker: AoiTracker,
    acc: MetricsAccumulator,
    warmup_ms: u64,
    error: Option<MetricsError>,
}

impl MetricsCollector {
    pub fn new(n_vehicles: u32, warmup_ms: u64, thresholds_ms: &[u64], rule: ResetRule) -> Self {
        let acc = MetricsAccumulator::empty(thresholds_ms);
        Self { tracker: AoiTracker::new(n_vehicles, warmup_ms, &acc.thresholds_ms, rule), acc, warmup_ms, error: None }
    }

    /// Keeps every post-warm-up reset sample for CSV export.
    pub fn with_samples(mut self) -> Self {
        self.tracker = self.tracker.with_samples();
        self
    }

    pub fn tracker(&self) -> &AoiTracker {
        &self.tracker
    }

    pub fn finish(self, horizon_ms: u64) -> Result<MetricsAccumulator, MetricsError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let mut acc = self.acc;
        self.tracker.fold_into(horizon_ms, &mut acc)?;
        Ok(acc)
    }
}

impl EventSink for MetricsCollector {
    fn on_tx(&mut self, ev: &TxEvent) {
        if ev.tx_time_ms >= self.warmup_ms {
            self.acc.tx += 1;
        }
    }

    fn on_rx(&mut self, ev: &RxEvent) {
        let counted = ev.rx_time_ms >= self.warmup_ms;
        match ev.outcome {
            RxOutcome::Ok => {
                if let Err(e) = self.tracker.record_reception(ev) {
                    self.error.get_or_insert(e);
                }
                self.acc.ok += counted as u64;
            }
            RxOutcome::Collision | RxOutcome::PhyLoss => {
                self.tracker.record_loss(ev);
                if ev.outcome == RxOutcome::Collision {
                    self.acc.collision += counted as u64;
                } else {
                    self.acc.phy_loss += counted as u64;
                }
            }
            RxOutcome::OutOfRange => self.acc.out_of_range += counted as u64,
        }
    }

    fn on_drop(&mut self, ev: &crate::sim::DropEvent) {
        if ev.time_ms >= self.warmup_ms {
            self.acc.dropped_packets += ev.packets as u64;
            self.acc.missed_by_drop += ev.packets as u64 * ev.audience as u64;
        }
    }

    fn on_availability(&mut self, time_ms: u64, fraction: f64) {
        if time_ms >= self.warmup_ms {
            self.acc.availability_sum += fraction;
            self.acc.availability_samples += 1;
        }
    }
}

/// Runs the simulator and collects metrics in one pass.
pub fn simulate(
    cfg: &Config,
    opts: &SimOptions,
    thresholds_ms: &[u64],
    rule: ResetRule,
) -> Result<(MetricsAccumulator, World), SimulateError> {
    let mut col = MetricsCollector::new(cfg.scenario.n_vehicles, opts.warmup_for(&cfg.sps), thresholds_ms, rule);
    let world = run_with_sink(cfg, opts, &mut col)?;
    Ok((col.finish(cfg.sim_duration_ms)?, world))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Fraction of `samples` at or below `threshold_ms`.
pub fn tdr(samples: &[f64], threshold_ms: f64) -> Option<f64> {
    ratio(samples.iter().filter(|&&s| s <= threshold_ms).count() as f64, samples.len() as f64)
}

/// Successful over attempted in-range receptions; out-of-range pairs and
/// packets never transmitted do not count.
pub fn prr(events: &[RxEvent]) -> Option<f64> {
    let (mut ok, mut all) = (0u64, 0u64);
    for e in events {
        match e.outcome {
            RxOutcome::Ok => {
                ok += 1;
                all += 1;
            }
            RxOutcome::Collision | RxOutcome::PhyLoss => all += 1,
            RxOutcome::OutOfRange => {}
        }
    }
    ratio(ok as f64, all as f64)
}

pub const RESET_CSV_HEADER: [&str; 4] = ["tx_id", "rx_id", "rx_ms", "reset_ms"];

pub fn write_reset_samples_csv<W: Write>(out: W, samples: &[ResetSample]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESET_CSV_HEADER)?;
    for s in samples {
        w.write_record([s.tx_id.to_string(), s.rx_id.to_string(), s.rx_ms.to_string(), s.reset_ms.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Csr;

    fn rx(tx: u32, r: u32, gen: i64, at: u64, outcome: RxOutcome) -> RxEvent {
        RxEvent { tx_id: tx, rx_id: r, gen_time_ms: gen, rx_time_ms: at, csr: Csr::new(0, 0, 1), outcome }
    }

    #[test]
    fn sample_tdr_examples() {
        assert_eq!(tdr(&[100.5; 10], 120.0), Some(1.0));
        assert_eq!(tdr(&[150.0; 10], 100.0), Some(0.0));
        assert_eq!(tdr(&[], 100.0), None);
    }

    #[test]
    fn prr_examples() {
        let evs = [
            rx(0, 1, 0, 1, RxOutcome::Ok),
            rx(0, 2, 0, 1, RxOutcome::OutOfRange),
            rx(0, 3, 0, 1, RxOutcome::PhyLoss),
            rx(0, 4, 0, 1, RxOutcome::Collision),
        ];
        assert!((prr(&evs).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(prr(&evs[..2]), Some(1.0));
        assert_eq!(prr(&[]), None);
    }

    #[test]
    fn misses_count_against_tdr() {
        let mut col = MetricsCollector::new(2, 0, &[100, 400], ResetRule::Latency);
        for k in 1..=4u64 {
            col.on_rx(&rx(0, 1, (k * 100 - 50) as i64, k * 100, RxOutcome::Ok));
        }
        col.on_rx(&rx(0, 1, 450, 500, RxOutcome::Collision));
        col.on_drop(&crate::sim::DropEvent { tx_id: 0, time_ms: 500, gen_time_ms: 500, packets: 1, audience: 1 });
        let acc = col.finish(600).unwrap();
        let rep = acc.report();
        assert_eq!(rep.tdr(100, TdrKind::ResetAge).unwrap(), 4.0 / 6.0);
        assert_eq!(rep.tdr(100, TdrKind::UpdateGap).unwrap(), 3.0 / 6.0);
        assert_eq!(rep.prr, Some(0.8));
        assert!(matches!(rep.tdr(120, TdrKind::ResetAge), Err(MetricsError::ThresholdNotRegistered(120))));
    }

    #[test]
    fn merge_is_commutative() {
        let mk = |gen_offset: i64| {
            let mut col = MetricsCollector::new(2, 0, &[100], ResetRule::Latency);
            for k in 1..=5u64 {
                col.on_rx(&rx(0, 1, k as i64 * 100 - gen_offset, k * 100, RxOutcome::Ok));
            }
            col.on_availability(0, 0.5);
            col.finish(700).unwrap()
        };
        let (a, b) = (mk(30), mk(70));
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab.availability_samples, 2);
        assert!(MetricsAccumulator::empty(&[1]).merge(&MetricsAccumulator::empty(&[2])).is_err());
    }

    #[test]
    fn text_and_json_render() {
        let rep = MetricsAccumulator::empty(&[100]).report();
        assert!(rep.to_text().contains("avg_aoi_ms"));
        assert!(rep.to_text().contains("no data"));
        let back: MetricsReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn reset_csv() {
        let mut buf = Vec::new();
        write_reset_samples_csv(&mut buf, &[ResetSample { tx_id: 1, rx_id: 2, rx_ms: 300, reset_ms: 151 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tx_id,rx_id,rx_ms,reset_ms\n1,2,300,151\n");
    }
}
