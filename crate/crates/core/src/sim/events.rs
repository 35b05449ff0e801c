//! Events emitted by the simulator and the sinks that consume them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::Csr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TxEvent {
    pub tx_id: u32,
    pub gen_time_ms: i64,
    pub tx_time_ms: u64,
    pub csr: Csr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RxOutcome {
    Ok,
    Collision,
    PhyLoss,
    OutOfRange,
}

impl RxOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            RxOutcome::Ok => "ok",
            RxOutcome::Collision => "collision",
            RxOutcome::PhyLoss => "phy_loss",
            RxOutcome::OutOfRange => "out_of_range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RxEvent {
    pub tx_id: u32,
    pub rx_id: u32,
    pub gen_time_ms: i64,
    pub rx_time_ms: u64,
    pub csr: Csr,
    pub outcome: RxOutcome,
}

/// Queued packets discarded when a UE releases its resource; they were
/// never transmitted, so every in-range receiver misses them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DropEvent {
    pub tx_id: u32,
    pub time_ms: u64,
    /// Generation time of the oldest dropped packet.
    pub gen_time_ms: i64,
    pub packets: u32,
    /// Receivers in range of the dropping UE.
    pub audience: u32,
}

/// Keep-or-release decision at reselection-counter expiry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RcExpiry {
    pub ue: u32,
    pub time_ms: u64,
    pub kept: bool,
    /// Transmissions since the previous decision (the drawn counter).
    pub tx_count: u32,
}

/// Consumer of the simulation event stream. Every method defaults to a
/// no-op so sinks only implement what they need.
pub trait EventSink {
    fn on_tx(&mut self, _ev: &TxEvent) {}
    fn on_rx(&mut self, _ev: &RxEvent) {}
    fn on_drop(&mut self, _ev: &DropEvent) {}
    fn on_decision(&mut self, _ev: &RcExpiry) {}
    /// One Idle allocation attempt and whether it found a CSR.
    fn on_attempt(&mut self, _ue: u32, _time_ms: u64, _found: bool) {}
    fn on_availability(&mut self, _time_ms: u64, _fraction: f64) {}
}

impl EventSink for () {}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn on_tx(&mut self, ev: &TxEvent) {
        (**self).on_tx(ev)
    }
    fn on_rx(&mut self, ev: &RxEvent) {
        (**self).on_rx(ev)
    }
    fn on_drop(&mut self, ev: &DropEvent) {
        (**self).on_drop(ev)
    }
    fn on_decision(&mut self, ev: &RcExpiry) {
        (**self).on_decision(ev)
    }
    fn on_attempt(&mut self, ue: u32, time_ms: u64, found: bool) {
        (**self).on_attempt(ue, time_ms, found)
    }
    fn on_availability(&mut self, time_ms: u64, fraction: f64) {
        (**self).on_availability(time_ms, fraction)
    }
}

impl<A: EventSink, B: EventSink> EventSink for (A, B) {
    fn on_tx(&mut self, ev: &TxEvent) {
        self.0.on_tx(ev);
        self.1.on_tx(ev);
    }
    fn on_rx(&mut self, ev: &RxEvent) {
        self.0.on_rx(ev);
        self.1.on_rx(ev);
    }
    fn on_drop(&mut self, ev: &DropEvent) {
        self.0.on_drop(ev);
        self.1.on_drop(ev);
    }
    fn on_decision(&mut self, ev: &RcExpiry) {
        self.0.on_decision(ev);
        self.1.on_decision(ev);
    }
    fn on_attempt(&mut self, ue: u32, time_ms: u64, found: bool) {
        self.0.on_attempt(ue, time_ms, found);
        self.1.on_attempt(ue, time_ms, found);
    }
    fn on_availability(&mut self, time_ms: u64, fraction: f64) {
        self.0.on_availability(time_ms, fraction);
        self.1.on_availability(time_ms, fraction);
    }
}

/// In-memory event log. Idle attempts are only counted.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EventLog {
    pub warmup_ms: u64,
    pub tx: Vec<TxEvent>,
    pub rx: Vec<RxEvent>,
    pub drops: Vec<DropEvent>,
    pub decisions: Vec<RcExpiry>,
    pub availability: Vec<(u64, f64)>,
    pub attempts: u64,
    pub attempts_found: u64,
}

impl EventLog {
    pub fn new(warmup_ms: u64) -> Self {
        Self { warmup_ms, ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.tx.is_empty() && self.rx.is_empty() && self.drops.is_empty() && self.decisions.is_empty()
    }
}

impl EventSink for EventLog {
    fn on_tx(&mut self, ev: &TxEvent) {
        self.tx.push(*ev);
    }
    fn on_rx(&mut self, ev: &RxEvent) {
        self.rx.push(*ev);
    }
    fn on_drop(&mut self, ev: &DropEvent) {
        self.drops.push(*ev);
    }
    fn on_decision(&mut self, ev: &RcExpiry) {
        self.decisions.push(*ev);
    }
    fn on_attempt(&mut self, _ue: u32, _time_ms: u64, found: bool) {
        self.attempts += 1;
        self.attempts_found += found as u64;
    }
    fn on_availability(&mut self, time_ms: u64, fraction: f64) {
        self.availability.push((time_ms, fraction));
    }
}

pub const EVENT_CSV_HEADER: [&str; 8] =
    ["type", "tx_id", "rx_id", "gen_ms", "time_ms", "subframe", "subchannel", "outcome"];

/// Raw event dump as CSV. The first I/O error is kept and returned by
/// [`CsvEventWriter::finish`]; later events are discarded.
pub struct CsvEventWriter<W: Write> {
    out: csv::Writer<W>,
    error: Option<csv::Error>,
}

impl<W: Write> CsvEventWriter<W> {
    pub fn new(inner: W) -> Self {
        let mut out = csv::Writer::from_writer(inner);
        let error = out.write_record(EVENT_CSV_HEADER).err();
        Self { out, error }
    }

    fn record(&mut self, fields: [&str; 8]) {
        if self.error.is_none() {
            self.error = self.out.write_record(fields).err();
        }
    }

    pub fn finish(mut self) -> Result<W, csv::Error> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        self.out.into_inner().map_err(|e| csv::Error::from(e.into_error()))
    }
}

impl<W: Write> EventSink for CsvEventWriter<W> {
    fn on_tx(&mut self, ev: &TxEvent) {
        self.record([
            "tx",
            &ev.tx_id.to_string(),
            "",
            &ev.gen_time_ms.to_string(),
            &ev.tx_time_ms.to_string(),
            &ev.csr.subframe_offset.to_string(),
            &ev.csr.subchannel_start.to_string(),
            "",
        ]);
    }

    fn on_rx(&mut self, ev: &RxEvent) {
        self.record([
            "rx",
            &ev.tx_id.to_string(),
            &ev.rx_id.to_string(),
            &ev.gen_time_ms.to_string(),
            &ev.rx_time_ms.to_string(),
            &ev.csr.subframe_offset.to_string(),
            &ev.csr.subchannel_start.to_string(),
            ev.outcome.as_str(),
        ]);
    }

    fn on_drop(&mut self, ev: &DropEvent) {
        self.record([
            "drop",
            &ev.tx_id.to_string(),
            "",
            &ev.gen_time_ms.to_string(),
            &ev.time_ms.to_string(),
            "",
            "",
            &format!("dropped_{}", ev.packets),
        ]);
    }
}
