//! Per-subframe simulator of `N` SPS state machines and the optional
//! starvation adversary.
//!
//! Packet generation follows a FIFO queue with one packet per RRI. The
//! generation clock is re-anchored when a UE releases its resource: the
//! packet generated at the release instant is the first one sent on the
//! next reservation, and older unsent packets are dropped. Every packet on
//! a reservation therefore arrives with the same age, idle dwell plus
//! alignment wait plus one RRI plus one queue slot.

mod events;
mod geometry;
mod phy;
mod resources;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AttackMode, Config, ConfigError, Csr, ScenarioParams, SpsParams, UeState};
use crate::rng::{derive_substream, Purpose, Rng, MAX_ENTITY_ID};

pub use events::{
    CsvEventWriter, DropEvent, EventLog, EventSink, RcExpiry, RxEvent, RxOutcome, TxEvent, EVENT_CSV_HEADER,
};
pub use geometry::{Geometry, LANE_WIDTH_M};
pub use phy::{resolve_receptions, PhyModel, PhyOptions};
pub use resources::{CsrStatus, Eve, ReservationMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(
        "attack_x = {requested} unachievable with eve_rri_ms = {eve_rri_ms}; maximum achievable fraction is {max_fraction}"
    )]
    EveUnachievable { requested: f64, eve_rri_ms: u32, max_fraction: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Metrics ignore events before this time; `None` means `10·Γ`.
    pub warmup_ms: Option<u64>,
    pub phy: PhyOptions,
    pub eve_start_ms: u64,
    /// Constant-velocity drift on a ring road, neighbors refreshed every RRI.
    pub mobility: bool,
    /// Overrides the road length implied by fleet size and density.
    pub road_length_m: Option<f64>,
}

impl SimOptions {
    pub fn warmup_for(&self, sps: &SpsParams) -> u64 {
        self.warmup_ms.unwrap_or(10 * sps.gamma as u64)
    }
}

#[derive(Debug, Clone)]
struct Ue {
    state: UeState,
    anchor: i64,
    next_packet: u64,
    tx_since_decision: u32,
    idle_rng: Rng,
    pick_rng: Rng,
    rc_rng: Rng,
    keep_rng: Rng,
}

#[derive(Debug, Clone)]
pub struct World {
    sps: SpsParams,
    scenario: ScenarioParams,
    mode: AttackMode,
    p_attempt: f64,
    opts: SimOptions,
    warmup_ms: u64,
    geo: Geometry,
    ues: Vec<Ue>,
    rmap: ReservationMap,
    eve: Option<Eve>,
    rx_rng: Rng,
    t: u64,
    blocked: Vec<bool>,
    txs: Vec<TxEvent>,
    rxs: Vec<RxEvent>,
}

impl World {
    pub fn new(cfg: &Config, opts: &SimOptions) -> Result<Self, SimError> {
        let cfg = cfg.clone().validate()?;
        let sps = cfg.sps;
        let n = cfg.scenario.n_vehicles;
        let road = opts.road_length_m.unwrap_or_else(|| cfg.scenario.road_length_m());
        if !(road > 0.0 && road.is_finite()) {
            return Err(ConfigError::OutOfRange { field: "road_length_m", reason: format!("must be > 0, got {road}") }
                .into());
        }
        let geo = Geometry::place(n, cfg.scenario.lanes, road, sps.raw_m, cfg.seed, opts.mobility);
        let ues = (0..n as u64)
            .map(|i| Ue {
                state: UeState::Idle { ms_in_idle: 0 },
                anchor: -1,
                next_packet: 0,
                tx_since_decision: 0,
                idle_rng: derive_substream(cfg.seed, i, Purpose::IdleAttempt),
                pick_rng: derive_substream(cfg.seed, i, Purpose::CsrPick),
                rc_rng: derive_substream(cfg.seed, i, Purpose::Reselection),
                keep_rng: derive_substream(cfg.seed, i, Purpose::Keep),
            })
            .collect();
        let p_attempt = match cfg.attack.mode {
            AttackMode::Probabilistic => (1.0 - cfg.attack.x) * sps.p_sch,
            AttackMode::Off | AttackMode::ActiveEve => sps.p_sch,
        };
        let eve = Eve::new(&sps, &cfg.attack, opts.eve_start_ms)?;
        Ok(Self {
            rmap: ReservationMap::new(&sps),
            blocked: vec![false; sps.selectable_csrs()],
            warmup_ms: opts.warmup_for(&sps),
            rx_rng: derive_substream(cfg.seed, MAX_ENTITY_ID, Purpose::Reception),
            mode: cfg.attack.mode,
            scenario: cfg.scenario,
            opts: opts.clone(),
            p_attempt,
            sps,
            geo,
            ues,
            eve,
            t: 0,
            txs: Vec::new(),
            rxs: Vec::new(),
        })
    }

    pub fn time_ms(&self) -> u64 {
        self.t
    }

    pub fn warmup_ms(&self) -> u64 {
        self.warmup_ms
    }

    pub fn sps(&self) -> &SpsParams {
        &self.sps
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geo
    }

    pub fn reservation_map(&self) -> &ReservationMap {
        &self.rmap
    }

    pub fn eve(&self) -> Option<&Eve> {
        self.eve.as_ref()
    }

    pub fn n_vehicles(&self) -> usize {
        self.ues.len()
    }

    pub fn ue_state(&self, ue: u32) -> UeState {
        self.ues[ue as usize].state
    }

    /// Overrides a UE's state, keeping the reservation map consistent.
    pub fn force_state(&mut self, ue: u32, state: UeState) {
        if let Some(old) = self.ues[ue as usize].state.csr() {
            self.rmap.release(old);
        }
        if let Some(new) = state.csr() {
            self.rmap.hold(new);
        }
        self.ues[ue as usize].state = state;
    }

    // Count of CSRs `ue` senses as unavailable, without touching the bitmap
    // when each CSR is one subchannel wide.
    fn count_blocked(&mut self, ue: u32, include_own: bool) -> usize {
        if self.sps.k_contiguous != 1 {
            return self.mark_blocked(ue, include_own);
        }
        let t = self.t;
        let mut idx: Vec<usize> = self
            .geo
            .neighbors(ue)
            .iter()
            .filter_map(|&j| self.ues[j as usize].state.csr())
            .chain(include_own.then(|| self.ues[ue as usize].state.csr()).flatten())
            .map(|c| c.index(&self.sps))
            .filter(|&i| !self.rmap.eve_reserved(i, t))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        self.rmap.eve_count() + idx.len()
    }

    // Marks every CSR `ue` senses as unavailable; returns how many.
    fn mark_blocked(&mut self, ue: u32, include_own: bool) -> usize {
        let t = self.t;
        for (i, b) in self.blocked.iter_mut().enumerate() {
            *b = self.rmap.overlaps_eve(i, t);
        }
        let mut holders: Vec<Csr> = self.geo.neighbors(ue).iter().filter_map(|&j| self.ues[j as usize].state.csr()).collect();
        if include_own {
            holders.extend(self.ues[ue as usize].state.csr());
        }
        for csr in holders {
            for i in self.rmap.overlapping(csr).collect::<Vec<_>>() {
                self.blocked[i] = true;
            }
        }
        self.blocked.iter().filter(|&&b| b).count()
    }

    fn probe_blocked(&self, ue: u32, idx: usize) -> bool {
        if self.rmap.overlaps_eve(idx, self.t) {
            return true;
        }
        let probe = Csr::from_index(idx, &self.sps);
        self.geo.neighbors(ue).iter().any(|&j| self.ues[j as usize].state.csr().is_some_and(|c| c.overlaps(&probe)))
    }

    /// One allocation attempt of an Idle UE at the current subframe.
    ///
    /// Without the explicit adversary, the attempt succeeds with
    /// `(1 − x)·p_sch` and then picks uniformly among the CSRs not sensed
    /// as reserved. Against the adversary, the attempt succeeds with
    /// `p_sch` and probes one CSR uniformly from the whole grid, accepting
    /// it only if nobody in range (the adversary included) reserves it.
    pub fn sense_and_select(&mut self, ue: u32) -> Option<Csr> {
        debug_assert!(self.ues[ue as usize].state.is_idle());
        let total = self.blocked.len();
        let p = self.p_attempt;
        if !self.ues[ue as usize].idle_rng.bernoulli(p) {
            return None;
        }
        match self.mode {
            AttackMode::ActiveEve => {
                let idx = self.ues[ue as usize].pick_rng.below(total as u64) as usize;
                (!self.probe_blocked(ue, idx)).then(|| Csr::from_index(idx, &self.sps))
            }
            AttackMode::Off | AttackMode::Probabilistic => {
                let free = total - self.mark_blocked(ue, false);
                if free == 0 {
                    return None;
                }
                let k = self.ues[ue as usize].pick_rng.below(free as u64) as usize;
                let idx = self.blocked.iter().enumerate().filter(|(_, &b)| !b).nth(k).map(|(i, _)| i)?;
                Some(Csr::from_index(idx, &self.sps))
            }
        }
    }

    /// Mean over UEs of the fraction of selectable CSRs each one senses as
    /// free; a UE's own reservation counts as taken.
    pub fn available_resource_fraction(&mut self) -> f64 {
        let n = self.ues.len();
        let total = self.blocked.len() as f64;
        let mut sum = 0.0;
        for ue in 0..n as u32 {
            sum += (total - self.count_blocked(ue, true) as f64) / total;
        }
        sum / n as f64
    }

    fn draw_rc(&mut self, ue: usize) -> u32 {
        self.ues[ue].rc_rng.between(self.sps.rc_min, self.sps.rc_max)
    }

    // Advances every state machine by one subframe; fills `self.txs`.
    fn advance_states<S: EventSink>(&mut self, sink: &mut S) {
        let t = self.t;
        let g = self.sps.gamma;
        self.txs.clear();
        if let Some(eve) = self.eve.as_mut() {
            eve.step(&mut self.rmap, t);
        }
        for u in 0..self.ues.len() {
            let next = match self.ues[u].state {
                UeState::Idle { ms_in_idle } => {
                    let found = self.sense_and_select(u as u32);
                    sink.on_attempt(u as u32, t, found.is_some());
                    match found {
                        Some(csr) => {
                            self.rmap.hold(csr);
                            let w = (csr.subframe_offset as u64 + g as u64 - (t + 1) % g as u64) % g as u64;
                            UeState::Wait { w: w as u32, csr }
                        }
                        None => UeState::Idle { ms_in_idle: ms_in_idle + 1 },
                    }
                }
                UeState::Wait { w: 0, csr } => {
                    self.ues[u].tx_since_decision = 0;
                    UeState::Active { rc: self.draw_rc(u), tau: g - 1, csr }
                }
                UeState::Wait { w, csr } => UeState::Wait { w: w - 1, csr },
                UeState::Active { rc, tau, csr } if tau > 0 => UeState::Active { rc, tau: tau - 1, csr },
                UeState::Active { rc, csr, .. } => {
                    let ue = &mut self.ues[u];
                    let gen = ue.anchor + (ue.next_packet * g as u64) as i64;
                    ue.next_packet += 1;
                    ue.tx_since_decision += 1;
                    self.txs.push(TxEvent { tx_id: u as u32, gen_time_ms: gen, tx_time_ms: t, csr });
                    if rc > 1 {
                        UeState::Active { rc: rc - 1, tau: g - 1, csr }
                    } else {
                        let kept = ue.keep_rng.bernoulli(self.sps.p_keep);
                        sink.on_decision(&RcExpiry { ue: u as u32, time_ms: t, kept, tx_count: ue.tx_since_decision });
                        ue.tx_since_decision = 0;
                        if kept {
                            UeState::Active { rc: self.draw_rc(u), tau: g - 1, csr }
                        } else {
                            self.release(u, csr, sink);
                            UeState::Idle { ms_in_idle: 0 }
                        }
                    }
                }
            };
            self.ues[u].state = next;
        }
    }

    fn release<S: EventSink>(&mut self, u: usize, csr: Csr, sink: &mut S) {
        let t = self.t;
        let g = self.sps.gamma as i64;
        self.rmap.release(csr);
        let ue = &mut self.ues[u];
        let first_unsent = ue.anchor + ue.next_packet as i64 * g;
        if first_unsent < t as i64 {
            let packets = (t as i64 - first_unsent + g - 1) / g;
            sink.on_drop(&DropEvent {
                tx_id: u as u32,
                time_ms: t,
                gen_time_ms: first_unsent,
                packets: packets as u32,
                audience: self.geo.neighbors(u as u32).len() as u32,
            });
        }
        ue.anchor = t as i64;
        ue.next_packet = 0;
    }

    /// State machines only: returns this subframe's transmissions without
    /// resolving receptions, then advances the clock.
    pub fn step_subframe<S: EventSink>(&mut self, sink: &mut S) -> Vec<TxEvent> {
        self.advance_states(sink);
        self.t += 1;
        std::mem::take(&mut self.txs)
    }

    /// One full subframe: adversary, state machines, receptions,
    /// availability sampling and mobility.
    pub fn step<S: EventSink>(&mut self, sink: &mut S) {
        self.advance_states(sink);
        if !self.txs.is_empty() {
            for tx in &self.txs {
                sink.on_tx(tx);
            }
            self.rxs.clear();
            phy::resolve_into(&self.txs, &self.geo, &self.sps, &self.opts.phy, &mut self.rx_rng, &mut self.rxs);
            for rx in &self.rxs {
                sink.on_rx(rx);
            }
        }
        let g = self.sps.gamma as u64;
        if self.t >= self.warmup_ms && (self.t - self.warmup_ms).is_multiple_of(g) {
            let a = self.available_resource_fraction();
            sink.on_availability(self.t, a);
        }
        self.t += 1;
        if self.opts.mobility && self.t.is_multiple_of(g) {
            self.geo.advance(g, self.scenario.speed_kmh);
        }
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct SimRun {
    pub log: EventLog,
    pub world: World,
}

/// Simulates `cfg.sim_duration_ms` subframes and keeps the full event log.
pub fn run(cfg: &Config, opts: &SimOptions) -> Result<SimRun, SimError> {
    let mut log = EventLog::new(opts.warmup_for(&cfg.sps));
    let world = run_with_sink(cfg, opts, &mut log)?;
    Ok(SimRun { log, world })
}

/// Simulates `cfg.sim_duration_ms` subframes, streaming events to `sink`.
pub fn run_with_sink<S: EventSink>(cfg: &Config, opts: &SimOptions, sink: &mut S) -> Result<World, SimError> {
    let mut world = World::new(cfg, opts)?;
    for _ in 0..cfg.sim_duration_ms {
        world.step(sink);
    }
    Ok(world)
}
