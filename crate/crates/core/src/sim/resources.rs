//! Occupancy of the `Γ × (M−K+1)` CSR grid and the starvation adversary.

use std::collections::VecDeque;

use crate::model::{AttackMode, AttackParams, Csr, SpsParams};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsrStatus {
    Free,
    /// Held by this many benign UEs (more than one only through spatial reuse).
    Benign(u16),
    ReservedByEve { until_ms: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservationMap {
    sps: SpsParams,
    eve_until: Vec<u64>,
    eve_count: usize,
    held: Vec<u16>,
    held_distinct: usize,
}

impl ReservationMap {
    pub fn new(sps: &SpsParams) -> Self {
        let total = sps.selectable_csrs();
        Self { sps: sps.clone(), eve_until: vec![0; total], eve_count: 0, held: vec![0; total], held_distinct: 0 }
    }

    pub fn total(&self) -> usize {
        self.held.len()
    }

    pub fn status(&self, idx: usize, t_ms: u64) -> CsrStatus {
        if self.eve_until[idx] > t_ms {
            CsrStatus::ReservedByEve { until_ms: self.eve_until[idx] }
        } else if self.held[idx] > 0 {
            CsrStatus::Benign(self.held[idx])
        } else {
            CsrStatus::Free
        }
    }

    pub fn eve_reserved(&self, idx: usize, t_ms: u64) -> bool {
        self.eve_until[idx] > t_ms
    }

    /// Number of CSRs currently reserved by the adversary.
    pub fn eve_count(&self) -> usize {
        self.eve_count
    }

    pub fn benign_holders(&self, idx: usize) -> u16 {
        self.held[idx]
    }

    /// Distinct CSRs held by at least one benign UE.
    pub fn benign_distinct(&self) -> usize {
        self.held_distinct
    }

    pub(crate) fn hold(&mut self, csr: Csr) {
        let i = csr.index(&self.sps);
        if self.held[i] == 0 {
            self.held_distinct += 1;
        }
        self.held[i] += 1;
    }

    pub(crate) fn release(&mut self, csr: Csr) {
        let i = csr.index(&self.sps);
        debug_assert!(self.held[i] > 0);
        self.held[i] -= 1;
        if self.held[i] == 0 {
            self.held_distinct -= 1;
        }
    }

    fn reserve_eve(&mut self, idx: usize, until_ms: u64) {
        debug_assert!(self.eve_until[idx] <= until_ms);
        self.eve_until[idx] = until_ms;
        self.eve_count += 1;
    }

    fn expire_eve(&mut self, idx: usize, until_ms: u64) {
        if self.eve_until[idx] == until_ms {
            self.eve_count -= 1;
        }
    }

    /// Indices of CSRs sharing a subframe and a subchannel with `csr`.
    pub fn overlapping(&self, csr: Csr) -> impl Iterator<Item = usize> + '_ {
        let k = self.sps.k_contiguous;
        let lo = csr.subchannel_start.saturating_sub(k - 1);
        let hi = (csr.subchannel_start + k - 1).min(self.sps.subchannel_starts() - 1);
        let sps = &self.sps;
        (lo..=hi).map(move |s| Csr::new(csr.subframe_offset, s, k).index(sps))
    }

    pub(crate) fn overlaps_eve(&self, idx: usize, t_ms: u64) -> bool {
        if self.sps.k_contiguous == 1 {
            return self.eve_reserved(idx, t_ms);
        }
        let csr = Csr::from_index(idx, &self.sps);
        self.overlapping(csr).any(|j| self.eve_reserved(j, t_ms))
    }

    fn overlaps_benign(&self, idx: usize) -> bool {
        if self.sps.k_contiguous == 1 {
            return self.held[idx] > 0;
        }
        let csr = Csr::from_index(idx, &self.sps);
        self.overlapping(csr).any(|j| self.held[j] > 0)
    }
}

/// The starvation adversary. Every `eve_rri_ms` it announces reservations,
/// each lasting one RRI, on the next CSRs of a subframe-major rotation.
/// CSRs already held by benign UEs or by itself are skipped, so it never
/// transmits over a scheduled benign packet.
#[derive(Debug, Clone, PartialEq)]
pub struct Eve {
    target: usize,
    per_announcement: f64,
    announcements: u64,
    cursor: usize,
    rri_ms: u32,
    hold_ms: u64,
    start_ms: u64,
    pending: VecDeque<(u64, usize)>,
}

impl Eve {
    /// Largest starvation fraction reachable with the given announcement
    /// period: one subframe of CSRs per announcement.
    pub fn max_fraction(sps: &SpsParams, eve_rri_ms: u32) -> f64 {
        let per_rri = sps.subchannel_starts() as f64 * sps.gamma as f64 / eve_rri_ms as f64;
        (per_rri / sps.selectable_csrs() as f64).min(1.0)
    }

    /// `None` unless the mode is `active_eve` with a positive fraction.
    pub fn new(sps: &SpsParams, atk: &AttackParams, start_ms: u64) -> Result<Option<Self>, SimError> {
        if atk.mode != AttackMode::ActiveEve || atk.x == 0.0 {
            return Ok(None);
        }
        let total = sps.selectable_csrs();
        let target = (atk.x * total as f64).round() as usize;
        let per_announcement = target as f64 * atk.eve_rri_ms as f64 / sps.gamma as f64;
        if per_announcement > sps.subchannel_starts() as f64 + 1e-9 {
            return Err(SimError::EveUnachievable {
                requested: atk.x,
                eve_rri_ms: atk.eve_rri_ms,
                max_fraction: Self::max_fraction(sps, atk.eve_rri_ms),
            });
        }
        Ok(Some(Self {
            target,
            per_announcement,
            announcements: 0,
            cursor: 0,
            rri_ms: atk.eve_rri_ms,
            hold_ms: sps.gamma as u64,
            start_ms,
            pending: VecDeque::new(),
        }))
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn step(&mut self, rmap: &mut ReservationMap, t_ms: u64) {
        while let Some(&(until, idx)) = self.pending.front() {
            if until > t_ms {
                break;
            }
            rmap.expire_eve(idx, until);
            self.pending.pop_front();
        }
        if t_ms < self.start_ms || !(t_ms - self.start_ms).is_multiple_of(self.rri_ms as u64) {
            return;
        }
        let j = self.announcements as f64;
        let count = ((j + 1.0) * self.per_announcement).floor() - (j * self.per_announcement).floor();
        self.announcements += 1;
        let total = rmap.total();
        for _ in 0..count as usize {
            if rmap.eve_count() >= self.target {
                break;
            }
            if rmap.sps.k_contiguous == 1 && rmap.eve_count() + rmap.benign_distinct() >= total {
                break;
            }
            let found = (0..total)
                .map(|off| (self.cursor + off) % total)
                .find(|&i| !rmap.overlaps_eve(i, t_ms) && !rmap.overlaps_benign(i));
            let Some(idx) = found else { break };
            let until = t_ms + self.hold_ms;
            rmap.reserve_eve(idx, until);
            self.pending.push_back((until, idx));
            self.cursor = (idx + 1) % total;
        }
    }
}
