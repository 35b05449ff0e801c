//! Explicit discrete-time Markov chain of one UE's SPS state machine.
//!
//! States, one transition per subframe:
//! - `Idle`: one allocation attempt per ms, success with `P'`;
//! - `Wait(w)`, `w ∈ [0, Γ)`: alignment to the chosen resource;
//! - `(k, τ)`, `k ∈ [1, rc_max]`, `τ ∈ [0, Γ)`: holding a resource with `k`
//!   transmissions left, `τ` subframes before the next one.
//!
//! `(k, τ) → (k, τ−1)` counts down; at `(k, 0)` the UE transmits and moves
//! to `(k−1, Γ−1)`, or, when `k = 1`, keeps the resource with a fresh
//! counter (probability `P_keep`) or releases it to `Idle`.

use std::collections::VecDeque;

use crate::model::SpsParams;

use super::sparse;
use super::AnalyticError;

/// Chains above this size fall back to power iteration for the stationary
/// distribution.
pub const DIRECT_SOLVE_LIMIT: usize = 50_000;
pub const DEFAULT_STATE_CAP: usize = 1_000_000;
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
const ROW_SUM_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 2_000_000;

/// A row-stochastic transition matrix in sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    rows: Vec<Vec<(usize, f64)>>,
}

impl MarkovChain {
    /// Builds a chain from sparse rows; duplicate columns are summed and
    /// zero entries dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self, AnalyticError> {
        let n = rows.len();
        if n == 0 {
            return Err(AnalyticError::InvalidChain("no states".into()));
        }
        let mut clean = Vec::with_capacity(n);
        for (i, row) in rows.into_iter().enumerate() {
            let mut row: Vec<(usize, f64)> = row.into_iter().filter(|&(_, v)| v != 0.0).collect();
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, v) in row {
                if j >= n {
                    return Err(AnalyticError::InvalidChain(format!("row {i} points at state {j} of {n}")));
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(AnalyticError::InvalidChain(format!("entry ({i}, {j}) = {v}")));
                }
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            let sum: f64 = merged.iter().map(|e| e.1).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(AnalyticError::InvalidChain(format!("row {i} sums to {sum}")));
            }
            clean.push(merged);
        }
        Ok(Self { rows: clean })
    }

    pub fn from_dense(m: &[Vec<f64>]) -> Result<Self, AnalyticError> {
        Self::from_rows(m.iter().map(|r| r.iter().copied().enumerate().collect()).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; n];
                for &(j, v) in r {
                    d[j] = v;
                }
                d
            })
            .collect()
    }

    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|e| e.1).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// States reachable from `start` along positive-probability edges.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.rows[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    fn can_reach(&self, targets: &[bool]) -> Vec<bool> {
        let n = self.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                preds[j].push(i);
            }
        }
        let mut seen = targets.to_vec();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| targets[i]).collect();
        while let Some(j) = queue.pop_front() {
            for &i in &preds[j] {
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen
    }

    pub fn is_irreducible(&self) -> bool {
        let mut root = vec![false; self.len()];
        root[0] = true;
        self.reachable_from(0).iter().all(|&r| r) && self.can_reach(&root).iter().all(|&r| r)
    }

    /// `‖πP − π‖∞`.
    pub fn stationary_residual(&self, pi: &[f64]) -> f64 {
        let next = self.step(pi);
        next.iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn step(&self, pi: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let w = pi[i];
            if w == 0.0 {
                continue;
            }
            for &(j, v) in row {
                next[j] += w * v;
            }
        }
        next
    }
}

impl AsRef<MarkovChain> for MarkovChain {
    fn as_ref(&self) -> &MarkovChain {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpsState {
    Idle,
    Wait(u32),
    Rri { k: u32, tau: u32 },
}

/// Enumeration of [`SpsState`] for fixed `Γ` and `rc_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpsStateIndex {
    pub gamma: u32,
    pub rc_max: u32,
}

impl SpsStateIndex {
    pub fn len(&self) -> usize {
        1 + self.gamma as usize * (1 + self.rc_max as usize)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, s: SpsState) -> usize {
        let g = self.gamma as usize;
        match s {
            SpsState::Idle => 0,
            SpsState::Wait(w) => {
                debug_assert!(w < self.gamma);
                1 + w as usize
            }
            SpsState::Rri { k, tau } => {
                debug_assert!(k >= 1 && k <= self.rc_max && tau < self.gamma);
                1 + g + (k as usize - 1) * g + tau as usize
            }
        }
    }

    pub fn state(&self, idx: usize) -> SpsState {
        let g = self.gamma as usize;
        match idx {
            0 => SpsState::Idle,
            i if i <= g => SpsState::Wait((i - 1) as u32),
            i => {
                let r = i - 1 - g;
                SpsState::Rri { k: (r / g) as u32 + 1, tau: (r % g) as u32 }
            }
        }
    }

    /// Transmission states `(k, 0)`.
    pub fn tx_states(&self) -> Vec<bool> {
        (0..self.len()).map(|i| matches!(self.state(i), SpsState::Rri { tau: 0, .. })).collect()
    }
}

/// The SPS chain together with its state labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct DtmcModel {
    pub chain: MarkovChain,
    pub index: SpsStateIndex,
    pub p_sch_eff: f64,
}

impl AsRef<MarkovChain> for DtmcModel {
    fn as_ref(&self) -> &MarkovChain {
        &self.chain
    }
}

pub fn build_sps_dtmc(sps: &SpsParams, p_sch_eff: f64) -> Result<DtmcModel, AnalyticError> {
    build_sps_dtmc_capped(sps, p_sch_eff, DEFAULT_STATE_CAP)
}

pub fn build_sps_dtmc_capped(sps: &SpsParams, p_sch_eff: f64, cap: usize) -> Result<DtmcModel, AnalyticError> {
    if !(p_sch_eff > 0.0 && p_sch_eff <= 1.0) {
        return Err(AnalyticError::Domain { name: "p_sch_eff", value: p_sch_eff, range: "(0, 1]" });
    }
    if sps.gamma == 0 || sps.rc_min == 0 || sps.rc_max < sps.rc_min {
        return Err(AnalyticError::InvalidChain("invalid gamma or RC range".into()));
    }
    if !(0.0..=1.0).contains(&sps.p_keep) {
        return Err(AnalyticError::Domain { name: "p_keep", value: sps.p_keep, range: "[0, 1]" });
    }
    let states = (sps.gamma as usize)
        .checked_mul(sps.rc_max as usize + 1)
        .and_then(|v| v.checked_add(1))
        .unwrap_or(usize::MAX);
    if states > cap {
        return Err(AnalyticError::StateSpaceTooLarge { states, cap });
    }

    let index = SpsStateIndex { gamma: sps.gamma, rc_max: sps.rc_max };
    let g = sps.gamma;
    let n_rc = (sps.rc_max - sps.rc_min + 1) as f64;
    let fresh_rc = |scale: f64| -> Vec<(usize, f64)> {
        (sps.rc_min..=sps.rc_max)
            .map(|k| (index.index(SpsState::Rri { k, tau: g - 1 }), scale / n_rc))
            .collect()
    };

    let mut rows = Vec::with_capacity(states);
    for i in 0..states {
        let row = match index.state(i) {
            SpsState::Idle => {
                let mut r: Vec<(usize, f64)> =
                    (0..g).map(|w| (index.index(SpsState::Wait(w)), p_sch_eff / g as f64)).collect();
                r.push((0, 1.0 - p_sch_eff));
                r
            }
            SpsState::Wait(0) => fresh_rc(1.0),
            SpsState::Wait(w) => vec![(index.index(SpsState::Wait(w - 1)), 1.0)],
            SpsState::Rri { k, tau } if tau > 0 => vec![(index.index(SpsState::Rri { k, tau: tau - 1 }), 1.0)],
            SpsState::Rri { k, .. } if k > 1 => vec![(index.index(SpsState::Rri { k: k - 1, tau: g - 1 }), 1.0)],
            SpsState::Rri { .. } => {
                let mut r = fresh_rc(sps.p_keep);
                r.push((0, 1.0 - sps.p_keep));
                r
            }
        };
        rows.push(row);
    }
    Ok(DtmcModel { chain: MarkovChain::from_rows(rows)?, index, p_sch_eff })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Direct solve when the chain has at most [`DIRECT_SOLVE_LIMIT`] states.
    Auto,
    Direct,
    PowerIteration,
}

pub fn stationary_distribution<C: AsRef<MarkovChain>>(chain: &C) -> Result<Vec<f64>, AnalyticError> {
    stationary_distribution_with(chain, SolveMethod::Auto)
}

pub fn stationary_distribution_with<C: AsRef<MarkovChain>>(
    chain: &C,
    method: SolveMethod,
) -> Result<Vec<f64>, AnalyticError> {
    let chain = chain.as_ref();
    if !chain.is_irreducible() {
        return Err(AnalyticError::NotIrreducible);
    }
    let direct = match method {
        SolveMethod::Auto => chain.len() <= DIRECT_SOLVE_LIMIT,
        SolveMethod::Direct => true,
        SolveMethod::PowerIteration => false,
    };
    let pi = if direct { stationary_direct(chain)? } else { stationary_power(chain)? };
    let residual = chain.stationary_residual(&pi);
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(AnalyticError::NotConverged { residual });
    }
    Ok(pi)
}

// Expected visits to each state between returns to state 0:
// y_j − Σ_{i≠0} y_i P_ij = P_0j for j ≠ 0, then normalize with y_0 = 1.
fn stationary_direct(chain: &MarkovChain) -> Result<Vec<f64>, AnalyticError> {
    let n = chain.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let m = n - 1;
    let mut rows: Vec<Vec<(usize, f64)>> = (0..m).map(|j| vec![(j, 1.0)]).collect();
    for i in 1..n {
        for &(j, v) in chain.row(i) {
            if j != 0 {
                rows[j - 1].push((i - 1, -v));
            }
        }
    }
    let b: Vec<f64> = (1..n).map(|j| chain.prob(0, j)).collect();
    let y = sparse::solve(m, rows, b)?;
    let total = 1.0 + y.iter().sum::<f64>();
    let mut pi = Vec::with_capacity(n);
    pi.push(1.0 / total);
    pi.extend(y.iter().map(|v| v / total));
    Ok(pi)
}

// Lazy chain (I + P)/2 shares π and is aperiodic.
fn stationary_power(chain: &MarkovChain) -> Result<Vec<f64>, AnalyticError> {
    let n = chain.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 0..POWER_MAX_ITERS {
        let next = chain.step(&pi);
        let mut lazy: Vec<f64> = next.iter().zip(&pi).map(|(a, b)| 0.5 * (a + b)).collect();
        let s: f64 = lazy.iter().sum();
        lazy.iter_mut().for_each(|v| *v /= s);
        pi = lazy;
        if it % 64 == 0 {
            residual = chain.stationary_residual(&pi);
            if residual <= STATIONARY_RESIDUAL_TOL * 0.1 {
                return Ok(pi);
            }
        }
    }
    Err(AnalyticError::NotConverged { residual })
}

/// Expected number of steps from `start` until the chain first enters a
/// state flagged in `targets` (zero if `start` is a target).
pub fn mean_first_passage<C: AsRef<MarkovChain>>(
    chain: &C,
    start: usize,
    targets: &[bool],
) -> Result<f64, AnalyticError> {
    let chain = chain.as_ref();
    if targets[start] {
        return Ok(0.0);
    }
    let reach = chain.reachable_from(start);
    let hits = chain.can_reach(targets);
    let live: Vec<usize> = (0..chain.len()).filter(|&i| reach[i] && !targets[i]).collect();
    if let Some(&bad) = live.iter().find(|&&i| !hits[i]) {
        return Err(AnalyticError::TargetUnreachable(bad));
    }
    let mut pos = vec![usize::MAX; chain.len()];
    for (p, &i) in live.iter().enumerate() {
        pos[i] = p;
    }
    let rows: Vec<Vec<(usize, f64)>> = live
        .iter()
        .map(|&i| {
            let mut r = vec![(pos[i], 1.0)];
            for &(j, v) in chain.row(i) {
                if !targets[j] {
                    r.push((pos[j], -v));
                }
            }
            r
        })
        .collect();
    let h = sparse::solve(live.len(), rows, vec![1.0; live.len()])?;
    Ok(h[pos[start]])
}

/// Expected subframes from entering `Idle` until the first transmission
/// opportunity at `τ = 0`.
pub fn mean_first_passage_idle_to_tx(m: &DtmcModel) -> Result<f64, AnalyticError> {
    let targets = m.index.tx_states();
    mean_first_passage(&m.chain, m.index.index(SpsState::Idle), &targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy() -> DtmcModel {
        let sps = SpsParams { gamma: 2, rc_min: 1, rc_max: 1, p_keep: 0.0, ..Default::default() };
        build_sps_dtmc(&sps, 1.0).unwrap()
    }

    #[test]
    fn toy_chain_matrix_by_hand() {
        let m = toy();
        let ix = m.index;
        assert_eq!(m.chain.len(), 5);
        let idle = ix.index(SpsState::Idle);
        let w0 = ix.index(SpsState::Wait(0));
        let w1 = ix.index(SpsState::Wait(1));
        let a1 = ix.index(SpsState::Rri { k: 1, tau: 1 });
        let a0 = ix.index(SpsState::Rri { k: 1, tau: 0 });
        let expected = [
            (idle, w0, 0.5),
            (idle, w1, 0.5),
            (w1, w0, 1.0),
            (w0, a1, 1.0),
            (a1, a0, 1.0),
            (a0, idle, 1.0),
        ];
        let dense = m.chain.to_dense();
        let mut want = vec![vec![0.0; 5]; 5];
        for (i, j, v) in expected {
            want[i][j] = v;
        }
        assert_eq!(dense, want);
    }

    #[test]
    fn rows_are_stochastic() {
        for (gamma, rc_min, rc_max, p_keep, p) in
            [(1, 1, 1, 0.0, 1.0), (3, 2, 4, 0.3, 0.2), (100, 5, 15, 0.4, 0.1), (7, 1, 9, 1.0, 0.9)]
        {
            let sps = SpsParams { gamma, rc_min, rc_max, p_keep, ..Default::default() };
            let m = build_sps_dtmc(&sps, p).unwrap();
            assert!(m.chain.max_row_error() <= 1e-12);
        }
    }

    #[test]
    fn keep_forever_makes_idle_unreachable() {
        let sps = SpsParams { gamma: 5, rc_min: 2, rc_max: 3, p_keep: 1.0, ..Default::default() };
        let m = build_sps_dtmc(&sps, 0.5).unwrap();
        let start = m.index.index(SpsState::Rri { k: 3, tau: 4 });
        assert!(!m.chain.reachable_from(start)[0]);
        assert_eq!(stationary_distribution(&m), Err(AnalyticError::NotIrreducible));
    }

    #[test]
    fn symmetric_two_state() {
        let c = MarkovChain::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let pi = stationary_distribution(&c).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pi[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn direct_and_power_agree() {
        let sps = SpsParams { gamma: 10, rc_min: 2, rc_max: 4, p_keep: 0.4, ..Default::default() };
        let m = build_sps_dtmc(&sps, 0.3).unwrap();
        let a = stationary_distribution_with(&m, SolveMethod::Direct).unwrap();
        let b = stationary_distribution_with(&m, SolveMethod::PowerIteration).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        assert_abs_diff_eq!(a.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn first_passage_closed_form() {
        for (gamma, p, want) in [(100, 1.0, 150.5), (100, 0.1, 159.5), (1, 1.0, 2.0), (2, 1.0, 3.5)] {
            let sps = SpsParams { gamma, ..Default::default() };
            let m = build_sps_dtmc(&sps, p).unwrap();
            assert_abs_diff_eq!(mean_first_passage_idle_to_tx(&m).unwrap(), want, epsilon = 1e-9);
        }
    }

    #[test]
    fn state_cap_enforced() {
        let sps = SpsParams { gamma: 1000, rc_max: 15, ..Default::default() };
        assert!(matches!(
            build_sps_dtmc_capped(&sps, 1.0, 10_000),
            Err(AnalyticError::StateSpaceTooLarge { states: 16_001, cap: 10_000 })
        ));
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(MarkovChain::from_dense(&[vec![0.5, 0.4], vec![0.0, 1.0]]).is_err());
        assert!(MarkovChain::from_dense(&[vec![1.5, -0.5], vec![0.0, 1.0]]).is_err());
        assert!(MarkovChain::from_rows(vec![vec![(3, 1.0)]]).is_err());
    }

    #[test]
    fn unreachable_target_reported() {
        let c = MarkovChain::from_dense(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(
            mean_first_passage(&c, 0, &[false, false, true]),
            Err(AnalyticError::TargetUnreachable(_))
        ));
    }

    #[test]
    fn index_round_trip() {
        let ix = SpsStateIndex { gamma: 7, rc_max: 4 };
        for i in 0..ix.len() {
            assert_eq!(ix.index(ix.state(i)), i);
        }
    }
}
