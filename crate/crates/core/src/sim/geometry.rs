//! Vehicle placement on a straight multi-lane road and the in-range
//! relation derived from the awareness range.

use crate::rng::{derive_substream, Purpose};

pub const LANE_WIDTH_M: f64 = 3.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    positions: Vec<(f64, f64)>,
    road_length_m: f64,
    raw_m: f64,
    ring: bool,
    in_range: Vec<bool>,
    neighbors: Vec<Vec<u32>>,
}

impl Geometry {
    /// Uniform longitudinal positions on `[0, road_length_m)`, one lane per
    /// vehicle drawn uniformly. Each vehicle uses its own substream.
    pub fn place(n: u32, lanes: u32, road_length_m: f64, raw_m: f64, seed: u64, ring: bool) -> Self {
        let positions = (0..n)
            .map(|i| {
                let mut rng = derive_substream(seed, i as u64, Purpose::Placement);
                let x = rng.uniform() * road_length_m;
                let lane = rng.below(lanes.max(1) as u64);
                (x, lane as f64 * LANE_WIDTH_M)
            })
            .collect();
        Self::from_positions(positions, road_length_m, raw_m, ring)
    }

    pub fn from_positions(positions: Vec<(f64, f64)>, road_length_m: f64, raw_m: f64, ring: bool) -> Self {
        let mut g = Self { positions, road_length_m, raw_m, ring, in_range: Vec::new(), neighbors: Vec::new() };
        g.rebuild();
        g
    }

    fn rebuild(&mut self) {
        let n = self.positions.len();
        self.in_range = vec![false; n * n];
        self.neighbors = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i != j && self.distance(i as u32, j as u32) <= self.raw_m {
                    self.in_range[i * n + j] = true;
                    self.neighbors[i].push(j as u32);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn road_length_m(&self) -> f64 {
        self.road_length_m
    }

    pub fn raw_m(&self) -> f64 {
        self.raw_m
    }

    pub fn distance(&self, a: u32, b: u32) -> f64 {
        let (xa, ya) = self.positions[a as usize];
        let (xb, yb) = self.positions[b as usize];
        let mut dx = (xa - xb).abs();
        if self.ring {
            dx = dx.min(self.road_length_m - dx);
        }
        dx.hypot(ya - yb)
    }

    /// Whether `b` is within the awareness range of `a`; never true for `a == b`.
    pub fn in_range(&self, a: u32, b: u32) -> bool {
        self.in_range[a as usize * self.positions.len() + b as usize]
    }

    pub fn neighbors(&self, a: u32) -> &[u32] {
        &self.neighbors[a as usize]
    }

    /// Constant-velocity drift on a ring road; even lanes move forward, odd
    /// lanes backward.
    pub fn advance(&mut self, dt_ms: u64, speed_kmh: f64) {
        let step = speed_kmh / 3.6 * dt_ms as f64 / 1000.0;
        let len = self.road_length_m;
        for p in &mut self.positions {
            let lane = (p.1 / LANE_WIDTH_M).round() as u64;
            let dir = if lane.is_multiple_of(2) { 1.0 } else { -1.0 };
            p.0 = (p.0 + dir * step).rem_euclid(len);
        }
        self.rebuild();
    }
}
