//! Random-access Poisson clocks.
//!
//! Every clock of the graphical representation is a homogeneous Poisson
//! process cut into buckets of unit expected size. The points of a bucket
//! are a pure function of (run seed, clock kind, key, bucket index), so any
//! window of any clock can be queried at any time, in any order. Two runs
//! with the same seed therefore see the same realization however lazily
//! they explore it.

use crate::seed::{combine, mix64, unit};

/// Which family of clocks a stream belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum ClockKind {
    /// Edge updates; marks decide the redrawn state.
    Update = 0xA1,
    /// Infection attempts; marks thin the clock per process.
    Attempt = 0xA2,
    /// Vertex recoveries.
    Recover = 0xA3,
}

const INITIAL_STATE: u64 = 0xA4;
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One Poisson clock with uniform marks.
#[derive(Clone, Copy, Debug)]
pub struct PoissonStream {
    seed: u64,
    rate: f64,
}

impl PoissonStream {
    pub fn new(run_seed: u64, kind: ClockKind, key: u64, rate: f64) -> Self {
        Self {
            seed: combine(combine(run_seed, kind as u64), key),
            rate,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn start(&self, b: u64) -> f64 {
        b as f64 / self.rate
    }

    /// Bucket index b with start(b) <= t < start(b + 1).
    fn bucket_of(&self, t: f64) -> u64 {
        let mut b = (t * self.rate).floor().max(0.0) as u64;
        while b > 0 && self.start(b) > t {
            b -= 1;
        }
        while self.start(b + 1) <= t {
            b += 1;
        }
        b
    }

    fn bucket(&self, b: u64) -> Bucket {
        Bucket {
            state: combine(self.seed, b),
            t: self.start(b),
            end: self.start(b + 1),
            rate: self.rate,
        }
    }

    /// First point strictly after `t`, with its mark; `(inf, 0)` for a dead clock.
    pub fn next_after(&self, t: f64) -> (f64, f64) {
        if !(self.rate > 0.0) {
            return (f64::INFINITY, 0.0);
        }
        let mut b = self.bucket_of(t);
        loop {
            for (s, m) in self.bucket(b) {
                if s > t {
                    return (s, m);
                }
            }
            b += 1;
        }
    }

    /// Last point in the window (a, b].
    pub fn last_in(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        if !(self.rate > 0.0) || b <= a {
            return None;
        }
        let lo = self.bucket_of(a);
        let mut k = self.bucket_of(b);
        loop {
            let hit = self.bucket(k).filter(|&(s, _)| s > a && s <= b).last();
            if hit.is_some() {
                return hit;
            }
            if k == lo {
                return None;
            }
            k -= 1;
        }
    }

    /// Whether any point falls in [a, b).
    pub fn any_in(&self, a: f64, b: f64) -> bool {
        if !(self.rate > 0.0) || b <= a {
            return false;
        }
        let mut k = self.bucket_of(a);
        loop {
            let mut bucket = self.bucket(k);
            if bucket.t >= b {
                return false;
            }
            if bucket.any(|(s, _)| s >= a && s < b) {
                return true;
            }
            k += 1;
        }
    }

    /// All points in [a, b), in order.
    pub fn points_in(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if !(self.rate > 0.0) || b <= a {
            return out;
        }
        let mut k = self.bucket_of(a);
        loop {
            let bucket = self.bucket(k);
            if bucket.t >= b {
                return out;
            }
            out.extend(bucket.filter(|&(s, _)| s >= a && s < b));
            k += 1;
        }
    }
}

/// Points of one bucket, generated by exponential gaps from its start.
struct Bucket {
    state: u64,
    t: f64,
    end: f64,
    rate: f64,
}

impl Bucket {
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }
}

impl Iterator for Bucket {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        if self.t >= self.end {
            return None;
        }
        let gap = -(1.0 - unit(self.next_u64())).ln() / self.rate;
        self.t += gap;
        if self.t >= self.end {
            self.t = self.end;
            return None;
        }
        Some((self.t, unit(self.next_u64())))
    }
}

/// Uniform draw deciding the state of an edge at time zero.
pub fn initial_uniform(run_seed: u64, edge_key: u64) -> f64 {
    unit(combine(combine(run_seed, INITIAL_STATE), edge_key))
}

/// State of an edge at time `t` under a stationary start: the mark of the
/// last update in (0, t], or the initial draw when there was none.
pub fn stationary_open_at(run_seed: u64, edge_key: u64, p: f64, v: f64, t: f64) -> bool {
    let updates = PoissonStream::new(run_seed, ClockKind::Update, edge_key, v);
    match updates.last_in(0.0, t) {
        Some((_, mark)) => mark < p,
        None => initial_uniform(run_seed, edge_key) < p,
    }
}
