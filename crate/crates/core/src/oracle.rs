//! Exact continuous-time Markov chain computations on tiny finite graphs.
//!
//! A state packs the infected set into the low `num_vertices` bits and the
//! open edges into the bits above them.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{GraphView, VertexId};
use crate::kernels::KernelSpec;

/// Largest state count accepted by [`build_exact`].
pub const STATE_CAP: u64 = 1 << 20;
/// Poisson tail mass left out of each uniformization step.
pub const UNIFORMIZATION_TAIL: f64 = 1e-12;
/// Transient-state count above which the linear solves switch from dense
/// LU to Gauss-Seidel.
pub const DENSE_LIMIT: usize = 2048;

#[derive(Clone, Debug)]
pub struct ExactModel {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub lambda: f64,
    /// Endpoint indices per edge.
    pub edges: Vec<(usize, usize)>,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

impl ExactModel {
    pub fn num_states(&self) -> usize {
        self.exit.len()
    }

    pub fn infected_bits(&self, s: usize) -> u32 {
        (s & ((1 << self.num_vertices) - 1)) as u32
    }

    pub fn open_bits(&self, s: usize) -> u32 {
        (s >> self.num_vertices) as u32
    }

    pub fn state(&self, infected_bits: u32, open_bits: u32) -> usize {
        infected_bits as usize | (open_bits as usize) << self.num_vertices
    }

    /// Off-diagonal transitions out of `s` as (target, rate).
    pub fn transitions(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[s]..self.row_ptr[s + 1];
        self.cols[r.clone()].iter().zip(&self.rates[r]).map(|(&c, &q)| (c as usize, q))
    }

    pub fn exit_rate(&self, s: usize) -> f64 {
        self.exit[s]
    }

    pub fn is_extinct(&self, s: usize) -> bool {
        self.infected_bits(s) == 0
    }

    /// Stationary background times a point mass on the infected set.
    pub fn initial_law(&self, infected: &[VertexId]) -> Result<Vec<f64>> {
        let mut c = 0u32;
        for v in infected {
            if v.index() >= self.num_vertices {
                return Err(Error::invalid("init", format!("vertex {} is not in the graph", v.0)));
            }
            c |= 1 << v.index();
        }
        let mut law = vec![0.0; self.num_states()];
        for b in 0..1u32 << self.num_edges {
            let w: f64 = (0..self.num_edges)
                .map(|e| if b >> e & 1 == 1 { self.p[e] } else { 1.0 - self.p[e] })
                .product();
            law[self.state(c, b)] = w;
        }
        Ok(law)
    }
}

pub fn build_exact(graph: &GraphView, kernel: &KernelSpec, lambda: f64) -> Result<ExactModel> {
    if graph.is_lazy() {
        return Err(Error::NotMaterialized);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", "must be finite and non-negative"));
    }
    let nv = graph.num_vertices();
    let ne = graph.num_edges();
    let bits = (nv + ne) as u32;
    if bits > 20 {
        return Err(Error::StateCapExceeded(1u128 << bits.min(127)));
    }
    let n = 1usize << bits;
    let edges: Vec<(usize, usize)> = graph.edges().iter().map(|&(a, b)| (a.index(), b.index())).collect();
    let (mut p, mut v) = (Vec::with_capacity(ne), Vec::with_capacity(ne));
    for &(a, b) in graph.edges() {
        let (da, db) = (graph.degree(a), graph.degree(b));
        p.push(kernel.p_value(da, db));
        v.push(kernel.v_value(da, db));
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut rates = Vec::new();
    let mut exit = Vec::with_capacity(n);
    let mut pressure = vec![0u32; nv];
    row_ptr.push(0);
    for s in 0..n {
        let c = s & ((1 << nv) - 1);
        let b = s >> nv;
        let mut out = 0.0;
        let mut push = |t: usize, q: f64| {
            if q > 0.0 {
                cols.push(t as u32);
                rates.push(q);
                out += q;
            }
        };
        for e in 0..ne {
            let q = if b >> e & 1 == 1 { v[e] * (1.0 - p[e]) } else { v[e] * p[e] };
            push(s ^ 1 << (nv + e), q);
        }
        pressure.iter_mut().for_each(|x| *x = 0);
        for (e, &(x, y)) in edges.iter().enumerate() {
            if b >> e & 1 == 1 {
                match (c >> x & 1, c >> y & 1) {
                    (1, 0) => pressure[y] += 1,
                    (0, 1) => pressure[x] += 1,
                    _ => {}
                }
            }
        }
        for x in 0..nv {
            if c >> x & 1 == 1 {
                push(s ^ 1 << x, 1.0);
            } else if pressure[x] > 0 {
                push(s | 1 << x, lambda * f64::from(pressure[x]));
            }
        }
        exit.push(out);
        row_ptr.push(cols.len());
    }
    Ok(ExactModel { num_vertices: nv, num_edges: ne, lambda, edges, p, v, row_ptr, cols, rates, exit })
}

/// Law of the chain at time `t` from `init`, by uniformization in steps of
/// at most ten expected jumps.
pub fn transient_law(model: &ExactModel, init: &[f64], t: f64) -> Result<Vec<f64>> {
    if init.len() != model.num_states() {
        return Err(Error::invalid("init", "length differs from the state count"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", "must be finite and non-negative"));
    }
    let rate = model.exit.iter().copied().fold(0.0, f64::max);
    let mut law = init.to_vec();
    if t == 0.0 || rate == 0.0 {
        return Ok(law);
    }
    let steps = (rate * t / 10.0).ceil().max(1.0);
    let mean = rate * t / steps;
    let tail = UNIFORMIZATION_TAIL / steps;
    let mut term = vec![0.0; law.len()];
    let mut next = vec![0.0; law.len()];
    for _ in 0..steps as u64 {
        term.copy_from_slice(&law);
        let mut weight = (-mean).exp();
        let mut covered = weight;
        law.iter_mut().zip(&term).for_each(|(l, x)| *l = weight * x);
        let mut k = 0.0;
        while 1.0 - covered > tail {
            k += 1.0;
            next.iter_mut().for_each(|x| *x = 0.0);
            for (s, &mass) in term.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                next[s] += mass * (1.0 - model.exit[s] / rate);
                for (j, q) in model.transitions(s) {
                    next[j] += mass * q / rate;
                }
            }
            std::mem::swap(&mut term, &mut next);
            weight *= mean / k;
            covered += weight;
            law.iter_mut().zip(&term).for_each(|(l, x)| *l += weight * x);
            if k > 10.0 * mean + 100.0 {
                // Rounding in `covered` can stall just above 1 - tail.
                break;
            }
        }
    }
    Ok(law)
}

/// Probability that the chain satisfies `event` at time `t`.
pub fn transient_prob(model: &ExactModel, init: &[f64], t: f64, event: impl Fn(&ExactModel, usize) -> bool) -> Result<f64> {
    let law = transient_law(model, init, t)?;
    Ok(law.iter().enumerate().filter(|&(s, _)| event(model, s)).map(|(_, w)| w).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtinctionStats {
    pub extinction_prob: f64,
    pub mean_time: f64,
    /// Non-extinct states reachable from the initial law.
    pub transient_states: usize,
}

/// Absorption into the infection-free states, with those states lumped.
pub fn extinction_stats(model: &ExactModel, init: &[f64]) -> Result<ExtinctionStats> {
    if init.len() != model.num_states() {
        return Err(Error::invalid("init", "length differs from the state count"));
    }
    // Transient states reachable from the initial support.
    let mut index = vec![usize::MAX; model.num_states()];
    let mut order = Vec::new();
    let mut stack: Vec<usize> = (0..init.len()).filter(|&s| init[s] > 0.0 && !model.is_extinct(s)).collect();
    for &s in &stack {
        index[s] = 0;
    }
    while let Some(s) = stack.pop() {
        index[s] = order.len();
        order.push(s);
        for (j, _) in model.transitions(s) {
            if !model.is_extinct(j) && index[j] == usize::MAX {
                index[j] = 0;
                stack.push(j);
            }
        }
    }
    let n = order.len();
    let absorb_rate = |s: usize| -> f64 { model.transitions(s).filter(|&(j, _)| model.is_extinct(j)).map(|(_, q)| q).sum() };
    let (hit, time) = if n == 0 {
        (Vec::new(), Vec::new())
    } else if n <= DENSE_LIMIT {
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DMatrix::<f64>::zeros(n, 2);
        for (i, &s) in order.iter().enumerate() {
            a[(i, i)] = model.exit[s];
            for (j, q) in model.transitions(s) {
                if !model.is_extinct(j) {
                    a[(i, index[j])] -= q;
                }
            }
            rhs[(i, 0)] = absorb_rate(s);
            rhs[(i, 1)] = 1.0;
        }
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem(format!("{n} transient states")))?;
        let col = |k: usize| -> Vec<f64> { DVector::from(sol.column(k)).iter().copied().collect() };
        (col(0), col(1))
    } else {
        let hit = gauss_seidel(model, &order, &index, |s| absorb_rate(s))?;
        let time = gauss_seidel(model, &order, &index, |_| 1.0)?;
        (hit, time)
    };
    let mut prob = 0.0;
    let mut mean = 0.0;
    for (s, &w) in init.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        if model.is_extinct(s) {
            prob += w;
        } else {
            prob += w * hit[index[s]];
            mean += w * time[index[s]];
        }
    }
    Ok(ExtinctionStats { extinction_prob: prob, mean_time: mean, transient_states: n })
}

fn gauss_seidel(model: &ExactModel, order: &[usize], index: &[usize], source: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    let b: Vec<f64> = order.iter().map(|&s| source(s)).collect();
    let mut x = vec![0.0; order.len()];
    for _ in 0..100_000 {
        let mut change: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (i, &s) in order.iter().enumerate() {
            let mut acc = b[i];
            for (j, q) in model.transitions(s) {
                if !model.is_extinct(j) {
                    acc += q * x[index[j]];
                }
            }
            let new = acc / model.exit[s];
            change = change.max((new - x[i]).abs());
            scale = scale.max(new.abs());
            x[i] = new;
        }
        if !change.is_finite() {
            break;
        }
        if change <= 1e-13 * scale.max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::SingularSystem("Gauss-Seidel did not converge".into()))
}
