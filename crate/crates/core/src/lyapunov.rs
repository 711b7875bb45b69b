//! The weighted score functional of the wait-and-see process and the
//! conditions under which it decays exponentially in expectation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    GraphRef, LayerSpec, Observer, ProcessVariant, RunOptions, SimCaps, Simulation, Simulator,
};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, GraphView, VertexId};
use crate::kernels::KernelSpec;
use crate::seed::derive_seed;

/// Vertex weight as a function of degree; must be at least 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFunction {
    /// W(d) = d.
    Linear,
    /// W(d) = d^beta.
    Power { beta: f64 },
    /// W(d) = table[d - 1]; degrees past the end reuse the last entry.
    Custom { table: Vec<f64> },
}

impl WeightFunction {
    pub fn weight(&self, d: u32) -> f64 {
        match self {
            WeightFunction::Linear => f64::from(d),
            WeightFunction::Power { beta } => f64::from(d).powf(*beta),
            WeightFunction::Custom { table } => {
                let i = (d.max(1) as usize - 1).min(table.len().saturating_sub(1));
                table.get(i).copied().unwrap_or(f64::NAN)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovReport {
    /// Smallest constant satisfying both neighbourhood conditions.
    pub k: f64,
    /// Smallest update speed over the edges.
    pub v_min: f64,
    pub lambda: f64,
    /// Decay exponent at `lambda`.
    pub theta: f64,
    /// Positive root of theta; infinite when K = 0.
    pub lambda_star: f64,
    /// False when part of a lazy tree was not materialized, so the sums at
    /// its boundary are incomplete.
    pub complete: bool,
    /// Depth of the deepest expanded vertex.
    pub checked_depth: u32,
}

/// theta(lambda) = lambda K (1 + 2 lambda / v_min^2) + 4 lambda^2 K - min(v_min / 2, 1).
pub fn theta(k: f64, v_min: f64, lambda: f64) -> f64 {
    lambda * k * (1.0 + 2.0 * lambda / (v_min * v_min)) + 4.0 * lambda * lambda * k - (v_min / 2.0).min(1.0)
}

/// Positive root of theta in lambda.
pub fn lambda_star(k: f64, v_min: f64) -> f64 {
    let m = (v_min / 2.0).min(1.0);
    if k <= 0.0 {
        return f64::INFINITY;
    }
    let a = k * (2.0 / (v_min * v_min) + 4.0);
    let b = k;
    2.0 * m / (b + (b * b + 4.0 * a * m).sqrt())
}

pub fn check_conditions(graph: &GraphView, kernel: &KernelSpec, w: &WeightFunction, lambda: f64) -> Result<LyapunovReport> {
    let n = graph.num_vertices();
    let mut weight = Vec::with_capacity(n);
    for i in 0..n {
        let d = graph.degree(VertexId(i as u32));
        let x = w.weight(d);
        if !(x >= 1.0) {
            return Err(Error::invalid("weight", format!("W({d}) = {x} is below 1")));
        }
        weight.push(x);
    }
    let mut v_min = f64::INFINITY;
    for &(x, y) in graph.edges() {
        v_min = v_min.min(kernel.v_value(graph.degree(x), graph.degree(y)));
    }
    if graph.num_edges() == 0 {
        v_min = kernel.nu;
    }
    if !(v_min > 0.0) {
        return Err(Error::invalid("kernel", "update speeds are not bounded away from zero"));
    }
    let mut k: f64 = 0.0;
    let mut complete = true;
    let mut checked_depth = 0;
    for i in 0..n {
        let x = VertexId(i as u32);
        if !graph.is_expanded(x) {
            complete = false;
            continue;
        }
        checked_depth = checked_depth.max(graph.depth(x));
        let dx = graph.degree(x);
        let mut weighted = 0.0;
        let mut speed = 0.0;
        for &(y, _) in graph.neighbours(x) {
            let dy = graph.degree(y);
            let p = kernel.p_value(dy, dx);
            let v = kernel.v_value(dx, dy);
            weighted += weight[y.index()] * p;
            speed += p / (v * v);
        }
        k = k.max(weighted / weight[i]).max(speed);
    }
    Ok(LyapunovReport {
        k,
        v_min,
        lambda,
        theta: theta(k, v_min, lambda),
        lambda_star: lambda_star(k, v_min),
        complete,
        checked_depth,
    })
}

/// A state of the wait-and-see process.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WaitAndSeeState {
    pub infected: Vec<VertexId>,
    pub revealed: Vec<EdgeId>,
}

fn score_sum(
    graph: &GraphView,
    kernel: &KernelSpec,
    lambda: f64,
    w: &WeightFunction,
    infected: impl Iterator<Item = VertexId>,
    revealed: impl Iterator<Item = EdgeId>,
) -> f64 {
    let n = graph.num_vertices();
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut inf = vec![false; n];
    for x in infected {
        inf[x.index()] = true;
    }
    for e in revealed {
        let (x, y) = graph.endpoints(e);
        let v = kernel.v_value(graph.degree(x), graph.degree(y));
        for z in [x, y] {
            r[z.index()] += lambda / v;
            q[z.index()] += lambda / (v * v);
        }
    }
    (0..n)
        .map(|i| {
            let h = if inf[i] { 1.0 + 2.0 * q[i] } else { r[i] + 2.0 * q[i] };
            if h == 0.0 {
                0.0
            } else {
                w.weight(graph.degree(VertexId(i as u32))) * h
            }
        })
        .sum()
}

/// Weighted score sum of a wait-and-see state.
pub fn f_value(graph: &GraphView, kernel: &KernelSpec, lambda: f64, state: &WaitAndSeeState, w: &WeightFunction) -> f64 {
    score_sum(graph, kernel, lambda, w, state.infected.iter().copied(), state.revealed.iter().copied())
}

/// Weighted score sum of the wait-and-see layer of a running simulation.
pub fn f_of_simulation(sim: &Simulation<'_>, layer: usize, w: &WeightFunction) -> f64 {
    score_sum(sim.graph(), sim.kernel(), sim.lambda(layer), w, sim.infected(layer), sim.revealed_edges())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupermartingaleTrace {
    pub theta: f64,
    pub f0: f64,
    pub times: Vec<f64>,
    pub mean_f: Vec<f64>,
    pub se_f: Vec<f64>,
    /// f0 exp(theta t) at each time.
    pub bound: Vec<f64>,
    /// None in report-only mode (theta >= 0).
    pub pass: Option<bool>,
    /// Sampled states where f fell below the infected count.
    pub f_below_count: u64,
}

struct Sampler<'w> {
    times: Vec<f64>,
    w: &'w WeightFunction,
    values: Vec<f64>,
    below: u64,
}

impl Observer for Sampler<'_> {
    fn sample_times(&self) -> &[f64] {
        &self.times
    }

    fn on_sample(&mut self, sim: &Simulation<'_>, _t: f64) {
        let f = f_of_simulation(sim, 0, self.w);
        if f < sim.infected_count(0) as f64 {
            self.below += 1;
        }
        self.values.push(f);
    }
}

/// Monte Carlo mean of f along the wait-and-see process against the
/// exponential bound f(X_0) exp(theta t), with a 3 SE one-sided slack.
#[allow(clippy::too_many_arguments)]
pub fn supermartingale_trace(
    graph: &GraphView,
    kernel: &KernelSpec,
    lambda: f64,
    w: &WeightFunction,
    init: &[VertexId],
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<SupermartingaleTrace> {
    if times.windows(2).any(|p| p[1] < p[0]) || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::invalid("times", "must be non-negative and sorted"));
    }
    if replicas < 2 {
        return Err(Error::invalid("replicas", "need at least 2"));
    }
    let report = check_conditions(graph, kernel, w, lambda)?;
    let horizon = times.last().copied().unwrap_or(0.0);
    let layers = [LayerSpec::new(ProcessVariant::WaitAndSee, lambda, init)];
    let opts = RunOptions::default();
    let per_replica: Vec<(Vec<f64>, u64)> = (0..replicas as u64)
        .into_par_iter()
        .map_init(Simulator::new, |sim, i| {
            let mut obs = Sampler { times: times.to_vec(), w, values: Vec::new(), below: 0 };
            sim.run(GraphRef::Shared(graph), kernel, &layers, SimCaps::horizon(horizon), &opts, derive_seed(seed, i), &mut obs);
            (obs.values, obs.below)
        })
        .collect();
    let f0 = f_value(
        graph,
        kernel,
        lambda,
        &WaitAndSeeState { infected: init.to_vec(), revealed: Vec::new() },
        w,
    );
    let n = replicas as f64;
    let mut mean_f = Vec::new();
    let mut se_f = Vec::new();
    let mut bound = Vec::new();
    let mut ok = true;
    for (j, &t) in times.iter().enumerate() {
        let vals: Vec<f64> = per_replica.iter().map(|(v, _)| v[j]).collect();
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let b = f0 * (report.theta * t).exp();
        ok &= m <= b + 3.0 * se;
        mean_f.push(m);
        se_f.push(se);
        bound.push(b);
    }
    Ok(SupermartingaleTrace {
        theta: report.theta,
        f0,
        times: times.to_vec(),
        mean_f,
        se_f,
        bound,
        pass: (report.theta < 0.0).then_some(ok),
        f_below_count: per_replica.iter().map(|(_, b)| b).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{OffspringDistribution, OffspringLaw, TreeCaps};
    use std::sync::Arc;

    #[test]
    fn theta_examples() {
        assert_eq!(theta(3.0, 0.5, 0.0), -0.25);
        assert!((theta(1.0, 2.0, 0.1) + 0.855).abs() < 1e-12);
        let ls = lambda_star(1.0, 2.0);
        assert!(theta(1.0, 2.0, ls).abs() < 1e-12);
        assert!(ls > 0.0);
        assert_eq!(lambda_star(0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn regular_tree_condition() {
        let dist = Arc::new(OffspringDistribution::new(OffspringLaw::Deterministic { d: 2 }).unwrap());
        let mut tree = GraphView::grow_bgw(dist, 1, TreeCaps::default());
        tree.expand_ball(4).unwrap();
        let all: Vec<VertexId> = (0..tree.num_vertices() as u32).map(VertexId).collect();
        let g = tree.restricted(&all).unwrap();
        let k = KernelSpec::sigma_kernel(1.1, 0.0, 1.0, 0.0, 1.0).unwrap();
        let r = check_conditions(&g, &k, &WeightFunction::Linear, 0.1).unwrap();
        let env = k.envelope_check(3, &[3, 10, 100]).unwrap();
        assert!(r.k <= env.kappa2 + 1e-12, "{} vs {}", r.k, env.kappa2);
        assert!(r.complete);
        assert!(r.lambda_star > 0.0);
    }

    #[test]
    fn weights_below_one_are_rejected() {
        let g = GraphView::build_finite(&[(0, 1)]).unwrap();
        let k = KernelSpec::constant(0.5, 1.0).unwrap();
        let w = WeightFunction::Custom { table: vec![0.5] };
        assert!(check_conditions(&g, &k, &w, 0.1).is_err());
    }

    #[test]
    fn f_examples() {
        let g = GraphView::build_finite(&[(0, 1), (1, 2)]).unwrap();
        let k = KernelSpec::constant(0.5, 1.0).unwrap();
        let one = WeightFunction::Power { beta: 0.0 };
        assert_eq!(f_value(&g, &k, 1.0, &WaitAndSeeState::default(), &one), 0.0);
        let s = WaitAndSeeState { infected: vec![VertexId(1)], revealed: vec![] };
        assert_eq!(f_value(&g, &k, 1.0, &s, &WeightFunction::Linear), 2.0);
        let s = WaitAndSeeState { infected: vec![], revealed: vec![EdgeId(0)] };
        assert_eq!(f_value(&g, &k, 1.0, &s, &one), 6.0);
    }
}
