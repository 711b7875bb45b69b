use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::stats::{linear_fit, median};
use super::TREE_TAG;
use crate::closedform::{star_constants, StarConstants};
use crate::engine::clock::{initial_uniform, ClockKind, PoissonStream};
use crate::engine::{run_replica, GraphRef, Outcome, ProcessVariant, SimCaps};
use crate::error::{Error, Result};
use crate::graph::{GraphView, OffspringDistribution, TreeCaps, VertexId};
use crate::kernels::KernelSpec;
use crate::seed::{combine, derive_seed};

/// Longest good-neighbour trace kept per replica.
pub const WINDOW_CAP: usize = 4096;

/// The root with `n` children, restricted to the root and its children of
/// degree at most `l`. Degrees and clock keys are those of the full tree.
pub fn star_graph(dist: Arc<OffspringDistribution>, n: u32, l: u32, seed: u64) -> Result<GraphView> {
    let caps = TreeCaps { max_vertices: n as usize + 1, max_depth: 1 };
    let mut tree = GraphView::grow_bgw(dist, combine(seed, TREE_TAG), caps).conditioned_root_degree(n)?;
    tree.expand(VertexId::ROOT)
        .map_err(|_| Error::invalid("star", "root expansion hit the tree caps"))?;
    let mut keep = vec![VertexId::ROOT];
    keep.extend(tree.bounded_degree_children(VertexId::ROOT, l));
    tree.restricted(&keep)
}

/// |G_k| for k = 0..=windows on a star from [`star_graph`]: neighbours whose
/// edge is open at kT and which see neither an edge update nor a recovery in
/// [(k-2)T, (k+2)T).
pub fn good_neighbour_trace(star: &GraphView, kernel: &KernelSpec, seed: u64, t: f64, windows: usize) -> Vec<u32> {
    let mut trace = vec![0u32; windows + 1];
    let end = (windows as f64 + 2.0) * t;
    let root = VertexId::ROOT;
    let droot = star.degree(root);
    for &(y, e) in star.neighbours(root) {
        let dy = star.degree(y);
        let (p, v) = (kernel.p_value(droot, dy), kernel.v_value(droot, dy));
        let key = star.edge_key(e);
        let updates = PoissonStream::new(seed, ClockKind::Update, key, v).points_in(0.0, end);
        let recoveries = PoissonStream::new(seed, ClockKind::Recover, star.key(y), 1.0).points_in(0.0, end);
        let initially_open = initial_uniform(seed, key) < p;
        let any_in = |pts: &[(f64, f64)], a: f64, b: f64| {
            let i = pts.partition_point(|&(s, _)| s < a);
            i < pts.len() && pts[i].0 < b
        };
        for (k, count) in trace.iter_mut().enumerate() {
            let kt = k as f64 * t;
            let i = updates.partition_point(|&(s, _)| s <= kt);
            let open = if i == 0 { initially_open } else { updates[i - 1].1 < p };
            let (a, b) = (((k as f64 - 2.0) * t).max(0.0), (k as f64 + 2.0) * t);
            if open && !any_in(&updates, a, b) && !any_in(&recoveries, a, b) {
                *count += 1;
            }
        }
    }
    trace
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarExperimentRecord {
    pub n: u32,
    pub replica: u64,
    pub seed: u64,
    /// Children of degree at most L.
    pub neighbours: usize,
    /// |G_k| for k = 0, 1, ...
    pub good_neighbour_trace: Vec<u32>,
    /// Minimum of the trace over k <= k_bar.
    pub good_neighbour_minimum: u32,
    pub stable_star: bool,
    /// None when the restricted process was not run.
    pub extinct: Option<bool>,
    /// Extinction time of the restricted process, or the censoring time.
    pub extinction_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarSummary {
    pub constants: StarConstants,
    pub replicas: u64,
    pub stable_count: u64,
    pub stable_fraction: f64,
    /// 1 - exp(-c_L N p(N, L)).
    pub stable_lower_bound: f64,
    /// NaN when the restricted process was not run.
    pub median_extinction_time: f64,
    pub censored: u64,
    /// The stable-star windows were cut at [`WINDOW_CAP`].
    pub windows_capped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarReport {
    pub summaries: Vec<StarSummary>,
    pub records: Vec<StarExperimentRecord>,
    /// Fit of log(median extinction time) against N^{1 - alpha - 2 max(eta, 0)}:
    /// (slope, intercept, R^2). None with fewer than two usable sizes.
    pub scaling: Option<(f64, f64, f64)>,
}

/// Stable-star frequencies and extinction times of the process restricted
/// to the root and its low-degree children. With `caps` set to None only
/// the good-neighbour traces are computed.
#[allow(clippy::too_many_arguments)]
pub fn star_survival(
    ns: &[u32],
    l: u32,
    lambda: f64,
    kernel: &KernelSpec,
    dist: Arc<OffspringDistribution>,
    caps: Option<SimCaps>,
    replicas: u64,
    seed: u64,
) -> Result<StarReport> {
    let mut summaries = Vec::new();
    let mut records = Vec::new();
    for &n in ns {
        let sc = star_constants(n, l, lambda, kernel, &dist)?;
        if !sc.local_survival_ok {
            return Err(Error::invalid("lambda", format!("1.5 lambda T = {} must be below 1", 1.5 * lambda * sc.t)));
        }
        let wanted = sc.stable_windows.max(sc.k_bar);
        let windows = if wanted.is_finite() { (wanted as usize).min(WINDOW_CAP) } else { WINDOW_CAP };
        let stable_upto = if sc.stable_windows.is_finite() {
            (sc.stable_windows as usize).min(windows)
        } else {
            windows
        };
        let kbar_upto = if sc.k_bar.is_finite() { (sc.k_bar as usize).min(windows) } else { windows };
        let base = combine(seed, u64::from(n));
        let recs: Vec<StarExperimentRecord> = (0..replicas)
            .into_par_iter()
            .map(|i| -> Result<StarExperimentRecord> {
                let s = derive_seed(base, i);
                let g = star_graph(dist.clone(), n, l, s)?;
                let trace = good_neighbour_trace(&g, kernel, s, sc.t, windows);
                let run = caps.map(|c| {
                    run_replica(GraphRef::Shared(&g), kernel, lambda, ProcessVariant::Cpdg, &[VertexId::ROOT], c, s).outcome
                });
                Ok(StarExperimentRecord {
                    n,
                    replica: i,
                    seed: s,
                    neighbours: g.num_vertices() - 1,
                    good_neighbour_minimum: trace[..=kbar_upto].iter().copied().min().unwrap_or(0),
                    stable_star: trace[..=stable_upto].iter().all(|&c| f64::from(c) > sc.threshold),
                    good_neighbour_trace: trace,
                    extinct: run.map(|o| matches!(o, Outcome::Extinct { .. })),
                    extinction_time: run.map(|o| o.time()),
                })
            })
            .collect::<Result<_>>()?;
        let stable_count = recs.iter().filter(|r| r.stable_star).count() as u64;
        let times: Vec<f64> = recs.iter().filter_map(|r| r.extinction_time).collect();
        summaries.push(StarSummary {
            replicas,
            stable_count,
            stable_fraction: stable_count as f64 / replicas as f64,
            stable_lower_bound: 1.0 - (-sc.threshold).exp(),
            median_extinction_time: median(&times),
            censored: recs.iter().filter(|r| r.extinct == Some(false)).count() as u64,
            windows_capped: sc.stable_windows > windows as f64,
            constants: sc,
        });
        records.extend(recs);
    }
    let exponent = 1.0 - kernel.alpha - 2.0 * kernel.eta.max(0.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = summaries
        .iter()
        .filter(|s| s.median_extinction_time > 0.0)
        .map(|s| (f64::from(s.constants.n).powf(exponent), s.median_extinction_time.ln()))
        .unzip();
    let scaling = (xs.len() >= 2).then(|| linear_fit(&xs, &ys));
    Ok(StarReport { summaries, records, scaling })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::OffspringLaw;

    fn dist() -> Arc<OffspringDistribution> {
        Arc::new(OffspringDistribution::new(OffspringLaw::PowerLaw { b: 2.5, k0: 1 }).unwrap())
    }

    #[test]
    fn star_keeps_low_degree_children() {
        let g = star_graph(dist(), 200, 4, 9).unwrap();
        assert_eq!(g.degree(VertexId::ROOT), 200);
        assert!(g.num_vertices() > 1 && g.num_vertices() <= 201);
        for i in 1..g.num_vertices() {
            assert!(g.degree(VertexId(i as u32)) <= 4);
        }
    }

    #[test]
    fn trace_matches_direct_queries() {
        let k = KernelSpec::sigma_kernel(0.3, 0.0, 1.0, 0.0, 1.0).unwrap();
        let g = star_graph(dist(), 300, 4, 5).unwrap();
        let t = 0.5;
        let trace = good_neighbour_trace(&g, &k, 5, t, 6);
        for (kk, &c) in trace.iter().enumerate() {
            let kt = kk as f64 * t;
            let (a, b) = (((kk as f64) - 2.0).max(0.0) * t, (kk as f64 + 2.0) * t);
            let direct = g
                .neighbours(VertexId::ROOT)
                .iter()
                .filter(|&&(y, e)| {
                    let (p, v) = (k.p_value(300, g.degree(y)), k.v_value(300, g.degree(y)));
                    crate::engine::clock::stationary_open_at(5, g.edge_key(e), p, v, kt)
                        && !PoissonStream::new(5, ClockKind::Update, g.edge_key(e), v).any_in(a, b)
                        && !PoissonStream::new(5, ClockKind::Recover, g.key(y), 1.0).any_in(a, b)
                })
                .count();
            assert_eq!(c as usize, direct);
        }
    }

    #[test]
    fn no_infection_dies_with_the_root() {
        let k = KernelSpec::sigma_kernel(0.2, 0.0, 1.0, 0.0, 1.0).unwrap();
        let rep = star_survival(&[50], 4, 0.0, &k, dist(), Some(SimCaps::horizon(100.0)), 200, 1).unwrap();
        assert!(rep.records.iter().all(|r| r.extinct == Some(true)));
        let m = rep.summaries[0].median_extinction_time;
        assert!(m > 0.3 && m < 1.2, "{m}");
    }

    #[test]
    fn stable_flag_is_recomputable() {
        let k = KernelSpec::sigma_kernel(0.3, 0.0, 1.0, 0.0, 1.0).unwrap();
        let rep = star_survival(&[1000], 4, 0.5, &k, dist(), None, 50, 2).unwrap();
        let s = &rep.summaries[0];
        let upto = s.constants.stable_windows as usize;
        for r in &rep.records {
            let again = r.good_neighbour_trace[..=upto].iter().all(|&c| f64::from(c) > s.constants.threshold);
            assert_eq!(again, r.stable_star);
        }
    }
}
