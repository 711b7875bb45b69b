use rayon::prelude::*;
use serde::Serialize;

use super::stats::{linear_fit, wilson, Z95};
use crate::closedform::path_lower_bound;
use crate::engine::{BackgroundInit, GraphRef, LayerSpec, Outcome, ProcessVariant, RunOptions, SimCaps, Simulator};
use crate::error::{Error, Result};
use crate::graph::{GraphView, VertexId};
use crate::kernels::KernelSpec;
use crate::seed::{combine, derive_seed};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathRow {
    pub r: u32,
    pub replicas: u64,
    /// Runs that infected the far end within time 4r.
    pub hits: u64,
    pub empirical: f64,
    pub wilson_interval: (f64, f64),
    pub lower_bound: f64,
    /// lower_bound <= upper Wilson limit.
    pub bound_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathReport {
    pub rows: Vec<PathRow>,
    /// Fit of log(empirical) against r: (slope, intercept, R^2). None when
    /// fewer than two rows have hits.
    pub log_fit: Option<(f64, f64, f64)>,
}

/// Probability of infecting x_r within time 4r on the path x_0, ..., x_r
/// from x_0, where `degrees[i]` is the degree the kernel sees at x_i (the
/// excess over the path degree stands for dummy leaves).
#[allow(clippy::too_many_arguments)]
pub fn path_transmission(
    rs: &[u32],
    degrees: &[u32],
    lambda: f64,
    kernel: &KernelSpec,
    background: BackgroundInit,
    replicas: u64,
    seed: u64,
) -> Result<PathReport> {
    let mut rows = Vec::new();
    for &r in rs {
        if r == 0 || degrees.len() <= r as usize {
            return Err(Error::invalid("r", format!("need 1 <= r < {}, got {r}", degrees.len())));
        }
        let degs = &degrees[..=r as usize];
        let edges: Vec<(u32, u32)> = (0..r).map(|i| (i, i + 1)).collect();
        let g = GraphView::build_finite(&edges)?.with_degrees(degs)?;
        let lower_bound = path_lower_bound(degs, lambda, kernel)?;
        let layers = [LayerSpec::new(ProcessVariant::Cpdg, lambda, &[VertexId::ROOT])];
        let opts = RunOptions {
            background,
            target: Some(VertexId(r)),
            stop_on_target: true,
            ..RunOptions::default()
        };
        let caps = SimCaps::horizon(4.0 * f64::from(r));
        let base = combine(seed, u64::from(r));
        let hits = (0..replicas)
            .into_par_iter()
            .map_init(Simulator::new, |sim, i| {
                let out = sim.run(GraphRef::Shared(&g), kernel, &layers, caps, &opts, derive_seed(base, i), &mut ());
                u64::from(matches!(out.layers[0].outcome, Outcome::TargetReached { .. }))
            })
            .sum::<u64>();
        let wilson_interval = wilson(hits, replicas, Z95);
        rows.push(PathRow {
            r,
            replicas,
            hits,
            empirical: hits as f64 / replicas as f64,
            wilson_interval,
            lower_bound,
            bound_ok: lower_bound <= wilson_interval.1,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|row| row.hits > 0)
        .map(|row| (f64::from(row.r), row.empirical.ln()))
        .unzip();
    let log_fit = (xs.len() >= 2).then(|| linear_fit(&xs, &ys));
    Ok(PathReport { rows, log_fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{transmission_prob, transmission_time_tail, EdgeLaw};

    #[test]
    fn single_edge_matches_closed_form() {
        let k = KernelSpec::constant(0.4, 1.0).unwrap();
        let n = 40_000;
        let rep = path_transmission(&[1], &[3, 3], 0.5, &k, BackgroundInit::AllClosed, n, 4).unwrap();
        let q = transmission_prob(0.5, 1.0, 0.4) * (1.0 - transmission_time_tail(&EdgeLaw::new(0.5, 1.0, 0.4), 4.0));
        let e = rep.rows[0].empirical;
        assert!((e - q).abs() < 3.0 * (q * (1.0 - q) / n as f64).sqrt(), "{e} vs {q}");
    }

    #[test]
    fn rejects_short_degree_list() {
        let k = KernelSpec::constant(0.4, 1.0).unwrap();
        assert!(path_transmission(&[3], &[3, 3], 0.5, &k, BackgroundInit::Stationary, 10, 1).is_err());
    }
}
