//! Monte Carlo harnesses: survival estimates, pseudo-critical brackets, star
//! and path experiments, and the penalised-process comparison.
//!
//! Every replica draws its randomness from `derive_seed(master, index)`, and
//! results are collected in replica order, so outputs do not depend on the
//! number of worker threads.

mod path;
mod star;
pub mod stats;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    GraphRef, LayerSpec, Outcome, ProcessVariant, RunOptions, SimCaps, Simulator, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::graph::{GraphView, OffspringDistribution, OffspringLaw, TreeCaps, VertexId};
use crate::kernels::KernelSpec;
use crate::seed::{combine, derive_seed};

pub use path::{path_transmission, PathReport, PathRow};
pub use star::{good_neighbour_trace, star_graph, star_survival, StarExperimentRecord, StarReport, StarSummary};
use stats::{wilson, Z95};

/// Tag separating tree-growth randomness from the clocks of the same replica.
const TREE_TAG: u64 = 0x7EE;

/// The graph an experiment runs on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Fixed graph; `degrees` overrides the degrees seen by the kernel.
    Finite {
        edges: Vec<(u32, u32)>,
        #[serde(default)]
        degrees: Option<Vec<u32>>,
    },
    /// A fresh lazily grown tree per replica.
    Bgw {
        law: OffspringLaw,
        #[serde(default)]
        caps: TreeCaps,
    },
    /// Root with `n` children, restricted to those of degree at most `l`.
    Star { law: OffspringLaw, n: u32, l: u32 },
}

enum Prepared {
    Fixed(GraphView),
    Lazy(Arc<OffspringDistribution>, TreeCaps),
    Star(Arc<OffspringDistribution>, u32, u32),
}

impl Prepared {
    fn new(spec: &GraphSpec) -> Result<Self> {
        Ok(match spec {
            GraphSpec::Finite { edges, degrees } => {
                let g = GraphView::build_finite(edges)?;
                Prepared::Fixed(match degrees {
                    Some(d) => g.with_degrees(d)?,
                    None => g,
                })
            }
            GraphSpec::Bgw { law, caps } => Prepared::Lazy(Arc::new(OffspringDistribution::new(law.clone())?), *caps),
            GraphSpec::Star { law, n, l } => {
                let dist = Arc::new(OffspringDistribution::new(law.clone())?);
                // Fail early on a bad star rather than inside a replica.
                star_graph(dist.clone(), *n, *l, 0)?;
                Prepared::Star(dist, *n, *l)
            }
        })
    }

    fn run(
        &self,
        sim: &mut Simulator,
        kernel: &KernelSpec,
        layers: &[LayerSpec],
        caps: SimCaps,
        opts: &RunOptions,
        seed: u64,
    ) -> Vec<TrajectoryRecord> {
        match self {
            Prepared::Fixed(g) => sim.run(GraphRef::Shared(g), kernel, layers, caps, opts, seed, &mut ()).layers,
            Prepared::Lazy(dist, tree_caps) => {
                let mut g = GraphView::grow_bgw(dist.clone(), combine(seed, TREE_TAG), *tree_caps);
                sim.run(GraphRef::Owned(&mut g), kernel, layers, caps, opts, seed, &mut ()).layers
            }
            Prepared::Star(dist, n, l) => {
                let g = star_graph(dist.clone(), *n, *l, seed).expect("star validated on preparation");
                sim.run(GraphRef::Shared(&g), kernel, layers, caps, opts, seed, &mut ()).layers
            }
        }
    }
}

/// Survival counts at the horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    pub lambda: f64,
    pub replicas: u64,
    pub extinct: u64,
    /// Reached the horizon with the infection alive.
    pub alive_at_horizon: u64,
    /// Root reinfected in (horizon/2, horizon].
    pub reinfected_root_late: u64,
    /// Stopped early by the infected cap or the tree cap.
    pub censored: u64,
    /// (alive_at_horizon + censored) / replicas.
    pub survival: f64,
    pub wilson_interval: (f64, f64),
    /// Every replica was censored early.
    pub unusable: bool,
}

impl SurvivalEstimate {
    pub fn from_records(lambda: f64, horizon: f64, records: &[TrajectoryRecord]) -> Self {
        let mut est = SurvivalEstimate {
            lambda,
            replicas: records.len() as u64,
            extinct: 0,
            alive_at_horizon: 0,
            reinfected_root_late: 0,
            censored: 0,
            survival: 0.0,
            wilson_interval: (0.0, 1.0),
            unusable: false,
        };
        for r in records {
            match r.outcome {
                Outcome::Extinct { .. } => est.extinct += 1,
                Outcome::Censored { reason: crate::engine::CensorReason::Horizon, .. } => est.alive_at_horizon += 1,
                _ => est.censored += 1,
            }
            if r.root_reinfection_times.iter().any(|&t| t > horizon / 2.0) {
                est.reinfected_root_late += 1;
            }
        }
        let alive = est.alive_at_horizon + est.censored;
        if est.replicas > 0 {
            est.survival = alive as f64 / est.replicas as f64;
        }
        est.wilson_interval = wilson(alive, est.replicas, Z95);
        est.unusable = est.replicas > 0 && est.censored == est.replicas;
        est
    }

    /// Binomial standard error of `survival`.
    pub fn se(&self) -> f64 {
        (self.survival * (1.0 - self.survival) / self.replicas as f64).sqrt()
    }
}

/// Per-replica records of one process from the root.
#[allow(clippy::too_many_arguments)]
pub fn survival_replicas(
    graph: &GraphSpec,
    kernel: &KernelSpec,
    variant: ProcessVariant,
    lambda: f64,
    caps: SimCaps,
    replicas: u64,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", "must be finite and non-negative"));
    }
    let prepared = Prepared::new(graph)?;
    let layers = [LayerSpec::new(variant, lambda, &[VertexId::ROOT])];
    let opts = RunOptions::default();
    Ok((0..replicas)
        .into_par_iter()
        .map_init(Simulator::new, |sim, i| {
            let mut out = prepared.run(sim, kernel, &layers, caps, &opts, derive_seed(seed, i));
            out.pop().expect("one layer")
        })
        .collect())
}

pub fn estimate_survival(
    graph: &GraphSpec,
    kernel: &KernelSpec,
    lambda: f64,
    caps: SimCaps,
    replicas: u64,
    seed: u64,
) -> Result<SurvivalEstimate> {
    if replicas < 100 {
        return Err(Error::invalid("replicas", format!("need at least 100, got {replicas}")));
    }
    let records = survival_replicas(graph, kernel, ProcessVariant::Cpdg, lambda, caps, replicas, seed)?;
    Ok(SurvivalEstimate::from_records(lambda, caps.horizon, &records))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaBracket {
    pub lo: SurvivalEstimate,
    pub hi: SurvivalEstimate,
}

impl LambdaBracket {
    pub fn width(&self) -> f64 {
        self.hi.lambda - self.lo.lambda
    }
}

/// Bisection for the infection rate at which the estimated survival
/// probability crosses `target`.
#[allow(clippy::too_many_arguments)]
pub fn bracket_lambda(
    graph: &GraphSpec,
    kernel: &KernelSpec,
    caps: SimCaps,
    replicas: u64,
    target: f64,
    range: (f64, f64),
    iterations: u32,
    seed: u64,
) -> Result<LambdaBracket> {
    let (a, b) = range;
    if !(a >= 0.0 && b > a && b.is_finite()) {
        return Err(Error::invalid("lambda_range", format!("need 0 <= lo < hi, got [{a}, {b}]")));
    }
    let est = |l: f64| estimate_survival(graph, kernel, l, caps, replicas, seed);
    let mut lo = est(a)?;
    let mut hi = est(b)?;
    if !(lo.survival < target && hi.survival >= target) {
        return Err(Error::invalid(
            "lambda_range",
            format!(
                "does not bracket survival {target}: {} at {a}, {} at {b}",
                lo.survival, hi.survival
            ),
        ));
    }
    for _ in 0..iterations {
        let mid = est(0.5 * (lo.lambda + hi.lambda))?;
        if mid.survival < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(LambdaBracket { lo, hi })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PenalisedRow {
    pub nu: f64,
    pub cpdg: SurvivalEstimate,
    pub lower_bound: SurvivalEstimate,
    /// |P(CPDG at this nu) - P(penalised)|.
    pub gap_to_penalised: f64,
    /// P(lower bound) <= P(CPDG) up to 3 combined standard errors.
    pub ordering_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PenalisedReport {
    pub penalised: SurvivalEstimate,
    pub rows: Vec<PenalisedRow>,
}

/// Survival of the dynamical process at growing update speeds against the
/// penalised process (rate lambda p) and the lower-bound process.
#[allow(clippy::too_many_arguments)]
pub fn penalised_comparison(
    graph: &GraphSpec,
    kernel: &KernelSpec,
    nus: &[f64],
    lambda: f64,
    caps: SimCaps,
    replicas: u64,
    seed: u64,
) -> Result<PenalisedReport> {
    if nus.is_empty() || nus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("nu", "must be a non-empty increasing list"));
    }
    let estimate = |k: &KernelSpec, variant: ProcessVariant| -> Result<SurvivalEstimate> {
        let recs = survival_replicas(graph, k, variant, lambda, caps, replicas, seed)?;
        Ok(SurvivalEstimate::from_records(lambda, caps.horizon, &recs))
    };
    let penalised = estimate(kernel, ProcessVariant::Penalised)?;
    let mut rows = Vec::new();
    for &nu in nus {
        let mut k = kernel.clone();
        k.nu = nu;
        let cpdg = estimate(&k, ProcessVariant::Cpdg)?;
        let lower_bound = estimate(&k, ProcessVariant::LowerBound)?;
        let se = (cpdg.se().powi(2) + lower_bound.se().powi(2)).sqrt();
        rows.push(PenalisedRow {
            nu,
            gap_to_penalised: (cpdg.survival - penalised.survival).abs(),
            ordering_ok: lower_bound.survival <= cpdg.survival + 3.0 * se,
            cpdg,
            lower_bound,
        });
    }
    Ok(PenalisedReport { penalised, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path4() -> GraphSpec {
        GraphSpec::Finite { edges: vec![(0, 1), (1, 2), (2, 3)], degrees: None }
    }

    #[test]
    fn no_infection_means_no_survival() {
        let k = KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
        let e = estimate_survival(&path4(), &k, 0.0, SimCaps::horizon(50.0), 500, 1).unwrap();
        assert_eq!(e.alive_at_horizon, 0);
        assert_eq!(e.extinct, 500);
    }

    #[test]
    fn closed_background_survival_is_root_lifetime() {
        let k = KernelSpec::constant(0.0, 1.0).unwrap();
        let n = 20_000;
        let e = estimate_survival(&path4(), &k, 2.0, SimCaps::horizon(1.0), n, 2).unwrap();
        let q = (-1.0f64).exp();
        assert!((e.survival - q).abs() < 3.0 * (q * (1.0 - q) / n as f64).sqrt(), "{}", e.survival);
    }

    #[test]
    fn estimates_are_reproducible() {
        let k = KernelSpec::sigma_kernel(0.3, 1.0, 1.0, 0.0, 1.0).unwrap();
        let g = GraphSpec::Bgw { law: OffspringLaw::PowerLaw { b: 2.5, k0: 1 }, caps: TreeCaps::default() };
        let a = estimate_survival(&g, &k, 1.0, SimCaps::horizon(5.0), 200, 7).unwrap();
        let b = estimate_survival(&g, &k, 1.0, SimCaps::horizon(5.0), 200, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.extinct + a.alive_at_horizon + a.censored, a.replicas);
    }

    #[test]
    fn bracket_rejects_degenerate_range() {
        let k = KernelSpec::constant(1.0, 1.0).unwrap();
        let r = bracket_lambda(&path4(), &k, SimCaps::horizon(5.0), 100, 0.5, (0.0, 0.0), 3, 1);
        assert!(r.is_err());
    }

    #[test]
    fn bracket_halves_each_iteration() {
        let g = GraphSpec::Finite { edges: (1..30).map(|i| (0, i)).collect(), degrees: None };
        let k = KernelSpec::constant(1.0, 1.0).unwrap();
        let b = bracket_lambda(&g, &k, SimCaps::horizon(3.0), 200, 0.5, (0.0, 8.0), 4, 3).unwrap();
        assert!(b.width() <= 8.0 / 16.0 + 1e-12);
        assert!(b.lo.survival < 0.5 && b.hi.survival >= 0.5);
    }

    #[test]
    fn fast_updates_approach_the_penalised_process() {
        let k = KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
        let rep = penalised_comparison(&path4(), &k, &[1.0, 1000.0], 2.0, SimCaps::horizon(10.0), 4000, 11).unwrap();
        assert!(rep.rows.iter().all(|r| r.ordering_ok));
        assert!(rep.rows[1].gap_to_penalised < 0.05, "{:?}", rep.rows[1]);
    }
}
