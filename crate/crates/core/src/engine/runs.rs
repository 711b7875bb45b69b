use serde::Serialize;

use super::{GraphRef, LayerSpec, ProcessVariant, RunOptions, SimCaps, Simulator, TrajectoryRecord};
use crate::graph::VertexId;
use crate::kernels::KernelSpec;

/// Two processes run on one realization, with the count of times the
/// inner one was not contained in the outer one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledRun {
    pub inner: TrajectoryRecord,
    pub outer: TrajectoryRecord,
    pub violations: u64,
}

impl CoupledRun {
    pub fn violated(&self) -> bool {
        self.violations > 0
    }
}

/// Single process from `init` until extinction or censoring.
pub fn run_replica(
    graph: GraphRef<'_>,
    kernel: &KernelSpec,
    lambda: f64,
    variant: ProcessVariant,
    init: &[VertexId],
    caps: SimCaps,
    seed: u64,
) -> TrajectoryRecord {
    let layers = [LayerSpec::new(variant, lambda, init)];
    let mut out = Simulator::new().run(graph, kernel, &layers, caps, &RunOptions::default(), seed, &mut ());
    out.layers.pop().expect("one layer")
}

fn coupled(graph: GraphRef<'_>, kernel: &KernelSpec, layers: [LayerSpec; 2], caps: SimCaps, seed: u64) -> CoupledRun {
    let opts = RunOptions {
        containment: vec![(0, 1)],
        verify_background: graph.get().num_edges() <= 64,
        ..RunOptions::default()
    };
    let out = Simulator::new().run(graph, kernel, &layers, caps, &opts, seed, &mut ());
    let mut it = out.layers.into_iter();
    CoupledRun {
        inner: it.next().expect("inner"),
        outer: it.next().expect("outer"),
        violations: out.violations,
    }
}

/// Same process from nested initial sets on one realization.
pub fn run_coupled(
    graph: GraphRef<'_>,
    kernel: &KernelSpec,
    lambda: f64,
    init_small: &[VertexId],
    init_big: &[VertexId],
    caps: SimCaps,
    seed: u64,
) -> CoupledRun {
    let layers = [
        LayerSpec::new(ProcessVariant::Cpdg, lambda, init_small),
        LayerSpec::new(ProcessVariant::Cpdg, lambda, init_big),
    ];
    coupled(graph, kernel, layers, caps, seed)
}

/// The process (inner) against its wait-and-see majorant (outer), which
/// starts with every edge unrevealed.
pub fn run_waitandsee_dominating(
    graph: GraphRef<'_>,
    kernel: &KernelSpec,
    lambda: f64,
    init: &[VertexId],
    caps: SimCaps,
    seed: u64,
) -> CoupledRun {
    let layers = [
        LayerSpec::new(ProcessVariant::Cpdg, lambda, init),
        LayerSpec::new(ProcessVariant::WaitAndSee, lambda, init),
    ];
    coupled(graph, kernel, layers, caps, seed)
}

/// The process at two infection rates, the smaller one obtained by
/// thinning the larger one's infection clocks.
pub fn run_lambda_coupled(
    graph: GraphRef<'_>,
    kernel: &KernelSpec,
    lambda_small: f64,
    lambda_big: f64,
    init: &[VertexId],
    caps: SimCaps,
    seed: u64,
) -> CoupledRun {
    assert!(lambda_small <= lambda_big, "lambda_small must not exceed lambda_big");
    let layers = [
        LayerSpec::new(ProcessVariant::Cpdg, lambda_small, init),
        LayerSpec::new(ProcessVariant::Cpdg, lambda_big, init),
    ];
    coupled(graph, kernel, layers, caps, seed)
}
