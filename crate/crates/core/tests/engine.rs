use std::sync::Arc;

use cpdg::engine::{
    run_coupled, run_lambda_coupled, run_replica, run_waitandsee_dominating, BackgroundInit, CensorReason, Event,
    EventKind, GraphRef, LayerSpec, Observer, Outcome, ProcessVariant, RunOptions, SimCaps, Simulation, Simulator,
};
use cpdg::graph::{GraphView, OffspringDistribution, OffspringLaw, TreeCaps, VertexId};
use cpdg::kernels::KernelSpec;
use cpdg::seed::{derive_seed, rng_from};
use rand::Rng;

const ROOT: VertexId = VertexId::ROOT;

fn k2() -> GraphView {
    GraphView::build_finite(&[(0, 1)]).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Random connected graph on `n` vertices with up to `extra` chords.
fn random_graph(seed: u64, n: u32, extra: usize) -> GraphView {
    let mut rng = rng_from(seed);
    let mut edges: Vec<(u32, u32)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == (a, b)) {
            edges.push((a, b));
        }
    }
    GraphView::build_finite(&edges).unwrap()
}

#[test]
fn pure_death_extinction_time() {
    let g = k2();
    let k = KernelSpec::constant(0.5, 1.0).unwrap();
    let times: Vec<f64> = (0..100_000)
        .map(|i| {
            let r = run_replica((&g).into(), &k, 0.0, ProcessVariant::Cpdg, &[ROOT], SimCaps::horizon(1e9), i);
            assert_eq!(r.counts.attempts, 0);
            match r.outcome {
                Outcome::Extinct { time } => time,
                o => panic!("{o:?}"),
            }
        })
        .collect();
    let (m, _) = mean_se(&times);
    assert!((m - 1.0).abs() < 0.01, "mean extinction time {m}");
}

#[test]
fn closed_background_never_transmits() {
    let g = random_graph(3, 8, 3);
    let k = KernelSpec::constant(0.0, 1.0).unwrap();
    struct Monotone(usize, bool);
    impl Observer for Monotone {
        fn on_event(&mut self, sim: &Simulation<'_>, _ev: &Event) {
            let c = sim.infected_count(0);
            self.1 &= c <= self.0;
            self.0 = c;
        }
    }
    let all: Vec<VertexId> = (0..4).map(VertexId).collect();
    let layers = [LayerSpec::new(ProcessVariant::Cpdg, 2.0, &all)];
    let mut sim = Simulator::new();
    for seed in 0..200 {
        let mut obs = Monotone(4, true);
        let out = sim.run((&g).into(), &k, &layers, SimCaps::horizon(50.0), &RunOptions::default(), seed, &mut obs);
        assert!(obs.1);
        assert_eq!(out.layers[0].counts.infections, 0);
    }
}

#[test]
fn classical_race_on_single_edge() {
    let g = k2();
    let k = KernelSpec::constant(1.0, 3.7).unwrap();
    let n = 100_000;
    let both = (0..n)
        .filter(|&i| {
            let r = run_replica((&g).into(), &k, 1.0, ProcessVariant::Cpdg, &[ROOT], SimCaps::horizon(1e9), i);
            r.peak_infected == 2
        })
        .count() as f64
        / n as f64;
    let se = (0.25f64 / n as f64).sqrt();
    assert!((both - 0.5).abs() < 3.0 * se, "{both}");
}

#[test]
fn empty_start_and_zero_horizon() {
    let g = k2();
    let k = KernelSpec::constant(0.5, 1.0).unwrap();
    let r = run_replica((&g).into(), &k, 1.0, ProcessVariant::Cpdg, &[], SimCaps::horizon(10.0), 1);
    assert_eq!(r.outcome, Outcome::Extinct { time: 0.0 });
    let r = run_replica((&g).into(), &k, 1.0, ProcessVariant::Cpdg, &[ROOT], SimCaps::horizon(0.0), 1);
    assert_eq!(r.outcome, Outcome::Censored { reason: CensorReason::Horizon, time: 0.0 });
}

#[test]
fn fixed_seed_is_reproducible() {
    let dist = Arc::new(OffspringDistribution::new(OffspringLaw::PowerLaw { b: 2.5, k0: 1 }).unwrap());
    let k = KernelSpec::sigma_kernel(0.3, 1.0, 1.0, 0.2, 1.0).unwrap();
    let run = || {
        let mut g = GraphView::grow_bgw(dist.clone(), 99, TreeCaps::default());
        run_replica((&mut g).into(), &k, 1.5, ProcessVariant::Cpdg, &[ROOT], SimCaps::horizon(20.0), 1234)
    };
    let a = run();
    let b = run();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.total_events > 0);
}

#[test]
fn lazy_tree_truncation_is_censoring() {
    let dist = Arc::new(OffspringDistribution::new(OffspringLaw::Deterministic { d: 3 }).unwrap());
    let k = KernelSpec::constant(1.0, 1.0).unwrap();
    let caps = TreeCaps { max_vertices: 20, max_depth: 100 };
    let mut g = GraphView::grow_bgw(dist, 5, caps);
    let r = run_replica((&mut g).into(), &k, 20.0, ProcessVariant::Cpdg, &[ROOT], SimCaps::horizon(100.0), 3);
    assert!(
        matches!(r.outcome, Outcome::Censored { reason: CensorReason::TruncatedTree, .. }),
        "{:?}",
        r.outcome
    );
}

#[test]
fn infected_cap_is_censoring() {
    let g = random_graph(8, 12, 0);
    let k = KernelSpec::constant(1.0, 1.0).unwrap();
    let caps = SimCaps { horizon: 100.0, max_infected: 3 };
    let r = run_replica((&g).into(), &k, 50.0, ProcessVariant::Cpdg, &[ROOT], caps, 1);
    assert!(matches!(r.outcome, Outcome::Censored { reason: CensorReason::Cap, .. }));
}

#[test]
fn root_reinfections_increase() {
    let g = GraphView::build_finite(&[(0, 1), (0, 2), (0, 3)]).unwrap();
    let k = KernelSpec::constant(1.0, 1.0).unwrap();
    let r = run_replica((&g).into(), &k, 3.0, ProcessVariant::Cpdg, &[ROOT], SimCaps::horizon(30.0), 17);
    assert!(!r.root_reinfection_times.is_empty());
    assert!(r.root_reinfection_times.windows(2).all(|w| w[0] < w[1]));
}

/// Infection-relevant events only: transmissions and recoveries.
#[derive(Default)]
struct InfectionTrace(Vec<(u64, u32, u8)>);

impl Observer for InfectionTrace {
    fn on_event(&mut self, _sim: &Simulation<'_>, ev: &Event) {
        match ev.kind {
            EventKind::Attempt { edge, infected } if infected != 0 => self.0.push((ev.time.to_bits(), edge.0, infected)),
            EventKind::Recover { vertex } => self.0.push((ev.time.to_bits(), vertex.0, 0)),
            _ => {}
        }
    }
}

#[test]
fn lazy_and_eager_backgrounds_agree_exactly() {
    let kernels = [
        KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap(),
        KernelSpec::sigma_kernel(0.8, 0.0, 2.0, 1.0, 0.3).unwrap(),
    ];
    let mut sim = Simulator::new();
    for gi in 0..10u64 {
        let g = random_graph(100 + gi, 4 + (gi % 10) as u32, 6);
        assert!(g.num_edges() <= 20);
        for (ki, k) in kernels.iter().enumerate() {
            for variant in [ProcessVariant::Cpdg, ProcessVariant::WaitAndSee] {
                let layers = [LayerSpec::new(variant, 1.3, &[ROOT])];
                for seed in 0..20u64 {
                    let seed = derive_seed(gi * 31 + ki as u64, seed);
                    let mut traces = Vec::new();
                    let mut records = Vec::new();
                    for eager in [false, true] {
                        let opts = RunOptions { eager, ..RunOptions::default() };
                        let mut tr = InfectionTrace::default();
                        let out = sim.run((&g).into(), k, &layers, SimCaps::horizon(25.0), &opts, seed, &mut tr);
                        traces.push(tr.0);
                        records.push(out.layers[0].clone());
                    }
                    assert_eq!(traces[0], traces[1], "graph {gi} kernel {ki} {variant:?}");
                    assert_eq!(records[0].outcome, records[1].outcome);
                    assert_eq!(records[0].root_reinfection_times, records[1].root_reinfection_times);
                    assert_eq!(records[0].counts.infections, records[1].counts.infections);
                }
            }
        }
    }
}

#[test]
fn joint_layers_match_solo_runs() {
    // Each layer of a joint run is the process it would be on its own.
    let g = random_graph(77, 7, 2);
    let k = KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
    let init_big: Vec<VertexId> = (0..3).map(VertexId).collect();
    for seed in 0..200 {
        let joint = run_coupled((&g).into(), &k, 1.0, &[ROOT], &init_big, SimCaps::horizon(20.0), seed);
        let solo_small = run_replica((&g).into(), &k, 1.0, ProcessVariant::Cpdg, &[ROOT], SimCaps::horizon(20.0), seed);
        let solo_big = run_replica((&g).into(), &k, 1.0, ProcessVariant::Cpdg, &init_big, SimCaps::horizon(20.0), seed);
        assert_eq!(joint.inner.outcome, solo_small.outcome);
        assert_eq!(joint.outer.outcome, solo_big.outcome);
        assert_eq!(joint.inner.counts.infections, solo_small.counts.infections);
    }
}

#[test]
fn coupling_examples() {
    let star = GraphView::build_finite(&[(0, 1), (0, 2), (0, 3)]).unwrap();
    let k = KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
    let all: Vec<VertexId> = (0..4).map(VertexId).collect();
    for seed in 0..300 {
        let same = run_coupled((&star).into(), &k, 1.2, &all, &all, SimCaps::horizon(30.0), seed);
        assert_eq!(same.inner, same.outer);
        assert!(!same.violated());
        let nested = run_coupled((&star).into(), &k, 1.2, &[ROOT], &all, SimCaps::horizon(30.0), seed);
        assert!(!nested.violated());
    }
}

#[test]
fn coupling_sweeps_on_small_trees() {
    for gi in 0..10 {
        let g = random_graph(500 + gi, 6, 0);
        let k = KernelSpec::sigma_kernel(0.4, 1.0, 1.0, 0.5, 0.7).unwrap();
        for seed in 0..1000 {
            let seed = derive_seed(gi, seed);
            let c = run_coupled((&g).into(), &k, 1.5, &[ROOT], &[ROOT, VertexId(3)], SimCaps::horizon(20.0), seed);
            assert!(!c.violated(), "graph {gi} seed {seed}");
            let l = run_lambda_coupled((&g).into(), &k, 0.7, 1.5, &[ROOT], SimCaps::horizon(20.0), seed);
            assert!(!l.violated(), "graph {gi} seed {seed}");
        }
    }
}

#[test]
fn wait_and_see_dominates() {
    let k = KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
    for gi in 0..3 {
        let g = random_graph(900 + gi, 5, 2);
        for seed in 0..1000 {
            let c = run_waitandsee_dominating((&g).into(), &k, 1.0, &[ROOT], SimCaps::horizon(20.0), seed);
            assert!(!c.violated(), "graph {gi} seed {seed}");
            if let (Outcome::Extinct { time: ws }, cp) = (c.outer.outcome, c.inner.outcome) {
                assert!(matches!(cp, Outcome::Extinct { time } if time <= ws));
            }
        }
    }
}

#[test]
fn wait_and_see_without_infection_matches() {
    let g = random_graph(4, 5, 1);
    let k = KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
    let init = [ROOT, VertexId(2)];
    for seed in 0..200 {
        let c = run_waitandsee_dominating((&g).into(), &k, 0.0, &init, SimCaps::horizon(20.0), seed);
        assert_eq!(c.inner.outcome, c.outer.outcome);
        assert_eq!(c.inner.counts.infections, 0);
    }
}

#[test]
fn stationary_background_marginal() {
    struct StateAt(Vec<f64>, bool);
    impl Observer for StateAt {
        fn sample_times(&self) -> &[f64] {
            &self.0
        }
        fn on_sample(&mut self, sim: &Simulation<'_>, t: f64) {
            self.1 = sim.edge_open_at(cpdg::graph::EdgeId(1), t);
        }
    }
    let g = GraphView::build_finite(&[(0, 1), (1, 2), (1, 3)]).unwrap();
    let k = KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
    let p = k.p_value(3, 1);
    let layers = [LayerSpec::new(ProcessVariant::Cpdg, 1.0, &[ROOT])];
    let mut sim = Simulator::new();
    let n = 100_000;
    let mut open = 0;
    for seed in 0..n {
        let mut obs = StateAt(vec![0.7], false);
        sim.run((&g).into(), &k, &layers, SimCaps::horizon(5.0), &RunOptions::default(), seed, &mut obs);
        open += usize::from(obs.1);
    }
    let f = open as f64 / n as f64;
    assert!((f - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "{f} vs {p}");
}

#[test]
fn penalised_with_full_kernel_is_classical() {
    // With p = 1 the dynamical process and the penalised one coincide pathwise.
    let g = random_graph(12, 6, 1);
    let k = KernelSpec::constant(1.0, 2.0).unwrap();
    for seed in 0..300 {
        let a = run_replica(GraphRef::Shared(&g), &k, 1.1, ProcessVariant::Cpdg, &[ROOT], SimCaps::horizon(20.0), seed);
        let b = run_replica(GraphRef::Shared(&g), &k, 1.1, ProcessVariant::Penalised, &[ROOT], SimCaps::horizon(20.0), seed);
        assert_eq!(a.outcome, b.outcome);
    }
}

#[test]
fn lower_bound_is_dominated_by_penalised_rate() {
    // Same thinning mark: a LowerBound transmission implies a Penalised one,
    // so running them jointly keeps the lower bound inside.
    let g = random_graph(21, 6, 1);
    let k = KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
    let layers = [
        LayerSpec::new(ProcessVariant::LowerBound, 1.0, &[ROOT]),
        LayerSpec::new(ProcessVariant::Penalised, 1.0, &[ROOT]),
    ];
    let opts = RunOptions { containment: vec![(0, 1)], ..RunOptions::default() };
    let mut sim = Simulator::new();
    for seed in 0..500 {
        let out = sim.run((&g).into(), &k, &layers, SimCaps::horizon(20.0), &opts, seed, &mut ());
        assert_eq!(out.violations, 0);
    }
}

#[test]
fn all_closed_start_on_single_edge() {
    let g = k2();
    let k = KernelSpec::constant(0.5, 1.0).unwrap();
    let opts = RunOptions {
        background: BackgroundInit::AllClosed,
        target: Some(VertexId(1)),
        stop_on_target: true,
        ..RunOptions::default()
    };
    let layers = [LayerSpec::new(ProcessVariant::Cpdg, 1.0, &[ROOT])];
    let mut sim = Simulator::new();
    let n = 100_000;
    let hits = (0..n)
        .filter(|&s| {
            let out = sim.run((&g).into(), &k, &layers, SimCaps::horizon(1e9), &opts, s, &mut ());
            matches!(out.layers[0].outcome, Outcome::TargetReached { .. })
        })
        .count() as f64
        / n as f64;
    let q = cpdg::closedform::transmission_prob(1.0, 1.0, 0.5);
    assert!((hits - q).abs() < 3.0 * (q * (1.0 - q) / n as f64).sqrt(), "{hits} vs {q}");
}

#[test]
fn containment_check_detects_reversed_nesting() {
    let star = GraphView::build_finite(&[(0, 1), (0, 2), (0, 3)]).unwrap();
    let k = KernelSpec::sigma_kernel(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
    let all: Vec<VertexId> = (0..4).map(VertexId).collect();
    let layers = [
        LayerSpec::new(ProcessVariant::Cpdg, 1.0, &[ROOT]),
        LayerSpec::new(ProcessVariant::Cpdg, 1.0, &all),
    ];
    let opts = RunOptions { containment: vec![(1, 0)], ..RunOptions::default() };
    let out = Simulator::new().run((&star).into(), &k, &layers, SimCaps::horizon(5.0), &opts, 1, &mut ());
    assert!(out.violations > 0);
}
