use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::clock::{initial_uniform, ClockKind, PoissonStream};
use super::{
    BackgroundInit, CensorReason, EventCounts, GraphRef, LayerSpec, Outcome, ProcessVariant, RunOptions, SimCaps,
    TrajectoryRecord,
};
use crate::closedform::lower_bound_rate;
use crate::graph::{EdgeId, GraphView, VertexId};
use crate::kernels::KernelSpec;

/// At most this many layers run jointly (one bit each in the vertex masks).
pub const MAX_LAYERS: usize = 8;

/// Graphs up to this size get a full containment sweep after every event.
const FULL_SWEEP: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EventKind {
    Update { edge: EdgeId, open: bool },
    /// `infected` has bit l set when layer l transmitted.
    Attempt { edge: EdgeId, infected: u8 },
    Recover { vertex: VertexId },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Hooks into a run. Sample times must be sorted; the state handed to
/// `on_sample(t)` is the state at time t.
pub trait Observer {
    fn sample_times(&self) -> &[f64] {
        &[]
    }
    fn on_event(&mut self, _sim: &Simulation<'_>, _ev: &Event) {}
    fn on_sample(&mut self, _sim: &Simulation<'_>, _t: f64) {}
}

impl Observer for () {}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub layers: Vec<TrajectoryRecord>,
    /// Containment and background-consistency failures seen during the run.
    pub violations: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Update,
    Attempt,
    Recover,
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    time: f64,
    seq: u64,
    mark: f64,
    id: u32,
    gen: u32,
    kind: Kind,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed so the max-heap pops the earliest event; ties in insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct EdgeRt {
    p: f64,
    v: f64,
    resolved_at: f64,
    gen: u32,
    known: bool,
    open: bool,
    active: bool,
    revealed: bool,
    /// No attempt has consulted the edge state since the last update.
    fresh: bool,
}

#[derive(Clone, Debug, Default)]
struct LayerRt {
    count: usize,
    peak: usize,
    infections: u64,
    extinct_at: Option<f64>,
    target_at: Option<f64>,
    root_left: bool,
    reinfections: Vec<f64>,
}

/// Reusable buffers; one per worker thread.
#[derive(Default)]
pub struct Simulator {
    queue: BinaryHeap<Pending>,
    mask: Vec<u8>,
    vgen: Vec<u32>,
    edges: Vec<EdgeRt>,
    layers: Vec<LayerRt>,
    newly: Vec<(usize, VertexId)>,
}

impl Simulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Run the given layers jointly from time zero.
    #[allow(clippy::too_many_arguments)]
    pub fn run<O: Observer>(
        &mut self,
        graph: GraphRef<'_>,
        kernel: &KernelSpec,
        layers: &[LayerSpec],
        caps: SimCaps,
        opts: &RunOptions,
        seed: u64,
        obs: &mut O,
    ) -> RunOutput {
        assert!(!layers.is_empty() && layers.len() <= MAX_LAYERS, "1..=8 layers");
        assert!(
            layers.iter().filter(|l| l.variant == ProcessVariant::WaitAndSee).count() <= 1,
            "at most one wait-and-see layer"
        );
        let lambda_clock = layers.iter().map(|l| l.lambda).fold(0.0, f64::max);
        let mut sim = Simulation {
            bufs: self,
            graph,
            kernel,
            specs: layers,
            opts,
            caps,
            seed,
            clock: 0.0,
            lambda_clock,
            has_background: opts.eager || layers.iter().any(|l| l.variant.uses_background()),
            seq: 0,
            counts: EventCounts::default(),
            total_events: 0,
            violations: 0,
            censor: None,
        };
        sim.execute(obs)
    }
}

/// A run in progress, as seen by observers.
pub struct Simulation<'a> {
    bufs: &'a mut Simulator,
    graph: GraphRef<'a>,
    kernel: &'a KernelSpec,
    specs: &'a [LayerSpec],
    opts: &'a RunOptions,
    caps: SimCaps,
    seed: u64,
    clock: f64,
    lambda_clock: f64,
    has_background: bool,
    seq: u64,
    counts: EventCounts,
    total_events: u64,
    violations: u64,
    censor: Option<CensorReason>,
}

impl Simulation<'_> {
    pub fn time(&self) -> f64 {
        self.clock
    }

    pub fn graph(&self) -> &GraphView {
        self.graph.get()
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.kernel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_layers(&self) -> usize {
        self.specs.len()
    }

    pub fn lambda(&self, layer: usize) -> f64 {
        self.specs[layer].lambda
    }

    pub fn is_infected(&self, layer: usize, v: VertexId) -> bool {
        self.bufs.mask.get(v.index()).is_some_and(|m| m >> layer & 1 == 1)
    }

    pub fn infected_count(&self, layer: usize) -> usize {
        self.bufs.layers[layer].count
    }

    pub fn infected(&self, layer: usize) -> impl Iterator<Item = VertexId> + '_ {
        self.bufs
            .mask
            .iter()
            .enumerate()
            .filter(move |(_, m)| *m >> layer & 1 == 1)
            .map(|(i, _)| VertexId(i as u32))
    }

    /// Whether the wait-and-see layer currently has `e` revealed.
    pub fn is_revealed(&self, e: EdgeId) -> bool {
        self.bufs.edges.get(e.index()).is_some_and(|r| r.revealed)
    }

    pub fn revealed_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.bufs
            .edges
            .iter()
            .enumerate()
            .filter(|(_, r)| r.revealed)
            .map(|(i, _)| EdgeId(i as u32))
    }

    fn edge_p(&self, e: EdgeId) -> f64 {
        let (x, y) = self.graph().endpoints(e);
        self.kernel.p_value(self.graph().degree(x), self.graph().degree(y))
    }

    fn edge_v(&self, e: EdgeId) -> f64 {
        let (x, y) = self.graph().endpoints(e);
        self.kernel.v_value(self.graph().degree(x), self.graph().degree(y))
    }

    fn initial_open(&self, e: EdgeId, p: f64) -> bool {
        match self.opts.background {
            BackgroundInit::Stationary => initial_uniform(self.seed, self.graph().edge_key(e)) < p,
            BackgroundInit::AllClosed => false,
            BackgroundInit::AllOpen => true,
        }
    }

    fn update_stream(&self, e: EdgeId, v: f64) -> PoissonStream {
        PoissonStream::new(self.seed, ClockKind::Update, self.graph().edge_key(e), v)
    }

    /// State of edge `e` at time `t`, read directly off the clocks. Valid
    /// for any t >= 0, whether or not the run touched the edge.
    pub fn edge_open_at(&self, e: EdgeId, t: f64) -> bool {
        let p = self.edge_p(e);
        match self.update_stream(e, self.edge_v(e)).last_in(0.0, t) {
            Some((_, mark)) => mark < p,
            None => self.initial_open(e, p),
        }
    }

    fn push(&mut self, time: f64, mark: f64, kind: Kind, id: u32, gen: u32) {
        if time.is_finite() {
            self.seq += 1;
            self.bufs.queue.push(Pending { time, seq: self.seq, mark, id, gen, kind });
        }
    }

    fn grow_buffers(&mut self) {
        let (n, m) = (self.graph().num_vertices(), self.graph().num_edges());
        if self.bufs.mask.len() < n {
            self.bufs.mask.resize(n, 0);
            self.bufs.vgen.resize(n, 0);
        }
        if self.bufs.edges.len() < m {
            self.bufs.edges.resize(m, EdgeRt::default());
        }
    }

    fn needed(&self, e: EdgeId) -> bool {
        if self.opts.eager {
            return true;
        }
        let (x, y) = self.graph().endpoints(e);
        let m = &self.bufs.mask;
        m[x.index()] | m[y.index()] != 0 || self.bufs.edges[e.index()].revealed
    }

    fn activate(&mut self, e: EdgeId) {
        let i = e.index();
        if self.bufs.edges[i].active {
            return;
        }
        let t = self.clock;
        if !self.bufs.edges[i].known {
            let p = self.edge_p(e);
            let v = self.edge_v(e);
            let open = self.initial_open(e, p);
            self.bufs.edges[i] = EdgeRt {
                p,
                v,
                resolved_at: 0.0,
                gen: 0,
                known: true,
                open,
                active: false,
                revealed: false,
                fresh: true,
            };
        }
        let rt = self.bufs.edges[i];
        let updates = self.update_stream(e, rt.v);
        if self.has_background {
            if let Some((_, mark)) = updates.last_in(rt.resolved_at, t) {
                let r = &mut self.bufs.edges[i];
                r.open = mark < rt.p;
                r.fresh = true;
            }
            let (tu, mu) = updates.next_after(t);
            self.push(tu, mu, Kind::Update, e.0, rt.gen);
        }
        self.bufs.edges[i].active = true;
        let attempts = PoissonStream::new(self.seed, ClockKind::Attempt, self.graph().edge_key(e), self.lambda_clock);
        let (ta, ma) = attempts.next_after(t);
        self.push(ta, ma, Kind::Attempt, e.0, rt.gen);
    }

    fn deactivate(&mut self, e: EdgeId) {
        let r = &mut self.bufs.edges[e.index()];
        r.active = false;
        r.resolved_at = self.clock;
        r.gen = r.gen.wrapping_add(1);
    }

    fn infect(&mut self, layer: usize, v: VertexId, initial: bool) {
        self.grow_buffers();
        let was = self.bufs.mask[v.index()];
        if was >> layer & 1 == 1 {
            return;
        }
        self.bufs.mask[v.index()] = was | 1 << layer;
        let t = self.clock;
        let lr = &mut self.bufs.layers[layer];
        lr.count += 1;
        lr.peak = lr.peak.max(lr.count);
        if !initial {
            lr.infections += 1;
        }
        if Some(v) == self.opts.target && lr.target_at.is_none() {
            lr.target_at = Some(t);
        }
        if v == VertexId::ROOT && lr.root_left {
            lr.root_left = false;
            lr.reinfections.push(t);
        }
        if was != 0 {
            return;
        }
        if self.graph.expand(v).is_err() {
            self.censor = Some(CensorReason::TruncatedTree);
            return;
        }
        self.grow_buffers();
        let rec = PoissonStream::new(self.seed, ClockKind::Recover, self.graph().key(v), 1.0);
        let (tr, _) = rec.next_after(t);
        let gen = self.bufs.vgen[v.index()];
        self.push(tr, 0.0, Kind::Recover, v.0, gen);
        for k in 0..self.graph().neighbours(v).len() {
            let (_, e) = self.graph().neighbours(v)[k];
            self.activate(e);
        }
    }

    fn recover(&mut self, v: VertexId) {
        let m = self.bufs.mask[v.index()];
        self.bufs.mask[v.index()] = 0;
        self.bufs.vgen[v.index()] = self.bufs.vgen[v.index()].wrapping_add(1);
        for l in 0..self.specs.len() {
            if m >> l & 1 == 1 {
                let lr = &mut self.bufs.layers[l];
                lr.count -= 1;
                if v == VertexId::ROOT {
                    lr.root_left = true;
                }
                if lr.count == 0 {
                    lr.extinct_at = Some(self.clock);
                }
            }
        }
        for k in 0..self.graph().neighbours(v).len() {
            let (_, e) = self.graph().neighbours(v)[k];
            if self.bufs.edges[e.index()].active && !self.needed(e) {
                self.deactivate(e);
            }
        }
    }

    fn update(&mut self, e: EdgeId, mark: f64) -> bool {
        let t = self.clock;
        let r = &mut self.bufs.edges[e.index()];
        r.open = mark < r.p;
        r.resolved_at = t;
        r.revealed = false;
        r.fresh = true;
        let (open, v, gen) = (r.open, r.v, r.gen);
        let (tu, mu) = self.update_stream(e, v).next_after(t);
        self.push(tu, mu, Kind::Update, e.0, gen);
        if !self.needed(e) {
            self.deactivate(e);
        }
        open
    }

    fn attempt(&mut self, e: EdgeId, mark: f64) -> u8 {
        let (x, y) = self.graph().endpoints(e);
        let mx = self.bufs.mask[x.index()];
        let my = self.bufs.mask[y.index()];
        let mut fired = 0u8;
        self.bufs.newly.clear();
        for (l, spec) in self.specs.iter().enumerate() {
            let bx = mx >> l & 1 == 1;
            let by = my >> l & 1 == 1;
            if !(bx || by) {
                continue;
            }
            let thin = spec.lambda / self.lambda_clock;
            if !(mark < thin) {
                continue;
            }
            // Uniform on [0, 1) given that the attempt belongs to this layer.
            let u = mark / thin;
            let r = &mut self.bufs.edges[e.index()];
            let transmit = match spec.variant {
                ProcessVariant::Cpdg => r.open,
                ProcessVariant::Penalised => u < r.p,
                ProcessVariant::LowerBound => u * spec.lambda < lower_bound_rate(spec.lambda, r.v, r.p),
                ProcessVariant::WaitAndSee => {
                    if r.revealed {
                        true
                    } else if r.fresh {
                        r.fresh = false;
                        r.revealed = r.open;
                        r.open
                    } else {
                        r.revealed = u < r.p;
                        r.revealed
                    }
                }
            };
            if transmit && bx != by {
                fired |= 1 << l;
                self.bufs.newly.push((l, if bx { y } else { x }));
            }
        }
        for k in 0..self.bufs.newly.len() {
            let (l, w) = self.bufs.newly[k];
            self.infect(l, w, false);
        }
        let (ta, ma) = PoissonStream::new(self.seed, ClockKind::Attempt, self.graph().edge_key(e), self.lambda_clock)
            .next_after(self.clock);
        let gen = self.bufs.edges[e.index()].gen;
        self.push(ta, ma, Kind::Attempt, e.0, gen);
        fired
    }

    fn check_containment(&mut self) {
        let sweep = self.bufs.mask.len() <= FULL_SWEEP;
        let opts = self.opts;
        for &(inner, outer) in &opts.containment {
            let bad = |m: u8| m >> inner & 1 == 1 && m >> outer & 1 == 0;
            let n = if sweep {
                self.bufs.mask.iter().filter(|&&m| bad(m)).count()
            } else {
                self.bufs.newly.iter().filter(|&&(l, w)| l == inner && bad(self.bufs.mask[w.index()])).count()
            };
            self.violations += n as u64;
        }
    }

    fn check_background(&mut self) {
        let mut bad = 0;
        for i in 0..self.bufs.edges.len() {
            let r = self.bufs.edges[i];
            if r.active && self.edge_open_at(EdgeId(i as u32), self.clock) != r.open {
                bad += 1;
            }
        }
        self.violations += bad;
    }

    fn all_done(&self) -> bool {
        self.bufs.layers.iter().all(|l| {
            l.extinct_at.is_some() || (self.opts.stop_on_target && l.target_at.is_some())
        })
    }

    fn execute<O: Observer>(&mut self, obs: &mut O) -> RunOutput {
        self.bufs.queue.clear();
        self.bufs.mask.clear();
        self.bufs.vgen.clear();
        self.bufs.edges.clear();
        self.bufs.layers.clear();
        self.bufs.layers.resize(self.specs.len(), LayerRt::default());
        self.grow_buffers();

        for l in 0..self.specs.len() {
            for k in 0..self.specs[l].init.len() {
                let v = self.specs[l].init[k];
                self.infect(l, v, true);
            }
            if self.bufs.layers[l].count == 0 {
                self.bufs.layers[l].extinct_at = Some(0.0);
            }
        }
        if self.opts.eager {
            for e in 0..self.graph().num_edges() {
                self.activate(EdgeId(e as u32));
            }
        }
        let horizon = self.caps.horizon;
        let samples = obs.sample_times().to_vec();
        let mut next_sample = 0;

        if self.all_done() {
            // Nothing alive: later samples see the terminal state.
        } else if horizon <= 0.0 {
            self.censor = Some(CensorReason::Horizon);
        }
        self.check_caps();

        while self.censor.is_none() && !self.all_done() {
            let Some(ev) = self.bufs.queue.pop() else {
                debug_assert!(false, "live run with an empty queue");
                self.censor = Some(CensorReason::Horizon);
                break;
            };
            let valid = match ev.kind {
                Kind::Recover => {
                    let i = ev.id as usize;
                    self.bufs.vgen[i] == ev.gen && self.bufs.mask[i] != 0
                }
                _ => {
                    let r = &self.bufs.edges[ev.id as usize];
                    r.active && r.gen == ev.gen
                }
            };
            if !valid {
                continue;
            }
            while next_sample < samples.len() && samples[next_sample] < ev.time && samples[next_sample] <= horizon {
                obs.on_sample(self, samples[next_sample]);
                next_sample += 1;
            }
            if ev.time > horizon {
                self.clock = horizon;
                self.censor = Some(CensorReason::Horizon);
                break;
            }
            self.clock = ev.time;
            self.total_events += 1;
            self.bufs.newly.clear();
            let kind = match ev.kind {
                Kind::Update => {
                    self.counts.updates += 1;
                    let e = EdgeId(ev.id);
                    EventKind::Update { edge: e, open: self.update(e, ev.mark) }
                }
                Kind::Attempt => {
                    self.counts.attempts += 1;
                    let e = EdgeId(ev.id);
                    EventKind::Attempt { edge: e, infected: self.attempt(e, ev.mark) }
                }
                Kind::Recover => {
                    self.counts.recoveries += 1;
                    let v = VertexId(ev.id);
                    self.recover(v);
                    EventKind::Recover { vertex: v }
                }
            };
            if !self.opts.containment.is_empty() {
                self.check_containment();
            }
            if self.opts.verify_background {
                self.check_background();
            }
            obs.on_event(self, &Event { time: self.clock, kind });
            self.check_caps();
        }

        let finished = self.censor.is_none();
        let all_extinct = self.bufs.layers.iter().all(|l| l.extinct_at.is_some());
        if self.censor == Some(CensorReason::Horizon) || (finished && all_extinct) {
            while next_sample < samples.len() && samples[next_sample] <= horizon {
                obs.on_sample(self, samples[next_sample]);
                next_sample += 1;
            }
        }
        self.finish()
    }

    fn check_caps(&mut self) {
        if self.censor.is_none() && self.bufs.layers.iter().any(|l| l.count > self.caps.max_infected) {
            self.censor = Some(CensorReason::Cap);
        }
    }

    fn finish(&mut self) -> RunOutput {
        let layers = self
            .bufs
            .layers
            .iter()
            .map(|l| {
                let outcome = match (l.extinct_at, l.target_at, self.censor) {
                    (Some(time), _, _) => Outcome::Extinct { time },
                    (None, Some(time), _) if self.opts.stop_on_target => Outcome::TargetReached { time },
                    (None, _, reason) => Outcome::Censored {
                        reason: reason.unwrap_or(CensorReason::Horizon),
                        time: self.clock,
                    },
                };
                TrajectoryRecord {
                    outcome,
                    root_reinfection_times: l.reinfections.clone(),
                    peak_infected: l.peak,
                    total_events: self.total_events,
                    counts: EventCounts { infections: l.infections, ..self.counts },
                    target_hit: l.target_at,
                    seed: self.seed,
                }
            })
            .collect();
        RunOutput { layers, violations: self.violations }
    }
}
