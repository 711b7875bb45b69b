//! Event-driven simulation of the contact process on a dynamical graph and
//! of the comparison processes built on the same graphical representation.
//!
//! All clocks come from [`clock::PoissonStream`], keyed by the run seed and
//! the graph's stable vertex and edge keys. Several processes ("layers") can
//! run jointly on one realization; each layer thins the shared infection
//! clock to its own rate, which yields the pathwise couplings in initial
//! condition, in lambda, and between the process and its wait-and-see
//! majorant.

pub mod clock;
mod log;
mod runs;
mod sim;

use serde::{Deserialize, Serialize};

use crate::graph::{GraphView, Truncated, VertexId};

pub use log::TrajectoryLogger;
pub use runs::{
    run_coupled, run_lambda_coupled, run_replica, run_waitandsee_dominating, CoupledRun,
};
pub use sim::{Event, EventKind, Observer, RunOutput, Simulation, Simulator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessVariant {
    /// Infection across open edges of the dynamical background.
    Cpdg,
    /// Majorant that reveals edges instead of tracking their state.
    WaitAndSee,
    /// Static graph with edge rate lambda p.
    Penalised,
    /// Static graph with the dominated edge rate from `lower_bound_rate`.
    LowerBound,
}

impl ProcessVariant {
    pub(crate) fn uses_background(self) -> bool {
        matches!(self, ProcessVariant::Cpdg | ProcessVariant::WaitAndSee)
    }
}

/// Law of the background at time zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundInit {
    #[default]
    Stationary,
    AllClosed,
    AllOpen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimCaps {
    pub horizon: f64,
    pub max_infected: usize,
}

impl Default for SimCaps {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            max_infected: 1_000_000,
        }
    }
}

impl SimCaps {
    pub fn horizon(horizon: f64) -> Self {
        Self { horizon, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorReason {
    Horizon,
    Cap,
    TruncatedTree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Extinct { time: f64 },
    Censored { reason: CensorReason, time: f64 },
    /// The run stopped because the target vertex became infected.
    TargetReached { time: f64 },
}

impl Outcome {
    pub fn is_extinct(&self) -> bool {
        matches!(self, Outcome::Extinct { .. })
    }

    pub fn time(&self) -> f64 {
        match *self {
            Outcome::Extinct { time } | Outcome::Censored { time, .. } | Outcome::TargetReached { time } => time,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub updates: u64,
    pub attempts: u64,
    pub recoveries: u64,
    /// Infections in this layer, initial ones excluded.
    pub infections: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub outcome: Outcome,
    /// Times at which the root re-entered the infected set after leaving it.
    pub root_reinfection_times: Vec<f64>,
    pub peak_infected: usize,
    /// Events processed by the run (shared across jointly simulated layers).
    pub total_events: u64,
    pub counts: EventCounts,
    /// First infection time of the target vertex, if one was set.
    pub target_hit: Option<f64>,
    pub seed: u64,
}

/// One process of a joint run.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub variant: ProcessVariant,
    pub lambda: f64,
    pub init: Vec<VertexId>,
}

impl LayerSpec {
    pub fn new(variant: ProcessVariant, lambda: f64, init: &[VertexId]) -> Self {
        Self { variant, lambda, init: init.to_vec() }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub background: BackgroundInit,
    pub target: Option<VertexId>,
    /// Stop once every layer has hit the target or died out.
    pub stop_on_target: bool,
    /// Simulate every edge from time zero instead of on demand.
    pub eager: bool,
    /// Pairs (inner, outer) of layers whose infected sets must stay nested.
    pub containment: Vec<(usize, usize)>,
    /// Compare every active edge against a direct lookup after each event.
    pub verify_background: bool,
}

/// A graph the engine may grow (lazy trees) or only read.
pub enum GraphRef<'a> {
    Shared(&'a GraphView),
    Owned(&'a mut GraphView),
}

impl GraphRef<'_> {
    pub fn get(&self) -> &GraphView {
        match self {
            GraphRef::Shared(g) => g,
            GraphRef::Owned(g) => g,
        }
    }

    fn expand(&mut self, v: VertexId) -> Result<(), Truncated> {
        match self {
            GraphRef::Owned(g) => g.expand(v),
            GraphRef::Shared(g) if g.is_expanded(v) => Ok(()),
            GraphRef::Shared(_) => Err(Truncated),
        }
    }
}

impl<'a> From<&'a GraphView> for GraphRef<'a> {
    fn from(g: &'a GraphView) -> Self {
        GraphRef::Shared(g)
    }
}

impl<'a> From<&'a mut GraphView> for GraphRef<'a> {
    fn from(g: &'a mut GraphView) -> Self {
        GraphRef::Owned(g)
    }
}
