//! Rooted graphs with frozen degrees: finite simple graphs and lazily grown
//! Bienaymé–Galton–Watson trees.
//!
//! Every vertex and edge carries a 64-bit key. In a lazy tree the key of a
//! vertex depends only on its position (parent key and child ordinal), so the
//! offspring draw of a vertex and every random clock attached to it are the
//! same no matter in which order the tree is explored.

mod io;
mod offspring;

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{combine, rng_from};

pub use io::{dump, load, parse_edge_list};
pub use offspring::{hurwitz_zeta, OffspringDistribution, OffspringLaw, MAX_TABLE_LEN, TABLE_MASS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub u32);

impl VertexId {
    pub const ROOT: VertexId = VertexId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeCaps {
    pub max_vertices: usize,
    pub max_depth: u32,
}

impl Default for TreeCaps {
    fn default() -> Self {
        Self {
            max_vertices: 1_000_000,
            max_depth: 10_000,
        }
    }
}

const ROOT_KEY: u64 = 0x0123_4567_89AB_CDEF;

#[derive(Clone, Debug)]
struct LazyTree {
    dist: Arc<OffspringDistribution>,
    seed: u64,
    caps: TreeCaps,
}

/// Raised when growing a lazy tree would breach its caps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Truncated;

#[derive(Clone, Debug)]
pub struct GraphView {
    degree: Vec<u32>,
    parent: Vec<Option<VertexId>>,
    depth: Vec<u32>,
    key: Vec<u64>,
    /// Offspring count of each vertex (children it has or will have).
    offspring: Vec<u32>,
    expanded: Vec<bool>,
    adj: Vec<Vec<(VertexId, EdgeId)>>,
    edges: Vec<(VertexId, VertexId)>,
    edge_key: Vec<u64>,
    lazy: Option<LazyTree>,
    truncated: bool,
}

impl GraphView {
    /// Finite simple connected graph on vertices `0..n` rooted at 0, with
    /// degrees taken from the edge list.
    pub fn build_finite(edge_list: &[(u32, u32)]) -> Result<Self> {
        let n = edge_list.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(1);
        Self::build_finite_with_vertices(n as usize, edge_list)
    }

    /// As [`GraphView::build_finite`] but with an explicit vertex count, so
    /// that a single isolated vertex is expressible.
    pub fn build_finite_with_vertices(n: usize, edge_list: &[(u32, u32)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph", "at least one vertex is required"));
        }
        let mut seen = HashSet::new();
        let mut adj = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(u, v) in edge_list {
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            if u as usize >= n || v as usize >= n {
                return Err(Error::invalid("graph", format!("edge {u}-{v} names a vertex >= {n}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::DuplicateEdge(u.min(v), u.max(v)));
            }
            let e = EdgeId(edges.len() as u32);
            edges.push((VertexId(u), VertexId(v)));
            adj[u as usize].push((VertexId(v), e));
            adj[v as usize].push((VertexId(u), e));
        }
        // Breadth-first layering from the root defines parents and children.
        let mut parent = vec![None; n];
        let mut depth = vec![u32::MAX; n];
        depth[0] = 0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(x) = queue.pop_front() {
            for &(y, _) in &adj[x] {
                if depth[y.index()] == u32::MAX {
                    depth[y.index()] = depth[x] + 1;
                    parent[y.index()] = Some(VertexId(x as u32));
                    queue.push_back(y.index());
                }
            }
        }
        if let Some(bad) = depth.iter().position(|d| *d == u32::MAX) {
            return Err(Error::Disconnected(bad as u32));
        }
        let degree: Vec<u32> = adj.iter().map(|a| a.len() as u32).collect();
        if n > 1 && degree.contains(&0) {
            unreachable!("connected graph with an isolated vertex");
        }
        let offspring = (0..n)
            .map(|x| adj[x].iter().filter(|(y, _)| parent[y.index()] == Some(VertexId(x as u32))).count() as u32)
            .collect();
        Ok(Self {
            degree: degree.into_iter().map(|d| d.max(1)).collect(),
            parent,
            depth,
            key: (0..n as u64).collect(),
            offspring,
            expanded: vec![true; n],
            adj,
            edge_key: (0..edges.len() as u64).collect(),
            edges,
            lazy: None,
            truncated: false,
        })
    }

    /// Lazily grown tree: only the root exists until vertices are expanded.
    pub fn grow_bgw(dist: Arc<OffspringDistribution>, seed: u64, caps: TreeCaps) -> Self {
        let lazy = LazyTree { dist, seed, caps };
        let zeta = lazy.draw(ROOT_KEY);
        Self {
            degree: vec![zeta.max(1)],
            parent: vec![None],
            depth: vec![0],
            key: vec![ROOT_KEY],
            offspring: vec![zeta],
            expanded: vec![false],
            adj: vec![Vec::new()],
            edges: Vec::new(),
            edge_key: Vec::new(),
            lazy: Some(lazy),
            truncated: false,
        }
    }

    /// Forces the root's offspring count to `n`; all other draws are untouched.
    pub fn conditioned_root_degree(mut self, n: u32) -> Result<Self> {
        let lazy = self
            .lazy
            .as_ref()
            .ok_or_else(|| Error::invalid("graph", "root conditioning needs a lazy tree"))?;
        if !lazy.dist.in_support(u64::from(n)) || n == 0 {
            return Err(Error::OutOfSupport(u64::from(n)));
        }
        if self.expanded[0] {
            return Err(Error::invalid("graph", "root already expanded"));
        }
        self.offspring[0] = n;
        self.degree[0] = n;
        Ok(self)
    }

    /// Induced subgraph on `keep` (which must contain the root and be
    /// connected). Degrees, keys and parent relations are inherited from
    /// `self`, so processes on the result see the kernel values and random
    /// clocks of the full graph.
    pub fn restricted(&self, keep: &[VertexId]) -> Result<Self> {
        if keep.first() != Some(&VertexId::ROOT) {
            return Err(Error::invalid("graph", "restriction must list the root first"));
        }
        let mut map = vec![u32::MAX; self.num_vertices()];
        for (i, v) in keep.iter().enumerate() {
            if map[v.index()] != u32::MAX {
                return Err(Error::invalid("graph", format!("vertex {} listed twice", v.0)));
            }
            map[v.index()] = i as u32;
        }
        let mut sub_edges = Vec::new();
        let mut sub_keys = Vec::new();
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let (a, b) = (map[u.index()], map[v.index()]);
            if a != u32::MAX && b != u32::MAX {
                sub_edges.push((a, b));
                sub_keys.push(self.edge_key[e]);
            }
        }
        let mut g = Self::build_finite_with_vertices(keep.len(), &sub_edges)?;
        g.edge_key = sub_keys;
        for (i, v) in keep.iter().enumerate() {
            g.degree[i] = self.degree[v.index()];
            g.key[i] = self.key[v.index()];
        }
        Ok(g)
    }

    /// Replaces the degree of every vertex; used to emulate dummy leaves that
    /// take no part in the process.
    pub fn with_degrees(mut self, degrees: &[u32]) -> Result<Self> {
        if degrees.len() != self.num_vertices() {
            return Err(Error::invalid("degrees", "one degree per vertex is required"));
        }
        for (i, &d) in degrees.iter().enumerate() {
            if (d as usize) < self.adj[i].len() || d == 0 {
                return Err(Error::invalid(
                    "degrees",
                    format!("vertex {i}: declared degree {d} below its {} neighbours", self.adj[i].len()),
                ));
            }
        }
        self.degree = degrees.to_vec();
        Ok(self)
    }

    pub fn num_vertices(&self) -> usize {
        self.degree.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_lazy(&self) -> bool {
        self.lazy.is_some()
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn degree(&self, v: VertexId) -> u32 {
        self.degree[v.index()]
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degree
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.parent[v.index()]
    }

    pub fn depth(&self, v: VertexId) -> u32 {
        self.depth[v.index()]
    }

    pub fn key(&self, v: VertexId) -> u64 {
        self.key[v.index()]
    }

    pub fn edge_key(&self, e: EdgeId) -> u64 {
        self.edge_key[e.index()]
    }

    pub fn endpoints(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.edges[e.index()]
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    /// Neighbours currently materialized, with the connecting edges.
    pub fn neighbours(&self, v: VertexId) -> &[(VertexId, EdgeId)] {
        &self.adj[v.index()]
    }

    pub fn is_expanded(&self, v: VertexId) -> bool {
        self.expanded[v.index()]
    }

    /// Vertices materialized but whose children are not yet generated.
    pub fn frontier(&self) -> Vec<VertexId> {
        (0..self.num_vertices())
            .filter(|&i| !self.expanded[i])
            .map(|i| VertexId(i as u32))
            .collect()
    }

    pub fn children(&self, x: VertexId) -> Vec<VertexId> {
        self.adj[x.index()]
            .iter()
            .map(|&(y, _)| y)
            .filter(|&y| self.parent[y.index()] == Some(x))
            .collect()
    }

    /// Children of `x` whose degree is at most `l`, in materialization order.
    pub fn bounded_degree_children(&self, x: VertexId, l: u32) -> Vec<VertexId> {
        self.children(x).into_iter().filter(|&y| self.degree(y) <= l).collect()
    }

    /// Generates the children of `v` (with their degrees) if not done yet.
    pub fn expand(&mut self, v: VertexId) -> std::result::Result<(), Truncated> {
        if self.expanded[v.index()] {
            return Ok(());
        }
        let lazy = self.lazy.as_ref().expect("unexpanded vertex in a finite graph").clone();
        let n_children = self.offspring[v.index()] as usize;
        let child_depth = self.depth[v.index()] + 1;
        if self.num_vertices() + n_children > lazy.caps.max_vertices
            || (n_children > 0 && child_depth > lazy.caps.max_depth)
        {
            self.truncated = true;
            return Err(Truncated);
        }
        let parent_key = self.key[v.index()];
        for i in 0..n_children {
            let key = combine(parent_key, i as u64 + 1);
            let zeta = lazy.draw(key);
            let c = VertexId(self.num_vertices() as u32);
            let e = EdgeId(self.edges.len() as u32);
            self.degree.push(zeta.saturating_add(1));
            self.parent.push(Some(v));
            self.depth.push(child_depth);
            self.key.push(key);
            self.offspring.push(zeta);
            self.expanded.push(false);
            self.adj.push(vec![(v, e)]);
            self.adj[v.index()].push((c, e));
            self.edges.push((v, c));
            self.edge_key.push(key);
        }
        self.expanded[v.index()] = true;
        Ok(())
    }

    /// Expands every vertex up to and including depth `max_depth - 1`.
    pub fn expand_ball(&mut self, max_depth: u32) -> std::result::Result<(), Truncated> {
        let mut i = 0;
        while i < self.num_vertices() {
            let v = VertexId(i as u32);
            if self.depth(v) < max_depth {
                self.expand(v)?;
            }
            i += 1;
        }
        Ok(())
    }
}

impl LazyTree {
    fn draw(&self, key: u64) -> u32 {
        let mut rng = rng_from(combine(self.seed, key));
        let z = self.dist.sample(&mut rng);
        u32::try_from(z).unwrap_or(u32::MAX - 1)
    }
}
