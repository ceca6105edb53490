//! Propagation graph, cascades, threads and their variants.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{HighLevelActivity, HighLevelEvent};
use crate::event_log::{CaseId, ComponentId, EventId};
use crate::framing::WindowIndex;
use crate::proximity::{ProximityContext, ProximityError, ProximityMethod};
use crate::util::{jaccard, UnionFind};

/// Index of a high-level event within a graph.
pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("lambda must lie in [0, 1], got {0}")]
    Lambda(f64),
    #[error("thread limits must be positive")]
    Limits,
    #[error(transparent)]
    Proximity(#[from] ProximityError),
}

/// `h1 ⤳ h2` iff the proximity of the ordered pair reaches `lambda`.
#[derive(Debug, Clone)]
pub struct PropagationGraph {
    nodes: Vec<HighLevelEvent>,
    cases: Vec<Vec<CaseId>>,
    out: Vec<Vec<NodeId>>,
    inc: Vec<Vec<NodeId>>,
    method: ProximityMethod,
    lambda: f64,
}

impl PropagationGraph {
    /// A graph over `nodes` with the given edges; mainly for tests and tools.
    pub fn from_edges(
        nodes: Vec<HighLevelEvent>,
        cases: Vec<Vec<CaseId>>,
        edges: &[(NodeId, NodeId)],
    ) -> Self {
        let n = nodes.len();
        let mut out = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                out[a].push(b);
            }
        }
        Self::assemble(nodes, cases, out, ProximityMethod::Link, 0.0)
    }

    fn assemble(
        nodes: Vec<HighLevelEvent>,
        cases: Vec<Vec<CaseId>>,
        mut out: Vec<Vec<NodeId>>,
        method: ProximityMethod,
        lambda: f64,
    ) -> Self {
        let mut inc = vec![Vec::new(); nodes.len()];
        for (a, succ) in out.iter_mut().enumerate() {
            succ.sort_unstable();
            succ.dedup();
            for &b in succ.iter() {
                inc[b].push(a);
            }
        }
        PropagationGraph {
            nodes,
            cases,
            out,
            inc,
            method,
            lambda,
        }
    }

    pub fn nodes(&self) -> &[HighLevelEvent] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &HighLevelEvent {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cases(&self, id: NodeId) -> &[CaseId] {
        &self.cases[id]
    }

    pub fn successors(&self, id: NodeId) -> &[NodeId] {
        &self.out[id]
    }

    pub fn predecessors(&self, id: NodeId) -> &[NodeId] {
        &self.inc[id]
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.out[a].binary_search(&b).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn method(&self) -> ProximityMethod {
        self.method
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Ordered pairs that can have positive proximity under `method`.
fn candidates(
    ctx: &ProximityContext<'_>,
    hles: &[HighLevelEvent],
    method: ProximityMethod,
) -> Vec<Vec<NodeId>> {
    let log = ctx.log();
    match method {
        ProximityMethod::Link | ProximityMethod::StrictLink => {
            let mut by_window: BTreeMap<WindowIndex, Vec<NodeId>> = BTreeMap::new();
            for (i, h) in hles.iter().enumerate() {
                by_window.entry(h.window).or_default().push(i);
            }
            hles.iter()
                .map(|h| {
                    [h.window, h.window + 1]
                        .iter()
                        .filter_map(|w| by_window.get(w))
                        .flatten()
                        .copied()
                        .collect()
                })
                .collect()
        }
        ProximityMethod::InstanceOverlap => {
            let mut holders: HashMap<EventId, Vec<NodeId>> = HashMap::new();
            for (i, h) in hles.iter().enumerate() {
                for &e in &h.event_set {
                    holders.entry(e).or_default().push(i);
                }
            }
            hles.iter()
                .map(|h| {
                    h.event_set
                        .iter()
                        .filter_map(|&e| log.next(e))
                        .filter_map(|n| holders.get(&n))
                        .flatten()
                        .copied()
                        .collect()
                })
                .collect()
        }
        ProximityMethod::SegmentOverlap => {
            let mut by_source: HashMap<_, Vec<NodeId>> = HashMap::new();
            for (i, h) in hles.iter().enumerate() {
                if let ComponentId::Segment(a, _) = h.component {
                    by_source.entry(a).or_default().push(i);
                }
            }
            hles.iter()
                .map(|h| match h.component {
                    ComponentId::Segment(_, b) => by_source
                        .get(&b)
                        .into_iter()
                        .flatten()
                        .copied()
                        .filter(|&j| hles[j].window >= h.window)
                        .collect(),
                    _ => Vec::new(),
                })
                .collect()
        }
    }
}

/// Builds the propagation relation over `hles`. Self-pairs are never edges.
/// With `lambda = 0` every ordered pair of distinct events propagates.
pub fn build_graph(
    hles: Vec<HighLevelEvent>,
    method: ProximityMethod,
    lambda: f64,
    ctx: &ProximityContext<'_>,
) -> Result<PropagationGraph, PropagationError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(PropagationError::Lambda(lambda));
    }
    let log = ctx.log();
    let cases: Vec<Vec<CaseId>> = hles.par_iter().map(|h| h.cases(log)).collect();
    let n = hles.len();
    let out: Vec<Vec<NodeId>> = if lambda == 0.0 {
        (0..n)
            .map(|a| (0..n).filter(|&b| b != a).collect())
            .collect()
    } else {
        let cand = candidates(ctx, &hles, method);
        cand.into_par_iter()
            .enumerate()
            .map(|(a, mut bs)| {
                bs.sort_unstable();
                bs.dedup();
                let mut succ = Vec::new();
                for b in bs {
                    if b != a && ctx.proximity(&hles[a], &hles[b], method)? >= lambda {
                        succ.push(b);
                    }
                }
                Ok(succ)
            })
            .collect::<Result<_, ProximityError>>()?
    };
    Ok(PropagationGraph::assemble(hles, cases, out, method, lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cascade {
    pub id: usize,
    /// Members in node order.
    pub members: Vec<NodeId>,
    /// One group per occupied window, in time order.
    pub window_groups: Vec<(WindowIndex, Vec<NodeId>)>,
}

/// Weakly connected components. Ids follow the smallest member, so cascade 0
/// holds node 0.
pub fn cascades(graph: &PropagationGraph) -> Vec<Cascade> {
    let n = graph.len();
    let mut uf = UnionFind::new(n);
    for (a, b) in graph.edges() {
        uf.union(a, b);
    }
    let mut root_to_id: HashMap<usize, usize> = HashMap::new();
    let mut members: Vec<Vec<NodeId>> = Vec::new();
    for v in 0..n {
        let root = uf.find(v);
        let id = *root_to_id.entry(root).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[id].push(v);
    }
    members
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let mut groups: BTreeMap<WindowIndex, Vec<NodeId>> = BTreeMap::new();
            for &v in &members {
                groups.entry(graph.node(v).window).or_default().push(v);
            }
            Cascade {
                id,
                members,
                window_groups: groups.into_iter().collect(),
            }
        })
        .collect()
}

/// Cascade id of every node.
pub fn cascade_index(cascades: &[Cascade], n: usize) -> Vec<usize> {
    let mut idx = vec![usize::MAX; n];
    for c in cascades {
        for &v in &c.members {
            idx[v] = c.id;
        }
    }
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreadPrune {
    /// Minimum Jaccard share between the cases of the first and last member.
    pub min_first_last_case_share: f64,
    pub max_length: usize,
    /// Budget on enumerated paths, counted before the case-share filter.
    pub max_count: usize,
}

impl Default for ThreadPrune {
    fn default() -> Self {
        ThreadPrune {
            min_first_last_case_share: 0.5,
            max_length: 10,
            max_count: 100_000,
        }
    }
}

impl ThreadPrune {
    pub fn unpruned() -> Self {
        ThreadPrune {
            min_first_last_case_share: 0.0,
            max_length: usize::MAX,
            max_count: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thread {
    pub nodes: Vec<NodeId>,
    pub cascade: usize,
    pub case_share: f64,
    pub maximal: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ThreadSet {
    pub threads: Vec<Thread>,
    /// Set when a limit cut the enumeration short.
    pub truncated: bool,
}

struct Enumeration {
    /// Kept threads with their position in the enumeration order.
    kept: Vec<(usize, Thread)>,
    enumerated: usize,
    truncated: bool,
}

struct Dfs<'g> {
    graph: &'g PropagationGraph,
    prune: ThreadPrune,
    cascade: usize,
    on_path: Vec<bool>,
    path: Vec<NodeId>,
    out: Enumeration,
}

impl Dfs<'_> {
    fn case_share(&self) -> f64 {
        let first = self.graph.cases(self.path[0]);
        if self.path.len() == 1 {
            return if first.is_empty() { 0.0 } else { 1.0 };
        }
        jaccard(
            first,
            self.graph.cases(*self.path.last().expect("non-empty")),
        )
    }

    fn maximal(&self) -> bool {
        let first = self.path[0];
        let last = *self.path.last().expect("non-empty");
        self.graph.successors(last).iter().all(|&s| self.on_path[s])
            && self
                .graph
                .predecessors(first)
                .iter()
                .all(|&p| self.on_path[p])
    }

    /// Returns false once the budget is spent.
    fn visit(&mut self, v: NodeId) -> bool {
        if self.out.enumerated >= self.prune.max_count {
            self.out.truncated = true;
            return false;
        }
        self.path.push(v);
        self.on_path[v] = true;
        let order = self.out.enumerated;
        self.out.enumerated += 1;
        let share = self.case_share();
        if share >= self.prune.min_first_last_case_share {
            let thread = Thread {
                nodes: self.path.clone(),
                cascade: self.cascade,
                case_share: share,
                maximal: self.maximal(),
            };
            self.out.kept.push((order, thread));
        }
        let mut go_on = true;
        let graph = self.graph;
        for &s in graph.successors(v) {
            if self.on_path[s] {
                continue;
            }
            if self.path.len() >= self.prune.max_length {
                self.out.truncated = true;
                break;
            }
            if !self.visit(s) {
                go_on = false;
                break;
            }
        }
        self.on_path[v] = false;
        self.path.pop();
        go_on
    }
}

fn enumerate_cascade(
    graph: &PropagationGraph,
    cascade: &Cascade,
    prune: ThreadPrune,
) -> Enumeration {
    let mut dfs = Dfs {
        graph,
        prune,
        cascade: cascade.id,
        on_path: vec![false; graph.len()],
        path: Vec::new(),
        out: Enumeration {
            kept: Vec::new(),
            enumerated: 0,
            truncated: false,
        },
    };
    for &v in &cascade.members {
        if !dfs.visit(v) {
            break;
        }
    }
    dfs.out
}

/// Simple edge paths (including single events), enumerated depth-first per
/// cascade in node order. The result equals a sequential enumeration over the
/// cascades in id order.
pub fn threads(
    graph: &PropagationGraph,
    cascades: &[Cascade],
    prune: ThreadPrune,
) -> Result<ThreadSet, PropagationError> {
    if prune.max_length == 0 || prune.max_count == 0 {
        return Err(PropagationError::Limits);
    }
    let per_cascade: Vec<Enumeration> = cascades
        .par_iter()
        .map(|c| enumerate_cascade(graph, c, prune))
        .collect();
    let mut set = ThreadSet::default();
    let mut offset = 0usize;
    for e in per_cascade {
        set.truncated |= e.truncated;
        for (order, t) in e.kept {
            if offset + order < prune.max_count {
                set.threads.push(t);
            }
        }
        offset = offset.saturating_add(e.enumerated);
    }
    set.truncated |= offset > prune.max_count;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Thread(Vec<HighLevelActivity>),
    Cascade(Vec<BTreeSet<HighLevelActivity>>),
}

impl Variant {
    pub fn len(&self) -> usize {
        match self {
            Variant::Thread(v) => v.len(),
            Variant::Cascade(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, log: &crate::event_log::EventLog) -> String {
        match self {
            Variant::Thread(v) => v
                .iter()
                .map(|a| a.label(log))
                .collect::<Vec<_>>()
                .join(" > "),
            Variant::Cascade(v) => v
                .iter()
                .map(|g| {
                    let inner: Vec<String> = g.iter().map(|a| a.label(log)).collect();
                    format!("{{{}}}", inner.join(", "))
                })
                .collect::<Vec<_>>()
                .join(" > "),
        }
    }
}

pub fn thread_variant(graph: &PropagationGraph, thread: &Thread) -> Variant {
    Variant::Thread(
        thread
            .nodes
            .iter()
            .map(|&v| graph.node(v).activity())
            .collect(),
    )
}

pub fn cascade_variant(graph: &PropagationGraph, cascade: &Cascade) -> Variant {
    Variant::Cascade(
        cascade
            .window_groups
            .iter()
            .map(|(_, g)| g.iter().map(|&v| graph.node(v).activity()).collect())
            .collect(),
    )
}
