//! Call-graph ordering: SCCs, condensation, layered topological sort, phase
//! partitioning and batching.
//!
//! Every iteration order is fixed by function name so that identical inputs
//! give byte-identical plans.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::backend::{PartitionFunction, ReasoningBackend, ReasoningRequest, ResponseBody};
use crate::codebase::Codebase;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

impl CallGraph {
    pub fn successors(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = self.nodes.iter().map(|n| (n.as_str(), Vec::new())).collect();
        for (a, b) in &self.edges {
            out.entry(a.as_str()).or_default().push(b.as_str());
        }
        out
    }

    /// Subgraph induced by `keep`.
    pub fn induced(&self, keep: &BTreeSet<String>) -> CallGraph {
        CallGraph {
            nodes: self.nodes.intersection(keep).cloned().collect(),
            edges: self
                .edges
                .iter()
                .filter(|(a, b)| keep.contains(a) && keep.contains(b))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scc {
    pub id: usize,
    pub members: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondensedGraph {
    pub nodes: BTreeSet<usize>,
    pub edges: BTreeSet<(usize, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub layers: Vec<BTreeSet<String>>,
    pub scc_of: BTreeMap<String, usize>,
}

impl LayerPlan {
    pub fn layer_of(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for f in layer {
                out.insert(f.clone(), i);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batches: Vec<Vec<String>>,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("condensed graph contains a cycle through SCCs {0:?}")]
    Cycle(Vec<usize>),
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
}

pub fn construct_call_graph(cb: &Codebase) -> CallGraph {
    let nodes: BTreeSet<String> = cb.functions.keys().cloned().collect();
    let mut edges = BTreeSet::new();
    for f in cb.functions.values() {
        for c in &f.callees {
            if nodes.contains(c) {
                edges.insert((f.name.clone(), c.clone()));
            }
        }
    }
    CallGraph { nodes, edges }
}

/// Tarjan's algorithm, iterative. SCC ids follow the order of each
/// component's lexicographically smallest member.
pub fn find_sccs(g: &CallGraph) -> Vec<Scc> {
    let names: Vec<&str> = g.nodes.iter().map(String::as_str).collect();
    let index_of: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = names.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, b) in &g.edges {
        if let (Some(&ia), Some(&ib)) = (index_of.get(a.as_str()), index_of.get(b.as_str())) {
            adj[ia].push(ib);
        }
    }

    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut comps: Vec<BTreeSet<String>> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, next edge position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = BTreeSet::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.insert(names[w].to_string());
                        if w == v {
                            break;
                        }
                    }
                    comps.push(comp);
                }
            }
        }
    }
    comps.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));
    comps
        .into_iter()
        .enumerate()
        .map(|(id, members)| Scc { id, members })
        .collect()
}

pub fn scc_index(sccs: &[Scc]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in sccs {
        for m in &s.members {
            out.insert(m.clone(), s.id);
        }
    }
    out
}

pub fn condense_graph(g: &CallGraph, sccs: &[Scc]) -> CondensedGraph {
    let of = scc_index(sccs);
    let mut edges = BTreeSet::new();
    for (a, b) in &g.edges {
        let (sa, sb) = (of[a], of[b]);
        if sa != sb {
            edges.insert((sa, sb));
        }
    }
    CondensedGraph {
        nodes: sccs.iter().map(|s| s.id).collect(),
        edges,
    }
}

/// Kahn-style layering of the condensation, expanded back to function names.
pub fn plan_layers(cg: &CondensedGraph, sccs: &[Scc]) -> Result<LayerPlan, PlanError> {
    let mut indeg: BTreeMap<usize, usize> = cg.nodes.iter().map(|&n| (n, 0)).collect();
    let mut succ: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in &cg.edges {
        *indeg.entry(b).or_default() += 1;
        indeg.entry(a).or_default();
        succ.entry(a).or_default().push(b);
    }
    let members: BTreeMap<usize, &BTreeSet<String>> = sccs.iter().map(|s| (s.id, &s.members)).collect();
    let mut frontier: Vec<usize> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut layers = Vec::new();
    let mut emitted = 0usize;
    while !frontier.is_empty() {
        let mut layer = BTreeSet::new();
        let mut next = BTreeSet::new();
        for &v in &frontier {
            emitted += 1;
            if let Some(ms) = members.get(&v) {
                layer.extend(ms.iter().cloned());
            }
            for &w in succ.get(&v).map_or(&[][..], Vec::as_slice) {
                let d = indeg.get_mut(&w).expect("edge target is a node");
                *d -= 1;
                if *d == 0 {
                    next.insert(w);
                }
            }
        }
        layers.push(layer);
        frontier = next.into_iter().collect();
    }
    if emitted != indeg.len() {
        let stuck = indeg.iter().filter(|(_, &d)| d > 0).map(|(&n, _)| n).collect();
        return Err(PlanError::Cycle(stuck));
    }
    Ok(LayerPlan {
        layers,
        scc_of: scc_index(sccs),
    })
}

/// SCCs, condensation and layering in one call.
pub fn layer_graph(g: &CallGraph) -> Result<LayerPlan, PlanError> {
    let sccs = find_sccs(g);
    let cg = condense_graph(g, &sccs);
    plan_layers(&cg, &sccs)
}

pub fn make_batches(layer: &BTreeSet<String>, batch_size: usize) -> Result<BatchPlan, PlanError> {
    if batch_size == 0 {
        return Err(PlanError::ZeroBatchSize);
    }
    Ok(BatchPlan {
        batches: layer.iter().cloned().collect::<Vec<_>>().chunks(batch_size).map(<[String]>::to_vec).collect(),
        batch_size,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionSource {
    Tags,
    Backend,
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhasePartition {
    pub phases: BTreeMap<String, BTreeSet<String>>,
    /// Cross-phase call edges (caller, callee).
    pub dependencies: BTreeSet<(String, String)>,
    pub source: PartitionSource,
}

pub const DEFAULT_PHASE: &str = "default";

/// Groups functions into phases. Manifest or pragma tags are authoritative;
/// untagged functions inherit a caller's phase. Fully untagged codebases are
/// partitioned by the backend, falling back to a single phase.
pub fn partition_phases(cb: &Codebase, backend: &dyn ReasoningBackend) -> PhasePartition {
    let g = construct_call_graph(cb);
    let any_tagged = cb.functions.values().any(|f| f.phase.is_some());
    let (assignment, source) = if any_tagged {
        (inherit_phases(cb, &g), PartitionSource::Tags)
    } else if cb.is_empty() {
        (BTreeMap::new(), PartitionSource::Tags)
    } else {
        match backend_partition(cb, backend) {
            Some(a) => (a, PartitionSource::Backend),
            None => (
                cb.functions.keys().map(|f| (f.clone(), DEFAULT_PHASE.to_string())).collect(),
                PartitionSource::Fallback,
            ),
        }
    };
    let mut phases: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (f, p) in &assignment {
        phases.entry(p.clone()).or_default().insert(f.clone());
    }
    let dependencies = g
        .edges
        .iter()
        .filter(|(a, b)| assignment[a] != assignment[b])
        .cloned()
        .collect();
    PhasePartition {
        phases,
        dependencies,
        source,
    }
}

fn inherit_phases(cb: &Codebase, g: &CallGraph) -> BTreeMap<String, String> {
    let mut assignment: BTreeMap<String, String> = cb
        .functions
        .values()
        .filter_map(|f| f.phase.clone().map(|p| (f.name.clone(), p)))
        .collect();
    let mut callers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in &g.edges {
        callers.entry(b.as_str()).or_default().push(a.as_str());
    }
    // Breadth-first from tagged functions along call edges; the first caller
    // (by name) to reach an untagged function decides its phase.
    let mut queue: VecDeque<String> = assignment.keys().cloned().collect();
    let succ = g.successors();
    while let Some(f) = queue.pop_front() {
        let phase = assignment[&f].clone();
        for &c in succ.get(f.as_str()).map_or(&[][..], Vec::as_slice) {
            if !assignment.contains_key(c) {
                let best = callers[c]
                    .iter()
                    .filter(|k| assignment.contains_key(**k))
                    .min()
                    .map(|k| assignment[*k].clone())
                    .unwrap_or(phase.clone());
                assignment.insert(c.to_string(), best);
                queue.push_back(c.to_string());
            }
        }
    }
    for f in cb.functions.keys() {
        assignment.entry(f.clone()).or_insert_with(|| DEFAULT_PHASE.to_string());
    }
    assignment
}

fn backend_partition(cb: &Codebase, backend: &dyn ReasoningBackend) -> Option<BTreeMap<String, String>> {
    let req = ReasoningRequest::ProposePhasePartition {
        functions: cb
            .functions
            .values()
            .map(|f| PartitionFunction {
                name: f.name.clone(),
                callees: f.callees.iter().cloned().collect(),
            })
            .collect(),
    };
    let resp = backend.submit(&req).ok()?;
    let ResponseBody::Partition { groups } = resp.body else {
        return None;
    };
    let mut out = BTreeMap::new();
    for g in groups {
        if g.label.trim().is_empty() {
            return None;
        }
        for f in g.functions {
            if !cb.functions.contains_key(&f) || out.insert(f, g.label.clone()).is_some() {
                return None;
            }
        }
    }
    (out.len() == cb.len()).then_some(out)
}

/// Serialized plan: one layering per phase plus the global SCC ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanFile {
    pub phases: Vec<PhasePlan>,
    pub scc_of: BTreeMap<String, usize>,
    #[serde(default)]
    pub phase_dependencies: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub label: String,
    pub layers: Vec<Vec<String>>,
}

impl PlanFile {
    pub fn phase_of(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for p in &self.phases {
            for layer in &p.layers {
                for f in layer {
                    out.insert(f.clone(), p.label.clone());
                }
            }
        }
        out
    }

    pub fn function_count(&self) -> usize {
        self.phases.iter().flat_map(|p| &p.layers).map(Vec::len).sum()
    }
}

/// Partitions, then layers each phase on its induced subgraph.
pub fn plan_codebase(cb: &Codebase, backend: &dyn ReasoningBackend) -> Result<(PlanFile, PhasePartition), PlanError> {
    let g = construct_call_graph(cb);
    let partition = partition_phases(cb, backend);
    let global = find_sccs(&g);
    let mut phases = Vec::new();
    for (label, members) in &partition.phases {
        let plan = layer_graph(&g.induced(members))?;
        phases.push(PhasePlan {
            label: label.clone(),
            layers: plan.layers.into_iter().map(|l| l.into_iter().collect()).collect(),
        });
    }
    Ok((
        PlanFile {
            phases,
            scc_of: scc_index(&global),
            phase_dependencies: partition.dependencies.iter().cloned().collect(),
        },
        partition,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(edges: &[(&str, &str)], extra: &[&str]) -> CallGraph {
        let mut g = CallGraph::default();
        for (a, b) in edges {
            g.nodes.insert(a.to_string());
            g.nodes.insert(b.to_string());
            g.edges.insert((a.to_string(), b.to_string()));
        }
        g.nodes.extend(extra.iter().map(|s| s.to_string()));
        g
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn diamond_layers() {
        let g = graph(&[("F1", "F2"), ("F1", "F3"), ("F2", "F5"), ("F3", "F5")], &[]);
        let plan = layer_graph(&g).unwrap();
        assert_eq!(plan.layers, vec![set(&["F1"]), set(&["F2", "F3"]), set(&["F5"])]);
    }

    #[test]
    fn two_cycle_is_one_scc_and_condenses() {
        let g = graph(&[("A", "B"), ("B", "A"), ("B", "C")], &[]);
        let sccs = find_sccs(&g);
        assert_eq!(sccs.len(), 2);
        assert_eq!(sccs[0].members, set(&["A", "B"]));
        let cg = condense_graph(&g, &sccs);
        assert_eq!(cg.edges, BTreeSet::from([(0, 1)]));
        let plan = plan_layers(&cg, &sccs).unwrap();
        assert_eq!(plan.layers, vec![set(&["A", "B"]), set(&["C"])]);
    }

    #[test]
    fn acyclic_graph_has_singleton_sccs() {
        let g = graph(&[("a", "b"), ("b", "c"), ("a", "c")], &["d"]);
        assert!(find_sccs(&g).iter().all(|s| s.members.len() == 1));
    }

    #[test]
    fn single_node_and_self_loop() {
        let g = graph(&[], &["f"]);
        assert_eq!(layer_graph(&g).unwrap().layers, vec![set(&["f"])]);
        let g = graph(&[("f", "f")], &[]);
        assert_eq!(layer_graph(&g).unwrap().layers, vec![set(&["f"])]);
    }

    #[test]
    fn cyclic_condensation_is_rejected() {
        let sccs = vec![
            Scc { id: 0, members: set(&["a"]) },
            Scc { id: 1, members: set(&["b"]) },
        ];
        let cg = CondensedGraph {
            nodes: BTreeSet::from([0, 1]),
            edges: BTreeSet::from([(0, 1), (1, 0)]),
        };
        assert!(matches!(plan_layers(&cg, &sccs), Err(PlanError::Cycle(_))));
    }

    #[test]
    fn batches_chunk_sorted_layers() {
        let layer = set(&["e", "a", "d", "b", "c"]);
        let b = make_batches(&layer, 2).unwrap();
        assert_eq!(b.batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        assert_eq!(b.batches.concat(), vec!["a", "b", "c", "d", "e"]);
        assert_eq!(make_batches(&set(&["x", "y", "z"]), 10).unwrap().batches.len(), 1);
        assert!(make_batches(&layer, 0).is_err());
    }
}
