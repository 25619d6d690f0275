//! Reasoning tree: nodes, lifecycle, frontier, and trajectory extraction.
//!
//! Nodes are never mutated in place once their thought is written. Repair
//! adds a fresh sibling branch head and flags the defective suffix as
//! [`NodeStatus::Repaired`], so the whole history stays inspectable.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{step_reward, OracleWeights, StepScores};

/// Identifier of a node within one episode's tree. The root is always `NodeId(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Reasoning mode used to produce a thought.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Direct,
    Decompose,
    Verify,
}

impl Strategy {
    /// Fixed expansion order.
    pub const ALL: [Strategy; 3] = [Strategy::Direct, Strategy::Decompose, Strategy::Verify];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Direct => "Direct",
            Strategy::Decompose => "Decompose",
            Strategy::Verify => "Verify",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeStatus {
    Active,
    Pruned,
    Repaired,
    Terminal,
    AbstainedLeaf,
}

impl NodeStatus {
    /// Closed nodes accept no children and are never selected.
    pub fn is_closed(self) -> bool {
        !matches!(self, NodeStatus::Active)
    }

    /// Surviving nodes are candidates for the final answer.
    pub fn is_surviving(self) -> bool {
        matches!(self, NodeStatus::Active | NodeStatus::Terminal | NodeStatus::AbstainedLeaf)
    }

    fn can_transition_to(self, next: NodeStatus) -> bool {
        use NodeStatus::*;
        matches!((self, next), (Active, Pruned) | (Active, Repaired) | (Active, Terminal) | (Active, AbstainedLeaf) | (Repaired, Active))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub thought: String,
    pub strategy: Strategy,
    pub status: NodeStatus,
    pub visit_count: u64,
    /// Oracle triple for this node's own step, from the evaluation of the
    /// trajectory ending here.
    pub step_scores: Option<StepScores>,
    /// Combined value of the trajectory ending at this node.
    pub value_cache: Option<f64>,
    pub children: Vec<NodeId>,
}

/// Root-to-leaf path, excluding the root (which carries the problem, not a thought).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub node_ids: Vec<NodeId>,
    /// Step reward of each node along the path; unscored steps count as 0.
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} is {status:?} and cannot accept children")]
    ClosedParent { node: NodeId, status: NodeStatus },
    #[error("node {node} lies under pruned node {pruned}")]
    PrunedAncestor { node: NodeId, pruned: NodeId },
    #[error("illegal status transition for {node}: {from:?} -> {to:?}")]
    IllegalTransition { node: NodeId, from: NodeStatus, to: NodeStatus },
    #[error("the root has no trajectory")]
    RootTrajectory,
    #[error("frontier is empty")]
    EmptyFrontier,
}

/// The evolving tree of partial trajectories for one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningTree {
    nodes: Vec<ReasoningNode>,
    frontier: BTreeSet<NodeId>,
    total_selections: u64,
}

impl Default for ReasoningTree {
    fn default() -> Self {
        Self::new()
    }
}

impl ReasoningTree {
    pub fn new() -> Self {
        let root = ReasoningNode {
            id: NodeId::ROOT,
            parent: None,
            depth: 0,
            thought: String::new(),
            strategy: Strategy::Direct,
            status: NodeStatus::Active,
            visit_count: 0,
            step_scores: None,
            value_cache: None,
            children: Vec::new(),
        };
        let mut frontier = BTreeSet::new();
        frontier.insert(NodeId::ROOT);
        Self { nodes: vec![root], frontier, total_selections: 0 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&ReasoningNode, TreeError> {
        self.nodes.get(id.0).ok_or(TreeError::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut ReasoningNode, TreeError> {
        self.nodes.get_mut(id.0).ok_or(TreeError::UnknownNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ReasoningNode> {
        self.nodes.iter()
    }

    pub fn frontier(&self) -> &BTreeSet<NodeId> {
        &self.frontier
    }

    /// Number of frontier selections made so far (`N` in the UCB bonus).
    pub fn total_selections(&self) -> u64 {
        self.total_selections
    }

    pub fn add_child(&mut self, parent: NodeId, thought: impl Into<String>, strategy: Strategy) -> Result<NodeId, TreeError> {
        let p = self.node(parent)?;
        if p.status.is_closed() {
            return Err(TreeError::ClosedParent { node: parent, status: p.status });
        }
        if let Some(pruned) = self.pruned_ancestor(parent) {
            return Err(TreeError::PrunedAncestor { node: parent, pruned });
        }
        let p = self.node(parent)?;
        let depth = p.depth + 1;
        let id = NodeId(self.nodes.len());
        self.nodes.push(ReasoningNode {
            id,
            parent: Some(parent),
            depth,
            thought: thought.into(),
            strategy,
            status: NodeStatus::Active,
            visit_count: 0,
            step_scores: None,
            value_cache: None,
            children: Vec::new(),
        });
        self.node_mut(parent)?.children.push(id);
        self.frontier.remove(&parent);
        self.frontier.insert(id);
        Ok(id)
    }

    /// Nearest strict ancestor of `id` with status Pruned.
    pub fn pruned_ancestor(&self, id: NodeId) -> Option<NodeId> {
        let mut cur = self.nodes.get(id.0)?.parent;
        while let Some(p) = cur {
            let node = &self.nodes[p.0];
            if node.status == NodeStatus::Pruned {
                return Some(p);
            }
            cur = node.parent;
        }
        None
    }

    pub fn set_status(&mut self, id: NodeId, status: NodeStatus) -> Result<(), TreeError> {
        let node = self.node_mut(id)?;
        if !node.status.can_transition_to(status) {
            return Err(TreeError::IllegalTransition { node: id, from: node.status, to: status });
        }
        node.status = status;
        let parent = node.parent;
        if status == NodeStatus::Pruned {
            self.prune_descendants(id);
        }
        self.refresh_membership(id);
        if let Some(p) = parent {
            self.refresh_membership(p);
        }
        Ok(())
    }

    fn prune_descendants(&mut self, id: NodeId) {
        let mut stack = self.nodes[id.0].children.clone();
        while let Some(c) = stack.pop() {
            let node = &mut self.nodes[c.0];
            if node.status == NodeStatus::Active {
                node.status = NodeStatus::Pruned;
            }
            stack.extend(node.children.iter().copied());
            self.frontier.remove(&c);
        }
    }

    fn refresh_membership(&mut self, id: NodeId) {
        let node = &self.nodes[id.0];
        let eligible = node.status == NodeStatus::Active && node.children.iter().all(|c| self.nodes[c.0].status != NodeStatus::Active);
        if eligible {
            self.frontier.insert(id);
        } else {
            self.frontier.remove(&id);
        }
    }

    pub fn set_scores(&mut self, id: NodeId, scores: StepScores, value: f64) -> Result<(), TreeError> {
        let node = self.node_mut(id)?;
        node.step_scores = Some(scores);
        node.value_cache = Some(value);
        Ok(())
    }

    /// Records one frontier selection of `id`.
    pub fn record_selection(&mut self, id: NodeId) -> Result<(), TreeError> {
        self.node_mut(id)?.visit_count += 1;
        self.total_selections += 1;
        Ok(())
    }

    /// Ordered node ids from the root's child down to `leaf`.
    pub fn ancestry(&self, leaf: NodeId) -> Result<Vec<NodeId>, TreeError> {
        let mut path = Vec::new();
        let mut cursor = self.node(leaf)?;
        while let Some(parent) = cursor.parent {
            path.push(cursor.id);
            cursor = self.node(parent)?;
        }
        path.reverse();
        Ok(path)
    }

    pub fn path_to_root(&self, leaf: NodeId) -> Result<Trajectory, TreeError> {
        self.path_to_root_weighted(leaf, &OracleWeights::default())
    }

    pub fn path_to_root_weighted(&self, leaf: NodeId, weights: &OracleWeights) -> Result<Trajectory, TreeError> {
        let node_ids = self.ancestry(leaf)?;
        if node_ids.is_empty() {
            return Err(TreeError::RootTrajectory);
        }
        let rewards = node_ids.iter().map(|id| self.nodes[id.0].step_scores.as_ref().map_or(0.0, |s| step_reward(s, weights))).collect();
        Ok(Trajectory { node_ids, rewards })
    }

    /// Thoughts along the path to `leaf`, in order.
    pub fn thoughts(&self, leaf: NodeId) -> Result<Vec<&str>, TreeError> {
        Ok(self.ancestry(leaf)?.into_iter().map(|id| self.nodes[id.0].thought.as_str()).collect())
    }

    pub fn subtree(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        self.node(id)?;
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n.0].children.iter().rev().copied());
        }
        Ok(out)
    }

    /// Highest-valued non-pruned leaf with a cached value; ties go to the lower id.
    pub fn best_surviving(&self) -> Option<(NodeId, f64)> {
        let mut best: Option<(NodeId, f64)> = None;
        for node in &self.nodes {
            let is_candidate = node.status.is_surviving() && node.children.iter().all(|c| !self.nodes[c.0].status.is_surviving());
            if !is_candidate {
                continue;
            }
            if let Some(v) = node.value_cache {
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((node.id, v));
                }
            }
        }
        best
    }

    /// Brute-force recomputation of the frontier, independent of the incremental set.
    pub fn recompute_frontier(&self) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Active)
            .filter(|n| !self.nodes.iter().any(|m| m.parent == Some(n.id) && m.status == NodeStatus::Active))
            .map(|n| n.id)
            .collect()
    }

    /// Checks parent/child links, depth rule, and reachability from the root.
    pub fn check_structure(&self) -> Result<(), String> {
        for node in &self.nodes {
            match node.parent {
                None if node.id != NodeId::ROOT => return Err(format!("{} has no parent", node.id)),
                None if node.depth != 0 => return Err("root depth must be 0".into()),
                Some(p) => {
                    let parent = self.nodes.get(p.0).ok_or_else(|| format!("{} has dangling parent", node.id))?;
                    if p >= node.id {
                        return Err(format!("{} precedes its parent", node.id));
                    }
                    if node.depth != parent.depth + 1 {
                        return Err(format!("{} has depth {} under depth {}", node.id, node.depth, parent.depth));
                    }
                    if !parent.children.contains(&node.id) {
                        return Err(format!("{} missing from parent's children", node.id));
                    }
                }
                None => {}
            }
        }
        Ok(())
    }
}
