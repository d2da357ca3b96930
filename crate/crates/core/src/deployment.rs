//! Block-to-node placement and repartitioning over surviving nodes.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::DeploymentError;
use crate::graph::DnnGraph;

/// Edge node label; displayed 1-based as `n1`, `n2`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Block-to-node assignment; index `i` holds the node running block `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub assignment: Vec<NodeId>,
}

impl Placement {
    pub fn from_split(nodes: &[NodeId], split: &[usize]) -> Self {
        let assignment = split
            .iter()
            .zip(nodes)
            .flat_map(|(&count, &node)| std::iter::repeat_n(node, count))
            .collect();
        Placement { assignment }
    }

    pub fn node_of(&self, block: usize) -> Option<NodeId> {
        self.assignment.get(block).copied()
    }

    pub fn blocks_on(&self, node: NodeId) -> BTreeSet<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == node)
            .map(|(b, _)| b)
            .collect()
    }

    /// Distinct nodes in the order the pipeline visits them.
    pub fn used_nodes(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::new();
        for &n in &self.assignment {
            if out.last() != Some(&n) {
                out.push(n);
            }
        }
        out
    }

    /// Number of node changes along the listed block sequence.
    pub fn boundaries<I: IntoIterator<Item = usize>>(&self, blocks: I) -> usize {
        let mut prev = None;
        let mut crossings = 0;
        for b in blocks {
            let n = self.assignment[b];
            if prev.is_some_and(|p| p != n) {
                crossings += 1;
            }
            prev = Some(n);
        }
        crossings
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deployment {
    pub graph: Arc<DnnGraph>,
    pub nodes: Vec<NodeId>,
    pub placement: Placement,
    pub alive: BTreeSet<NodeId>,
}

impl Deployment {
    /// Checks that every block is placed on a known node and that the
    /// placement follows node order.
    pub fn new(graph: Arc<DnnGraph>, nodes: Vec<NodeId>, placement: Placement) -> Result<Self, DeploymentError> {
        if placement.assignment.len() != graph.block_count() {
            return Err(DeploymentError::InsufficientNodes {
                needed: graph.block_count(),
                available: placement.assignment.len(),
            });
        }
        let mut last_pos = 0;
        for &n in &placement.assignment {
            let pos = nodes
                .iter()
                .position(|&m| m == n)
                .ok_or(DeploymentError::UnknownNode(n))?;
            if pos < last_pos {
                return Err(DeploymentError::UnresolvedAction(format!(
                    "placement is not contiguous at node {n}"
                )));
            }
            last_pos = pos;
        }
        let alive = nodes.iter().copied().collect();
        Ok(Deployment {
            graph,
            nodes,
            placement,
            alive,
        })
    }

    pub fn blocks_on(&self, node: NodeId) -> BTreeSet<usize> {
        self.placement.blocks_on(node)
    }

    pub fn survivors(&self, failed: NodeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .copied()
            .filter(|n| *n != failed && self.alive.contains(n))
            .collect()
    }
}

/// Exactly one failed node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureScenario {
    pub failed_node: NodeId,
}

impl FailureScenario {
    pub fn check(&self, dep: &Deployment) -> Result<(), DeploymentError> {
        if !dep.nodes.contains(&self.failed_node) {
            return Err(DeploymentError::UnknownNode(self.failed_node));
        }
        if dep.blocks_on(self.failed_node).is_empty() {
            return Err(DeploymentError::NodeHostsNothing(self.failed_node));
        }
        Ok(())
    }
}

/// One block per node on `n1..n{node_count}`. The stem shares the first
/// block's node and the tail shares the last block's node; surplus nodes
/// stay idle.
pub fn place_one_block_per_node(graph: Arc<DnnGraph>, node_count: usize) -> Result<Deployment, DeploymentError> {
    let units = graph.block_count();
    if node_count < units {
        return Err(DeploymentError::InsufficientNodes {
            needed: units,
            available: node_count,
        });
    }
    let nodes: Vec<NodeId> = (1..=node_count as u32).map(NodeId).collect();
    let placement = Placement {
        assignment: nodes[..units].to_vec(),
    };
    Deployment::new(graph, nodes, placement)
}

/// Contiguous split of `loads` into `parts` non-empty runs minimising the
/// largest run sum. Among optimal splits the lexicographically smallest
/// size vector wins. Run sums are accumulated left to right.
pub fn min_makespan_split(loads: &[f64], parts: usize) -> Vec<usize> {
    let n = loads.len();
    assert!(parts >= 1 && parts <= n, "need 1 <= parts <= blocks");
    let run = |start: usize, len: usize| loads[start..start + len].iter().sum::<f64>();

    // best[i][j]: optimal makespan for loads[i..] over j runs
    let mut best = vec![vec![f64::INFINITY; parts + 1]; n + 1];
    best[n][0] = 0.0;
    for j in 1..=parts {
        for i in (0..n).rev() {
            let remaining = n - i;
            if remaining < j {
                continue;
            }
            let mut acc = 0.0;
            let mut value = f64::INFINITY;
            for len in 1..=remaining - (j - 1) {
                acc += loads[i + len - 1];
                let candidate = acc.max(best[i + len][j - 1]);
                if candidate < value {
                    value = candidate;
                }
            }
            best[i][j] = value;
        }
    }

    let target = best[0][parts];
    let mut split = Vec::with_capacity(parts);
    let mut at = 0;
    for j in (1..=parts).rev() {
        let len = (1..=n - at - (j - 1))
            .find(|&len| run(at, len) <= target && best[at + len][j - 1] <= target)
            .expect("an optimal continuation exists");
        split.push(len);
        at += len;
    }
    split
}

/// Per-block loads with the stem folded into the first block and the tail
/// into the last.
pub fn placement_loads(stem: f64, blocks: &[f64], tail: f64) -> Vec<f64> {
    let mut loads = blocks.to_vec();
    if let Some(first) = loads.first_mut() {
        *first += stem;
    }
    if let Some(last) = loads.last_mut() {
        *last += tail;
    }
    loads
}

/// New contiguous placement of all blocks over `survivors`.
pub fn plan_repartition_loads(loads: &[f64], survivors: &[NodeId]) -> Result<Placement, DeploymentError> {
    if survivors.is_empty() {
        return Err(DeploymentError::NoSurvivors);
    }
    let parts = survivors.len().min(loads.len());
    let split = min_makespan_split(loads, parts);
    Ok(Placement::from_split(survivors, &split))
}

pub fn plan_repartition(
    graph: &DnnGraph,
    survivors: &[NodeId],
    latency: &crate::predict::LatencyPredictor,
) -> Result<Placement, DeploymentError> {
    let costs = crate::candidate::BlockCosts::compute(graph, latency)?;
    plan_repartition_loads(&costs.placement_loads(), survivors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_mobilenetv2, build_resnet32};

    #[test]
    fn identity_placement() {
        let dep = place_one_block_per_node(Arc::new(build_resnet32()), 15).unwrap();
        for b in 0..15 {
            assert_eq!(dep.placement.node_of(b), Some(NodeId(b as u32 + 1)));
        }
        let dep = place_one_block_per_node(Arc::new(build_mobilenetv2()), 17).unwrap();
        assert_eq!(dep.placement.node_of(16), Some(NodeId(17)));
    }

    #[test]
    fn too_few_nodes() {
        assert_eq!(
            place_one_block_per_node(Arc::new(build_resnet32()), 3),
            Err(DeploymentError::InsufficientNodes {
                needed: 15,
                available: 3
            })
        );
    }

    #[test]
    fn spare_nodes_host_nothing() {
        let dep = place_one_block_per_node(Arc::new(build_resnet32()), 16).unwrap();
        let f = FailureScenario {
            failed_node: NodeId(16),
        };
        assert_eq!(f.check(&dep), Err(DeploymentError::NodeHostsNothing(NodeId(16))));
        let f = FailureScenario {
            failed_node: NodeId(40),
        };
        assert_eq!(f.check(&dep), Err(DeploymentError::UnknownNode(NodeId(40))));
    }

    #[test]
    fn split_examples() {
        assert_eq!(min_makespan_split(&[1.0; 4], 2), vec![2, 2]);
        assert_eq!(min_makespan_split(&[3.0, 1.0, 1.0, 1.0], 2), vec![1, 3]);
        assert_eq!(min_makespan_split(&[2.0, 5.0, 1.0], 1), vec![3]);
        assert_eq!(min_makespan_split(&[1.0, 1.0, 1.0], 3), vec![1, 1, 1]);
    }

    #[test]
    fn repartition_over_single_survivor() {
        let p = plan_repartition_loads(&[1.0, 2.0, 3.0], &[NodeId(4)]).unwrap();
        assert_eq!(p.assignment, vec![NodeId(4); 3]);
        assert_eq!(plan_repartition_loads(&[1.0], &[]), Err(DeploymentError::NoSurvivors));
    }

    #[test]
    fn more_survivors_than_blocks() {
        let nodes: Vec<NodeId> = (1..=5).map(NodeId).collect();
        let p = plan_repartition_loads(&[1.0, 1.0], &nodes).unwrap();
        assert_eq!(p.assignment, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn boundaries_count_node_changes() {
        let p = Placement {
            assignment: vec![NodeId(1), NodeId(1), NodeId(2), NodeId(3)],
        };
        assert_eq!(p.boundaries(0..4), 2);
        assert_eq!(p.boundaries([0, 1]), 0);
        assert_eq!(p.boundaries([0, 1, 3]), 1);
        assert_eq!(p.used_nodes(), vec![NodeId(1), NodeId(2), NodeId(3)]);
    }
}
