//! The multi-channel neighbor relation.

use super::{schedules_intersect, CiaError, Interface, InterfaceAssignment};
use crate::topology::{NodeId, Topology};

fn interfaces_meet(a: &Interface, b: &Interface) -> bool {
    match (a.schedule.fixed_channel(), b.schedule.fixed_channel()) {
        (Some(x), Some(y)) => x == y,
        _ => !schedules_intersect(&a.schedule, &b.schedule).is_empty(),
    }
}

fn linked(asg: &InterfaceAssignment, u: NodeId, v: NodeId) -> Result<bool, CiaError> {
    let iu = asg.interfaces(u)?;
    let iv = asg.interfaces(v)?;
    Ok(iu.iter().any(|a| iv.iter().any(|b| interfaces_meet(a, b))))
}

/// Radio neighbors of `v` sharing a channel with it at some instant.
/// Virtual neighbors (in range but deaf) are left out.
pub fn mc_neighbors(
    topo: &Topology,
    asg: &InterfaceAssignment,
    v: NodeId,
) -> Result<Vec<NodeId>, CiaError> {
    let radio = topo
        .neighbors_with_deliv(v)
        .map_err(|_| CiaError::UnknownNode(v))?;
    let mut out = Vec::with_capacity(radio.len());
    for &(u, _) in radio {
        if linked(asg, v, u)? {
            out.push(u);
        }
    }
    Ok(out)
}

/// A topology together with an assignment and the cached multi-channel
/// neighbor lists of every node.
#[derive(Debug, Clone)]
pub struct McTopology<'a> {
    topo: &'a Topology,
    assignment: &'a InterfaceAssignment,
    neighbors: Vec<Vec<NodeId>>,
}

impl<'a> McTopology<'a> {
    pub fn new(topo: &'a Topology, assignment: &'a InterfaceAssignment) -> Result<Self, CiaError> {
        if topo.len() != assignment.len() {
            return Err(CiaError::Assignment(format!(
                "assignment covers {} nodes, topology has {}",
                assignment.len(),
                topo.len()
            )));
        }
        let neighbors = (0..topo.len())
            .map(|v| mc_neighbors(topo, assignment, v))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            topo,
            assignment,
            neighbors,
        })
    }

    pub fn topology(&self) -> &'a Topology {
        self.topo
    }

    pub fn assignment(&self) -> &'a InterfaceAssignment {
        self.assignment
    }

    pub fn neighbors(&self, v: NodeId) -> Result<&[NodeId], CiaError> {
        self.neighbors
            .get(v)
            .map(Vec::as_slice)
            .ok_or(CiaError::UnknownNode(v))
    }

    /// Hyperperiod of `v` and its multi-channel neighbors.
    pub fn neighborhood_hyperperiod(&self, v: NodeId) -> Result<super::Tick, CiaError> {
        let nbrs = self.neighbors(v)?;
        Ok(self
            .assignment
            .hyperperiod(std::iter::once(v).chain(nbrs.iter().copied())))
    }
}
