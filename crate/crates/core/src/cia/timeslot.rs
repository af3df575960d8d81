//! Timeslots of a node's neighborhood.
//!
//! Slot boundaries are the union of all switching instants of the owner and
//! its multi-channel neighbors, so every interface involved holds a single
//! channel for the duration of each slot.

use super::{ChannelId, CiaError, McTopology, Tick};
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeslot {
    pub start: Tick,
    pub stop: Tick,
    /// Channel of each owner interface.
    pub owner: Vec<ChannelId>,
    /// Channel of each interface of every neighbor.
    pub neighbors: Vec<(NodeId, Vec<ChannelId>)>,
}

impl Timeslot {
    /// Neighbors with an interface on `channel` during this slot.
    pub fn listeners(&self, channel: ChannelId) -> impl Iterator<Item = NodeId> + '_ {
        self.neighbors
            .iter()
            .filter(move |(_, chans)| chans.contains(&channel))
            .map(|&(u, _)| u)
    }
}

pub fn build_timeslots(
    mc: &McTopology<'_>,
    v: NodeId,
    horizon: Tick,
) -> Result<Vec<Timeslot>, CiaError> {
    let asg = mc.assignment();
    let nbrs = mc.neighbors(v)?;
    let mut bounds: Vec<Tick> = Vec::new();
    for node in std::iter::once(v).chain(nbrs.iter().copied()) {
        for intf in asg.interfaces(node)? {
            bounds.extend(intf.schedule.switch_instants(horizon));
        }
    }
    bounds.push(horizon);
    bounds.sort_unstable();
    bounds.dedup();

    let owner = asg.interfaces(v)?;
    let mut slots = Vec::with_capacity(bounds.len());
    for w in bounds.windows(2) {
        let (start, stop) = (w[0], w[1]);
        let neighbors = nbrs
            .iter()
            .map(|&u| {
                let chans = asg
                    .interfaces(u)?
                    .iter()
                    .map(|i| i.schedule.channel_at(start))
                    .collect();
                Ok((u, chans))
            })
            .collect::<Result<_, CiaError>>()?;
        slots.push(Timeslot {
            start,
            stop,
            owner: owner.iter().map(|i| i.schedule.channel_at(start)).collect(),
            neighbors,
        });
    }
    Ok(slots)
}
