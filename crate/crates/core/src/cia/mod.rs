//! Channel and interface assignment (CIA).
//!
//! Each node owns a list of interfaces. A static interface holds one channel
//! for the whole run; a dynamic one follows a periodic schedule. The five
//! strategies below combine an interface layout with a channel policy.

mod neighbors;
mod schedule;
mod timeslot;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::seed;
use crate::topology::{NodeId, Topology};

pub use neighbors::{mc_neighbors, McTopology};
pub use schedule::{schedules_intersect, ChannelId, Schedule, ScheduleEntry, Tick};
pub use timeslot::{build_timeslots, Timeslot};

pub(crate) use schedule::lcm;

pub const DEFAULT_SLOT_LEN: Tick = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CiaError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid assignment: {0}")]
    Assignment(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    StaticCommon,
    StaticPseudoRandom,
    DynamicAdaptive,
    MixedCommonAdaptive,
    MixedPseudoRandomAdaptive,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::StaticCommon,
        Strategy::StaticPseudoRandom,
        Strategy::DynamicAdaptive,
        Strategy::MixedCommonAdaptive,
        Strategy::MixedPseudoRandomAdaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::StaticCommon => "StaticCommon",
            Strategy::StaticPseudoRandom => "StaticPseudoRandom",
            Strategy::DynamicAdaptive => "DynamicAdaptive",
            Strategy::MixedCommonAdaptive => "MixedCommonAdaptive",
            Strategy::MixedPseudoRandomAdaptive => "MixedPseudoRandomAdaptive",
        }
    }

    /// Builds this strategy's assignment for every node of `topo`.
    pub fn assign(
        self,
        topo: &Topology,
        n_interfaces: usize,
        channels: usize,
        slot_len: Tick,
        seed: u64,
    ) -> Result<InterfaceAssignment, CiaError> {
        match self {
            Strategy::StaticCommon => assign_static_common(topo, n_interfaces, channels),
            Strategy::StaticPseudoRandom => {
                assign_static_pseudorandom(topo, n_interfaces, channels, seed)
            }
            Strategy::DynamicAdaptive => {
                assign_dynamic_adaptive(topo, n_interfaces, channels, slot_len, seed)
            }
            Strategy::MixedCommonAdaptive => {
                assign_mixed_common_adaptive(topo, n_interfaces, channels, slot_len, seed)
            }
            Strategy::MixedPseudoRandomAdaptive => {
                assign_mixed_pseudorandom_adaptive(topo, n_interfaces, channels, slot_len, seed)
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = CiaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                CiaError::Config(format!(
                    "unknown strategy {s:?}; expected one of {}",
                    Strategy::ALL.map(Strategy::name).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interface {
    pub kind: InterfaceKind,
    pub schedule: Schedule,
}

impl Interface {
    pub fn fixed(channel: ChannelId) -> Self {
        Self {
            kind: InterfaceKind::Static,
            schedule: Schedule::fixed(channel),
        }
    }

    pub fn dynamic(schedule: Schedule) -> Self {
        Self {
            kind: InterfaceKind::Dynamic,
            schedule,
        }
    }

    /// Channel of a static interface.
    pub fn static_channel(&self) -> Option<ChannelId> {
        match self.kind {
            InterfaceKind::Static => self.schedule.fixed_channel(),
            InterfaceKind::Dynamic => None,
        }
    }
}

/// Interfaces of every node.
///
/// When `retune_on_demand` is set, dynamic interfaces are transmit-side
/// radios that can be tuned to any channel not held by one of the node's
/// static interfaces; their schedules then only describe idle behaviour.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceAssignment {
    nodes: Vec<Vec<Interface>>,
    channels: usize,
    retune_on_demand: bool,
}

impl InterfaceAssignment {
    pub fn new(
        nodes: Vec<Vec<Interface>>,
        channels: usize,
        retune_on_demand: bool,
    ) -> Result<Self, CiaError> {
        for (v, intfs) in nodes.iter().enumerate() {
            for (i, intf) in intfs.iter().enumerate() {
                if let Some(e) = intf
                    .schedule
                    .entries()
                    .iter()
                    .find(|e| e.channel.index() >= channels)
                {
                    return Err(CiaError::Assignment(format!(
                        "node {v} interface {i} uses channel {} but only {channels} exist",
                        e.channel
                    )));
                }
            }
            for i in 0..intfs.len() {
                for j in (i + 1)..intfs.len() {
                    if !schedules_intersect(&intfs[i].schedule, &intfs[j].schedule).is_empty() {
                        return Err(CiaError::Assignment(format!(
                            "node {v}: interfaces {i} and {j} share a channel at the same instant"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            nodes,
            channels,
            retune_on_demand,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn retune_on_demand(&self) -> bool {
        self.retune_on_demand
    }

    pub fn interfaces(&self, v: NodeId) -> Result<&[Interface], CiaError> {
        self.nodes
            .get(v)
            .map(Vec::as_slice)
            .ok_or(CiaError::UnknownNode(v))
    }

    pub fn static_count(&self, v: NodeId) -> usize {
        self.nodes.get(v).map_or(0, |intfs| {
            intfs
                .iter()
                .filter(|i| i.kind == InterfaceKind::Static)
                .count()
        })
    }

    pub fn dynamic_count(&self, v: NodeId) -> usize {
        self.nodes.get(v).map_or(0, |intfs| intfs.len()) - self.static_count(v)
    }

    /// Channels held by the static interfaces of `v`.
    pub fn static_channels(&self, v: NodeId) -> impl Iterator<Item = ChannelId> + '_ {
        self.nodes
            .get(v)
            .into_iter()
            .flatten()
            .filter_map(Interface::static_channel)
    }

    /// Sorted set of channels any interface of any node may occupy.
    pub fn channel_set(&self) -> Vec<ChannelId> {
        let mut used = vec![false; self.channels];
        for intf in self.nodes.iter().flatten() {
            for e in intf.schedule.entries() {
                used[e.channel.index()] = true;
            }
            if self.retune_on_demand && intf.kind == InterfaceKind::Dynamic {
                used.iter_mut().for_each(|u| *u = true);
            }
        }
        used.iter()
            .enumerate()
            .filter(|(_, &u)| u)
            .map(|(c, _)| ChannelId(c as u16))
            .collect()
    }

    /// Least common multiple of the schedule periods of `nodes`.
    pub fn hyperperiod<I: IntoIterator<Item = NodeId>>(&self, nodes: I) -> Tick {
        nodes
            .into_iter()
            .filter_map(|v| self.nodes.get(v))
            .flatten()
            .fold(1, |acc, intf| lcm(acc, intf.schedule.period()))
    }

    /// Writes `node,interface,channel,t_start,t_stop` rows covering one
    /// period of each interface on the global clock.
    pub fn write_schedule_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node", "interface", "channel", "t_start", "t_stop"])?;
        for (v, intfs) in self.nodes.iter().enumerate() {
            for (i, intf) in intfs.iter().enumerate() {
                for seg in intf.schedule.segments(intf.schedule.period()) {
                    w.write_record([
                        v.to_string(),
                        i.to_string(),
                        seg.channel.to_string(),
                        seg.start.to_string(),
                        seg.stop.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_counts(n_interfaces: usize, channels: usize) -> Result<(), CiaError> {
    if n_interfaces == 0 {
        return Err(CiaError::Config(
            "at least one interface is required".into(),
        ));
    }
    if channels == 0 || channels > u16::MAX as usize {
        return Err(CiaError::Config(format!(
            "invalid channel count {channels}"
        )));
    }
    if n_interfaces > channels {
        return Err(CiaError::Config(format!(
            "{n_interfaces} interfaces need distinct channels but only {channels} exist"
        )));
    }
    Ok(())
}

fn check_mixed(n_interfaces: usize) -> Result<(), CiaError> {
    if n_interfaces < 2 {
        return Err(CiaError::Config(format!(
            "mixed strategies need at least one static and one dynamic interface, got {n_interfaces} interface(s)"
        )));
    }
    Ok(())
}

fn all_channels(channels: usize) -> Vec<ChannelId> {
    (0..channels).map(|c| ChannelId(c as u16)).collect()
}

/// Draws `count` distinct channels from `available` as a function of the
/// node id and the global seed; a collision triggers a re-draw.
pub fn pseudorandom_channels(
    node: NodeId,
    count: usize,
    available: &[ChannelId],
    seed: u64,
) -> Vec<ChannelId> {
    assert!(count <= available.len());
    let mut chosen: Vec<ChannelId> = Vec::with_capacity(count);
    for k in 0..count {
        let mut attempt = 0u64;
        loop {
            let h = seed::mix(&[seed, node as u64, k as u64, attempt]);
            let c = available[(h % available.len() as u64) as usize];
            if !chosen.contains(&c) {
                chosen.push(c);
                break;
            }
            attempt += 1;
        }
    }
    chosen
}

/// Dynamic interfaces of one node: a seeded permutation of `available`,
/// rotated by one position per interface, all sharing one phase offset.
fn rotating_interfaces(
    node: NodeId,
    count: usize,
    available: &[ChannelId],
    slot_len: Tick,
    seed: u64,
) -> Result<Vec<Interface>, CiaError> {
    if slot_len == 0 {
        return Err(CiaError::Config("slot_len must be positive".into()));
    }
    let mut rng = seed::stream(seed::mix(&[seed, node as u64]), 0x0064_796e_616d_6963);
    let mut base = available.to_vec();
    base.shuffle(&mut rng);
    let phase = rng.gen_range(0..slot_len);
    (0..count)
        .map(|k| {
            let mut order = base.clone();
            order.rotate_left(k % base.len());
            Schedule::rotating(&order, slot_len, phase).map(Interface::dynamic)
        })
        .collect()
}

pub fn assign_static_common(
    topo: &Topology,
    n_interfaces: usize,
    channels: usize,
) -> Result<InterfaceAssignment, CiaError> {
    check_counts(n_interfaces, channels)?;
    let layout: Vec<Interface> = (0..n_interfaces)
        .map(|i| Interface::fixed(ChannelId(i as u16)))
        .collect();
    InterfaceAssignment::new(vec![layout; topo.len()], channels, false)
}

pub fn assign_static_pseudorandom(
    topo: &Topology,
    n_interfaces: usize,
    channels: usize,
    seed: u64,
) -> Result<InterfaceAssignment, CiaError> {
    check_counts(n_interfaces, channels)?;
    let available = all_channels(channels);
    let nodes = (0..topo.len())
        .map(|v| {
            pseudorandom_channels(v, n_interfaces, &available, seed)
                .into_iter()
                .map(Interface::fixed)
                .collect()
        })
        .collect();
    InterfaceAssignment::new(nodes, channels, false)
}

pub fn assign_dynamic_adaptive(
    topo: &Topology,
    n_interfaces: usize,
    channels: usize,
    slot_len: Tick,
    seed: u64,
) -> Result<InterfaceAssignment, CiaError> {
    check_counts(n_interfaces, channels)?;
    let available = all_channels(channels);
    let nodes = (0..topo.len())
        .map(|v| rotating_interfaces(v, n_interfaces, &available, slot_len, seed))
        .collect::<Result<_, _>>()?;
    InterfaceAssignment::new(nodes, channels, false)
}

/// Interface 0 is static on the control channel 0; the others rotate over
/// channels `1..C`.
pub fn assign_mixed_common_adaptive(
    topo: &Topology,
    n_interfaces: usize,
    channels: usize,
    slot_len: Tick,
    seed: u64,
) -> Result<InterfaceAssignment, CiaError> {
    check_mixed(n_interfaces)?;
    check_counts(n_interfaces, channels)?;
    let data_channels: Vec<ChannelId> = all_channels(channels).into_iter().skip(1).collect();
    let nodes = (0..topo.len())
        .map(|v| {
            let mut intfs = vec![Interface::fixed(ChannelId(0))];
            intfs.extend(rotating_interfaces(
                v,
                n_interfaces - 1,
                &data_channels,
                slot_len,
                seed,
            )?);
            Ok(intfs)
        })
        .collect::<Result<_, CiaError>>()?;
    InterfaceAssignment::new(nodes, channels, false)
}

/// One static receive interface per node on a channel derived from the node
/// id; the remaining interfaces are transmit-side and retune on demand.
pub fn assign_mixed_pseudorandom_adaptive(
    topo: &Topology,
    n_interfaces: usize,
    channels: usize,
    slot_len: Tick,
    seed: u64,
) -> Result<InterfaceAssignment, CiaError> {
    check_mixed(n_interfaces)?;
    check_counts(n_interfaces, channels)?;
    let available = all_channels(channels);
    let nodes = (0..topo.len())
        .map(|v| {
            let home = pseudorandom_channels(v, 1, &available, seed)[0];
            let others: Vec<ChannelId> = available.iter().copied().filter(|&c| c != home).collect();
            let mut intfs = vec![Interface::fixed(home)];
            intfs.extend(rotating_interfaces(
                v,
                n_interfaces - 1,
                &others,
                slot_len,
                seed,
            )?);
            Ok(intfs)
        })
        .collect::<Result<_, CiaError>>()?;
    InterfaceAssignment::new(nodes, channels, true)
}
