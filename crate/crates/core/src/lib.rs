//! Local broadcast with probabilistic delivery guarantees in multi-channel,
//! multi-interface wireless mesh networks.
//!
//! The crate builds random mesh topologies with lossy links, assigns
//! channels to node interfaces under one of five strategies, plans the
//! minimum-effort transmissions that give every neighbor of a sender a
//! target delivery probability, and measures the resulting overhead and
//! channel load fairness.

pub mod broadcast;
pub mod cia;
pub mod config;
pub mod harness;
pub mod metrics;
pub mod seed;
pub mod topology;

pub use broadcast::{plan_broadcast, BroadcastPlan, Transmission, TxWindow};
pub use cia::{ChannelId, InterfaceAssignment, McTopology, Strategy};
pub use harness::{run_scenario, run_sweep, ScenarioConfig, SweepParam, SweepSpec};
pub use topology::{generate_topology, PerModel, Topology};

#[cfg(test)]
pub(crate) mod testing {
    use crate::cia::{ChannelId, Interface, InterfaceAssignment, Schedule, ScheduleEntry};
    use crate::topology::{PerModel, Position, Topology};

    fn two_slots(first: u16, second: u16) -> Interface {
        let e = |c: u16, start, stop| ScheduleEntry {
            channel: ChannelId(c),
            start,
            stop,
        };
        Interface::dynamic(Schedule::new(vec![e(first, 0, 10), e(second, 10, 20)], 20, 0).unwrap())
    }

    /// Four nodes on perfect links with two 10-tick slots over 4 channels.
    ///
    /// Node 0 has three interfaces; in the first slot its interface 0 reaches
    /// nodes 2 and 3 together and interface 2 is the only way to reach
    /// node 1.
    pub fn mixed_neighborhood() -> (Topology, InterfaceAssignment) {
        let positions = [
            Position::new(5.0, 5.0),
            Position::new(10.0, 5.0),
            Position::new(5.0, 10.0),
            Position::new(10.0, 10.0),
        ];
        let topo = Topology::from_positions(&positions, 20.0, PerModel::default(), 0.5).unwrap();
        let nodes = vec![
            vec![two_slots(0, 0), two_slots(1, 2), two_slots(2, 1)],
            vec![two_slots(2, 3)],
            vec![two_slots(0, 3)],
            vec![two_slots(1, 1), two_slots(0, 0)],
        ];
        let asg = InterfaceAssignment::new(nodes, 4, false).unwrap();
        (topo, asg)
    }
}
