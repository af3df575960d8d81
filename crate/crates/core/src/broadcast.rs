//! Local-broadcast planning with a probabilistic delivery guarantee.
//!
//! A plan is an open-loop list of copies. Each neighbor that can hear a copy
//! receives it independently with the link's delivery probability; the plan
//! is complete once every multi-channel neighbor would receive at least one
//! copy with probability `p_cover_min` or more.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::cia::{build_timeslots, ChannelId, CiaError, InterfaceKind, McTopology, Strategy, Tick};
use crate::topology::NodeId;

/// Horizon extensions allowed for the dynamic planner, in hyperperiods.
pub const MAX_HORIZON_PERIODS: u64 = 8;

/// Above this copy count `copies_required` trusts the closed form.
const EXACT_FOLD_LIMIT: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BroadcastError {
    #[error("invalid probability: {0}")]
    Probability(String),
    #[error("node {sender} cannot cover neighbor {neighbor}: {reason}")]
    Uncoverable {
        sender: NodeId,
        neighbor: NodeId,
        reason: String,
    },
    #[error("plan integrity: {0}")]
    Integrity(String),
    #[error("planner does not fit the assignment: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Cia(#[from] CiaError),
}

/// When a copy is sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxWindow {
    /// Any time; only interfaces that never leave the channel hear it.
    Always,
    /// Inside the timeslot `[start, stop)`.
    Slot { start: Tick, stop: Tick },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    pub sender: NodeId,
    pub interface: usize,
    pub channel: ChannelId,
    pub window: TxWindow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastPlan {
    pub sender: NodeId,
    pub transmissions: Vec<Transmission>,
}

impl BroadcastPlan {
    pub fn empty(sender: NodeId) -> Self {
        Self {
            sender,
            transmissions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.transmissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transmissions.is_empty()
    }
}

/// Probability that each neighbor has received at least one copy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageState {
    pcover: BTreeMap<NodeId, f64>,
}

impl CoverageState {
    pub fn get(&self, v: NodeId) -> Option<f64> {
        self.pcover.get(&v).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.pcover.iter().map(|(&v, &p)| (v, p))
    }

    pub fn len(&self) -> usize {
        self.pcover.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pcover.is_empty()
    }

    /// Smallest coverage over all neighbors; 1 when there are none.
    pub fn min(&self) -> f64 {
        self.pcover.values().copied().fold(1.0, f64::min)
    }

    pub fn all_covered(&self, p_cover_min: f64) -> bool {
        self.pcover.values().all(|&p| p >= p_cover_min)
    }
}

fn check_unit(name: &str, p: f64) -> Result<(), BroadcastError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(BroadcastError::Probability(format!(
            "{name}={p} outside [0, 1]"
        )))
    }
}

/// Coverage after one more copy: `1 - (1 - current)(1 - p_deliv)`.
///
/// The first copy sets the coverage to `p_deliv` directly.
pub fn update_pcover(current: f64, p_deliv: f64) -> f64 {
    if current == 0.0 {
        p_deliv
    } else {
        1.0 - (1.0 - current) * (1.0 - p_deliv)
    }
}

fn cover_after(p_deliv: f64, copies: u64) -> f64 {
    (0..copies).fold(0.0, |c, _| update_pcover(c, p_deliv))
}

/// Number of copies for a link of quality `p_deliv` to reach `p_cover_min`.
///
/// `K = ceil(log(1 - p_cover_min) / log(1 - p_deliv))`, then corrected so the
/// coverage accumulated with [`update_pcover`] after `K` copies is at least
/// `p_cover_min` and after `K - 1` copies is not.
pub fn copies_required(p_deliv: f64, p_cover_min: f64) -> Result<u64, BroadcastError> {
    if !(p_cover_min > 0.0 && p_cover_min < 1.0) {
        return Err(BroadcastError::Probability(format!(
            "p_cover_min={p_cover_min} outside (0, 1)"
        )));
    }
    check_unit("p_deliv", p_deliv)?;
    if p_deliv == 0.0 {
        return Err(BroadcastError::Probability(
            "p_deliv=0: no number of copies reaches the threshold".into(),
        ));
    }
    if p_deliv == 1.0 {
        return Ok(1);
    }
    let estimate = ((1.0 - p_cover_min).ln() / (1.0 - p_deliv).ln()).ceil();
    if !estimate.is_finite() || estimate > u64::MAX as f64 / 2.0 {
        return Err(BroadcastError::Probability(format!(
            "p_deliv={p_deliv} needs an unbounded number of copies"
        )));
    }
    let mut k = (estimate as u64).max(1);
    if k > EXACT_FOLD_LIMIT {
        return Ok(k);
    }
    while k > 1 && cover_after(p_deliv, k - 1) >= p_cover_min {
        k -= 1;
    }
    while cover_after(p_deliv, k) < p_cover_min {
        k += 1;
    }
    Ok(k)
}

fn sender_listens(mc: &McTopology<'_>, tx: &Transmission) -> Result<(), BroadcastError> {
    let asg = mc.assignment();
    let intfs = asg.interfaces(tx.sender)?;
    let intf = intfs.get(tx.interface).ok_or_else(|| {
        BroadcastError::Integrity(format!(
            "node {} has no interface {}",
            tx.sender, tx.interface
        ))
    })?;
    if tx.channel.index() >= asg.channels() {
        return Err(BroadcastError::Integrity(format!(
            "channel {} out of range",
            tx.channel
        )));
    }
    let ok = match tx.window {
        TxWindow::Always => {
            intf.schedule.fixed_channel() == Some(tx.channel)
                || (asg.retune_on_demand()
                    && intf.kind == InterfaceKind::Dynamic
                    && !asg.static_channels(tx.sender).any(|c| c == tx.channel))
        }
        TxWindow::Slot { start, stop } => {
            start < stop && intf.schedule.holds_channel(tx.channel, start, stop)
        }
    };
    if ok {
        Ok(())
    } else {
        Err(BroadcastError::Integrity(format!(
            "node {} interface {} is not on channel {} during {:?}",
            tx.sender, tx.interface, tx.channel, tx.window
        )))
    }
}

fn hears(mc: &McTopology<'_>, v: NodeId, tx: &Transmission) -> Result<bool, BroadcastError> {
    let intfs = mc.assignment().interfaces(v)?;
    Ok(match tx.window {
        TxWindow::Always => intfs
            .iter()
            .any(|i| i.schedule.fixed_channel() == Some(tx.channel)),
        TxWindow::Slot { start, stop } => intfs
            .iter()
            .any(|i| i.schedule.holds_channel(tx.channel, start, stop)),
    })
}

/// Exact coverage of every multi-channel neighbor of the plan's sender,
/// assuming independent losses across copies.
pub fn coverage_probability(
    plan: &BroadcastPlan,
    mc: &McTopology<'_>,
) -> Result<CoverageState, BroadcastError> {
    for tx in &plan.transmissions {
        if tx.sender != plan.sender {
            return Err(BroadcastError::Integrity(format!(
                "transmission from {} inside the plan of {}",
                tx.sender, plan.sender
            )));
        }
        sender_listens(mc, tx)?;
    }
    let topo = mc.topology();
    let mut pcover = BTreeMap::new();
    for &v in mc.neighbors(plan.sender)? {
        let p = topo.p_deliv(plan.sender, v).unwrap_or(0.0);
        let mut c = 0.0;
        for tx in &plan.transmissions {
            if hears(mc, v, tx)? {
                c = update_pcover(c, p);
            }
        }
        pcover.insert(v, c);
    }
    Ok(CoverageState { pcover })
}

struct Target {
    id: NodeId,
    p_deliv: f64,
    pcover: f64,
}

fn targets(mc: &McTopology<'_>, sender: NodeId) -> Result<Vec<Target>, BroadcastError> {
    let topo = mc.topology();
    mc.neighbors(sender)?
        .iter()
        .map(|&v| {
            let p_deliv = topo.p_deliv(sender, v).unwrap_or(0.0);
            if p_deliv <= 0.0 {
                return Err(BroadcastError::Uncoverable {
                    sender,
                    neighbor: v,
                    reason: "zero delivery probability".into(),
                });
            }
            Ok(Target {
                id: v,
                p_deliv,
                pcover: 0.0,
            })
        })
        .collect()
}

/// Upper bound on greedy iterations: every copy helps at least one
/// uncovered neighbor.
fn iteration_budget(targets: &[Target], p_cover_min: f64) -> Result<u64, BroadcastError> {
    targets.iter().try_fold(0u64, |acc, t| {
        Ok(acc.saturating_add(copies_required(t.p_deliv, p_cover_min)?))
    })
}

/// Picks uniformly among the candidates with the highest positive score.
fn pick_best<R: Rng + ?Sized>(scores: &[usize], rng: &mut R) -> Option<usize> {
    let best = *scores.iter().max()?;
    if best == 0 {
        return None;
    }
    let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
    Some(ties[rng.gen_range(0..ties.len())])
}

/// Every copy goes out on a common channel heard by all neighbors. The
/// weakest link fixes the number of copies; copies rotate over the sender's
/// static interfaces.
pub fn plan_common_channel(
    sender: NodeId,
    mc: &McTopology<'_>,
    p_cover_min: f64,
) -> Result<BroadcastPlan, BroadcastError> {
    let targets = targets(mc, sender)?;
    if targets.is_empty() {
        return Ok(BroadcastPlan::empty(sender));
    }
    let copies = targets.iter().try_fold(0u64, |k, t| {
        Ok::<_, BroadcastError>(k.max(copies_required(t.p_deliv, p_cover_min)?))
    })?;
    let statics: Vec<(usize, ChannelId)> = mc
        .assignment()
        .interfaces(sender)?
        .iter()
        .enumerate()
        .filter_map(|(i, intf)| intf.static_channel().map(|c| (i, c)))
        .collect();
    if statics.is_empty() {
        return Err(BroadcastError::Mismatch(format!(
            "node {sender} has no static interface for common-channel broadcast"
        )));
    }
    let first = sender % statics.len();
    let transmissions = (0..copies as usize)
        .map(|k| {
            let (interface, channel) = statics[(first + k) % statics.len()];
            Transmission {
                sender,
                interface,
                channel,
                window: TxWindow::Always,
            }
        })
        .collect();
    Ok(BroadcastPlan {
        sender,
        transmissions,
    })
}

/// Greedy channel selection towards neighbors' static channels.
///
/// Each round counts, per channel, the neighbors still below the threshold
/// that listen there, sends one copy on a random best channel and updates
/// everyone listening on it.
pub fn plan_greedy_static<R: Rng + ?Sized>(
    sender: NodeId,
    mc: &McTopology<'_>,
    p_cover_min: f64,
    rng: &mut R,
) -> Result<BroadcastPlan, BroadcastError> {
    let asg = mc.assignment();
    let mut targets = targets(mc, sender)?;
    if targets.is_empty() {
        return Ok(BroadcastPlan::empty(sender));
    }

    // channel -> sending interface
    let mut tx_intf: Vec<Option<usize>> = vec![None; asg.channels()];
    let intfs = asg.interfaces(sender)?;
    for (i, intf) in intfs.iter().enumerate() {
        if let Some(c) = intf.static_channel() {
            tx_intf[c.index()] = Some(i);
        }
    }
    if asg.retune_on_demand() {
        if let Some(d) = intfs.iter().position(|i| i.kind == InterfaceKind::Dynamic) {
            for slot in tx_intf.iter_mut().filter(|s| s.is_none()) {
                *slot = Some(d);
            }
        }
    }
    let channels: Vec<ChannelId> = (0..asg.channels())
        .filter(|&c| tx_intf[c].is_some())
        .map(|c| ChannelId(c as u16))
        .collect();

    // listeners[k] = target indices with a static interface on channels[k]
    let mut listeners: Vec<Vec<usize>> = vec![Vec::new(); channels.len()];
    for (ti, t) in targets.iter().enumerate() {
        let mut reachable = false;
        for c in asg.static_channels(t.id) {
            if let Some(k) = channels.iter().position(|&x| x == c) {
                listeners[k].push(ti);
                reachable = true;
            }
        }
        if !reachable {
            return Err(BroadcastError::Uncoverable {
                sender,
                neighbor: t.id,
                reason: "no static channel in common with the sender".into(),
            });
        }
    }

    let budget = iteration_budget(&targets, p_cover_min)?;
    let mut transmissions = Vec::new();
    while targets.iter().any(|t| t.pcover < p_cover_min) {
        if transmissions.len() as u64 >= budget {
            return Err(BroadcastError::Integrity(format!(
                "greedy static planner for node {sender} exceeded {budget} copies"
            )));
        }
        let scores: Vec<usize> = listeners
            .iter()
            .map(|ls| {
                ls.iter()
                    .filter(|&&ti| targets[ti].pcover < p_cover_min)
                    .count()
            })
            .collect();
        let k = pick_best(&scores, rng).ok_or_else(|| BroadcastError::Uncoverable {
            sender,
            neighbor: targets
                .iter()
                .find(|t| t.pcover < p_cover_min)
                .map_or(sender, |t| t.id),
            reason: "no channel reaches the remaining neighbors".into(),
        })?;
        for &ti in &listeners[k] {
            let t = &mut targets[ti];
            t.pcover = update_pcover(t.pcover, t.p_deliv);
        }
        let channel = channels[k];
        transmissions.push(Transmission {
            sender,
            interface: tx_intf[channel.index()].expect("channel has a sending interface"),
            channel,
            window: TxWindow::Always,
        });
    }
    Ok(BroadcastPlan {
        sender,
        transmissions,
    })
}

/// Greedy selection of `<timeslot, interface>` pairs for dynamic interfaces.
///
/// `horizon` defaults to the hyperperiod of the sender's neighborhood. If
/// some neighbor is never reachable inside it, the horizon grows by whole
/// hyperperiods up to [`MAX_HORIZON_PERIODS`].
pub fn plan_greedy_dynamic<R: Rng + ?Sized>(
    sender: NodeId,
    mc: &McTopology<'_>,
    p_cover_min: f64,
    rng: &mut R,
    horizon: Option<Tick>,
) -> Result<BroadcastPlan, BroadcastError> {
    let mut targets = targets(mc, sender)?;
    if targets.is_empty() {
        return Ok(BroadcastPlan::empty(sender));
    }
    let period = mc.neighborhood_hyperperiod(sender)?;
    let cap = period.saturating_mul(MAX_HORIZON_PERIODS);
    let mut horizon = horizon.unwrap_or(period).max(1);

    // (slot start, slot stop, interface, channel, listening target indices)
    let pairs = loop {
        let slots = build_timeslots(mc, sender, horizon)?;
        let mut pairs: Vec<(Tick, Tick, usize, ChannelId, Vec<usize>)> = Vec::new();
        let mut seen = vec![false; targets.len()];
        for slot in &slots {
            for (i, &c) in slot.owner.iter().enumerate() {
                let ls: Vec<usize> = targets
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| {
                        slot.neighbors
                            .iter()
                            .any(|(u, chans)| *u == t.id && chans.contains(&c))
                    })
                    .map(|(ti, _)| ti)
                    .collect();
                if !ls.is_empty() {
                    ls.iter().for_each(|&ti| seen[ti] = true);
                    pairs.push((slot.start, slot.stop, i, c, ls));
                }
            }
        }
        match seen.iter().position(|s| !s) {
            None => break pairs,
            Some(_) if horizon < cap => horizon = (horizon / period + 1) * period,
            Some(ti) => {
                return Err(BroadcastError::Uncoverable {
                    sender,
                    neighbor: targets[ti].id,
                    reason: format!("no common channel within {horizon} ticks"),
                })
            }
        }
    };

    let budget = iteration_budget(&targets, p_cover_min)?;
    let mut transmissions = Vec::new();
    while targets.iter().any(|t| t.pcover < p_cover_min) {
        if transmissions.len() as u64 >= budget {
            return Err(BroadcastError::Integrity(format!(
                "greedy dynamic planner for node {sender} exceeded {budget} copies"
            )));
        }
        let scores: Vec<usize> = pairs
            .iter()
            .map(|p| {
                p.4.iter()
                    .filter(|&&ti| targets[ti].pcover < p_cover_min)
                    .count()
            })
            .collect();
        let k = pick_best(&scores, rng).ok_or_else(|| {
            BroadcastError::Integrity(format!("no useful timeslot left for node {sender}"))
        })?;
        let (start, stop, interface, channel, ref ls) = pairs[k];
        for &ti in ls {
            let t = &mut targets[ti];
            t.pcover = update_pcover(t.pcover, t.p_deliv);
        }
        transmissions.push(Transmission {
            sender,
            interface,
            channel,
            window: TxWindow::Slot { start, stop },
        });
    }
    Ok(BroadcastPlan {
        sender,
        transmissions,
    })
}

/// Runs the planner matching `strategy`.
pub fn plan_broadcast<R: Rng + ?Sized>(
    sender: NodeId,
    mc: &McTopology<'_>,
    strategy: Strategy,
    p_cover_min: f64,
    rng: &mut R,
) -> Result<BroadcastPlan, BroadcastError> {
    match strategy {
        Strategy::StaticCommon | Strategy::MixedCommonAdaptive => {
            plan_common_channel(sender, mc, p_cover_min)
        }
        Strategy::StaticPseudoRandom | Strategy::MixedPseudoRandomAdaptive => {
            plan_greedy_static(sender, mc, p_cover_min, rng)
        }
        Strategy::DynamicAdaptive => plan_greedy_dynamic(sender, mc, p_cover_min, rng, None),
    }
}
