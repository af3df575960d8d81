//! Periodic channel schedules of a single interface.

use std::fmt;

use super::CiaError;

/// Simulation time in integer ticks.
pub type Tick = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(pub u16);

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A channel held over the half-open tick interval `[start, stop)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub channel: ChannelId,
    pub start: Tick,
    pub stop: Tick,
}

/// A periodic channel plan.
///
/// `entries` tile `[0, period)` in local time. The plan is shifted by
/// `offset` ticks on the global clock: at global tick `t` the interface is
/// on the entry covering `(t - offset) mod period`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    entries: Vec<ScheduleEntry>,
    period: Tick,
    offset: Tick,
}

pub(crate) fn gcd(mut a: Tick, mut b: Tick) -> Tick {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn lcm(a: Tick, b: Tick) -> Tick {
    a / gcd(a, b) * b
}

impl Schedule {
    pub fn new(entries: Vec<ScheduleEntry>, period: Tick, offset: Tick) -> Result<Self, CiaError> {
        if period == 0 || entries.is_empty() {
            return Err(CiaError::Schedule("empty schedule".into()));
        }
        let mut cursor = 0;
        for e in &entries {
            if e.start != cursor || e.stop <= e.start {
                return Err(CiaError::Schedule(format!(
                    "entry [{}, {}) does not continue the tiling at tick {cursor}",
                    e.start, e.stop
                )));
            }
            cursor = e.stop;
        }
        if cursor != period {
            return Err(CiaError::Schedule(format!(
                "entries end at {cursor}, period is {period}"
            )));
        }
        Ok(Self {
            entries,
            period,
            offset: offset % period,
        })
    }

    /// A static interface: one channel forever.
    pub fn fixed(channel: ChannelId) -> Self {
        Self {
            entries: vec![ScheduleEntry {
                channel,
                start: 0,
                stop: 1,
            }],
            period: 1,
            offset: 0,
        }
    }

    /// Visits `order` one slot each, shifted by `phase` ticks.
    pub fn rotating(order: &[ChannelId], slot_len: Tick, phase: Tick) -> Result<Self, CiaError> {
        if slot_len == 0 {
            return Err(CiaError::Config("slot_len must be positive".into()));
        }
        let entries = order
            .iter()
            .enumerate()
            .map(|(k, &channel)| ScheduleEntry {
                channel,
                start: k as Tick * slot_len,
                stop: (k as Tick + 1) * slot_len,
            })
            .collect();
        Self::new(entries, order.len() as Tick * slot_len, phase)
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn period(&self) -> Tick {
        self.period
    }

    pub fn offset(&self) -> Tick {
        self.offset
    }

    /// The channel of a schedule that never switches.
    pub fn fixed_channel(&self) -> Option<ChannelId> {
        let first = self.entries[0].channel;
        self.entries
            .iter()
            .all(|e| e.channel == first)
            .then_some(first)
    }

    fn local(&self, t: Tick) -> Tick {
        (t % self.period + self.period - self.offset) % self.period
    }

    /// Entry covering global tick `t`, with the global tick at which it ends.
    fn entry_at(&self, t: Tick) -> (&ScheduleEntry, Tick) {
        let local = self.local(t);
        let idx = self.entries.partition_point(|e| e.stop <= local);
        let e = &self.entries[idx];
        (e, t + (e.stop - local))
    }

    pub fn channel_at(&self, t: Tick) -> ChannelId {
        self.entry_at(t).0.channel
    }

    /// Whether the interface stays on `channel` over all of `[start, stop)`.
    pub fn holds_channel(&self, channel: ChannelId, start: Tick, stop: Tick) -> bool {
        let mut t = start;
        while t < stop {
            let (e, end) = self.entry_at(t);
            if e.channel != channel {
                return false;
            }
            t = end;
        }
        true
    }

    /// Global ticks in `[0, horizon)` at which the channel may change,
    /// always including 0.
    pub fn switch_instants(&self, horizon: Tick) -> Vec<Tick> {
        let mut out = vec![0];
        if self.fixed_channel().is_some() {
            return out;
        }
        let mut t = 0;
        while t < horizon {
            let (_, end) = self.entry_at(t);
            if end < horizon {
                out.push(end);
            }
            t = end;
        }
        out
    }

    /// Global segments covering `[0, horizon)`; adjacent segments on the same
    /// channel are merged.
    pub fn segments(&self, horizon: Tick) -> Vec<ScheduleEntry> {
        let mut out: Vec<ScheduleEntry> = Vec::new();
        let mut t = 0;
        while t < horizon {
            let (e, end) = self.entry_at(t);
            let stop = end.min(horizon);
            match out.last_mut() {
                Some(last) if last.channel == e.channel => last.stop = stop,
                _ => out.push(ScheduleEntry {
                    channel: e.channel,
                    start: t,
                    stop,
                }),
            }
            t = stop;
        }
        out
    }
}

/// Maximal intervals of `[0, lcm(periods))` during which both schedules sit
/// on the same channel. An empty result means the interface pair is deaf.
pub fn schedules_intersect(s1: &Schedule, s2: &Schedule) -> Vec<ScheduleEntry> {
    let horizon = lcm(s1.period, s2.period);
    intersect_over(s1, s2, horizon)
}

pub(crate) fn intersect_over(s1: &Schedule, s2: &Schedule, horizon: Tick) -> Vec<ScheduleEntry> {
    let a = s1.segments(horizon);
    let b = s2.segments(horizon);
    let (mut i, mut j) = (0, 0);
    let mut out: Vec<ScheduleEntry> = Vec::new();
    while i < a.len() && j < b.len() {
        let start = a[i].start.max(b[j].start);
        let stop = a[i].stop.min(b[j].stop);
        if start < stop && a[i].channel == b[j].channel {
            match out.last_mut() {
                Some(last) if last.stop == start && last.channel == a[i].channel => {
                    last.stop = stop
                }
                _ => out.push(ScheduleEntry {
                    channel: a[i].channel,
                    start,
                    stop,
                }),
            }
        }
        if a[i].stop <= b[j].stop {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}
