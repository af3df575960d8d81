//! Broadcast overhead and per-channel load fairness.

use thiserror::Error;

use crate::broadcast::BroadcastPlan;
use crate::cia::ChannelId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("overhead is undefined when no node has a neighbor to cover")]
    NoBroadcast,
    #[error("Jain index is undefined when no channel carries load")]
    NoLoad,
    #[error("transmission on channel {channel} but only {channels} channels exist")]
    ChannelOutOfRange { channel: ChannelId, channels: usize },
}

/// Transmissions carried by each channel. Packets have a uniform size, so a
/// transmission count is a bandwidth measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLoad {
    loads: Vec<f64>,
}

impl ChannelLoad {
    pub fn new(loads: Vec<f64>) -> Self {
        Self { loads }
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn total(&self) -> f64 {
        self.loads.iter().sum()
    }

    /// The loads of `channels` only, in the given order.
    pub fn restricted_to(&self, channels: &[ChannelId]) -> ChannelLoad {
        ChannelLoad {
            loads: channels
                .iter()
                .map(|c| self.loads.get(c.index()).copied().unwrap_or(0.0))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub overhead: f64,
    pub jain: f64,
}

/// Mean number of transmissions per broadcasting node.
///
/// A node without multi-channel neighbors has an empty plan and no
/// broadcast to perform; it is left out of the mean.
pub fn overhead(plans: &[BroadcastPlan]) -> Result<f64, MetricsError> {
    let senders = plans.iter().filter(|p| !p.is_empty()).count();
    if senders == 0 {
        return Err(MetricsError::NoBroadcast);
    }
    let total: usize = plans.iter().map(BroadcastPlan::len).sum();
    Ok(total as f64 / senders as f64)
}

pub fn channel_loads(
    plans: &[BroadcastPlan],
    channels: usize,
) -> Result<ChannelLoad, MetricsError> {
    let mut loads = vec![0.0; channels];
    for tx in plans.iter().flat_map(|p| &p.transmissions) {
        let slot = loads
            .get_mut(tx.channel.index())
            .ok_or(MetricsError::ChannelOutOfRange {
                channel: tx.channel,
                channels,
            })?;
        *slot += 1.0;
    }
    Ok(ChannelLoad { loads })
}

/// `(Σ B_c)² / (C · Σ B_c²)` over the channels of `loads`.
pub fn jain_index(loads: &ChannelLoad) -> Result<f64, MetricsError> {
    let sum: f64 = loads.loads.iter().sum();
    let sum_sq: f64 = loads.loads.iter().map(|b| b * b).sum();
    if loads.loads.is_empty() || sum <= 0.0 || sum_sq <= 0.0 {
        return Err(MetricsError::NoLoad);
    }
    Ok(sum * sum / (loads.loads.len() as f64 * sum_sq))
}
