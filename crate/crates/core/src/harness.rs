//! Replicated scenarios and parameter sweeps.
//!
//! A replication draws one topology, builds the strategy's assignment and
//! plans exactly one local broadcast per node. Replications of a scenario
//! and cells of a sweep are independent and run on the rayon pool; results
//! are always folded in replication order, so the output does not depend on
//! scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::broadcast::{plan_broadcast, BroadcastError, BroadcastPlan, TxWindow};
use crate::cia::{CiaError, InterfaceAssignment, McTopology, Strategy, Tick, DEFAULT_SLOT_LEN};
use crate::metrics::{channel_loads, jain_index, overhead, MetricSample, MetricsError};
use crate::seed;
use crate::topology::{generate_topology, PerModel, Topology, TopologyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Cia(#[from] CiaError),
    #[error(transparent)]
    Broadcast(#[from] BroadcastError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("replication {rep} failed: {source}")]
    Replication {
        rep: usize,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("only {succeeded} of {attempted} replications succeeded; first failure: {first}")]
    TooFewSamples {
        succeeded: usize,
        attempted: usize,
        first: String,
    },
}

impl HarnessError {
    /// Whether the failure stems from an invalid configuration rather than
    /// from running the scenario.
    pub fn is_config(&self) -> bool {
        match self {
            HarnessError::Config(_) => true,
            HarnessError::Topology(TopologyError::Config(_) | TopologyError::InvalidModel(_)) => {
                true
            }
            HarnessError::Cia(CiaError::Config(_)) => true,
            HarnessError::Replication { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    pub density: f64,
    pub n_interfaces: usize,
    pub channels: usize,
    pub strategy: Strategy,
    pub p_cover_min: f64,
    pub p_p_max: f64,
    pub per_model: PerModel,
    pub slot_len: Tick,
    pub replications: usize,
    pub base_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_nodes: 200,
            density: 10.0,
            n_interfaces: 3,
            channels: 12,
            strategy: Strategy::StaticCommon,
            p_cover_min: 0.95,
            p_p_max: 0.5,
            per_model: PerModel::default(),
            slot_len: DEFAULT_SLOT_LEN,
            replications: 30,
            base_seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Checks ranges that hold for every strategy. Strategy-specific limits
    /// (mixed layouts need two interfaces) surface when the assignment is
    /// built.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.n_nodes < 2 {
            return fail(format!("n_nodes={} must be at least 2", self.n_nodes));
        }
        if !(self.density > 0.0 && self.density <= (self.n_nodes - 1) as f64) {
            return fail(format!(
                "density={} must lie in (0, {}]",
                self.density,
                self.n_nodes - 1
            ));
        }
        if self.channels == 0 || self.channels > u16::MAX as usize {
            return fail(format!("channels={} out of range", self.channels));
        }
        if self.n_interfaces == 0 || self.n_interfaces > self.channels {
            return fail(format!(
                "interfaces={} must lie in [1, channels={}]",
                self.n_interfaces, self.channels
            ));
        }
        if !(self.p_cover_min > 0.0 && self.p_cover_min < 1.0) {
            return fail(format!(
                "p_cover_min={} must lie in (0, 1)",
                self.p_cover_min
            ));
        }
        self.per_model
            .validate(self.p_p_max)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.slot_len == 0 {
            return fail("slot_len must be positive".into());
        }
        if self.replications < 2 {
            return fail(format!(
                "replications={} must be at least 2",
                self.replications
            ));
        }
        Ok(())
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        Self {
            strategy,
            ..self.clone()
        }
    }
}

/// Everything one replication produced.
#[derive(Debug, Clone)]
pub struct ReplicationRun {
    pub topology: Topology,
    pub assignment: InterfaceAssignment,
    pub plans: Vec<BroadcastPlan>,
}

impl ReplicationRun {
    /// Overhead, and Jain index over the channels the assignment can use.
    pub fn metrics(&self) -> Result<MetricSample, HarnessError> {
        let loads = channel_loads(&self.plans, self.assignment.channels())?;
        let usable = loads.restricted_to(&self.assignment.channel_set());
        Ok(MetricSample {
            overhead: overhead(&self.plans)?,
            jain: jain_index(&usable)?,
        })
    }

    /// Writes `sender,tx_index,interface,channel,slot_start,slot_stop` rows.
    /// Copies that are not bound to a timeslot leave the slot columns empty.
    pub fn write_plans_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "sender",
            "tx_index",
            "interface",
            "channel",
            "slot_start",
            "slot_stop",
        ])?;
        for plan in &self.plans {
            for (k, tx) in plan.transmissions.iter().enumerate() {
                let (start, stop) = match tx.window {
                    TxWindow::Always => (String::new(), String::new()),
                    TxWindow::Slot { start, stop } => (start.to_string(), stop.to_string()),
                };
                w.write_record([
                    plan.sender.to_string(),
                    k.to_string(),
                    tx.interface.to_string(),
                    tx.channel.to_string(),
                    start,
                    stop,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Seed of replication `rep`.
pub fn replication_seed(base_seed: u64, rep: usize) -> u64 {
    seed::mix(&[base_seed, rep as u64])
}

/// Builds topology, assignment and plans of replication `rep`.
///
/// The topology depends only on `(base_seed, rep)` and the placement
/// parameters, so strategies and interface counts compare on identical
/// node layouts.
pub fn simulate_replication(
    config: &ScenarioConfig,
    rep: usize,
) -> Result<ReplicationRun, HarnessError> {
    config.validate()?;
    let rep_seed = replication_seed(config.base_seed, rep);
    let topology = generate_topology(
        config.n_nodes,
        config.density,
        config.per_model,
        config.p_p_max,
        seed::mix(&[rep_seed, 1]),
    )?;
    let assignment = config.strategy.assign(
        &topology,
        config.n_interfaces,
        config.channels,
        config.slot_len,
        seed::mix(&[rep_seed, 2]),
    )?;
    let plans = {
        let mc = McTopology::new(&topology, &assignment)?;
        let mut rng = seed::stream(rep_seed, 3);
        (0..topology.len())
            .map(|v| plan_broadcast(v, &mc, config.strategy, config.p_cover_min, &mut rng))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(ReplicationRun {
        topology,
        assignment,
        plans,
    })
}

pub fn run_replication(config: &ScenarioConfig, rep: usize) -> Result<MetricSample, HarnessError> {
    simulate_replication(config, rep)?.metrics()
}

/// Sample mean with a Student-t 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub ci_half_width: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Option<Estimate> {
        let n = samples.len();
        if n < 2 {
            return None;
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .ok()?
            .inverse_cdf(0.975);
        Some(Estimate {
            mean,
            ci_half_width: t * (var / n as f64).sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub overhead: Estimate,
    pub jain: Estimate,
    pub samples: Vec<MetricSample>,
    /// Replications that failed, with their diagnostics.
    pub failures: Vec<(usize, String)>,
}

impl ScenarioResult {
    pub fn replications(&self) -> usize {
        self.samples.len()
    }
}

/// Aggregates per-replication samples; at least two must be present.
pub fn aggregate(
    samples: Vec<MetricSample>,
    failures: Vec<(usize, String)>,
) -> Result<ScenarioResult, HarnessError> {
    let too_few = || HarnessError::TooFewSamples {
        succeeded: samples.len(),
        attempted: samples.len() + failures.len(),
        first: failures
            .first()
            .map_or_else(|| "none".to_string(), |(_, m)| m.clone()),
    };
    let overheads: Vec<f64> = samples.iter().map(|s| s.overhead).collect();
    let jains: Vec<f64> = samples.iter().map(|s| s.jain).collect();
    let overhead = Estimate::from_samples(&overheads).ok_or_else(too_few)?;
    let jain = Estimate::from_samples(&jains).ok_or_else(too_few)?;
    Ok(ScenarioResult {
        overhead,
        jain,
        samples,
        failures,
    })
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult, HarnessError> {
    config.validate()?;
    let outcomes: Vec<Result<MetricSample, HarnessError>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, rep))
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(s) => samples.push(s),
            Err(e) => {
                failures.push((rep, e.to_string()));
                first_err.get_or_insert(e);
            }
        }
    }
    if samples.is_empty() {
        if let Some(e) = first_err {
            return Err(HarnessError::Replication {
                rep: failures[0].0,
                source: Box::new(e),
            });
        }
    }
    aggregate(samples, failures)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    Nodes,
    Density,
    Interfaces,
    PCoverMin,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] = [
        SweepParam::Nodes,
        SweepParam::Density,
        SweepParam::Interfaces,
        SweepParam::PCoverMin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Nodes => "n_nodes",
            SweepParam::Density => "density",
            SweepParam::Interfaces => "interfaces",
            SweepParam::PCoverMin => "p_cover_min",
        }
    }

    fn is_integral(self) -> bool {
        matches!(self, SweepParam::Nodes | SweepParam::Interfaces)
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, HarnessError> {
        if self.is_integral() && (value.fract() != 0.0 || value < 0.0) {
            return Err(HarnessError::Config(format!(
                "{} takes whole numbers, got {value}",
                self.name()
            )));
        }
        let mut cfg = base.clone();
        match self {
            SweepParam::Nodes => cfg.n_nodes = value as usize,
            SweepParam::Density => cfg.density = value,
            SweepParam::Interfaces => cfg.n_interfaces = value as usize,
            SweepParam::PCoverMin => cfg.p_cover_min = value,
        }
        Ok(cfg)
    }

    pub fn format_value(self, value: f64) -> String {
        if self.is_integral() {
            format!("{}", value as u64)
        } else {
            value.to_string()
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                HarnessError::Config(format!(
                    "unknown sweep parameter {s:?}; expected one of n_nodes, density, interfaces, p_cover_min"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub strategies: Vec<Strategy>,
}

impl SweepSpec {
    pub fn validate(&self, base: &ScenarioConfig) -> Result<(), HarnessError> {
        if self.values.is_empty() || self.strategies.is_empty() {
            return Err(HarnessError::Config(format!(
                "sweep over {} needs at least one value and one strategy",
                self.param
            )));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config(format!(
                "sweep values for {} must be strictly increasing",
                self.param
            )));
        }
        for &v in &self.values {
            self.param.apply(base, v)?.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub value: f64,
    pub strategy: Strategy,
    /// `None` when the cell failed; the diagnostic is kept alongside.
    pub result: Result<ResultStats, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultStats {
    pub overhead: Estimate,
    pub jain: Estimate,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub param: SweepParam,
    pub rows: Vec<ResultRow>,
}

pub const RESULT_HEADER: [&str; 7] = [
    "param",
    "strategy",
    "overhead_mean",
    "overhead_ci",
    "jain_mean",
    "jain_ci",
    "reps",
];

impl ResultTable {
    pub fn row(&self, value: f64, strategy: Strategy) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.value == value && r.strategy == strategy)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&ResultRow, &str)> {
        self.rows
            .iter()
            .filter_map(|r| r.result.as_ref().err().map(|e| (r, e.as_str())))
    }

    /// CSV with [`RESULT_HEADER`]; failed cells keep their row with empty
    /// metric fields and `reps = 0`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RESULT_HEADER)?;
        for r in &self.rows {
            let mut rec = vec![self.param.format_value(r.value), r.strategy.to_string()];
            match &r.result {
                Ok(s) => rec.extend([
                    s.overhead.mean.to_string(),
                    s.overhead.ci_half_width.to_string(),
                    s.jain.mean.to_string(),
                    s.jain.ci_half_width.to_string(),
                    s.replications.to_string(),
                ]),
                Err(_) => rec.extend(["", "", "", "", "0"].map(String::from)),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every `value × strategy` cell, in sweep order. A failing cell is
/// recorded and the sweep goes on.
pub fn run_sweep(spec: &SweepSpec, base: &ScenarioConfig) -> Result<ResultTable, HarnessError> {
    spec.validate(base)?;
    let cells: Vec<(f64, Strategy)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.strategies.iter().map(move |&s| (v, s)))
        .collect();
    let rows = cells
        .into_par_iter()
        .map(|(value, strategy)| {
            let result = spec
                .param
                .apply(base, value)
                .and_then(|cfg| run_scenario(&cfg.with_strategy(strategy)))
                .map(|r| ResultStats {
                    overhead: r.overhead,
                    jain: r.jain,
                    replications: r.replications(),
                })
                .map_err(|e| e.to_string());
            ResultRow {
                value,
                strategy,
                result,
            }
        })
        .collect();
    Ok(ResultTable {
        param: spec.param,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_nodes: 40,
            density: 6.0,
            replications: 4,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn defaults_follow_reference_table() {
        let c = ScenarioConfig::default();
        assert_eq!(
            (
                c.n_nodes,
                c.density,
                c.n_interfaces,
                c.channels,
                c.p_cover_min,
                c.p_p_max
            ),
            (200, 10.0, 3, 12, 0.95, 0.5)
        );
        c.validate().unwrap();
    }

    #[test]
    fn two_node_perfect_link() {
        // n=2 and density 1: both nodes always linked, and the square is small
        // enough that the link is perfect.
        let cfg = ScenarioConfig {
            n_nodes: 2,
            density: 1.0,
            n_interfaces: 1,
            per_model: PerModel {
                d_full: 200.0,
                d_cutoff: 400.0,
                per_floor: 0.0,
            },
            replications: 2,
            ..ScenarioConfig::default()
        };
        let run = simulate_replication(&cfg, 0).unwrap();
        assert_eq!(run.topology.links().len(), 1);
        assert_eq!(run.topology.links()[0].p_deliv, 1.0);
        let s = run.metrics().unwrap();
        assert_eq!(s.overhead, 1.0);
        // only channel 0 is usable with one common interface
        assert_eq!(s.jain, 1.0);
        let raw = jain_index(&channel_loads(&run.plans, 12).unwrap()).unwrap();
        assert!((raw - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn replications_are_deterministic() {
        for s in Strategy::ALL {
            let cfg = small().with_strategy(s);
            assert_eq!(
                run_replication(&cfg, 3).unwrap(),
                run_replication(&cfg, 3).unwrap()
            );
        }
    }

    #[test]
    fn t_interval_examples() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.mean, 2.0);
        // t(0.975, 2) = 4.302653..., s = 1
        assert!((e.ci_half_width - 4.302_652_729_749_464 / 3f64.sqrt()).abs() < 1e-9);
        assert!((e.ci_half_width - 2.484).abs() < 1e-3);
        let flat = Estimate::from_samples(&[0.5; 6]).unwrap();
        assert_eq!(flat.ci_half_width, 0.0);
        assert!(Estimate::from_samples(&[1.0]).is_none());
    }

    #[test]
    fn scenario_aggregates_in_rep_order() {
        let cfg = small().with_strategy(Strategy::StaticPseudoRandom);
        let r = run_scenario(&cfg).unwrap();
        assert_eq!(r.replications(), 4);
        let mut shuffled = r.samples.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        let again = aggregate(shuffled, Vec::new()).unwrap();
        assert!((again.overhead.mean - r.overhead.mean).abs() < 1e-12);
        assert!((again.overhead.ci_half_width - r.overhead.ci_half_width).abs() < 1e-12);
        assert!((again.jain.mean - r.jain.mean).abs() < 1e-12);
    }

    #[test]
    fn scenario_fails_when_every_replication_fails() {
        let cfg = ScenarioConfig {
            n_interfaces: 1,
            ..small().with_strategy(Strategy::MixedCommonAdaptive)
        };
        let err = run_scenario(&cfg).unwrap_err();
        assert!(err.is_config(), "{err}");
        assert!(matches!(err, HarnessError::Replication { .. }));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            ScenarioConfig {
                replications: 1,
                ..small()
            },
            ScenarioConfig {
                p_cover_min: 1.2,
                ..small()
            },
            ScenarioConfig {
                density: 40.0,
                ..small()
            },
            ScenarioConfig {
                n_interfaces: 13,
                ..small()
            },
            ScenarioConfig {
                slot_len: 0,
                ..small()
            },
        ];
        for cfg in bad {
            assert!(
                matches!(cfg.validate(), Err(HarnessError::Config(_))),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn sweep_shapes_and_failed_cells() {
        let spec = SweepSpec {
            param: SweepParam::Interfaces,
            values: vec![1.0, 2.0],
            strategies: vec![Strategy::StaticCommon, Strategy::MixedCommonAdaptive],
        };
        let table = run_sweep(&spec, &small()).unwrap();
        assert_eq!(table.rows.len(), 4);
        let order: Vec<(f64, Strategy)> =
            table.rows.iter().map(|r| (r.value, r.strategy)).collect();
        assert_eq!(
            order,
            vec![
                (1.0, Strategy::StaticCommon),
                (1.0, Strategy::MixedCommonAdaptive),
                (2.0, Strategy::StaticCommon),
                (2.0, Strategy::MixedCommonAdaptive),
            ]
        );
        assert_eq!(table.failures().count(), 1);
        let (row, _) = table.failures().next().unwrap();
        assert_eq!(
            (row.value, row.strategy),
            (1.0, Strategy::MixedCommonAdaptive)
        );

        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "param,strategy,overhead_mean,overhead_ci,jain_mean,jain_ci,reps"
        );
        assert_eq!(lines[2], "1,MixedCommonAdaptive,,,,,0");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn single_cell_sweep() {
        let spec = SweepSpec {
            param: SweepParam::PCoverMin,
            values: vec![0.5],
            strategies: vec![Strategy::StaticCommon],
        };
        let table = run_sweep(&spec, &small()).unwrap();
        assert_eq!(table.rows.len(), 1);
        let stats = table.rows[0].result.as_ref().unwrap();
        assert_eq!(stats.overhead.mean, 1.0);
    }

    #[test]
    fn sweep_spec_validation() {
        let base = small();
        let spec = |values: Vec<f64>| SweepSpec {
            param: SweepParam::Density,
            values,
            strategies: vec![Strategy::StaticCommon],
        };
        assert!(spec(vec![4.0, 4.0]).validate(&base).is_err());
        assert!(spec(vec![6.0, 4.0]).validate(&base).is_err());
        assert!(spec(vec![4.0, 100.0]).validate(&base).is_err());
        assert!(spec(vec![]).validate(&base).is_err());
        assert!(spec(vec![4.0, 6.0]).validate(&base).is_ok());
        assert!(SweepParam::Nodes.apply(&base, 10.5).is_err());
    }
}
