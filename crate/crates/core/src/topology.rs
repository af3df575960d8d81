//! Random node placement and the radio-link graph.
//!
//! Nodes are dropped uniformly in a square whose side is chosen so that the
//! expected number of retained neighbors matches a target density. A link is
//! retained when its packet error rate does not exceed `p_p_max`; it carries
//! the delivery probability `1 - PER`.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use rand::Rng;
use thiserror::Error;

use crate::seed;

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("invalid PER model: {0}")]
    InvalidModel(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub position: Position,
}

/// An undirected radio link; `a < b` always.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub distance: f64,
    pub p_deliv: f64,
}

/// Piecewise-linear packet error rate as a function of distance.
///
/// PER stays at `per_floor` up to `d_full`, then ramps linearly to 1 at
/// `d_cutoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerModel {
    pub d_full: f64,
    pub d_cutoff: f64,
    pub per_floor: f64,
}

impl Default for PerModel {
    fn default() -> Self {
        Self {
            d_full: 50.0,
            d_cutoff: 100.0,
            per_floor: 0.0,
        }
    }
}

impl PerModel {
    pub fn validate(&self, p_p_max: f64) -> Result<(), TopologyError> {
        if !(self.d_full > 0.0 && self.d_full < self.d_cutoff && self.d_cutoff.is_finite()) {
            return Err(TopologyError::InvalidModel(format!(
                "need 0 < d_full < d_cutoff, got d_full={} d_cutoff={}",
                self.d_full, self.d_cutoff
            )));
        }
        if !(0.0..1.0).contains(&p_p_max) || !(self.per_floor >= 0.0 && self.per_floor < p_p_max) {
            return Err(TopologyError::InvalidModel(format!(
                "need 0 <= per_floor < p_p_max < 1, got per_floor={} p_p_max={}",
                self.per_floor, p_p_max
            )));
        }
        Ok(())
    }

    /// Largest distance whose PER is still `<= p_p_max`.
    ///
    /// Found by bisection, so it holds for any non-decreasing curve.
    pub fn retention_radius(&self, p_p_max: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.d_cutoff);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if per_from_distance(mid, self).is_ok_and(|p| p <= p_p_max) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        lo
    }
}

pub fn per_from_distance(d: f64, model: &PerModel) -> Result<f64, TopologyError> {
    if d.is_nan() || d < 0.0 {
        return Err(TopologyError::NegativeDistance(d));
    }
    let per = if d <= model.d_full {
        model.per_floor
    } else if d >= model.d_cutoff {
        1.0
    } else {
        let frac = (d - model.d_full) / (model.d_cutoff - model.d_full);
        model.per_floor + (1.0 - model.per_floor) * frac
    };
    Ok(per.clamp(model.per_floor, 1.0))
}

/// Probability that two points drawn uniformly in the unit square lie
/// within distance `s` of each other.
///
/// Evaluated by quadrature over the triangular density of the coordinate
/// differences: `F(s) = 4 ∫∫_{u²+v²≤s²} (1-u)(1-v) du dv` on `[0,1]²`.
pub fn unit_square_pair_cdf(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= SQRT_2 {
        return 1.0;
    }
    // inner integral over v in [0, w]: w - w²/2
    let inner = |w: f64| w - 0.5 * w * w;
    // Below u = a the disk reaches past v = 1, so the inner integral is 1/2.
    let a = if s > 1.0 { (s * s - 1.0).sqrt() } else { 0.0 };
    let flat = 2.0 * (a - 0.5 * a * a);

    // Remaining strip u in [a, min(s,1)], substituted u = s·sin(θ).
    let theta0 = (a / s).asin();
    let theta1 = (s.min(1.0) / s).asin();
    let f = |theta: f64| {
        let (sin, cos) = theta.sin_cos();
        4.0 * (1.0 - s * sin) * inner(s * cos) * s * cos
    };
    flat + simpson(f, theta0, theta1, 1024)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Side of the deployment square giving `target_density` expected retained
/// neighbors per node, border effects included.
pub fn side_length_for_density(
    n_nodes: usize,
    target_density: f64,
    per_model: &PerModel,
    p_p_max: f64,
) -> Result<f64, TopologyError> {
    if n_nodes < 2 {
        return Err(TopologyError::Config(format!(
            "need at least 2 nodes, got {n_nodes}"
        )));
    }
    let max_density = (n_nodes - 1) as f64;
    if !(target_density > 0.0 && target_density <= max_density) {
        return Err(TopologyError::Config(format!(
            "density {target_density} unreachable with {n_nodes} nodes (must lie in (0, {max_density}])"
        )));
    }
    per_model.validate(p_p_max)?;
    let radius = per_model.retention_radius(p_p_max);
    let wanted = target_density / max_density;
    // F is increasing in s = radius / side.
    let (mut lo, mut hi) = (0.0, SQRT_2);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if unit_square_pair_cdf(mid) < wanted {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(radius / hi)
}

/// Expected per-node retained-link area ignoring borders, `π r²`.
pub fn coverage_mass(per_model: &PerModel, p_p_max: f64) -> f64 {
    let r = per_model.retention_radius(p_p_max);
    PI * r * r
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    adjacency: Vec<Vec<(NodeId, f64)>>,
    side_length: f64,
    p_p_max: f64,
    per_model: PerModel,
}

impl Topology {
    /// Builds the link set for fixed positions. Links are kept when their
    /// PER is at most `p_p_max`.
    pub fn from_positions(
        positions: &[Position],
        side_length: f64,
        per_model: PerModel,
        p_p_max: f64,
    ) -> Result<Self, TopologyError> {
        per_model.validate(p_p_max)?;
        if let Some((i, p)) = positions.iter().enumerate().find(|(_, p)| {
            !(0.0..=side_length).contains(&p.x) || !(0.0..=side_length).contains(&p.y)
        }) {
            return Err(TopologyError::Config(format!(
                "node {i} at ({}, {}) lies outside [0, {side_length}]²",
                p.x, p.y
            )));
        }
        let nodes: Vec<Node> = positions
            .iter()
            .enumerate()
            .map(|(id, &position)| Node { id, position })
            .collect();

        let mut links = Vec::new();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for a in 0..nodes.len() {
            for b in (a + 1)..nodes.len() {
                let distance = nodes[a].position.distance_to(&nodes[b].position);
                let per = per_from_distance(distance, &per_model)?;
                if per <= p_p_max {
                    let p_deliv = 1.0 - per;
                    links.push(Link {
                        a,
                        b,
                        distance,
                        p_deliv,
                    });
                    adjacency[a].push((b, p_deliv));
                    adjacency[b].push((a, p_deliv));
                }
            }
        }
        for row in &mut adjacency {
            row.sort_by_key(|&(id, _)| id);
        }

        Ok(Self {
            nodes,
            links,
            adjacency,
            side_length,
            p_p_max,
            per_model,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn p_p_max(&self) -> f64 {
        self.p_p_max
    }

    pub fn per_model(&self) -> &PerModel {
        &self.per_model
    }

    fn check(&self, v: NodeId) -> Result<(), TopologyError> {
        if v < self.nodes.len() {
            Ok(())
        } else {
            Err(TopologyError::UnknownNode(v))
        }
    }

    /// Radio neighbors of `v` with their delivery probabilities, sorted by id.
    pub fn neighbors_with_deliv(&self, v: NodeId) -> Result<&[(NodeId, f64)], TopologyError> {
        self.check(v)?;
        Ok(&self.adjacency[v])
    }

    pub fn p_deliv(&self, u: NodeId, v: NodeId) -> Option<f64> {
        let row = self.adjacency.get(u)?;
        row.binary_search_by_key(&v, |&(id, _)| id)
            .ok()
            .map(|i| row[i].1)
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency.get(v).map_or(0, Vec::len)
    }

    pub fn mean_degree(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        2.0 * self.links.len() as f64 / self.nodes.len() as f64
    }

    /// Writes `node_id,x,y` rows.
    pub fn write_nodes_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node_id", "x", "y"])?;
        for n in &self.nodes {
            w.write_record([
                n.id.to_string(),
                n.position.x.to_string(),
                n.position.y.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `u,v,distance,p_deliv` rows.
    pub fn write_links_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u", "v", "distance", "p_deliv"])?;
        for l in &self.links {
            w.write_record([
                l.a.to_string(),
                l.b.to_string(),
                l.distance.to_string(),
                l.p_deliv.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn generate_topology(
    n_nodes: usize,
    target_density: f64,
    per_model: PerModel,
    p_p_max: f64,
    seed: u64,
) -> Result<Topology, TopologyError> {
    let side = side_length_for_density(n_nodes, target_density, &per_model, p_p_max)?;
    let mut rng = seed::stream(seed, 0x706c_6163_6500);
    let positions: Vec<Position> = (0..n_nodes)
        .map(|_| Position::new(rng.gen_range(0.0..=side), rng.gen_range(0.0..=side)))
        .collect();
    Topology::from_positions(&positions, side, per_model, p_p_max)
}

pub fn radio_neighbors(topo: &Topology, v: NodeId) -> Result<Vec<NodeId>, TopologyError> {
    Ok(topo
        .neighbors_with_deliv(v)?
        .iter()
        .map(|&(u, _)| u)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> PerModel {
        PerModel::default()
    }

    #[test]
    fn per_endpoints_and_midpoint() {
        let m = model();
        assert_eq!(per_from_distance(0.0, &m).unwrap(), 0.0);
        assert_eq!(per_from_distance(100.0, &m).unwrap(), 1.0);
        assert_eq!(per_from_distance(250.0, &m).unwrap(), 1.0);
        // (75 - 50) / (100 - 50)
        let oracle = 0.0 + (1.0 - 0.0) * 25.0 / 50.0;
        assert_eq!(per_from_distance(75.0, &m).unwrap(), oracle);
        assert_eq!(oracle, 0.5);
    }

    #[test]
    fn per_rejects_negative_distance() {
        assert_eq!(
            per_from_distance(-1.0, &model()),
            Err(TopologyError::NegativeDistance(-1.0))
        );
    }

    #[test]
    fn per_floor_is_respected() {
        let m = PerModel {
            per_floor: 0.1,
            ..model()
        };
        assert_eq!(per_from_distance(10.0, &m).unwrap(), 0.1);
        assert!((per_from_distance(75.0, &m).unwrap() - 0.55).abs() < 1e-15);
    }

    #[test]
    fn retention_radius_of_default_ramp() {
        let r = model().retention_radius(0.5);
        assert!((r - 75.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn pair_cdf_matches_closed_form_below_one() {
        // Closed form for s <= 1: π s² - 8/3 s³ + s⁴ / 2.
        for i in 1..=20 {
            let s = i as f64 / 20.0;
            let exact = PI * s * s - 8.0 / 3.0 * s.powi(3) + 0.5 * s.powi(4);
            let got = unit_square_pair_cdf(s);
            assert!((got - exact).abs() < 1e-9, "s={s} got={got} exact={exact}");
        }
    }

    #[test]
    fn pair_cdf_above_one_against_monte_carlo() {
        let mut rng = seed::stream(5, 5);
        let trials = 400_000;
        for &s in &[1.1, 1.25, 1.4] {
            let hits = (0..trials)
                .filter(|_| {
                    let dx: f64 = rng.gen::<f64>() - rng.gen::<f64>();
                    let dy: f64 = rng.gen::<f64>() - rng.gen::<f64>();
                    dx.hypot(dy) <= s
                })
                .count();
            let est = hits as f64 / trials as f64;
            let se = (est * (1.0 - est) / trials as f64).sqrt().max(1e-6);
            let got = unit_square_pair_cdf(s);
            assert!((got - est).abs() < 4.0 * se, "s={s} got={got} mc={est}");
        }
        assert_eq!(unit_square_pair_cdf(SQRT_2), 1.0);
    }

    #[test]
    fn two_close_nodes_form_one_link() {
        let m = PerModel {
            per_floor: 0.05,
            ..model()
        };
        let topo = Topology::from_positions(
            &[Position::new(10.0, 10.0), Position::new(30.0, 10.0)],
            100.0,
            m,
            0.5,
        )
        .unwrap();
        assert_eq!(topo.links().len(), 1);
        assert_eq!(topo.links()[0].p_deliv, 1.0 - 0.05);
        assert_eq!(radio_neighbors(&topo, 0).unwrap(), vec![1]);
        assert_eq!(radio_neighbors(&topo, 1).unwrap(), vec![0]);
    }

    #[test]
    fn isolated_node_has_no_neighbors() {
        let topo = Topology::from_positions(
            &[Position::new(0.0, 0.0), Position::new(500.0, 500.0)],
            500.0,
            model(),
            0.5,
        )
        .unwrap();
        assert!(radio_neighbors(&topo, 0).unwrap().is_empty());
        assert_eq!(
            radio_neighbors(&topo, 2),
            Err(TopologyError::UnknownNode(2))
        );
    }

    #[test]
    fn unreachable_density_is_rejected() {
        assert!(matches!(
            generate_topology(10, 10.0, model(), 0.5, 1),
            Err(TopologyError::Config(_))
        ));
        assert!(matches!(
            generate_topology(1, 0.5, model(), 0.5, 1),
            Err(TopologyError::Config(_))
        ));
        assert!(generate_topology(10, 9.0, model(), 0.5, 1).is_ok());
    }

    #[test]
    fn full_density_links_everything() {
        let topo = generate_topology(12, 11.0, model(), 0.5, 3).unwrap();
        assert_eq!(topo.links().len(), 12 * 11 / 2);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_topology(200, 10.0, model(), 0.5, 77).unwrap();
        let b = generate_topology(200, 10.0, model(), 0.5, 77).unwrap();
        assert_eq!(a, b);
        let c = generate_topology(200, 10.0, model(), 0.5, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_seed_degree_is_close_to_target() {
        let topo = generate_topology(200, 10.0, model(), 0.5, 2024).unwrap();
        let d = topo.mean_degree();
        assert!((d - 10.0).abs() <= 1.5, "mean degree {d}");
    }

    #[test]
    fn grand_mean_degree_within_ten_percent() {
        let seeds = 40;
        let total: f64 = (0..seeds)
            .map(|s| {
                generate_topology(200, 10.0, model(), 0.5, s)
                    .unwrap()
                    .mean_degree()
            })
            .sum();
        let grand = total / seeds as f64;
        assert!((grand - 10.0).abs() <= 1.0, "grand mean degree {grand}");
    }

    #[test]
    fn csv_dump_shapes() {
        let topo = generate_topology(20, 4.0, model(), 0.5, 9).unwrap();
        let mut nodes = Vec::new();
        topo.write_nodes_csv(&mut nodes).unwrap();
        let nodes = String::from_utf8(nodes).unwrap();
        assert!(nodes.starts_with("node_id,x,y\n"));
        assert_eq!(nodes.lines().count(), 21);
        let mut links = Vec::new();
        topo.write_links_csv(&mut links).unwrap();
        let links = String::from_utf8(links).unwrap();
        assert!(links.starts_with("u,v,distance,p_deliv\n"));
        assert_eq!(links.lines().count(), topo.links().len() + 1);
    }
}
