//! Graph of apparatus and channels, the operating point, and the linearized
//! synchronization model built on it.

mod matrices;
mod modal;
mod reduction;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::RationalChannel;
use crate::envelope::{complex_power, to_phasor, ComplexAngle, ComplexPower};
use crate::phase_locking::{hybrid_power, normalize_epsilon};
use crate::{Error, Result};

pub use matrices::{frequency_shift_matrix, loaded_channel_matrix};
pub use modal::{modal_decomposition, SynchronizationModel, MAX_EIGENVECTOR_CONDITION};
pub use reduction::{reduce_branch_network, BranchSpec, HybridGain, HybridNetwork};

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    /// Transmits a voltage, receives a current; real-power locking by default.
    Voltage,
    /// Transmits a current, receives a voltage; reactive-power locking by default.
    Current,
}

impl NodeKind {
    pub fn default_epsilon(self) -> f64 {
        match self {
            NodeKind::Voltage => 0.0,
            NodeKind::Current => std::f64::consts::FRAC_PI_2,
        }
    }
}

/// A channel's transfer function, either factorized or taken from a reduced
/// branch network.
#[derive(Debug, Clone)]
pub enum ChannelModel {
    Rational(RationalChannel),
    Network(HybridGain),
}

impl ChannelModel {
    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        match self {
            ChannelModel::Rational(ch) => ch.eval(s),
            ChannelModel::Network(h) => h.eval(s),
        }
    }

    pub fn derivative(&self, s: Complex64) -> Result<Complex64> {
        match self {
            ChannelModel::Rational(ch) => ch.derivative(s),
            ChannelModel::Network(h) => h.derivative(s),
        }
    }

    pub fn as_rational(&self) -> Option<&RationalChannel> {
        match self {
            ChannelModel::Rational(ch) => Some(ch),
            ChannelModel::Network(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub inertia: f64,
    pub damping: f64,
    pub epsilon: f64,
    pub angle0: ComplexAngle,
    pub self_channel: Option<ChannelModel>,
}

impl Node {
    /// Node with the kind's default displacement angle, no damping and no
    /// self-channel.
    pub fn new(id: impl Into<String>, kind: NodeKind, inertia: f64, angle0: ComplexAngle) -> Self {
        Self {
            id: id.into(),
            kind,
            inertia,
            damping: 0.0,
            epsilon: kind.default_epsilon(),
            angle0,
            self_channel: None,
        }
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_self_channel(mut self, ch: ChannelModel) -> Self {
        self.self_channel = Some(ch);
        self
    }
}

/// Undirected channel between nodes `m` and `n` (indices into the node list).
#[derive(Debug, Clone)]
pub struct Edge {
    pub m: usize,
    pub n: usize,
    pub channel: ChannelModel,
}

/// One directed use of a channel: `transmitter` → `receiver`. Self-channels
/// have `receiver == transmitter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub receiver: usize,
    pub transmitter: usize,
    /// Index into [`NetworkGraph::edges`], or `None` for a self-channel.
    pub edge: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    links: Vec<Link>,
    network: Option<Arc<HybridNetwork>>,
}

impl NetworkGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        Self::build(nodes, edges, None)
    }

    /// Graph whose channels are all hybrid parameters of `network`, which
    /// must have been reduced over exactly these nodes (same order and kinds).
    pub fn from_branch_network(mut nodes: Vec<Node>, network: HybridNetwork) -> Result<Self> {
        if network.active_ids() != nodes.iter().map(|n| n.id.clone()).collect::<Vec<_>>() {
            return Err(Error::Config(
                "branch network active nodes do not match the node list".into(),
            ));
        }
        for (node, kind) in nodes.iter().zip(network.kinds()) {
            if node.kind != kind {
                return Err(Error::Config(format!("node `{}` kind mismatch", node.id)));
            }
        }
        let network = Arc::new(network);
        let n = nodes.len();
        let mut edges = Vec::new();
        for m in 0..n {
            for k in (m + 1)..n {
                edges.push(Edge {
                    m,
                    n: k,
                    channel: ChannelModel::Network(HybridGain::new(network.clone(), m, k)),
                });
            }
        }
        for (m, node) in nodes.iter_mut().enumerate() {
            if node.self_channel.is_some() {
                return Err(Error::Config(format!(
                    "node `{}`: self-channels come from the branch network",
                    node.id
                )));
            }
            node.self_channel = Some(ChannelModel::Network(HybridGain::new(network.clone(), m, m)));
        }
        Self::build(nodes, edges, Some(network))
    }

    fn build(mut nodes: Vec<Node>, edges: Vec<Edge>, network: Option<Arc<HybridNetwork>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for node in &mut nodes {
            if !seen.insert(node.id.clone()) {
                return Err(Error::Config(format!("duplicate node id `{}`", node.id)));
            }
            if !(node.inertia > 0.0) || !node.inertia.is_finite() {
                return Err(Error::Config(format!(
                    "node `{}`: inertia must be > 0, got {}",
                    node.id, node.inertia
                )));
            }
            if !(node.damping >= 0.0) || !node.damping.is_finite() {
                return Err(Error::Config(format!(
                    "node `{}`: damping must be >= 0, got {}",
                    node.id, node.damping
                )));
            }
            if !node.epsilon.is_finite() {
                return Err(Error::Config(format!("node `{}`: epsilon must be finite", node.id)));
            }
            node.epsilon = normalize_epsilon(node.epsilon);
        }
        let mut pairs = HashSet::new();
        for e in &edges {
            if e.m >= nodes.len() || e.n >= nodes.len() {
                return Err(Error::Config(format!(
                    "edge ({}, {}) references a missing node",
                    e.m, e.n
                )));
            }
            if e.m == e.n {
                return Err(Error::Config(format!(
                    "self-edge at node `{}`; use the node's self_channel",
                    nodes[e.m].id
                )));
            }
            if !pairs.insert((e.m.min(e.n), e.m.max(e.n))) {
                return Err(Error::Config(format!(
                    "duplicate channel between `{}` and `{}`",
                    nodes[e.m].id, nodes[e.n].id
                )));
            }
        }

        let mut links = Vec::with_capacity(2 * edges.len() + nodes.len());
        for (k, e) in edges.iter().enumerate() {
            links.push(Link {
                receiver: e.m,
                transmitter: e.n,
                edge: Some(k),
            });
            links.push(Link {
                receiver: e.n,
                transmitter: e.m,
                edge: Some(k),
            });
        }
        for (m, node) in nodes.iter().enumerate() {
            if node.self_channel.is_some() {
                links.push(Link {
                    receiver: m,
                    transmitter: m,
                    edge: None,
                });
            }
        }
        Ok(Self {
            nodes,
            edges,
            links,
            network,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn branch_network(&self) -> Option<&Arc<HybridNetwork>> {
        self.network.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn link_channel(&self, link: &Link) -> &ChannelModel {
        match link.edge {
            Some(k) => &self.edges[k].channel,
            None => self.nodes[link.receiver]
                .self_channel
                .as_ref()
                .expect("self link without self channel"),
        }
    }

    /// Copy of the graph with node equilibrium angles replaced.
    pub fn with_angles(&self, angles: &[ComplexAngle]) -> Result<Self> {
        if angles.len() != self.nodes.len() {
            return Err(Error::Argument("angle count does not match node count".into()));
        }
        let mut out = self.clone();
        for (node, a) in out.nodes.iter_mut().zip(angles) {
            node.angle0 = *a;
        }
        Ok(out)
    }

    pub fn id_map(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
    }
}

/// Equilibrium quantities of one directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEquilibrium {
    pub receiver: usize,
    pub transmitter: usize,
    /// `g_mn0 = G_mn(jω₀)`.
    pub g0: Complex64,
    /// `G′_mn(jω₀)`.
    pub dg0: Complex64,
    /// `S_mn0 = e^{ϑ_n} e^{ϑ_m*}`.
    pub s0: ComplexPower,
    /// `Ŝ_mn0 = g_mn0 S_mn0`.
    pub s_hat0: ComplexPower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub omega0: f64,
    pub node_ids: Vec<String>,
    pub angles: Vec<ComplexAngle>,
    /// `e^{ϑ_m0}`.
    pub phasors: Vec<Complex64>,
    pub epsilon: Vec<f64>,
    /// Same order as [`NetworkGraph::links`].
    pub links: Vec<LinkEquilibrium>,
    /// `Ŝ_m0 = Σ_n Ŝ_mn0`.
    pub received: Vec<ComplexPower>,
    /// `W_m0`, also the phase-locking setpoints `W*_m`.
    pub hybrid: Vec<f64>,
}

impl Equilibrium {
    pub fn setpoints(&self) -> &[f64] {
        &self.hybrid
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }
}

fn as_degenerate(err: Error, what: &str) -> Error {
    match err {
        Error::PoleProximity { .. } => Error::DegenerateChannel(format!("{what}: {err}")),
        other => other,
    }
}

/// Received power at every node, `Ŝ_m = Σ_n g_mn e^{ϑ_n} e^{ϑ_m*}`, for the
/// given per-link gains (order of [`NetworkGraph::links`]).
pub fn received_powers(
    graph: &NetworkGraph,
    angles: &[ComplexAngle],
    gains: &[Complex64],
) -> Result<Vec<ComplexPower>> {
    let mut out = vec![Complex64::new(0.0, 0.0); graph.len()];
    for (link, g) in graph.links().iter().zip(gains) {
        let s = complex_power(angles[link.transmitter], angles[link.receiver])?;
        out[link.receiver] += g * s.0;
    }
    Ok(out.into_iter().map(ComplexPower).collect())
}

/// Operating point with every node at the carrier, `ϖ₀ = jω₀`, and channel
/// gains at their quasi-static values. Setpoints are back-computed, so the
/// configured angles are an exact fixed point.
pub fn compute_equilibrium(graph: &NetworkGraph, omega0: f64) -> Result<Equilibrium> {
    if !(omega0 > 0.0) || !omega0.is_finite() {
        return Err(Error::Argument(format!("omega0 must be finite and > 0, got {omega0}")));
    }
    let s0 = J * omega0;
    let angles: Vec<ComplexAngle> = graph.nodes().iter().map(|n| n.angle0).collect();
    let phasors = angles.iter().map(|&a| to_phasor(a)).collect::<Result<Vec<_>>>()?;

    let mut links = Vec::with_capacity(graph.links().len());
    for link in graph.links() {
        let what = format!(
            "channel {} -> {}",
            graph.nodes()[link.transmitter].id,
            graph.nodes()[link.receiver].id
        );
        let ch = graph.link_channel(link);
        let g0 = ch.eval(s0).map_err(|e| as_degenerate(e, &what))?;
        let dg0 = ch.derivative(s0).map_err(|e| as_degenerate(e, &what))?;
        let s = complex_power(angles[link.transmitter], angles[link.receiver])?;
        links.push(LinkEquilibrium {
            receiver: link.receiver,
            transmitter: link.transmitter,
            g0,
            dg0,
            s0: s,
            s_hat0: ComplexPower(g0 * s.0),
        });
    }
    let gains: Vec<Complex64> = links.iter().map(|l| l.g0).collect();
    let received = received_powers(graph, &angles, &gains)?;
    let epsilon: Vec<f64> = graph.nodes().iter().map(|n| n.epsilon).collect();
    let hybrid = received
        .iter()
        .zip(&epsilon)
        .map(|(s, &e)| hybrid_power(*s, e))
        .collect();

    Ok(Equilibrium {
        omega0,
        node_ids: graph.nodes().iter().map(|n| n.id.clone()).collect(),
        angles,
        phasors,
        epsilon,
        links,
        received,
        hybrid,
    })
}

/// Assembles `K`, `Γ` and the modal decomposition for a graph at `omega0`.
pub fn build_model(graph: &NetworkGraph, omega0: f64) -> Result<(Equilibrium, SynchronizationModel)> {
    let eq = compute_equilibrium(graph, omega0)?;
    let k = loaded_channel_matrix(&eq);
    let gamma = frequency_shift_matrix(&eq);
    let inertia: Vec<f64> = graph.nodes().iter().map(|n| n.inertia).collect();
    let model = modal_decomposition(&k, &inertia, &gamma)?;
    Ok((eq, model))
}
