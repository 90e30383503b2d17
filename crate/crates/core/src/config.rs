//! JSON system description.
//!
//! Complex numbers are `[re, im]` pairs, angles are radians and amplitudes
//! linear. Unknown keys are rejected.

use std::collections::HashSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::RationalChannel;
use crate::envelope::ComplexAngle;
use crate::network::{BranchSpec, ChannelModel, Edge, HybridNetwork, Node, NodeKind, NetworkGraph};
use crate::simulator::{GainMode, Perturbation, RunOptions};
use crate::stability::FrequencyGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub system: SystemSection,
    pub nodes: Vec<NodeConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkConfig>,
    #[serde(default)]
    pub perturbations: Vec<PerturbationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub omega0: f64,
    pub dt: f64,
    pub dt_out: f64,
    pub duration: f64,
    pub zeta_grid: FrequencyGrid,
    pub angle_unit: String,
    pub amplitude_unit: String,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            omega0: 2.0 * PI * 50.0,
            dt: 1e-4,
            dt_out: 1e-3,
            duration: 10.0,
            zeta_grid: FrequencyGrid::default(),
            angle_unit: "rad".into(),
            amplitude_unit: "linear".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub kind: NodeKind,
    pub inertia: f64,
    #[serde(default)]
    pub damping: f64,
    /// Filled from the kind when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub amplitude: f64,
    pub angle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_channel: Option<PoleResidue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleResidue {
    pub poles: Vec<[f64; 2]>,
    pub residues: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub m: String,
    pub n: String,
    pub poles: Vec<[f64; 2]>,
    pub residues: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub branches: Vec<BranchSpec>,
    #[serde(default)]
    pub passive_nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub node: String,
    #[serde(default)]
    pub delta_theta: f64,
    #[serde(default)]
    pub delta_omega: f64,
}

fn json_error(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    let what = match e.classify() {
        Category::Syntax | Category::Eof => "syntax error",
        Category::Data => "invalid config",
        Category::Io => "read error",
    };
    Error::Config(format!("{what} at line {}, column {}: {e}", e.line(), e.column()))
}

fn positive(value: f64, field: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{field} must be finite and > 0, got {value}")))
    }
}

fn complex(pairs: &[[f64; 2]]) -> Vec<Complex64> {
    pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect()
}

fn rational(pr: &PoleResidue, field: &str) -> Result<RationalChannel> {
    RationalChannel::from_poles_residues(&complex(&pr.poles), &complex(&pr.residues))
        .map_err(|e| Error::Config(format!("{field}: {e}")))
}

/// Parses and validates a config document, filling defaults.
pub fn parse_config(document: &str) -> Result<SystemConfig> {
    let mut cfg: SystemConfig = serde_json::from_str(document).map_err(json_error)?;
    cfg.validate()?;
    for node in &mut cfg.nodes {
        node.epsilon.get_or_insert(node.kind.default_epsilon());
    }
    Ok(cfg)
}

/// SHA-256 of the document re-serialized compactly with sorted keys, hex.
pub fn config_hash(document: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(document).map_err(json_error)?;
    let canonical = serde_json::to_string(&value).map_err(json_error)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let sys = &self.system;
        positive(sys.omega0, "system.omega0")?;
        positive(sys.dt, "system.dt")?;
        positive(sys.dt_out, "system.dt_out")?;
        positive(sys.duration, "system.duration")?;
        sys.zeta_grid
            .validate()
            .map_err(|e| Error::Config(format!("system.zeta_grid: {e}")))?;
        if sys.angle_unit != "rad" {
            return Err(Error::Config(format!(
                "system.angle_unit must be \"rad\", got {:?}",
                sys.angle_unit
            )));
        }
        if sys.amplitude_unit != "linear" {
            return Err(Error::Config(format!(
                "system.amplitude_unit must be \"linear\", got {:?}",
                sys.amplitude_unit
            )));
        }

        if self.nodes.is_empty() {
            return Err(Error::Config("nodes: at least one node is required".into()));
        }
        let mut ids = HashSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if !ids.insert(node.id.as_str()) {
                return Err(Error::Config(format!("duplicate node id `{}`", node.id)));
            }
            positive(node.inertia, &format!("nodes[{i}].inertia"))?;
            if !(node.damping >= 0.0) || !node.damping.is_finite() {
                return Err(Error::Config(format!(
                    "nodes[{i}].damping must be finite and >= 0, got {}",
                    node.damping
                )));
            }
            if node.epsilon.is_some_and(|e| !e.is_finite()) {
                return Err(Error::Config(format!("nodes[{i}].epsilon must be finite")));
            }
            positive(node.amplitude, &format!("nodes[{i}].amplitude"))?;
            if !node.angle.is_finite() {
                return Err(Error::Config(format!("nodes[{i}].angle must be finite")));
            }
            if let Some(sc) = &node.self_channel {
                if self.network.is_some() {
                    return Err(Error::Config(format!(
                        "nodes[{i}].self_channel: self-channels come from the branch network"
                    )));
                }
                rational(sc, &format!("nodes[{i}].self_channel"))?;
            }
        }

        if !self.channels.is_empty() && self.network.is_some() {
            return Err(Error::Config(
                "give either channels (poles/residues) or network (branches), not both".into(),
            ));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            for end in [&ch.m, &ch.n] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::Config(format!(
                        "channels[{i}] references undeclared node `{end}`"
                    )));
                }
            }
            rational(
                &PoleResidue {
                    poles: ch.poles.clone(),
                    residues: ch.residues.clone(),
                },
                &format!("channels[{i}]"),
            )?;
        }
        if let Some(net) = &self.network {
            for p in &net.passive_nodes {
                if ids.contains(p.as_str()) {
                    return Err(Error::Config(format!(
                        "network.passive_nodes: `{p}` is also an apparatus node"
                    )));
                }
            }
        }
        for (i, p) in self.perturbations.iter().enumerate() {
            if !ids.contains(p.node.as_str()) {
                return Err(Error::Config(format!(
                    "perturbations[{i}] references undeclared node `{}`",
                    p.node
                )));
            }
            if !p.delta_theta.is_finite() || !p.delta_omega.is_finite() {
                return Err(Error::Config(format!("perturbations[{i}] must be finite")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.system.zeta_grid
    }

    pub fn run_options(&self, gain_mode: GainMode) -> RunOptions {
        RunOptions {
            duration: self.system.duration,
            dt: self.system.dt,
            dt_out: self.system.dt_out,
            gain_mode,
        }
    }

    /// Builds the graph; node order follows the config.
    pub fn to_graph(&self) -> Result<NetworkGraph> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, nc) in self.nodes.iter().enumerate() {
            let angle = ComplexAngle::from_amplitude(nc.amplitude, nc.angle)
                .map_err(|e| Error::Config(format!("nodes[{i}]: {e}")))?;
            let mut node = Node::new(nc.id.clone(), nc.kind, nc.inertia, angle)
                .with_damping(nc.damping)
                .with_epsilon(nc.epsilon.unwrap_or(nc.kind.default_epsilon()));
            if let Some(sc) = &nc.self_channel {
                node = node.with_self_channel(ChannelModel::Rational(rational(
                    sc,
                    &format!("nodes[{i}].self_channel"),
                )?));
            }
            nodes.push(node);
        }

        if let Some(net) = &self.network {
            let active: Vec<(String, NodeKind)> = self.nodes.iter().map(|n| (n.id.clone(), n.kind)).collect();
            let reduced = HybridNetwork::new(&net.branches, &active, &net.passive_nodes)?;
            return NetworkGraph::from_branch_network(nodes, reduced);
        }

        let index = |id: &str| self.nodes.iter().position(|n| n.id == id).expect("validated");
        let mut edges = Vec::with_capacity(self.channels.len());
        for (i, ch) in self.channels.iter().enumerate() {
            edges.push(Edge {
                m: index(&ch.m),
                n: index(&ch.n),
                channel: ChannelModel::Rational(rational(
                    &PoleResidue {
                        poles: ch.poles.clone(),
                        residues: ch.residues.clone(),
                    },
                    &format!("channels[{i}]"),
                )?),
            });
        }
        NetworkGraph::new(nodes, edges)
    }

    pub fn perturbation_list(&self) -> Vec<Perturbation> {
        self.perturbations
            .iter()
            .map(|p| Perturbation {
                node: self.nodes.iter().position(|n| n.id == p.node).expect("validated"),
                delta_theta: p.delta_theta,
                delta_omega: p.delta_omega,
            })
            .collect()
    }
}
