//! Hybrid parameters of an R-L branch network.
//!
//! The nodal admittance `Y(s)` is assembled from branch admittances
//! `1/(R + Ls)`, passive nodes are Kron-eliminated, and the reduced matrix is
//! partially inverted on the current nodes. The result `G(s)` maps what each
//! active node transmits (voltage at voltage nodes, injected current at
//! current nodes) to what each node receives (current drawn from the network
//! at voltage nodes, voltage at current nodes). `G` is symmetric.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::NodeKind;
use crate::{Error, Result};

type CMat = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub from: String,
    pub to: String,
    /// Series resistance, per-unit, ≥ 0.
    pub r: f64,
    /// Series inductance, per-unit·s, > 0.
    pub l: f64,
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    from: usize,
    to: usize,
    r: f64,
    l: f64,
}

#[derive(Debug, Clone)]
pub struct HybridNetwork {
    active: Vec<(String, NodeKind)>,
    passive: Vec<String>,
    branches: Vec<Branch>,
}

/// Builds the hybrid-parameter evaluator of a branch network whose active
/// nodes are `active` (in that order) and whose remaining nodes are
/// `passive`.
pub fn reduce_branch_network(
    branches: &[BranchSpec],
    active: &[(String, NodeKind)],
    passive: &[String],
) -> Result<HybridNetwork> {
    HybridNetwork::new(branches, active, passive)
}

impl HybridNetwork {
    pub fn new(specs: &[BranchSpec], active: &[(String, NodeKind)], passive: &[String]) -> Result<Self> {
        if active.is_empty() {
            return Err(Error::Config("branch network has no active nodes".into()));
        }
        let mut index = HashMap::new();
        for (i, name) in active.iter().map(|(n, _)| n).chain(passive).enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(Error::Config(format!("duplicate network node `{name}`")));
            }
        }
        let mut branches = Vec::with_capacity(specs.len());
        for b in specs {
            let lookup = |name: &str| {
                index
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("branch references undeclared node `{name}`")))
            };
            let (from, to) = (lookup(&b.from)?, lookup(&b.to)?);
            if from == to {
                return Err(Error::Config(format!("branch from `{}` to itself", b.from)));
            }
            if !(b.r >= 0.0) || !b.r.is_finite() {
                return Err(Error::Config(format!("branch {}-{}: R must be >= 0", b.from, b.to)));
            }
            if !(b.l > 0.0) || !b.l.is_finite() {
                return Err(Error::Config(format!("branch {}-{}: L must be > 0", b.from, b.to)));
            }
            branches.push(Branch {
                from,
                to,
                r: b.r,
                l: b.l,
            });
        }

        let net = Self {
            active: active.to_vec(),
            passive: passive.to_vec(),
            branches,
        };
        net.check_connected()?;
        Ok(net)
    }

    fn total(&self) -> usize {
        self.active.len() + self.passive.len()
    }

    fn name(&self, i: usize) -> &str {
        if i < self.active.len() {
            &self.active[i].0
        } else {
            &self.passive[i - self.active.len()]
        }
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.total();
        let mut adj = vec![Vec::new(); n];
        for b in &self.branches {
            adj[b.from].push(b.to);
            adj[b.to].push(b.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Connectivity(self.name(i).to_string())),
            None => Ok(()),
        }
    }

    pub fn active_ids(&self) -> Vec<String> {
        self.active.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn kinds(&self) -> Vec<NodeKind> {
        self.active.iter().map(|(_, k)| *k).collect()
    }

    pub fn passive_ids(&self) -> &[String] {
        &self.passive
    }

    /// Full nodal admittance `Y(s)` (active nodes first) and `dY/ds`.
    pub fn admittance(&self, s: Complex64) -> Result<(CMat, CMat)> {
        let n = self.total();
        let mut y = CMat::zeros(n, n);
        let mut dy = CMat::zeros(n, n);
        for b in &self.branches {
            let z = b.r + b.l * s;
            if z.norm() < 1e-12 * (b.r + b.l * s.norm()).max(1e-300) {
                return Err(Error::PoleProximity {
                    factor: 0,
                    pole: Complex64::new(-b.r / b.l, 0.0).to_string(),
                    s: s.to_string(),
                    tolerance: 1e-12,
                });
            }
            let ya = 1.0 / z;
            let dya = -b.l / (z * z);
            for (i, j, sign) in [(b.from, b.from, 1.0), (b.to, b.to, 1.0), (b.from, b.to, -1.0), (b.to, b.from, -1.0)] {
                y[(i, j)] += ya * sign;
                dy[(i, j)] += dya * sign;
            }
        }
        Ok((y, dy))
    }

    /// Kron-reduced admittance over the active nodes and its derivative.
    pub fn kron(&self, s: Complex64) -> Result<(CMat, CMat)> {
        let (y, dy) = self.admittance(s)?;
        let na = self.active.len();
        let keep: Vec<usize> = (0..na).collect();
        let elim: Vec<usize> = (na..self.total()).collect();
        let sc = schur_complement(&y, &dy, &keep, &elim, s)?;
        Ok((sc.value, sc.derivative))
    }

    /// Hybrid-parameter matrix `G(s)`.
    pub fn eval(&self, s: Complex64) -> Result<CMat> {
        Ok(self.eval_with_derivative(s)?.0)
    }

    /// `G(s)` and `G′(s)`.
    pub fn eval_with_derivative(&self, s: Complex64) -> Result<(CMat, CMat)> {
        let (yr, dyr) = self.kron(s)?;
        let n = self.active.len();
        let v: Vec<usize> = (0..n).filter(|&i| self.active[i].1 == NodeKind::Voltage).collect();
        let c: Vec<usize> = (0..n).filter(|&i| self.active[i].1 == NodeKind::Current).collect();

        let mut g = CMat::zeros(n, n);
        let mut dg = CMat::zeros(n, n);
        if c.is_empty() {
            return Ok((-yr, -dyr));
        }

        let sc = schur_complement(&yr, &dyr, &v, &c, s)?;
        // G_VV = −S, G_VC = −Y_VC X, G_CV = −X Y_CV, G_CC = X
        let y_vc = select(&yr, &v, &c);
        let dy_vc = select(&dyr, &v, &c);
        let y_cv = select(&yr, &c, &v);
        let dy_cv = select(&dyr, &c, &v);
        let x = &sc.inverse;
        let dx = &sc.inverse_derivative;
        let g_vc = -(&y_vc * x);
        let dg_vc = -(&dy_vc * x + &y_vc * dx);
        let g_cv = -(x * &y_cv);
        let dg_cv = -(dx * &y_cv + x * &dy_cv);

        for (a, &i) in v.iter().enumerate() {
            for (b, &j) in v.iter().enumerate() {
                g[(i, j)] = -sc.value[(a, b)];
                dg[(i, j)] = -sc.derivative[(a, b)];
            }
            for (b, &j) in c.iter().enumerate() {
                g[(i, j)] = g_vc[(a, b)];
                dg[(i, j)] = dg_vc[(a, b)];
            }
        }
        for (a, &i) in c.iter().enumerate() {
            for (b, &j) in v.iter().enumerate() {
                g[(i, j)] = g_cv[(a, b)];
                dg[(i, j)] = dg_cv[(a, b)];
            }
            for (b, &j) in c.iter().enumerate() {
                g[(i, j)] = x[(a, b)];
                dg[(i, j)] = dx[(a, b)];
            }
        }
        Ok((g, dg))
    }
}

/// One entry `G_mn` of a shared hybrid network.
#[derive(Debug, Clone)]
pub struct HybridGain {
    network: Arc<HybridNetwork>,
    row: usize,
    col: usize,
}

impl HybridGain {
    pub fn new(network: Arc<HybridNetwork>, row: usize, col: usize) -> Self {
        Self { network, row, col }
    }

    pub fn row(&self) -> usize {
        self.row
    }

    pub fn col(&self) -> usize {
        self.col
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        Ok(self.network.eval(s)?[(self.row, self.col)])
    }

    pub fn derivative(&self, s: Complex64) -> Result<Complex64> {
        Ok(self.network.eval_with_derivative(s)?.1[(self.row, self.col)])
    }
}

fn select(m: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

struct Schur {
    value: CMat,
    derivative: CMat,
    inverse: CMat,
    inverse_derivative: CMat,
}

/// `S = M_KK − M_KE M_EE⁻¹ M_EK` with its derivative, given `dM`.
fn schur_complement(m: &CMat, dm: &CMat, keep: &[usize], elim: &[usize], s: Complex64) -> Result<Schur> {
    let m_kk = select(m, keep, keep);
    let dm_kk = select(dm, keep, keep);
    if elim.is_empty() {
        return Ok(Schur {
            value: m_kk,
            derivative: dm_kk,
            inverse: CMat::zeros(0, 0),
            inverse_derivative: CMat::zeros(0, 0),
        });
    }
    let m_ee = select(m, elim, elim);
    let dm_ee = select(dm, elim, elim);
    let m_ke = select(m, keep, elim);
    let dm_ke = select(dm, keep, elim);
    let m_ek = select(m, elim, keep);
    let dm_ek = select(dm, elim, keep);

    let x = m_ee
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularReduction(format!("eliminated block is singular at s = {s}")))?;
    let cond = m_ee.norm() * x.norm();
    if !cond.is_finite() || cond > 1e13 {
        return Err(Error::SingularReduction(format!(
            "eliminated block is ill-conditioned at s = {s} (condition ≈ {cond:e})"
        )));
    }
    let dx = -(&x * &dm_ee * &x);
    let value = &m_kk - &m_ke * &x * &m_ek;
    let derivative = &dm_kk - &dm_ke * &x * &m_ek - &m_ke * &dx * &m_ek - &m_ke * &x * &dm_ek;
    Ok(Schur {
        value,
        derivative,
        inverse: x,
        inverse_derivative: dx,
    })
}
