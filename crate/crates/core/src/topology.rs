//! Slotted-Aloha roles, one-hop neighborhoods and the mesh connectivity graph.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Deployment, Point2D};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct MacParams {
    /// Per-slot transmit probability p.
    pub tx_prob: f64,
    /// One-hop radius r_oh in meters.
    pub one_hop_radius: f64,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            tx_prob: 0.3,
            one_hop_radius: 200.0,
        }
    }
}

impl MacParams {
    pub fn validate(&self) -> Result<()> {
        check_probability(self.tx_prob, "tx probability")?;
        if !(self.one_hop_radius.is_finite() && self.one_hop_radius > 0.0) {
            return Err(Error::param(format!(
                "one-hop radius must be > 0, got {}",
                self.one_hop_radius
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("{what} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Partition of a deployment into transmitters and receivers for one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRoles {
    pub transmitters: Vec<usize>,
    pub receivers: Vec<usize>,
}

/// Independently marks each node a transmitter with probability `p`.
pub fn aloha_thin<R: Rng + ?Sized>(d: &Deployment, p: f64, rng: &mut R) -> Result<SlotRoles> {
    check_probability(p, "tx probability")?;
    let mut roles = SlotRoles {
        transmitters: Vec::new(),
        receivers: Vec::new(),
    };
    for i in 0..d.len() {
        if rng.random_bool(p) {
            roles.transmitters.push(i);
        } else {
            roles.receivers.push(i);
        }
    }
    Ok(roles)
}

/// Transmitters strictly inside `r_oh` of `receiver`, ascending.
pub fn one_hop_transmitters(
    d: &Deployment,
    roles: &SlotRoles,
    receiver: Point2D,
    r_oh: f64,
) -> Vec<usize> {
    let r2 = r_oh * r_oh;
    roles
        .transmitters
        .iter()
        .copied()
        .filter(|&i| d.nodes()[i].distance_sq(receiver) < r2)
        .collect()
}

/// Number of orthogonal channels `k = round(lambda p pi r_oh^2)`, at least 1.
pub fn channel_count(intensity: f64, p: f64, r_oh: f64) -> u64 {
    let k = (intensity * p * PI * r_oh * r_oh).round();
    if k.is_finite() && k >= 1.0 {
        k as u64
    } else {
        1
    }
}

/// Undirected one-hop graph: edge iff distance < r_oh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityGraph {
    adjacency: Vec<Vec<usize>>,
}

impl ConnectivityGraph {
    /// Graph where every pair of distinct nodes is adjacent.
    pub fn complete(n: usize) -> Self {
        ConnectivityGraph {
            adjacency: (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(),
        }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn isolated(&self) -> usize {
        self.adjacency.iter().filter(|a| a.is_empty()).count()
    }

    pub fn is_connected(&self) -> bool {
        if self.adjacency.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.adjacency.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

pub fn connectivity_graph(d: &Deployment, r_oh: f64) -> ConnectivityGraph {
    let r2 = r_oh * r_oh;
    let nodes = d.nodes();
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if nodes[i].distance_sq(nodes[j]) < r2 {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }
    // i < j loop pushes in ascending order for both endpoints already.
    ConnectivityGraph { adjacency }
}
