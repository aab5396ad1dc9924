//! Homogeneous Poisson point processes on a disk centred at the origin.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A location in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const ORIGIN: Point2D = Point2D { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::param(format!("non-finite point ({x}, {y})")));
        }
        Ok(Point2D { x, y })
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance_sq(self, other: Point2D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Point2D, b: Point2D) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Disk of radius `radius` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct DiskRegion {
    radius: f64,
}

impl DiskRegion {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::param(format!("disk radius must be > 0, got {radius}")));
        }
        Ok(DiskRegion { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn contains(&self, p: Point2D) -> bool {
        p.norm_sq() <= self.radius * self.radius
    }

    /// Uniform point on the disk via `r = R sqrt(u)`, `phi = 2 pi v`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2D {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let r = self.radius * u.sqrt();
        let (s, c) = (2.0 * PI * v).sin_cos();
        Point2D { x: r * c, y: r * s }
    }
}

impl TryFrom<f64> for DiskRegion {
    type Error = Error;
    fn try_from(radius: f64) -> Result<Self> {
        DiskRegion::new(radius)
    }
}

impl From<DiskRegion> for f64 {
    fn from(d: DiskRegion) -> f64 {
        d.radius
    }
}

/// One realization of the point process. Node indices are only meaningful
/// within this realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    nodes: Vec<Point2D>,
    region: DiskRegion,
    intensity: f64,
}

impl Deployment {
    /// Builds a deployment from explicit positions, checking that every node
    /// lies in the region.
    pub fn from_nodes(nodes: Vec<Point2D>, region: DiskRegion, intensity: f64) -> Result<Self> {
        if !(intensity.is_finite() && intensity >= 0.0) {
            return Err(Error::param(format!("intensity must be >= 0, got {intensity}")));
        }
        // Tolerate round-off from sqrt/sin/cos at the rim.
        let limit = region.radius * region.radius * (1.0 + 1e-12);
        if let Some((i, p)) = nodes
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.x.is_finite() && p.y.is_finite()) || p.norm_sq() > limit)
        {
            return Err(Error::param(format!(
                "node {i} at ({}, {}) lies outside the disk of radius {}",
                p.x, p.y, region.radius
            )));
        }
        Ok(Deployment {
            nodes,
            region,
            intensity,
        })
    }

    pub fn nodes(&self) -> &[Point2D] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn region(&self) -> DiskRegion {
        self.region
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// Mean node count `lambda * |D|` of the generating process.
    pub fn expected_count(&self) -> f64 {
        self.intensity * self.region.area()
    }

    pub fn to_dump(&self, seed: u64) -> DeploymentDump {
        DeploymentDump {
            radius: self.region.radius,
            intensity: self.intensity,
            seed,
            nodes: self.nodes.clone(),
        }
    }
}

/// JSON layout used by `--dump-deployment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentDump {
    pub radius: f64,
    pub intensity: f64,
    pub seed: u64,
    pub nodes: Vec<Point2D>,
}

impl TryFrom<DeploymentDump> for Deployment {
    type Error = Error;
    fn try_from(dump: DeploymentDump) -> Result<Self> {
        Deployment::from_nodes(dump.nodes, DiskRegion::new(dump.radius)?, dump.intensity)
    }
}

/// Draws a Poisson count with the given mean; zero mean gives zero.
pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean)
        .expect("finite positive Poisson mean")
        .sample(rng);
    draw as u64
}

/// Samples a homogeneous PPP of `intensity` points per m^2 on `region`.
pub fn sample_ppp<R: Rng + ?Sized>(
    intensity: f64,
    region: DiskRegion,
    rng: &mut R,
) -> Result<Deployment> {
    if !(intensity.is_finite() && intensity >= 0.0) {
        return Err(Error::param(format!("intensity must be >= 0, got {intensity}")));
    }
    let n = poisson_count(intensity * region.area(), rng);
    let nodes = (0..n).map(|_| region.sample_uniform(rng)).collect();
    Ok(Deployment {
        nodes,
        region,
        intensity,
    })
}

/// Indices of nodes strictly closer than `radius` to `center`, ascending.
pub fn nodes_within(d: &Deployment, center: Point2D, radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    d.nodes
        .iter()
        .enumerate()
        .filter(|(_, p)| p.distance_sq(center) < r2)
        .map(|(i, _)| i)
        .collect()
}
