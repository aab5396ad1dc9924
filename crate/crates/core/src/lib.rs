//! Wireless mesh simulation and federated learning over lossy links.
//!
//! Devices are scattered as a homogeneous Poisson point process on a disk,
//! access the medium with slotted Aloha and see Rayleigh-faded, path-loss
//! attenuated signals. A transmission succeeds when its SIR (or SINR) clears
//! a threshold. On top of that network the crate runs centralized (server
//! at the origin) and decentralized (one-hop gossip) federated learning with
//! FedAvg, Krum and coordinate-wise median aggregation, and a genetic
//! algorithm that prunes hidden units of the classifier.

pub mod aggregate;
pub mod analysis;
pub mod channel;
pub mod compress;
mod error;
pub mod flcore;
pub mod geometry;
pub mod netsim;
pub mod protocol;
pub mod seed;
pub mod topology;

pub use error::{Error, Result};
