//! Learner-aware imitation-learning traffic simulator.
//!
//! The crate is organized around a closed loop: a road network substrate
//! ([`roadnet`]), trajectory datasets and a tuned IDM generator ([`traj`],
//! [`idm`], [`lights`]), per-timestep multi-agent graphs ([`graph`]), a small
//! reverse-mode autodiff core with an edge-enhanced graph-attention layer
//! ([`nn`]), the context-conditioned VAE used for learner-aware expert
//! augmentation ([`vae`]), the Gaussian trajectory policy ([`policy`]),
//! closed-loop simulation with on-road projection and LQR smoothing
//! ([`sim`], [`lqr`]), and realism metrics ([`metrics`]).

pub mod cli;
pub mod config;
pub mod geom;
pub mod graph;
pub mod idm;
pub mod lights;
pub mod lqr;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod roadnet;
pub mod rng;
pub mod sim;
pub mod traj;
pub mod vae;

pub use geom::Vec2;
pub use roadnet::RoadNetwork;
pub use traj::TrajectoryDataset;
