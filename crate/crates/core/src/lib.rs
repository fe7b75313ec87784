//! Channel-charting toolkit.
//!
//! Trains representation-constrained autoencoders on synthetic channel-state
//! information and evaluates how well the learned charts preserve spatial
//! geometry. Pairwise latent constraints (anchors with known positions,
//! distance bounds along a trajectory) recover the global geometry that a
//! plain autoencoder leaves arbitrary; trustworthiness, continuity, and
//! Kruskal's stress quantify the effect.
//!
//! The crate is organized along the experiment pipeline:
//!
//! * [`scenario`] — user placement, trajectory, anchor selection
//! * [`channel`] — synthetic CSI over a uniform linear array
//! * [`features`] — angular-domain magnitude features for the autoencoder
//! * [`nn`] — dense autoencoder with a bottleneck gradient hook
//! * [`constraints`] — pairwise representation constraints and gradients
//! * [`metrics`] — trustworthiness, continuity, Kruskal's stress
//! * [`pipeline`] — end-to-end experiment orchestration and file formats

pub mod channel;
pub mod constraints;
pub mod error;
pub mod features;
pub mod mat;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
