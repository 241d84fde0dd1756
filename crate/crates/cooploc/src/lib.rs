//! Cooperative RSS-based indoor positioning.
//!
//! A small group of mobile nodes moves as a rigid formation through a field
//! of fixed reference transmitters. Each node measures received signal
//! strength from every reference; an extended Kalman filter fuses the
//! stacked measurements into an estimate of the anchor node's position and
//! velocity, and every extra node in the formation tightens that estimate.
//!
//! The crate is organized by pipeline stage:
//!
//! * [`channel`]: path-loss models, shadowing, and model fitting.
//! * [`geometry`]: formation shapes and attitude handling.
//! * [`filter`]: the EKF over stacked RSS measurements.
//! * [`sim`]: trajectory synthesis and Monte Carlo trials.
//! * [`config`]: scenario files.

pub mod channel;
pub mod config;
pub mod filter;
pub mod geometry;
pub mod sim;
