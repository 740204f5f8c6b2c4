//! Decentralized energy management for a virtual power plant of smart
//! houses.
//!
//! Each household solves a local convex QP over its supply, loads, battery,
//! grid services and peer-to-peer trades. A coordinator contract on a
//! simulated proof-of-authority ledger runs the closed-form dual step on the
//! trade variables, and the loop converges to the schedule a centralized
//! solver would produce.

// NaN-rejecting `!(x >= 0.0)` checks and index loops over dense matrices are intended
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agent;
pub mod chain;
pub mod coordinator;
pub mod io;
pub mod model;
pub mod qp;
pub mod simnet;
