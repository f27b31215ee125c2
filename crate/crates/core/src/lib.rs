//! Peer-to-peer microgrid pricing: a deterministic community-battery market
//! simulator, a from-scratch deep Q-learning trainer for retail and purchase
//! price coefficients, and an experiment harness for weight, capacity and
//! consumer-ratio sweeps.

pub mod agent;
pub mod battery;
pub mod customer;
pub mod env;
pub mod error;
pub mod lab;
pub mod market;
pub mod profile;
pub mod qnet;
