//! A desk-scale real-time-bidding laboratory: a GSP auction simulator
//! with stochastic rivals and delayed clicks, a character-level
//! convolutional Q-network bidding agent with decoupled
//! serving/observing/training, a human-calibrated ECPM baseline, and an
//! A/B experiment harness.

pub mod agent;
pub mod baseline;
pub mod encoder;
pub mod harness;
pub mod money;
pub mod observer;
pub mod policy;
pub mod qnet;
pub mod replay;
pub mod sim;
