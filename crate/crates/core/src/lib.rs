//! Deterministic discrete-event simulator for SDN topology discovery.
//!
//! The controller learns the switch graph either with event-driven,
//! hashed LLDP probing ([`model::Protocol::Softdp`]) or with the periodic
//! OFDP/OFDPv2 baselines. Runs are reproducible from the scenario file and
//! its seed; every run produces a trace whose SHA-256 digest identifies it.

pub mod adversary;
pub mod controller;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod simnet;
pub mod switch_agent;
