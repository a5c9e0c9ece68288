//! Interior-point solvers for AC optimal power flow built around a
//! condensed, reduced-space treatment of the KKT system.

pub mod cli;
pub mod dense;
pub mod ipm;
pub mod kkt;
pub mod lu;
pub mod matpower;
pub mod model;
pub mod network;
pub mod powerflow;
pub mod sparse;
