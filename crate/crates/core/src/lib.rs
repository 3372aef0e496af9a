//! Discrete-event simulator of an edge computing system: orchestration of
//! MEC apps, MEC hosts with resource accounting, Location and Radio Network
//! Information services, and an optional real-time bridge to external apps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod descriptors;
pub mod http;
pub mod kernel;
pub mod mechost;
pub mod net;
pub mod orchestration;
pub mod services;
pub mod runner;
pub mod sim;
