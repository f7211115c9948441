//! Mixed-integer embeddings of ReLU networks and a battery-aware microgrid
//! dispatch model built on them.

pub mod encoding;
pub mod harness;
pub mod mds;
pub mod milp;
pub mod nn;
pub mod par;
