//! Divide-and-conquer estimation of |⟨0|C|0⟩|² for shallow circuits on
//! D-dimensional qubit lattices, with dense reference oracles.

pub mod geomcircuit;
pub mod oracle;
pub mod blockenc;
pub mod synthesis;
pub mod dnc;
pub mod errmodel;
pub mod harness;
