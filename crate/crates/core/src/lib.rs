//! Core library of the funsat workbench: gate-level netlists, sequential
//! simulation, functional-corruptibility estimation, time-frame expansion,
//! CNF encoding, a CDCL solver, sequential logic encryption schemes, the
//! corruptibility-guided oracle attack, and key verification.

pub mod attack;
pub mod cnf;
pub mod encrypt;
pub mod netlist;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod unroll;
pub mod verify;
