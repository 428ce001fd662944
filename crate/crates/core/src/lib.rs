//! Sparse Fock-space simulation of heralded linear-optical polarization circuits.

pub mod detection;
pub mod fock;
pub mod optics;
pub mod sources;
pub mod circuit;
pub mod netlist;
pub mod experiments;
pub mod report;
