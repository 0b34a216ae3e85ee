//! Simulation and verification toolkit for constrained-degree percolation in a
//! random environment (CDPRE) on the square lattice.
//!
//! Each vertex `v` carries a constraint `κ_v ∈ {0,1,2,3}` drawn from a law
//! `ρ`; each edge carries a clock `U_e ~ U(0,1]`. At time `U_e` the edge tries
//! to open and succeeds iff both endpoints currently have open degree below
//! their constraint. The crate evolves this process together with two
//! processes coupled to it through the same clocks (an intermediate block
//! model and Bernoulli percolation), estimates connection probabilities, and
//! checks the inequalities that relate them.

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod estimate;
pub mod lattice;
pub mod osss;
pub mod stats;

pub use dynamics::{Configuration, Model};
pub use env::{ClockField, ConstraintDist, Environment, SeedSpec, StreamLabel};
pub use error::{Error, Result};
pub use lattice::{BlockIndex, Edge, LatticeBox, Vertex, Window};
