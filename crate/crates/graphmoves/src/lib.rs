//! Exact-integer engine for classifying unital graph C*-algebras.
//!
//! The crate computes the ordered reduced filtered K-theory invariant of a
//! finite-vertex graph, applies and certifies graph moves, reduces graphs to
//! canonical and standard form, lifts invariant isomorphisms to block matrix
//! equivalences by bounded search, and factors those equivalences into
//! chains of elementary legal moves.

pub mod blocks;
pub mod graph;
pub mod intmat;
pub mod kweb;
pub mod factorize;
pub mod lift;
pub mod moves;
pub mod pipeline;
pub mod structure;
