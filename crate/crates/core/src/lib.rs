//! Compiler and exact-verification toolkit for constant-round fault-tolerant
//! Clifford circuits on CSS block codes.
//!
//! The pipeline: a logical Clifford circuit is brought into a constant number
//! of single-gate-type stages ([`clifford`]), each stage is consumed by one or
//! a few rounds of Knill or Steane syndrome measurement against a synthesized
//! logical ancilla state ([`ancilla`], [`schedule`]), and the required ancilla
//! states are produced by a two-stage postselected distillation protocol
//! driven by classical parity-check codes ([`distill`]). Everything is checked
//! by exact stabilizer simulation ([`tableau`]) and fault injection.

pub mod ancilla;
pub mod clifford;
pub mod css;
pub mod distill;
pub mod gf2;
pub mod pauli;
pub mod schedule;
pub mod tableau;

pub use gf2::{BitMatrix, BitVec, Permutation};
pub use pauli::PauliOp;
