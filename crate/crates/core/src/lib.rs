//! Exact simulation and verification of LOCC protocols that implement
//! two-qubit unitaries over cluster networks of Bell pairs.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: labelled state vectors, gates, partial traces and SVD.
//! * [`decomp`]: Schmidt and operator-Schmidt decompositions, the canonical
//!   (Kraus-Cirac) form of two-qubit gates, controlled-unitary sequences and
//!   three-CNOT synthesis.
//! * [`network`]: cluster networks, their named variants and resource states.
//! * [`locc`]: the LOCC instruction set, a branch-exact executor and the
//!   teleportation / fully-controlled-gate subprotocols.
//! * [`conversion`]: legality rules for controlled-gate segments and their
//!   compilation onto a single network column.
//! * [`protocols`]: butterfly, grail and ladder protocol compilers.
//! * [`implementability`]: chain factors, ladder decisions and the
//!   four-qubit SWAP-impossibility scan.
//!
//! Qubit order is big-endian everywhere: the first qubit of a register is the
//! most significant bit of a basis index.

pub mod conversion;
pub mod decomp;
pub mod implementability;
pub mod locc;
pub mod network;
pub mod protocols;
pub mod random;
pub mod tensor;

pub use num_complex::Complex64 as C64;
