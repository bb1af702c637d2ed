//! Unified parallel IR toolkit over a mini kernel language.
//!
//! Pipeline: parse `.ukl` source with OpenMP/OpenACC/CUDA-launch annotations,
//! build the unified IR, run analyses and transforms on it, print/parse the
//! canonical IR text, and execute it with a deterministic interpreter.

pub mod analysis;
pub mod ast;
pub mod diag;
pub mod frontend;
pub mod interp;
pub mod ir;
pub mod passes;
