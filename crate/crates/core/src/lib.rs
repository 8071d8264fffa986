//! Generator, verifier, and evaluation harness for synthetic deductive
//! reasoning benchmarks built from propositional argument forms.

pub mod dataset;
pub mod eval;
pub mod forms;
pub mod logic;
pub mod parallel;
pub mod structure;
pub mod surface;
