//! Toolkit for staged art-appreciation tutoring dialogues.
//!
//! The crate covers the whole data path: the appreciation framework
//! ([`framework`]), artwork curation ([`corpus`]), virtual students
//! ([`persona`]), prompt assembly ([`promptc`]), batch generation and export
//! ([`pipeline`]), live docent sessions ([`orchestrator`]) and evaluation
//! ([`evalkit`]).

pub mod corpus;
pub mod evalkit;
pub mod framework;
pub mod orchestrator;
pub mod persona;
pub mod pipeline;
pub mod promptc;
pub mod text;
