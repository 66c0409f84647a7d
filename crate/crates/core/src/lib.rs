//! Symbolic scene-graph editing with a small edit-program language, exact
//! graph edit distance, GED-ranked retrieval, REINFORCE finetuning of a
//! query-to-program policy, and a synthetic dataset generator.

pub mod cli;
pub mod datagen;
pub mod dsl;
pub mod engine;
pub mod ged;
pub mod policy;
pub mod retrieval;
pub mod scene;

mod preset;
mod seed;

pub use preset::Preset;
pub use seed::rng_for;
