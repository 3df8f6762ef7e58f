//! Signal-token planning layer for a two-stage multimodal model: a stage-one
//! planner emits control tokens, a router turns them into generation jobs for
//! a stage-two backend.

pub mod cli;
pub mod error;
pub mod grammar;
pub mod meta;
pub mod planner;
pub mod projector;
pub mod router;
pub mod service;
pub mod synth;
pub mod task;

pub use error::Error;
