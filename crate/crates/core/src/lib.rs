//! Retrieval-augmented generation of IoT platform integrations, validated
//! against a virtual device and finalized with human yes/no feedback.

pub mod llm;
pub mod model;
pub mod knowledge;
pub mod device;
pub mod agent;
pub mod codegen;
pub mod prompts;
pub mod trace;
pub mod harness;
mod repair;
pub mod autodebug;
pub mod hil;
pub mod metrics;
pub mod pipeline;
