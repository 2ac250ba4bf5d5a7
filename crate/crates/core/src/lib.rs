//! Building blocks for model-adaptive chain-of-thought datasets: probe a base
//! model, grade question difficulty relative to it, sample a training set to
//! a target difficulty mix, and distil verified teacher reasoning.

pub mod adaptive_db;
pub mod config;
pub mod cot;
pub mod distribution;
pub mod domain;
pub mod gateway;
pub mod grader;
pub mod jsonl;
pub mod pool;
pub mod prompts;
pub mod sampler;
pub mod verifier;
