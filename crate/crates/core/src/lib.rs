//! Knowledge-graph-augmented ReAct agent over virtual meteorological APIs,
//! with its offline evaluation harness.

pub mod canonical;
pub mod catalog;
pub mod corpus;
pub mod eval;
pub mod interface;
pub mod gateway;
pub mod kg;
pub mod memory;
pub mod agent;
pub mod net;
pub mod serve;
pub mod simulate;
pub mod text;
pub mod tools;
