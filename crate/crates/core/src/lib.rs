#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod barycenter;
pub mod embedding;
pub mod error;
pub mod executor;
pub mod geometry;
pub mod gw;
pub mod matrix;
pub mod metrics;
pub mod ot;
pub mod pipelines;
pub mod relational;
