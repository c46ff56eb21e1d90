//! Oracles shared by the property suites and the acceptance run.
#![allow(dead_code)]

pub mod grad;
pub mod market;
