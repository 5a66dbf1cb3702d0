//! Oracles shared by the focused tests and the acceptance suite.
#![allow(dead_code)]

pub mod cky;
pub mod evalb;
pub mod fd;
