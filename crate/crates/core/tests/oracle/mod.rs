//! Independent oracles shared by the core tests and the acceptance target.
#![allow(dead_code)]

pub mod call_graphs;
pub mod const_tree;
