//! Test oracles shared by integration and acceptance tests.
#![allow(dead_code)]

pub mod retrieval;
