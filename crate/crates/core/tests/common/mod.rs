#![allow(dead_code)]

pub mod metrics;
pub mod raster;
pub mod solver;
