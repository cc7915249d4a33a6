pub mod degeneracy;
pub mod error;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod field;
pub mod geometry;
pub mod interp;
pub mod loading;
pub mod potential;
pub mod solver;
pub mod solver3d;
pub mod species;
pub mod units;
pub mod watershed;
