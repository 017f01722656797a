pub mod bounds;
pub mod demo;
pub mod error;
pub mod imaging;
pub mod likelihood;
pub mod linalg;
pub mod matrix;
pub mod observations;
pub mod projections;
pub mod region;
pub mod solvers;
pub mod synth;
