pub mod error;
pub mod estimators;
pub mod fbm;
pub mod field;
pub mod flow;
pub mod fou;
pub mod grid;
pub mod inverse;
pub mod likelihood;
pub mod harness;
