pub mod bench;
pub mod buchi;
pub mod encodings;
pub mod label;
pub mod ltl;
pub mod planner;
pub mod prediction;
pub mod sampling;
pub mod workspace;
