pub mod net;
pub mod probe;
pub mod runner;
pub mod stats;
pub mod stimgen;
