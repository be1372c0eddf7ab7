pub mod data;
pub mod seed;
pub mod pipeline;
pub mod learn;
pub mod policy;
pub mod eval;
pub mod train;
pub mod bundle;
pub mod experiment;
