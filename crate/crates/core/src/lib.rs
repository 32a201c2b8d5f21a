pub mod data;
pub mod dedup;
pub mod graph;
pub mod vocab;
pub mod features;
pub mod segment;
pub mod cluster;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod synthetic;
