pub mod bench;
pub mod config;
pub mod data;
pub mod ingest;
pub mod manifest;
pub mod metrics;
pub mod report;
pub mod run;
