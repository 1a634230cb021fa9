pub mod config;
pub mod report;
pub mod scenario;
pub mod selftest;
pub mod sweep;
pub mod table;
