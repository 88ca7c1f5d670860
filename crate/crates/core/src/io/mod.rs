//! File formats: newline-delimited records and tracker configuration text.

pub mod config;
pub mod records;
