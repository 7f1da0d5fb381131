//! On-disk formats: binary cloud/flow files, the dataset directory layout,
//! and the JSON evaluation report.

pub mod binfile;
pub mod dataset;
pub mod report;
