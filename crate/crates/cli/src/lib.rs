//! Batch verification front end: declarative model files, identity suites,
//! machine-readable reports, and CSV plot data.

pub mod model;
pub mod plotdata;
pub mod report;
pub mod suites;
