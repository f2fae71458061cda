//! Library surface of the command-line front end: the problem-spec
//! grammar, the JSON report envelope, and the staged pipeline driver.
//! The `laxkit` binary is a thin argument parser over these modules.

pub mod pipeline;
pub mod report;
pub mod spec;
