//! Library surface of the `liftshare` CLI: report schema, renderers and the
//! command pipelines, kept separate from argument parsing so they can be
//! tested directly.

pub mod report;
pub mod run;
