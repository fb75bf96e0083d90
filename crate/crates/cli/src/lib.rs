//! Pipeline commands behind the `neurocap` binary, exposed as a library so
//! experiments can be driven from tests.

pub mod commands;
pub mod grid;
pub mod run;
