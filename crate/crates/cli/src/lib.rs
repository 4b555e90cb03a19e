//! Building blocks of the `kamfg` binary: the arithmetic expression parser
//! used for model fields, the run configuration schema, and the report and
//! plot writers. Exposed as a library so the pieces can be tested directly.

pub mod config;
pub mod expr;
pub mod output;
