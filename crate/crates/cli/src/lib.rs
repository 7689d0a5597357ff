//! Command-line front end: argument definitions and the four subcommands.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod bench;
pub mod cost;
pub mod solve;
pub mod verify;
