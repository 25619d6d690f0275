//! Budgeted metacognitive control of tree-structured reasoning.
//!
//! A controller grows a tree of partial reasoning trajectories through a
//! pluggable [`backends::Backend`], scores every trajectory with a process
//! oracle and a verify-style confidence, and decides per branch whether to
//! expand, prune, repair, stop, or abstain, all under a hard call budget.

pub mod answer;
pub mod backends;
pub mod baselines;
pub mod budget;
pub mod controller;
pub mod evaluation;
pub mod harness;
pub mod oracle;
pub mod problem;
pub mod session;
pub mod trace;
pub mod tree;
