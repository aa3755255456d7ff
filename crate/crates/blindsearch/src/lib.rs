//! File formats, parallel drivers, the experiment harness and the
//! command-line tool for [`blindsearch_core`].

pub mod cli;
pub mod config;
pub mod eval;
pub mod io;
pub mod manifest;
pub mod parallel;
