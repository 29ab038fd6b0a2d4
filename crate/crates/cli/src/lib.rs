//! Scenario files, table output and the reproduction targets behind the
//! `mixendpoint` binary.

pub mod appendix;
pub mod commands;
pub mod output;
pub mod reference;
pub mod reproduce;
pub mod scenario;
