//! Scenarios, the closed-loop simulator and its file formats.

pub mod chart;
pub mod csv;
pub mod noise;
pub mod pendulum;
pub mod report;
pub mod run;
pub mod scenario;
