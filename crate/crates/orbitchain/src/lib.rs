//! Planning and simulation toolkit for in-orbit Earth-observation analytics
//! constellations: application modeling, performance profiling, deployment
//! optimization, tile routing, discrete-event simulation, and ground-link
//! budgeting.

pub mod cli;
pub mod groundlink;
pub mod model;
pub mod planner;
pub mod profile;
pub mod routing;
pub mod scenario;
pub mod simulator;
