//! UAV-as-a-service planning and simulation: demand modelling, fleet
//! dimensioning, trajectory planning, backbone routing and a slotted simulator.

pub mod casestudy;
pub mod dimensioning;
pub mod geometry;
pub mod radio;
pub mod routing;
pub mod scenario;
pub mod simulator;
pub mod trajectory;
