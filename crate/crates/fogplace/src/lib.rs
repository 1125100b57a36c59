//! Energy-optimal placement of primary and backup processing servers for a
//! fog-assisted health-monitoring deployment over a GPON access network.
//!
//! The library models the access tree (base stations, ONTs, OLTs, metro and
//! cloud uplinks), the per-patient rate allocations and monitoring deadline,
//! the idle-plus-proportional energy of every device class, and an exact
//! minimum-energy solver for placing 1+1-protected processing servers at
//! candidate nodes under two resilience regimes (backup colocation allowed
//! or geographically separated). A scenario harness sweeps demand levels,
//! per-node server caps and both regimes, emitting reproducible CSV and
//! plot-data files.

pub mod energy;
pub mod placement;
pub mod report;
pub mod scenarios;
pub mod timing;
pub mod topology;
