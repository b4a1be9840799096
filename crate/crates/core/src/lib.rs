//! Path-tracking control stack for heavy trucks.
//!
//! * [`path`]: arc-length indexed reference path and geometric queries
//! * [`longitudinal`]: resistance forces, state equation, engine model
//! * [`nmpc`]: C/GMRES speed planner
//! * [`lateral`]: single-track lateral model and its discretisation
//! * [`rlqr`]: robust LQR steering controller
//! * [`sim`]: closed-loop simulator with a PI throttle/brake loop

pub mod config;
pub mod gmres;
pub mod lateral;
pub mod longitudinal;
pub mod nmpc;
pub mod path;
pub mod pathgen;
pub mod rlqr;
pub mod sim;
