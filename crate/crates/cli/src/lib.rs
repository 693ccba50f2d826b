//! Configuration-driven experiment driver for the offline/online reduced
//! eigenvalue pipeline: trains models, evaluates test points, and emits the
//! CSV tables and figure data.

pub mod config;
pub mod model;
pub mod pipeline;
