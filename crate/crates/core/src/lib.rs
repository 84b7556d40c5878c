//! Numerical laboratory for discretized projection and sum-product phenomena
//! over `R` and `Q_p`, multi-scale focusing of measures on `sl_2 (x) F^m`, and
//! an equidistribution harness for expanding unipotent arcs on
//! `SL_2(R)^3 / SL_2(Z)^3`.

pub mod boxfit;
pub mod config;
pub mod covering;
pub mod csvio;
pub mod error;
pub mod fixtures;
pub mod flow;
pub mod focusing;
pub mod localfield;
pub mod projection;
pub mod rep;
pub mod runner;
pub mod sumproduct;

pub use error::{Error, Result};
