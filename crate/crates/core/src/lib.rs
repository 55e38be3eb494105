//! Sound certification of shallow ReLU barrier functions for discrete-time
//! ReLU network dynamics.
//!
//! The pipeline has two halves. [`partition`] uses CROWN bounds ([`crown`])
//! to find boxes on which the barrier decreases along the dynamics.
//! [`sublevel`] enumerates the connected component of the barrier's
//! zero-sublevel set containing the initial state, one linear region at a
//! time, using the LP face tests of [`arrangement`]. [`certify`] combines
//! both into a verdict.

pub mod arrangement;
pub mod certify;
pub mod crown;
pub mod error;
pub mod hyperrect;
pub mod io;
pub mod lp;
pub mod nn;
pub mod partition;
pub mod report;
pub mod sublevel;

pub use arrangement::{Arrangement, FlipSet, Region, RegionTable};
pub use error::{Error, Result};
pub use hyperrect::HyperRectangle;
pub use nn::{Activation, AffineMap, Functional, Layer, NeuralNetwork, ShallowNN};
