//! Speckle-illuminated photoacoustic tomography: forward model, speckle
//! statistics, moment estimation and second-order reconstruction.

pub mod error;
pub mod forward;
pub mod geometry;
pub mod harness;
pub mod recon;
pub mod solver;
pub mod speckle;
pub mod stats;

pub use error::{Error, Result};
pub use forward::ForwardOperator;
pub use geometry::{ArrayKind, ObjectField, ObjectGrid, Timebase, TransducerArray};
pub use recon::{reconstruct_first_order, reconstruct_second_order, Lambda, ReconConfig, SecondOrderReconstructor};
pub use solver::{RidgeFactorization, SymmetricMatrix};
pub use speckle::{NoiseModel, SpeckleModel};
pub use stats::{MomentAccumulator, Moments};
