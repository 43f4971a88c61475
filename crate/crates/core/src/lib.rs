//! Finite-dimensional noncommutative symmetric spaces, conditioned norms and
//! decompositions of sums of free variables, with random-matrix substitutes
//! for free-product norms.

pub mod check;
pub mod conditioned;
pub mod error;
pub mod free_sums;
pub mod js;
pub mod linalg;
pub mod martingale;
pub mod optim;
pub mod rmt;
pub mod serialize;
pub mod spaces;
pub mod step;
pub mod tracial;
pub mod words;

pub use error::{Error, Result};
pub use spaces::{Exponent, Interpolation, SymmetricSpace};
pub use step::StepFunction;
pub use tracial::{Operator, TracialAlgebra};
