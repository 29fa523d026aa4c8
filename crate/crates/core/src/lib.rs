//! Exact computations for martingale Hardy-Lorentz spaces on finite filtration trees.
//!
//! The crate is organized bottom-up:
//!
//! * [`filtration`]: atom trees, conditional expectations, regularity constant;
//! * [`process`]: martingales, stopping times, `d`, `f*`, `S`, `s`;
//! * [`lorentz`]: distribution functions, rearrangements, Lorentz quasi-norms;
//! * [`hardy`]: the five Hardy-Lorentz functionals and minimal envelopes;
//! * [`bmo`]: Lipschitz `BMO_r(alpha)` norms and generalized `BMO_{r,q}(alpha)` estimates;
//! * [`atomic`]: constructive atomic decompositions and duality checks;
//! * [`fracint`]: the fractional integral `I_alpha`;
//! * [`harness`]: instance generators, experiments and documents.
//!
//! Everything is generic over [`Scalar`], implemented for exact rationals and `f64`.

pub mod error;
pub mod filtration;
pub mod fracint;
pub mod lorentz;
pub mod hardy;
pub mod harness;
pub mod bmo;
pub mod atomic;
pub mod process;
pub mod scalar;

pub use error::{Error, Result};
pub use filtration::{build_tree, FiltrationTree, NodeId, TreeDoc, TreeRef};
pub use process::{Martingale, StoppingTime};
pub use scalar::{Mode, Rational, Scalar};
