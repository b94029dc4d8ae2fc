//! Tape-based reverse-mode differentiation over the operator set, plus a
//! central-difference checker.

mod gradcheck;
mod params;
pub mod suite;
mod tape;

pub use gradcheck::{finite_diff_check, GradcheckConfig, GradcheckReport, ParamCheck};
pub use params::{ParamGrads, ParamId, ParamSet};
pub use suite::{default_suite, run_suite, GradCase};
pub use tape::{AttnVars, Tape, Var};
