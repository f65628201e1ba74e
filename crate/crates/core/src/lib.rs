//! Linear contextual bandits under budget-limited adversarial attacks.
//!
//! - [`linalg`]: incremental ridge regression and confidence radii.
//! - [`policies`]: LinUCB, LinTS, greedy, enlarged-radius LinUCB, and the
//!   two-layer EXP3 policies that learn the attack budget.
//! - [`adversary`]: reward and context attacks with exact budget accounting.
//! - [`environment`]: synthetic and factor-matrix environments.
//! - [`harness`]: configs, seeded experiments, CSV and SVG output.

pub mod adversary;
pub mod environment;
mod error;
pub mod harness;
pub mod linalg;
pub mod policies;

pub use error::{Error, Result};
