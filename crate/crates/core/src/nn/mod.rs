//! Small dense networks with hand-written back-propagation, in `f64`.

pub mod adam;
pub mod gradcheck;
pub mod loss;
pub mod mlp;

pub use adam::Adam;
pub use gradcheck::GradCheck;
pub use loss::Head;
pub use mlp::{Activation, Dense, Gradients, Mlp, Trace};
