//! Model-based autoencoder: encoder with a pseudoinverse-tied linear
//! branch, decoder with a linear mixture plus nonlinear fluctuation, and
//! the two ablation variants.

mod arch;
mod checkpoint;
mod graph;
mod params;

pub use arch::{Architecture, Variant};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use graph::{LayerVars, ParamVars};
pub use params::{build_network, nonlinearity_report, AecParams, Dense, Mlp, NonlinearityReport};
