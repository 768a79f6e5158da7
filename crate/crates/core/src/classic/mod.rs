//! Classical unmixing blocks: pseudoinverse, VCA endmember extraction and
//! FCLS abundance estimation.

mod fcls;
mod linalg;
mod pinv;
mod vca;

pub use fcls::{fcls, FclsSolver, SUM_ROW_WEIGHT};
pub use pinv::{gram_condition, pseudoinverse, MAX_CONDITION};
pub use vca::{vca, VcaResult};
