//! Unified transformations over UPIR.

pub mod acc_dialect;
pub mod barrier_elim;
pub mod collapse;
pub mod lower;
pub mod schedule;
pub mod unparse;

pub use acc_dialect::export_acc_dialect;
pub use barrier_elim::eliminate_redundant_barriers;
pub use collapse::collapse_loops;
pub use lower::{lower_to_runtime, serialize_runtime_form, RuntimeForm};
pub use schedule::{compute_schedule, ScheduleDescriptor};
pub use unparse::{unparse_to_openacc, unparse_to_openmp};
