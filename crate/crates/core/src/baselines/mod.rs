//! Reference solvers without the tree approximation.

pub mod transport;
pub mod wsv;

pub use transport::{exact_wasserstein, transport, TransportPlan};
pub use wsv::{full_wsv, full_wsv_from, WsvResult};
