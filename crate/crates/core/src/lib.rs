pub mod autodiff;
pub mod dataio;
mod error;
pub mod gradsuite;
pub mod graphnet;
pub mod metrics;
pub mod objective;
pub mod retarget;
pub mod kinematics;

pub use error::{Error, Result};

/// Version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Guide chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    mod kinematics {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/retarget.md")]
    mod retarget {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
