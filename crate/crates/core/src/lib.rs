//! Performance analytics for a single server shared by eager customers, who
//! are lost unless served at once, and tolerant customers, who queue FCFS.
//!
//! The crate covers the processor-sharing ([`ps`]) and capacity-division
//! ([`cd`]) admission families, the blocking/sojourn conservation curve and
//! its inverse ([`region`]), an alternating-admission dynamic policy
//! ([`dynamic`]), a seedable event simulator ([`sim`]) and an exact
//! truncated-chain solver ([`oracle`]) used to check the formulas at finite
//! eager service rates.

pub mod cd;
pub mod dynamic;
pub mod error;
pub mod model;
pub mod oracle;
pub mod ps;
pub mod region;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    derived_loads, stability_ps, validate_params, DerivedLoads, MomentPair, PerfPoint, PolicyKind, PolicySpec,
    SystemParams,
};
