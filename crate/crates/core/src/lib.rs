//! Large-array air-to-air MIMO link analysis.
//!
//! The crate computes the closed-form asymptotic SINR and achievable rate of a
//! Rician, spatially correlated link with matched-filter precoding, imperfect
//! MMSE channel estimates and co-channel interferers that reuse the same
//! pilot. A Monte-Carlo engine validates the closed form, and a designer turns
//! the rate-versus-distance curve into adaptive coding and modulation
//! switching thresholds.

pub mod acm;
pub mod channel;
pub mod cli;
pub mod estimation;
pub mod montecarlo;
pub mod numerics;
pub mod plot;
pub mod precoding;
pub mod sinr;
