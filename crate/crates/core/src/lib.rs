//! Flow-level simulation of content-size-aware path selection.
//!
//! The crate compares the Minimum Backlog Policy (route each arriving flow
//! over the candidate path whose most backlogged link holds the least
//! remaining work) and its size-thresholded variant against min-MLU weighted
//! random splitting, using a max-min fair fluid model of bandwidth sharing.

pub mod engine;
pub mod experiment;
pub mod kpaths;
pub mod lp;
pub mod minmlu;
pub mod policies;
pub mod topology;
pub mod traffic;
