//! Common neighbours in dense random regular graphs.
//!
//! The crate samples uniform `d`-regular graphs on `[n]` with a double-edge
//! switch chain, counts and enumerates small cases exactly, evaluates the
//! closed-form limit laws for the common-neighbour counts `X_ij`, couples
//! graphs with different `X_ij`, and estimates extremal-independence
//! coefficients for the events `{X_ij` is extreme`}`.

pub mod coupling;
pub mod error;
pub mod experiments;
pub mod extremal;
pub mod graph;
pub mod oracle;
pub mod sampler;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use graph::{
    CommonNeighbourProfile, DegreeSequence, LabelledGraph, RegularityParams, SwitchOrientation,
    SwitchOutcome, Vertex,
};
