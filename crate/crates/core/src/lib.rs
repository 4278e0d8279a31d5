//! Hierarchical morphological design: quality vectors, Pareto layering,
//! bottom-up composition and trajectory synthesis over networks of
//! morphological points.

pub mod cli;
pub mod model;
pub mod morphfile;
pub mod oracle;
pub mod quality;
pub mod synthesis;
pub mod trajectory;
pub mod verify;

pub use model::*;
pub use quality::*;
pub use synthesis::*;
pub use trajectory::*;
