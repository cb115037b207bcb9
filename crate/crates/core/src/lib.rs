//! Collision and coverage analysis of negative sampling in contrastive
//! learning, with a desk-scale trainer to probe the predicted trends.

pub mod csvio;
pub mod error;
pub mod example;
pub mod linalg;
pub mod losses;
pub mod mc;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod sweep;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use losses::{LossKind, LossReport};
pub use model::{Embedding, LatentModel, Payload, Point, PointId, Representation};
