//! Residual networks whose bypass is a bounded-derivative mapping with
//! trainable shape parameters, built on a small CPU engine.

pub mod augment;
pub mod checks;
pub mod commands;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod loss;
pub mod mapping;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Feeds, Graph, Mode, NodeId, Session};
pub use mapping::{MappingKind, MappingParams};
pub use params::{ParamRole, ParamStore};
pub use tensor::{Real, Tensor};
