pub mod autodiff;
pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod graph_learning;
pub mod model;
pub mod pipeline;
pub mod segmentation;
pub mod training;

pub use error::{Error, ErrorKind, Result};
