//! Grid-frequency forecasting engine: CSV ingestion, 1-minute resampling,
//! gap filling, min-max scaling, sliding-window dataset construction, a
//! Conv1D + LSTM + dense forecaster trained with handwritten
//! backpropagation and Adam, and weighted ensemble aggregation.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
