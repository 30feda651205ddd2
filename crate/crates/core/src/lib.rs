//! Sparse variable selection for Poisson GLARMA count time series.

pub mod bench;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod glm_lasso;
pub mod io;
pub mod likelihood;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod quad_lasso;
pub mod selection;

pub use error::{GlarmaError, Result};
pub use model::{GlarmaParams, SeriesData};
