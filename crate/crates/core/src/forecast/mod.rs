//! Recurrent encoder-decoder forecasting of keypoint series.

mod cells;
mod data;
mod encdec;
mod train;

pub use cells::{
    gru_cell_backward, gru_cell_forward, lstm_cell_backward, lstm_cell_forward, CellGrads, CellKind,
    CellParams,
};
pub use data::{series_from_poses, window_count, window_starts, windowize, Standardizer, WindowSample};
pub use encdec::{encdec_forward, ForecastModel, ForecastShape, MODEL_KIND};
pub use train::{train_forecast, ForecastHyper, ForecastReport, CLIP_NORM};
