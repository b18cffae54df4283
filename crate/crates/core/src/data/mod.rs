//! Data pipeline: raw CSV to normalized, windowed supervised datasets.

pub mod csv_io;
pub mod frame;
pub mod resample;
pub mod scaler;
pub mod window;

pub use csv_io::{parse_csv, CsvSchema, RawRecords};
pub use frame::{parse_timestamp, Frame, TIMESTAMP_FORMATS};
pub use resample::{fill_gaps, resample_1min, GapReport, GapRun};
pub use scaler::{apply_scaler, fit_scaler, invert_scaler, ScalerParams};
pub use window::{chronological_split, make_windows, WindowedDataset};
