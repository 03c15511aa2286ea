//! Panel datasets: ingestion, calendar covariates, splitting, flattening, and the
//! synthetic generator.

mod calendar;
mod ingest;
mod matrix;
mod panel;
mod synthetic;

pub use calendar::{expand_calendar, DAY_OF_MONTH, DAY_OF_WEEK, IS_WEEKEND as CALENDAR_IS_WEEKEND, MONTH, YEAR};
pub use ingest::{load_panel_csv, read_panel_csv, write_panel_csv, CovariateSpec, CsvSchema, KindHint, DEFAULT_SERIES_ID};
pub use matrix::{one_hot_name, vertical_matrix, vertical_matrix_for_schema, ColumnInfo, ColumnKind, VerticalMatrix};
pub use panel::{split_train_test, Covariate, CovariateKind, CovariateValue, Observation, PanelDataset, Series, TimeKey};
pub use synthetic::{generate_synthetic, is_weekend_day, SynthConfig, IS_PROMOTION, IS_WEEKEND, SYNTHETIC_SERIES_ID};
