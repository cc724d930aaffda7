//! External data formats: NIfTI-1 volumes, FSL gradient tables and metric CSVs.

pub mod gradients;
pub mod nifti;
pub mod table;

pub use gradients::{format_gradient_table, parse_gradient_table, read_gradient_table, write_gradient_table, GradientError, GradientScheme};
pub use nifti::{decode_volume, encode_volume, read_nifti, read_volume, write_nifti, write_volume, Datatype, NiftiError, VolumeHeader};
pub use table::{format_roundtrip, format_significant, Level, Metric, MetricTable, RowKey, TableError};
