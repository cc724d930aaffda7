pub mod aggregate;
pub mod fit;
pub mod repro;
pub mod simulate;
