//! Files the command line reads and writes.

pub mod config;
pub mod latent_file;
pub mod table;

pub use config::{AttackSettings, DataConfig, DownstreamConfig, EncoderConfig, RunConfig, ServeConfig};
pub use latent_file::LatentBatchFile;
pub use table::{ingest_csv, read_csv, write_csv, CsvSchema, CsvTable, Task};
