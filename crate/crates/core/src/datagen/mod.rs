//! Synthetic field generation, normalization statistics, and dataset IO.

mod dataset;
mod families;
mod stats;

pub use dataset::{
    generate_dataset, generate_dataset_threaded, read_manifest, write_manifest, Dataset, DatasetManifest, ShardEntry, Split,
    SplitCounts, MANIFEST_FILE, SHARD_SAMPLES,
};
pub use families::{
    gaussian_field, generate_sample, multiscale_field, quadrant_field, sine_field, Family,
    GenOptions,
};
pub use stats::{compute_stats, StreamingStats};
