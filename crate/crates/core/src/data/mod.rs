//! Channel storage, normalisation, sampling of labelled windows, and the
//! synthetic channel generator.

mod datasets;
mod norm;
mod store;
mod synth;

pub use datasets::{
    admissible_intervals, build_datasets, build_datasets_with_stats, sample_negatives, DatasetCounts, DatasetSplits, RangeId, Ranges, TimeRange,
    WindowedDataset, NEGATIVE_EXCLUSION_S,
};
pub use norm::{apply_norm, compute_norm_stats, NormStats, SIGMA_FLOOR};
pub use store::{
    extract_window, parse_events, read_events, read_store, store_from_bytes, store_to_bytes, write_events,
    write_store, ChannelStore, EventList, STORE_HEADER_LEN, STORE_MAGIC, STORE_VERSION,
};
pub use synth::{synth_generate, GenConfig, Noise, Pattern, Planted, SynthMeta, XorOptions};
