//! Turn raw time-series corpora into instruction-tuning samples that pair a
//! window with a natural-language description of its trend.

pub mod augmentation;
pub mod decomposition;
pub mod description;
pub mod emitter;
pub mod evaluation;
pub mod ingest;
pub mod pipeline;
pub mod rng;
pub mod trend_summary;
pub mod windowing;

pub use ingest::{Corpus, CorpusSplit, Granularity, SeriesRecord};
pub use windowing::{Window, WindowSource, WindowSplit};
