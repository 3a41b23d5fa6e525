//! Synthetic corpus generation, preprocessing, file formats and training windows.

pub mod io;
pub mod preprocess;
pub mod sequence;
pub mod synth;
pub mod window;

pub use io::{load_corpus, read_motion, save_corpus, write_motion, CorpusManifest, MotionFile};
pub use preprocess::{filter_floating, resample_fps, split_dataset, DatasetSplit, FLOAT_THRESHOLD, TARGET_FPS};
pub use sequence::{MotionSequence, Provenance};
pub use synth::{generate_synthetic_corpus, GaitParams, ReachParams, Span, SyntheticGenConfig};
pub use window::{sample_training_window, window_at, TrainingWindow};
