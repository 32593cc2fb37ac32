//! Skeleton definition, dataset I/O, normalization, subject splits and
//! the synthetic pose generator.

mod camera;
mod dataset;
mod norm;
mod skeleton;
mod split;
pub mod synth;

pub use camera::{project, CameraModel};
pub use dataset::{header, load_dataset, read_dataset, save_dataset, write_dataset, PosePair, NUM_COLUMNS};
pub use norm::{compute_norm_stats, poses3d_mm, NormStats, STD_FLOOR};
pub use skeleton::{ActionLabel, Side, SkeletonSpec, NUM_JOINTS, ROOT};
pub use split::{parse_subjects, split_by_subject, SubjectSplit};
pub use synth::{synth_generate, SynthOptions};
