//! Dataset ingestion, image standardisation, augmentation, balancing and
//! splitting.

pub mod image;
pub mod manifest;
pub mod prepare;
pub mod split;

pub use image::{augment_crop, augment_rotate, load_image, CropRegion, IMAGE_SIZE};
pub use manifest::{read_manifest, write_manifest, Origin, Record, Sample, SampleManifest, Split};
pub use prepare::{prepare, PrepareConfig};
pub use split::{balance_classes, split_train_val};
