//! No-reference quality assessment for contrast-distorted images.
//!
//! An image is decolorized, histogram-equalized, and described by five
//! features: the SSIM between the gray image and its equalized version, the
//! entropies of both histograms, and the two cross entropies between them.
//! A linear epsilon-SVR maps the features to a quality score.
//!
//! ```no_run
//! use ceiq::{features, imageops};
//!
//! let img = imageops::load_image("photo.png")?;
//! let fv = features::extract_decoded(&img, &features::FeatureConfig::default())?;
//! println!("similarity to equalized: {:.4}", fv.s_ge);
//! # Ok::<(), ceiq::CeiqError>(())
//! ```

pub mod error;
pub mod eval;
pub mod features;
pub mod imageops;
pub mod rng;
pub mod ssim;
pub mod svr;
pub mod synth;

pub use error::{CeiqError, Result};
pub use eval::{DatasetManifest, EvaluationReport, FeatureDataset, Polarity, SplitProtocol};
pub use features::{extract_features, FeatureConfig, FeatureVector};
pub use imageops::{GrayImage, Histogram, RgbImage};
pub use ssim::{SsimParams, SsimResult};
pub use svr::{SvrModel, SvrParams, TrainingSet};
