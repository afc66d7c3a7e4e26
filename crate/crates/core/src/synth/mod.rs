//! Synthetic two-class image laboratory with a corner-watermark shortcut.
//!
//! Class 1 ("zebra") animals carry a striped texture, class 0 ("horse")
//! animals a blob texture; a fraction of zebra training images gets a bright
//! square in a random corner. A logistic-regression classifier is trained on
//! raw pixels and explained with gradient x input, which for a linear model
//! is exactly each pixel's logit contribution.

mod classifier;
mod config;
mod dataset;
mod sweep;

pub use classifier::{saliency_gradient_x_input, train_classifier, LinearModel, TrainedModel, MAX_HALVINGS};
pub use config::{SynthConfig, TestWatermark, TrainConfig, DEFAULT_PREVALENCES};
pub use dataset::{
    class_name, generate_dataset, Dataset, SynthSample, BACKGROUND, HORSE, PART_NAMES, WATERMARK, ZEBRA,
};
pub use sweep::{
    dump_corpus, evaluate_point, run_prevalence_sweep, run_prevalence_sweep_jobs, sample_sats, sweep_csv, sweep_table,
    SweepPoint, SweepReport, SALIENCY_METHOD,
};
