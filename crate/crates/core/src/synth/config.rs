use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prevalence grid of the sweep: 0, 5, 10, 15, 20, 25 and 50 percent.
pub const DEFAULT_PREVALENCES: [f64; 7] = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.50];

/// Which classes receive a watermark in the watermarked test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TestWatermark {
    /// Only class-1 images, matching where the shortcut lives in training.
    #[default]
    Zebra,
    /// Every test image.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
    /// Relative loss increase tolerated before the step is halved.
    pub loss_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 1500, l2: 0.05, loss_tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Side length of the square images.
    pub image_size: usize,
    /// Training images per class.
    pub n_train: usize,
    /// Test images per class.
    pub n_test: usize,
    /// Fraction of class-1 training images that carry the watermark.
    pub watermark_prevalence: f64,
    /// Maximum inward offset of the watermark from its corner, in pixels.
    pub jitter: usize,
    pub watermark_size: usize,
    pub watermark_intensity: f64,
    pub seed: u64,
    /// Stripe cycles per pixel on class-1 animals.
    pub stripe_frequency: f64,
    /// Expected fraction of a class-0 animal covered by blobs.
    pub blob_density: f64,
    pub blob_radius: f64,
    /// Brightness added by a stripe or blob pixel.
    pub texture_contrast: f64,
    pub body_level: f64,
    /// Standard deviation of the per-image brightness offset of the animal.
    pub body_noise: f64,
    pub pixel_noise: f64,
    pub test_watermark: TestWatermark,
    /// Dilation radius applied to the ground-truth masks when building SATs.
    pub pad_radius: usize,
    pub train: TrainConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            n_train: 400,
            n_test: 100,
            watermark_prevalence: 0.0,
            jitter: 1,
            watermark_size: 5,
            watermark_intensity: 1.0,
            seed: 7,
            stripe_frequency: 0.25,
            blob_density: 0.3,
            blob_radius: 1.5,
            texture_contrast: 0.3,
            body_level: 0.1,
            body_noise: 0.01,
            pixel_noise: 0.1,
            test_watermark: TestWatermark::Zebra,
            pad_radius: 0,
            train: TrainConfig::default(),
        }
    }
}

impl SynthConfig {
    /// Textures too similar to separate and half the zebras watermarked:
    /// the classifier falls back on the shortcut alone.
    pub fn collapse() -> Self {
        Self { blob_density: 0.5, watermark_prevalence: 0.5, ..Self::default() }
    }

    pub fn with_prevalence(&self, prevalence: f64) -> Self {
        Self { watermark_prevalence: prevalence, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if self.image_size < 8 {
            return bad(format!("image_size must be at least 8, got {}", self.image_size));
        }
        if !(0.0..=1.0).contains(&self.watermark_prevalence) {
            return bad(format!("watermark_prevalence must lie in [0, 1], got {}", self.watermark_prevalence));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be at least 1".into());
        }
        if self.watermark_size == 0 || 1 + self.jitter + self.watermark_size > self.image_size / 2 {
            return bad(format!(
                "a {}-pixel watermark with jitter {} does not fit in a corner of a {}-pixel image",
                self.watermark_size, self.jitter, self.image_size
            ));
        }
        if !(0.0..=1.0).contains(&self.blob_density) || self.blob_density == 1.0 {
            return bad(format!("blob_density must lie in [0, 1), got {}", self.blob_density));
        }
        for (name, v) in [("stripe_frequency", self.stripe_frequency), ("blob_radius", self.blob_radius)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("texture_contrast", self.texture_contrast),
            ("body_noise", self.body_noise),
            ("pixel_noise", self.pixel_noise),
            ("train.l2", self.train.l2),
            ("train.loss_tolerance", self.train.loss_tolerance),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("body_level", self.body_level), ("watermark_intensity", self.watermark_intensity)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SynthConfig::default().validate().unwrap();
        SynthConfig::collapse().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = SynthConfig::default();
        for cfg in [
            SynthConfig { image_size: 7, ..base.clone() },
            SynthConfig { watermark_prevalence: 1.5, ..base.clone() },
            SynthConfig { watermark_prevalence: f64::NAN, ..base.clone() },
            SynthConfig { jitter: 20, ..base.clone() },
            SynthConfig { n_train: 0, ..base.clone() },
            SynthConfig { pixel_noise: -1.0, ..base.clone() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::BadConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let cfg = SynthConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SynthConfig>(&text).unwrap(), cfg);
        let partial: SynthConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.n_train, cfg.n_train);
        assert!(serde_json::from_str::<SynthConfig>(r#"{"sed": 3}"#).is_err());
    }
}
