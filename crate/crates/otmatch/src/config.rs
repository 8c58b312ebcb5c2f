//! Flat `key = value` training configuration (TOML syntax). Every key is
//! optional; omitted keys take the defaults below.

use std::path::{Path, PathBuf};

use otmatch_core::data::AugmentConfig;
use otmatch_core::engine::{CostTarget, StepConfig};
use otmatch_core::losses::LossWeights;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    TwoMoons,
    GaussianMixture,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    /// Synthetic training set size.
    pub n_train: usize,
    /// Synthetic test set size.
    pub n_test: usize,
    /// Two-moons noise scale.
    pub noise: f64,
    pub mixture_dim: usize,
    pub mixture_separation: f64,
    pub mixture_std: f64,
    pub idx_train_images: Option<PathBuf>,
    pub idx_train_labels: Option<PathBuf>,
    pub idx_test_images: Option<PathBuf>,
    pub idx_test_labels: Option<PathBuf>,

    /// Number of classes `K`.
    pub classes: usize,
    pub labels_per_class: usize,
    /// Labeled batch size `B`; must be a multiple of `K`.
    pub batch_size: usize,
    /// Unlabeled-to-labeled ratio `μ`.
    pub mu: usize,
    pub total_steps: u64,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub teacher_epsilon: f64,
    pub lambda: f64,
    pub w1: f64,
    pub w2: f64,
    pub cost_momentum: f64,
    pub cost_target: CostTarget,
    pub ema_decay: f64,
    pub threshold_decay: f64,
    pub seed: u64,
    pub eval_interval: u64,
    /// 0 writes only the final checkpoint.
    pub checkpoint_interval: u64,

    /// Hidden widths of the dense layers.
    pub hidden: Vec<usize>,
    /// Convolution settings, used for image datasets only.
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,

    pub weak_noise: f64,
    pub strong_noise_factor: f64,
    pub mask_fraction: f64,
    pub max_shift: usize,
    pub cutout_fraction: f64,
    pub brightness: f64,
    pub pixel_jitter: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let aug = AugmentConfig::default();
        Self {
            dataset: DatasetKind::TwoMoons,
            n_train: 1000,
            n_test: 1000,
            noise: 0.1,
            mixture_dim: 2,
            mixture_separation: 3.0,
            mixture_std: 1.0,
            idx_train_images: None,
            idx_train_labels: None,
            idx_test_images: None,
            idx_test_labels: None,
            classes: 2,
            labels_per_class: 32,
            batch_size: 64,
            mu: 7,
            total_steps: 20_000,
            base_lr: 0.03,
            momentum: 0.9,
            weight_decay: 5e-4,
            teacher_epsilon: 0.0,
            lambda: 0.5,
            w1: 1.0,
            w2: 0.001,
            cost_momentum: 0.999,
            cost_target: CostTarget::HeadCosine,
            ema_decay: 0.999,
            threshold_decay: 0.999,
            seed: 0,
            eval_interval: 512,
            checkpoint_interval: 0,
            hidden: vec![64, 64],
            conv_channels: 8,
            conv_kernel: 5,
            conv_stride: 2,
            weak_noise: aug.weak_noise,
            strong_noise_factor: aug.strong_noise_factor,
            mask_fraction: aug.mask_fraction,
            max_shift: aug.max_shift,
            cutout_fraction: aug.cutout_fraction,
            brightness: aug.brightness,
            pixel_jitter: aug.pixel_jitter,
        }
    }
}

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            weak_noise: self.weak_noise,
            strong_noise_factor: self.strong_noise_factor,
            mask_fraction: self.mask_fraction,
            max_shift: self.max_shift,
            cutout_fraction: self.cutout_fraction,
            brightness: self.brightness,
            pixel_jitter: self.pixel_jitter,
        }
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            weights: LossWeights {
                w1: self.w1,
                w2: self.w2,
                lambda: self.lambda,
            },
            teacher_epsilon: self.teacher_epsilon,
            cost_target: self.cost_target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(invalid("classes must be at least 2"));
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(self.classes) {
            return Err(invalid(format!(
                "batch_size {} must be a positive multiple of classes {}",
                self.batch_size, self.classes
            )));
        }
        if self.labels_per_class < self.batch_size / self.classes {
            return Err(invalid(format!(
                "labels_per_class {} is below batch_size / classes = {}",
                self.labels_per_class,
                self.batch_size / self.classes
            )));
        }
        if self.mu == 0 {
            return Err(invalid("mu must be at least 1"));
        }
        if self.total_steps == 0 {
            return Err(invalid("total_steps must be positive"));
        }
        if self.eval_interval == 0 {
            return Err(invalid("eval_interval must be positive"));
        }
        let unit = |name: &str, v: f64, closed: bool| {
            let ok = if closed { (0.0..=1.0).contains(&v) } else { (0.0..1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                Err(invalid(format!("{name} = {v} is outside {}", if closed { "[0, 1]" } else { "[0, 1)" })))
            }
        };
        unit("momentum", self.momentum, false)?;
        unit("threshold_decay", self.threshold_decay, false)?;
        unit("cost_momentum", self.cost_momentum, true)?;
        unit("ema_decay", self.ema_decay, true)?;
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(invalid(format!("base_lr = {} must be positive", self.base_lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid(format!("weight_decay = {} must be nonnegative", self.weight_decay)));
        }
        self.step_config().validate()?;
        self.augment().validate()?;
        match self.dataset {
            DatasetKind::TwoMoons => {
                if self.classes != 2 {
                    return Err(invalid("two_moons has exactly 2 classes"));
                }
                if !self.n_train.is_multiple_of(2) || !self.n_test.is_multiple_of(2) {
                    return Err(invalid("two_moons sizes must be even"));
                }
            }
            DatasetKind::GaussianMixture => {
                if !self.n_train.is_multiple_of(self.classes) || !self.n_test.is_multiple_of(self.classes) {
                    return Err(invalid("gaussian_mixture sizes must be multiples of classes"));
                }
            }
            DatasetKind::Idx => {
                if self.idx_train_images.is_none()
                    || self.idx_train_labels.is_none()
                    || self.idx_test_images.is_none()
                    || self.idx_test_labels.is_none()
                {
                    return Err(invalid("idx datasets need all four idx_* paths"));
                }
            }
        }
        if self.n_train < self.mu * self.batch_size && self.dataset != DatasetKind::Idx {
            return Err(invalid(format!(
                "n_train {} is below the unlabeled batch size {}",
                self.n_train,
                self.mu * self.batch_size
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        let cfg = TrainConfig::from_toml("").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.mu, 7);
        assert_eq!(cfg.cost_momentum, 0.999);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = TrainConfig {
            lambda: 0.15,
            cost_target: CostTarget::Binary,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_toml("batch_size = 5").is_err());
        assert!(TrainConfig::from_toml("batch_size = 4\nlabels_per_class = 1").is_err());
        assert!(TrainConfig::from_toml("lambda = -1.0").is_err());
        assert!(TrainConfig::from_toml("threshold_decay = 1.0").is_err());
        assert!(TrainConfig::from_toml("unknown_key = 3").is_err());
        assert!(TrainConfig::from_toml("dataset = \"idx\"").is_err());
        assert!(TrainConfig::from_toml("cost_momentum = 1.0").is_ok());
    }
}
