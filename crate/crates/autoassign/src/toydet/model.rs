//! A tiny convolutional dense detector: a strided conv backbone feeding a
//! 2-3 level pyramid, shared head convs, and three output maps per level
//! (class logits, one objectness logit, four exp-activated LTRB offsets).

use thiserror::Error;

use crate::assign::DensePredictions;
use crate::diffcore::{DiffArray, DiffResult, Gradients, Parameter, Tape};
use crate::geometry::{LocationSet, PyramidLevelSpec};
use crate::rng::SplitMix64;

/// Desk-scale bound on trainable parameters.
pub const PARAMETER_BUDGET: usize = 50_000;

#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("invalid model config: {detail}")]
    InvalidConfig { detail: String },

    #[error("model has {count} parameters, budget is {budget}")]
    TooManyParameters { count: usize, budget: usize },

    #[error(transparent)]
    Diff(#[from] crate::diffcore::DiffError),
}

#[derive(Debug, Clone)]
pub struct DetectorConfig {
    pub image_size: usize,
    pub categories: usize,
    pub stem_channels: usize,
    pub mid_channels: usize,
    pub head_channels: usize,
    /// Pyramid strides, ascending, starting at 4 and doubling.
    pub strides: Vec<usize>,
    /// Bias initialization for the classification and objectness heads;
    /// negative values start the dense logits near "background".
    pub cls_bias_init: f64,
}

impl DetectorConfig {
    /// The benchmark model: 64x64 input, strides {4, 8}.
    pub fn standard(categories: usize) -> Self {
        DetectorConfig {
            image_size: 64,
            categories,
            stem_channels: 6,
            mid_channels: 12,
            head_channels: 12,
            strides: vec![4, 8],
            cls_bias_init: -2.0,
        }
    }

    /// A few hundred parameters on a 16x16 input; small enough that full
    /// finite-difference sweeps over every parameter stay fast.
    pub fn tiny(categories: usize) -> Self {
        DetectorConfig {
            image_size: 16,
            categories,
            stem_channels: 3,
            mid_channels: 4,
            head_channels: 4,
            strides: vec![4, 8],
            cls_bias_init: -2.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        if self.categories == 0 {
            problems.push("categories must be positive".into());
        }
        if self.stem_channels == 0 || self.mid_channels == 0 || self.head_channels == 0 {
            problems.push("channel counts must be positive".into());
        }
        if self.strides.is_empty() || self.strides[0] != 4 {
            problems.push(format!("strides must start at 4, got {:?}", self.strides));
        }
        if self.strides.windows(2).any(|w| w[1] != w[0] * 2) {
            problems.push(format!(
                "strides must double per level, got {:?}",
                self.strides
            ));
        }
        if let Some(&max) = self.strides.last() {
            if !self.image_size.is_multiple_of(max) || self.image_size / max == 0 {
                problems.push(format!(
                    "image_size {} must be a positive multiple of the coarsest stride {max}",
                    self.image_size
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig {
                detail: problems.join("; "),
            })
        }
    }
}

/// Indices into the parameter list for one conv layer.
#[derive(Debug, Clone, Copy)]
struct ConvIds {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
pub struct DetectorModel {
    pub config: DetectorConfig,
    pub params: Vec<Parameter>,
    stem: ConvIds,
    downs: Vec<ConvIds>,
    head: ConvIds,
    cls: ConvIds,
    obj: ConvIds,
    reg: ConvIds,
}

impl DetectorModel {
    pub fn new(config: DetectorConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = SplitMix64::derive(seed, 0x6d6f64656c);
        let mut params = Vec::new();

        let mut conv =
            |name: &str, f: usize, c: usize, bias_init: f64, rng: &mut SplitMix64| -> ConvIds {
                // He initialization for 3x3 kernels
                let std = (2.0 / (c as f64 * 9.0)).sqrt();
                let weight: Vec<f64> = (0..f * c * 9)
                    .map(|_| rng.normal_scaled(0.0, std))
                    .collect();
                params.push(Parameter::new(
                    format!("{name}.weight"),
                    vec![f, c, 3, 3],
                    weight,
                    true,
                ));
                let w_id = params.len() - 1;
                params.push(Parameter::new(
                    format!("{name}.bias"),
                    vec![f, 1, 1],
                    vec![bias_init; f],
                    true,
                ));
                ConvIds {
                    weight: w_id,
                    bias: params.len() - 1,
                }
            };

        let stem = conv("stem", config.stem_channels, 1, 0.0, &mut rng);
        let mut downs = Vec::new();
        let mut in_ch = config.stem_channels;
        for (i, _) in config.strides.iter().enumerate() {
            downs.push(conv(
                &format!("down{i}"),
                config.mid_channels,
                in_ch,
                0.0,
                &mut rng,
            ));
            in_ch = config.mid_channels;
        }
        let head = conv(
            "head",
            config.head_channels,
            config.mid_channels,
            0.0,
            &mut rng,
        );
        let cls = conv(
            "cls",
            config.categories,
            config.head_channels,
            config.cls_bias_init,
            &mut rng,
        );
        let obj = conv(
            "obj",
            1,
            config.head_channels,
            config.cls_bias_init,
            &mut rng,
        );
        let reg = conv("reg", 4, config.head_channels, 0.0, &mut rng);

        let model = DetectorModel {
            config,
            params,
            stem,
            downs,
            head,
            cls,
            obj,
            reg,
        };
        let count = model.param_count();
        if count > PARAMETER_BUDGET {
            return Err(ModelError::TooManyParameters {
                count,
                budget: PARAMETER_BUDGET,
            });
        }
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn level_specs(&self) -> Vec<PyramidLevelSpec> {
        self.config
            .strides
            .iter()
            .map(|&s| PyramidLevelSpec {
                stride: s,
                height: self.config.image_size / s,
                width: self.config.image_size / s,
            })
            .collect()
    }

    pub fn locations(&self) -> LocationSet {
        LocationSet::new(&self.level_specs()).expect("validated config yields a valid pyramid")
    }

    /// Forward pass over explicit parameter arrays (parallel to
    /// `self.params`). Constants produce an untracked result; tape leaves
    /// produce a tracked one.
    pub fn forward_with(
        &self,
        image: &[f64],
        arrays: &[DiffArray],
    ) -> DiffResult<DensePredictions> {
        debug_assert_eq!(arrays.len(), self.params.len());
        let size = self.config.image_size;
        debug_assert_eq!(image.len(), size * size);
        let input = DiffArray::constant(vec![1, size, size], image.to_vec())?;

        let conv_block = |x: &DiffArray, ids: ConvIds, stride: usize| -> DiffResult<DiffArray> {
            Ok(x.conv2d(&arrays[ids.weight], stride, 1)?
                .add(&arrays[ids.bias])?
                .relu())
        };

        let mut trunk = conv_block(&input, self.stem, 2)?;
        let mut level_rows: Vec<(DiffArray, DiffArray, DiffArray)> = Vec::new();
        for (i, &stride) in self.config.strides.iter().enumerate() {
            trunk = conv_block(&trunk, self.downs[i], 2)?;
            let feat = conv_block(&trunk, self.head, 1)?;
            let cls = feat
                .conv2d(&arrays[self.cls.weight], 1, 1)?
                .add(&arrays[self.cls.bias])?
                .channels_last()?;
            let obj = feat
                .conv2d(&arrays[self.obj.weight], 1, 1)?
                .add(&arrays[self.obj.bias])?
                .channels_last()?;
            let reg = feat
                .conv2d(&arrays[self.reg.weight], 1, 1)?
                .add(&arrays[self.reg.bias])?
                .channels_last()?;
            // exp keeps offsets strictly positive; the per-level stride scale
            // lets both levels regress in comparable logit units. Logits are
            // bounded so unsupervised locations can never underflow exp to 0.
            let ltrb = reg.clamp(-12.0, 12.0)?.exp().mul_scalar(stride as f64);
            level_rows.push((cls, obj, ltrb));
        }

        let cls_parts: Vec<&DiffArray> = level_rows.iter().map(|(c, _, _)| c).collect();
        let obj_parts: Vec<&DiffArray> = level_rows.iter().map(|(_, o, _)| o).collect();
        let ltrb_parts: Vec<&DiffArray> = level_rows.iter().map(|(_, _, l)| l).collect();
        Ok(DensePredictions {
            cls_logits: DiffArray::concat_rows(&cls_parts)?,
            obj_logits: DiffArray::concat_rows(&obj_parts)?,
            ltrb: DiffArray::concat_rows(&ltrb_parts)?,
        })
    }

    /// Training forward: binds every parameter as a tracked leaf and returns
    /// the bindings for gradient harvesting.
    pub fn forward_train(
        &self,
        tape: &Tape,
        image: &[f64],
    ) -> DiffResult<(DensePredictions, Vec<DiffArray>)> {
        let bound: Vec<DiffArray> = self
            .params
            .iter()
            .map(|p| p.bind(tape))
            .collect::<DiffResult<_>>()?;
        let preds = self.forward_with(image, &bound)?;
        Ok((preds, bound))
    }

    /// Inference forward over constants: records nothing.
    pub fn forward_inference(&self, image: &[f64]) -> DiffResult<DensePredictions> {
        let consts: Vec<DiffArray> = self.params.iter().map(|p| p.as_constant()).collect();
        self.forward_with(image, &consts)
    }

    pub fn accumulate(&mut self, grads: &Gradients, bound: &[DiffArray]) {
        for (p, b) in self.params.iter_mut().zip(bound) {
            p.accumulate(grads, b);
        }
    }

    /// Conv weights (weight-decay group).
    pub fn weight_params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params
            .iter_mut()
            .filter(|p| p.name.ends_with(".weight"))
    }

    /// Biases (no weight decay).
    pub fn bias_params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut().filter(|p| p.name.ends_with(".bias"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_rows_match_location_count() {
        let model = DetectorModel::new(DetectorConfig::standard(3), 1).unwrap();
        let locations = model.locations();
        assert_eq!(locations.len(), 16 * 16 + 8 * 8);
        let image = vec![0.1; 64 * 64];
        let preds = model.forward_inference(&image).unwrap();
        assert_eq!(preds.cls_logits.shape(), &[locations.len(), 3]);
        assert_eq!(preds.obj_logits.shape(), &[locations.len(), 1]);
        assert_eq!(preds.ltrb.shape(), &[locations.len(), 4]);
    }

    #[test]
    fn ltrb_strictly_positive() {
        let model = DetectorModel::new(DetectorConfig::standard(2), 7).unwrap();
        let mut rng = SplitMix64::new(3);
        let image: Vec<f64> = (0..64 * 64).map(|_| rng.next_f64()).collect();
        let preds = model.forward_inference(&image).unwrap();
        assert!(preds.ltrb.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let model = DetectorModel::new(DetectorConfig::standard(2), 9).unwrap();
        let image = vec![0.25; 64 * 64];
        let a = model.forward_inference(&image).unwrap();
        let b = model.forward_inference(&image).unwrap();
        assert_eq!(a.cls_logits.values(), b.cls_logits.values());
        assert_eq!(a.ltrb.values(), b.ltrb.values());
    }

    #[test]
    fn parameter_budget_respected() {
        let model = DetectorModel::new(DetectorConfig::standard(3), 1).unwrap();
        assert!(
            model.param_count() <= PARAMETER_BUDGET,
            "{}",
            model.param_count()
        );
        let tiny = DetectorModel::new(DetectorConfig::tiny(2), 1).unwrap();
        assert!(
            tiny.param_count() < 1000,
            "tiny model has {}",
            tiny.param_count()
        );
    }

    #[test]
    fn same_seed_same_init() {
        let a = DetectorModel::new(DetectorConfig::standard(2), 5).unwrap();
        let b = DetectorModel::new(DetectorConfig::standard(2), 5).unwrap();
        for (x, y) in a.params.iter().zip(&b.params) {
            assert_eq!(x.values, y.values);
        }
    }
}
