//! 1-D U-Net noise predictor with sinusoidal step conditioning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ops, Var};
use crate::layers::{
    self, conv1d_layer, dense, group_norm_layer, norm_groups, sinusoidal_embedding, Activation,
};
use crate::params::{Bound, ParameterSet};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Window length (the temporal axis seen by convolutions).
    pub window: usize,
    /// Input/output channels, i.e. the number of series dimensions.
    pub channels: usize,
    /// Number of stride-2 downsamplings.
    pub depth: usize,
    /// Channel width at the first level; doubles per level.
    pub base_width: usize,
    /// Sinusoidal step-embedding width.
    pub emb_dim: usize,
    pub activation: Activation,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            window: 64,
            channels: 5,
            depth: 2,
            base_width: 16,
            emb_dim: 32,
            activation: Activation::Silu,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.channels == 0 || self.base_width == 0 {
            return Err(Error::Config("denoiser dimensions must be positive".into()));
        }
        if self.window % (1 << self.depth) != 0 {
            return Err(Error::Config(format!(
                "window {} not divisible by 2^depth = {}",
                self.window,
                1 << self.depth
            )));
        }
        if self.emb_dim < 2 || self.emb_dim % 2 != 0 {
            return Err(Error::Config(format!("emb_dim {} must be even and >= 2", self.emb_dim)));
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_width << level
    }
}

fn init_res_block<F: Scalar>(
    ps: &mut ParameterSet<F>,
    prefix: &str,
    cin: usize,
    cout: usize,
    emb_dim: usize,
    rng: &mut RngStream,
) -> Result<()> {
    layers::init_group_norm(ps, &format!("{prefix}.norm1"), cin)?;
    layers::init_conv1d(ps, &format!("{prefix}.conv1"), cout, cin, 3, rng)?;
    layers::init_dense(ps, &format!("{prefix}.emb"), cout, emb_dim, rng)?;
    layers::init_group_norm(ps, &format!("{prefix}.norm2"), cout)?;
    layers::init_conv1d(ps, &format!("{prefix}.conv2"), cout, cout, 3, rng)?;
    if cin != cout {
        layers::init_conv1d(ps, &format!("{prefix}.skip"), cout, cin, 1, rng)?;
    }
    Ok(())
}

fn res_block<F: Scalar>(
    bound: &Bound<F>,
    prefix: &str,
    x: &Var<F>,
    temb: &Var<F>,
    cin: usize,
    cout: usize,
    act: Activation,
) -> Var<F> {
    let h = act.apply(&group_norm_layer(bound, &format!("{prefix}.norm1"), x, norm_groups(cin)));
    let h = conv1d_layer(bound, &format!("{prefix}.conv1"), &h, 1, 1);
    // step conditioning: a learned per-channel bias from the embedding
    let e = dense(bound, &format!("{prefix}.emb"), temb);
    let e = ops::reshape(&e, vec![cout]);
    let h = ops::add_channels(&h, &e);
    let h = act.apply(&group_norm_layer(bound, &format!("{prefix}.norm2"), &h, norm_groups(cout)));
    let h = conv1d_layer(bound, &format!("{prefix}.conv2"), &h, 1, 1);
    let shortcut = if cin == cout {
        x.clone()
    } else {
        conv1d_layer(bound, &format!("{prefix}.skip"), x, 1, 0)
    };
    ops::add(&h, &shortcut)
}

/// Encoder-decoder noise predictor. Parameters live in a [`ParameterSet`];
/// the forward pass is a free function so frozen and trainable bindings share
/// one code path.
#[derive(Clone, Debug)]
pub struct UNet<F: Scalar> {
    pub config: DenoiserConfig,
    pub params: ParameterSet<F>,
}

impl<F: Scalar> UNet<F> {
    pub fn init(config: DenoiserConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut ps = ParameterSet::new();
        let c0 = config.base_width;
        let e = config.emb_dim;

        layers::init_dense(&mut ps, "temb.fc1", e, e, rng)?;
        layers::init_dense(&mut ps, "temb.fc2", e, e, rng)?;
        layers::init_conv1d(&mut ps, "stem", c0, config.channels, 3, rng)?;
        for level in 0..config.depth {
            let c = config.width(level);
            init_res_block(&mut ps, &format!("down{level}.res"), c, c, e, rng)?;
            layers::init_conv1d(&mut ps, &format!("down{level}.ds"), config.width(level + 1), c, 3, rng)?;
        }
        let cmid = config.width(config.depth);
        init_res_block(&mut ps, "mid.res", cmid, cmid, e, rng)?;
        for level in (0..config.depth).rev() {
            let c = config.width(level);
            layers::init_conv1d(&mut ps, &format!("up{level}.us"), c, config.width(level + 1), 3, rng)?;
            init_res_block(&mut ps, &format!("up{level}.res"), 2 * c, c, e, rng)?;
        }
        layers::init_group_norm(&mut ps, "head.norm", c0)?;
        layers::init_conv1d(&mut ps, "head.conv", config.channels, c0, 3, rng)?;

        Ok(Self { config, params: ps })
    }

    pub fn forward(&self, bound: &Bound<F>, x: &Var<F>, n: usize) -> Result<Var<F>> {
        unet_forward(&self.config, bound, x, n)
    }
}

/// Forward pass: `x [B, channels, window]`, step index `n` -> same shape.
pub fn unet_forward<F: Scalar>(
    cfg: &DenoiserConfig,
    bound: &Bound<F>,
    x: &Var<F>,
    n: usize,
) -> Result<Var<F>> {
    let shape = x.shape();
    if shape.len() != 3 || shape[1] != cfg.channels || shape[2] != cfg.window {
        return Err(Error::ShapeMismatch {
            context: "unet".into(),
            expected: format!("[B, {}, {}]", cfg.channels, cfg.window),
            got: format!("{shape:?}"),
        });
    }
    let act = cfg.activation;

    let temb_raw = Var::constant(
        sinusoidal_embedding::<F>(n, cfg.emb_dim)
            .reshaped(vec![1, cfg.emb_dim])
            .expect("embedding shape"),
    );
    let temb = dense(bound, "temb.fc2", &ops::silu(&dense(bound, "temb.fc1", &temb_raw)));

    let mut h = conv1d_layer(bound, "stem", x, 1, 1);
    let mut skips: Vec<Var<F>> = Vec::with_capacity(cfg.depth);
    for level in 0..cfg.depth {
        let c = cfg.width(level);
        h = res_block(bound, &format!("down{level}.res"), &h, &temb, c, c, act);
        skips.push(h.clone());
        h = conv1d_layer(bound, &format!("down{level}.ds"), &h, 2, 1);
    }
    let cmid = cfg.width(cfg.depth);
    h = res_block(bound, "mid.res", &h, &temb, cmid, cmid, act);
    for level in (0..cfg.depth).rev() {
        let c = cfg.width(level);
        h = ops::upsample_nearest(&h, 2);
        h = conv1d_layer(bound, &format!("up{level}.us"), &h, 1, 1);
        h = ops::concat(&[h, skips[level].clone()], 1);
        h = res_block(bound, &format!("up{level}.res"), &h, &temb, 2 * c, c, act);
    }
    let h = act.apply(&group_norm_layer(bound, "head.norm", &h, norm_groups(cfg.base_width)));
    Ok(conv1d_layer(bound, "head.conv", &h, 1, 1))
}

/// Inference-only prediction on plain tensors.
pub fn unet_predict<F: Scalar>(
    cfg: &DenoiserConfig,
    bound: &Bound<F>,
    x: &Tensor<F>,
    n: usize,
) -> Result<Tensor<F>> {
    let xv = Var::constant(x.clone());
    Ok(unet_forward(cfg, bound, &xv, n)?.value().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shape_matches_input_for_all_steps() {
        let cfg = DenoiserConfig {
            window: 16,
            channels: 3,
            depth: 2,
            base_width: 4,
            emb_dim: 8,
            activation: Activation::Silu,
        };
        let mut rng = RngStream::new(5);
        let unet = UNet::<f32>::init(cfg.clone(), &mut rng).unwrap();
        let bound = unet.params.bind(false);
        let x = rng.normal_tensor::<f32>(&[2, 3, 16]);
        for n in [1usize, 7, 100] {
            let y = unet_predict(&cfg, &bound, &x, n).unwrap();
            assert_eq!(y.shape(), x.shape());
            assert!(y.is_all_finite());
        }
    }

    #[test]
    fn window_depth_mismatch_rejected() {
        let cfg = DenoiserConfig {
            window: 20,
            depth: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn step_conditioning_changes_output() {
        let cfg = DenoiserConfig {
            window: 8,
            channels: 2,
            depth: 1,
            base_width: 4,
            emb_dim: 8,
            activation: Activation::Silu,
        };
        let mut rng = RngStream::new(11);
        let unet = UNet::<f64>::init(cfg.clone(), &mut rng).unwrap();
        let bound = unet.params.bind(false);
        let x = rng.normal_tensor::<f64>(&[1, 2, 8]);
        let y1 = unet_predict(&cfg, &bound, &x, 1).unwrap();
        let y2 = unet_predict(&cfg, &bound, &x, 90).unwrap();
        assert_ne!(y1, y2, "different steps should produce different predictions");
    }
}
