//! Depth completion networks built on [`crate::micrograd`].
//!
//! `L2L` is the sparsity-invariant baseline: five sparse convolutions from
//! sparse depth straight to dense depth. `F2L` adds an image branch over the
//! gray image and the segmentation prior, and a four-layer 3×3 head that
//! fuses it with the sparse branch output.

mod data;
mod eval;
mod train;

use std::fmt;
use std::path::Path;

pub use data::{desk_camera, desk_split, simulate_samples, TrainSample};
pub use eval::{evaluate_depth, nearest_fill_baseline, DepthEvalReport};
pub use train::{train, TrainConfig};

use crate::micrograd::{
    init_weights, read_checkpoint, write_checkpoint, Checkpoint, ConvLayer, Graph, LayerKind, LayerRecord, ParamSet,
    SparseConvLayer, Tensor, Var, DEFAULT_EPSILON,
};
use crate::sparsity::{segmentation_prior, PRIOR_CHANNELS};
use crate::{DepthImage, Error, Grid, Result};

/// `(kernel, filters)` of the sparse branch.
pub const SCNN_LAYERS: [(usize, usize); 5] = [(11, 32), (7, 32), (5, 32), (3, 32), (1, 1)];
/// `(kernel, filters)` of the image branch.
pub const IMAGE_LAYERS: [(usize, usize); 4] = [(11, 32), (7, 32), (5, 32), (1, 32)];
/// `(kernel, filters)` of the fusion head.
pub const HEAD_LAYERS: [(usize, usize); 4] = [(3, 32), (3, 32), (3, 32), (3, 1)];
/// Gray channel plus the prior.
pub const IMAGE_INPUT_CHANNELS: usize = 1 + PRIOR_CHANNELS;
/// Sparse output, image features, prior and propagated mask.
pub const HEAD_INPUT_CHANNELS: usize = 1 + 32 + PRIOR_CHANNELS + 1;
/// Relative jitter on the sparse branch's averaging start.
pub const INIT_JITTER: f64 = 0.1;
/// Same for the head's pass-through start; it sees 37 unnormalized channels.
pub const HEAD_JITTER: f64 = 0.01;
/// Depths enter and leave the network divided by this (meters).
pub const DEFAULT_DEPTH_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    L2L,
    #[default]
    F2L,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2l" => Ok(Self::L2L),
            "f2l" => Ok(Self::F2L),
            _ => Err(Error::InvalidArgument(format!("unknown variant {s:?} (l2l, f2l)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L2L => "l2l",
            Self::F2L => "f2l",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CompletionModel {
    pub variant: Variant,
    pub seed: u64,
    pub depth_scale: f64,
    pub params: ParamSet,
    pub scnn_branch: Vec<SparseConvLayer>,
    pub image_branch: Vec<ConvLayer>,
    pub fusion_head: Vec<ConvLayer>,
}

/// Network inputs for a batch, already normalized.
#[derive(Debug, Clone)]
pub struct ModelInput {
    /// `(N, 1, H, W)` sparse depth over the depth scale
    pub depth: Tensor,
    /// `(N, 1, H, W)` observation mask
    pub mask: Tensor,
    /// `(N, 4, H, W)` gray image and prior; F2L only
    pub guide: Option<Tensor>,
}

pub fn build_model(variant: Variant, seed: u64) -> CompletionModel {
    let mut params = ParamSet::new();
    let mut layer_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut next_seed = || {
        layer_seed = layer_seed.wrapping_add(0xD1B5_4A32_D192_ED03);
        layer_seed
    };
    let mut scnn_branch = Vec::new();
    let mut in_ch = 1;
    for (i, &(k, out)) in SCNN_LAYERS.iter().enumerate() {
        let l = SparseConvLayer::new(&mut params, &format!("scnn{i}"), in_ch, out, k, DEFAULT_EPSILON)
            .expect("static layer table");
        init_weights(&mut params, &l.conv, next_seed());
        // start as a cascade of masked averages; the He draws, rescaled to
        // unit variance, become a relative jitter that breaks the symmetry
        let mean = 1.0 / in_ch as f64;
        let he_std = (2.0 / l.conv.fan_in() as f64).sqrt();
        params
            .get_mut(l.conv.kernel)
            .data_mut()
            .iter_mut()
            .for_each(|w| *w = mean * (1.0 + INIT_JITTER * *w / he_std));
        scnn_branch.push(l);
        in_ch = out;
    }
    let mut image_branch = Vec::new();
    let mut fusion_head = Vec::new();
    if variant == Variant::F2L {
        let mut dense = |name: &str, table: &[(usize, usize)], mut in_ch: usize, params: &mut ParamSet| {
            table
                .iter()
                .enumerate()
                .map(|(i, &(k, out))| {
                    let l = ConvLayer::new(params, &format!("{name}{i}"), in_ch, out, k).expect("static layer table");
                    init_weights(params, &l, next_seed());
                    in_ch = out;
                    l
                })
                .collect::<Vec<_>>()
        };
        image_branch = dense("image", &IMAGE_LAYERS, IMAGE_INPUT_CHANNELS, &mut params);
        fusion_head = dense("head", &HEAD_LAYERS, HEAD_INPUT_CHANNELS, &mut params);
        // the head starts by passing the sparse-branch channel through
        for l in &fusion_head {
            let kernel = params.get_mut(l.kernel).data_mut();
            kernel.iter_mut().for_each(|w| *w *= HEAD_JITTER);
            kernel[(l.k / 2) * l.k + l.k / 2] += 1.0;
        }
    }
    CompletionModel {
        variant,
        seed,
        depth_scale: DEFAULT_DEPTH_SCALE,
        params,
        scnn_branch,
        image_branch,
        fusion_head,
    }
}

impl CompletionModel {
    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Sparse depth, mask and (for F2L) guide tensors for one frame.
    pub fn prepare(&self, sparse: &DepthImage, gray: Option<&Grid>) -> Result<ModelInput> {
        sparse.validate()?;
        let (w, h) = (sparse.width, sparse.height);
        if w * h == 0 {
            return Err(Error::Shape("empty depth image".into()));
        }
        let depth = Tensor::from_vec(&[1, 1, h, w], sparse.depth.iter().map(|d| d / self.depth_scale).collect())?;
        let mask = Tensor::from_vec(&[1, 1, h, w], sparse.mask.iter().map(|&m| f64::from(m)).collect())?;
        let guide = match self.variant {
            Variant::L2L => None,
            Variant::F2L => {
                // without a camera image the gray plane and the image-edge
                // prior channel stay zero
                let prior = segmentation_prior(sparse, gray)?;
                let mut data = Vec::with_capacity(IMAGE_INPUT_CHANNELS * w * h);
                match gray {
                    Some(g) => data.extend_from_slice(&g.data),
                    None => data.resize(w * h, 0.0),
                }
                data.extend_from_slice(prior.data());
                Some(Tensor::from_vec(&[1, IMAGE_INPUT_CHANNELS, h, w], data)?)
            }
        };
        Ok(ModelInput { depth, mask, guide })
    }

    /// Record the forward pass. Returns the prediction in meters and the
    /// mask propagated through the sparse branch.
    pub fn forward(&self, g: &mut Graph, input: &ModelInput) -> Result<(Var, Tensor)> {
        let mut x = g.input(input.depth.clone());
        let mut mask = input.mask.clone();
        let last = self.scnn_branch.len() - 1;
        for (i, layer) in self.scnn_branch.iter().enumerate() {
            let (y, m) = g.sparse_conv2d(x, &mask, layer, &self.params)?;
            x = if i < last { g.relu(y) } else { y };
            mask = m;
        }
        if self.variant == Variant::L2L {
            return Ok((g.scale(x, self.depth_scale), mask));
        }
        let guide = input
            .guide
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("F2L forward needs the guide tensor".into()))?;
        let guide_var = g.input(guide.clone());
        let mut feat = guide_var;
        for layer in &self.image_branch {
            let y = g.conv2d(feat, layer, &self.params)?;
            feat = g.relu(y);
        }
        let (n, _, h, w) = guide.nchw()?;
        let hw = h * w;
        let mut prior = Vec::with_capacity(n * PRIOR_CHANNELS * hw);
        for s in 0..n {
            let off = s * IMAGE_INPUT_CHANNELS * hw;
            prior.extend_from_slice(&guide.data()[off + hw..off + IMAGE_INPUT_CHANNELS * hw]);
        }
        let prior = g.input(Tensor::from_vec(&[n, PRIOR_CHANNELS, h, w], prior)?);
        let prop = g.input(mask.clone());
        let mut y = g.concat(&[x, feat, prior, prop])?;
        let last = self.fusion_head.len() - 1;
        for (i, layer) in self.fusion_head.iter().enumerate() {
            let z = g.conv2d(y, layer, &self.params)?;
            y = if i < last { g.relu(z) } else { z };
        }
        Ok((g.scale(y, self.depth_scale), mask))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut layers = Vec::new();
        let mut push = |kind: LayerKind, l: &ConvLayer, epsilon: f64| {
            layers.push(LayerRecord {
                kind,
                name: self.params.name(l.kernel).trim_end_matches(".kernel").to_string(),
                epsilon,
                kernel: strip(self.params.get(l.kernel)),
                bias: strip(self.params.get(l.bias)),
            });
        };
        for l in &self.scnn_branch {
            push(LayerKind::Sparse, &l.conv, l.epsilon);
        }
        for l in self.image_branch.iter().chain(&self.fusion_head) {
            push(LayerKind::Dense, l, 0.0);
        }
        Checkpoint {
            header: vec![
                ("model".into(), "completion".into()),
                ("variant".into(), self.variant.to_string()),
                ("seed".into(), self.seed.to_string()),
                ("depth_scale".into(), format!("{:e}", self.depth_scale)),
            ],
            layers,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let field = |k: &str| {
            ckpt.header_value(k)
                .ok_or_else(|| Error::Format(format!("checkpoint header lacks {k:?}")))
        };
        if field("model")? != "completion" {
            return Err(Error::Format("not a completion checkpoint".into()));
        }
        let variant: Variant = field("variant")?.parse()?;
        let seed = field("seed")?
            .parse()
            .map_err(|_| Error::Format("bad seed in checkpoint".into()))?;
        let depth_scale: f64 = field("depth_scale")?
            .parse()
            .map_err(|_| Error::Format("bad depth_scale in checkpoint".into()))?;
        if !(depth_scale.is_finite() && depth_scale > 0.0) {
            return Err(Error::Format(format!("depth_scale {depth_scale} must be positive")));
        }
        let mut model = build_model(variant, seed);
        model.depth_scale = depth_scale;
        let mut targets: Vec<(LayerKind, ConvLayer)> =
            model.scnn_branch.iter().map(|l| (LayerKind::Sparse, l.conv.clone())).collect();
        targets.extend(model.image_branch.iter().chain(&model.fusion_head).map(|l| (LayerKind::Dense, l.clone())));
        if targets.len() != ckpt.layers.len() {
            return Err(Error::Format(format!(
                "{} layers in checkpoint, {variant} has {}",
                ckpt.layers.len(),
                targets.len()
            )));
        }
        for (i, ((kind, layer), rec)) in targets.iter().zip(&ckpt.layers).enumerate() {
            if *kind != rec.kind {
                return Err(Error::Format(format!("layer {i} ({}) has the wrong kind", rec.name)));
            }
            for (id, t) in [(layer.kernel, &rec.kernel), (layer.bias, &rec.bias)] {
                let dst = model.params.get_mut(id);
                if dst.shape() != t.shape() {
                    return Err(Error::Format(format!(
                        "layer {} tensor {:?}, expected {:?}",
                        rec.name,
                        t.shape(),
                        dst.shape()
                    )));
                }
                dst.data_mut().copy_from_slice(t.data());
            }
            if *kind == LayerKind::Sparse {
                if !(rec.epsilon > 0.0) {
                    return Err(Error::Format(format!("layer {} epsilon {} must be positive", rec.name, rec.epsilon)));
                }
                model.scnn_branch[i].epsilon = rec.epsilon;
            }
        }
        if !model.params.all_finite() {
            return Err(Error::Format("checkpoint holds non-finite weights".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&read_checkpoint(path)?)
    }
}

fn strip(t: &Tensor) -> Tensor {
    Tensor::from_vec(t.shape(), t.data().to_vec()).expect("same shape")
}

/// Dense depth from one sparse frame. L2L marks the pixels reached by the
/// propagated mask, F2L every pixel; negative or zero predictions are
/// invalid either way.
pub fn complete_depth(model: &CompletionModel, sparse: &DepthImage, gray: Option<&Grid>) -> Result<DepthImage> {
    let input = model.prepare(sparse, gray)?;
    let mut g = Graph::new();
    let (pred, mask) = model.forward(&mut g, &input)?;
    let mut out = DepthImage::empty(sparse.width, sparse.height);
    for (i, (&d, &m)) in g.value(pred).data().iter().zip(mask.data()).enumerate() {
        let keep = match model.variant {
            Variant::L2L => m > 0.0,
            Variant::F2L => true,
        };
        if keep && d.is_finite() && d > 0.0 {
            out.depth[i] = d;
            out.mask[i] = 1;
        }
    }
    Ok(out)
}
