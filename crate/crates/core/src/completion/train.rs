use std::hash::{DefaultHasher, Hash, Hasher};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CompletionModel, ModelInput, TrainSample};
use crate::micrograd::{Graph, Reduction, Sgd, SgdConfig, Tensor, DEFAULT_LAMBDA};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub sgd: SgdConfig,
    pub lambda: f64,
    pub reduction: Reduction,
    /// random `(width, height)` crop per sample and step; `None` trains on
    /// whole frames
    pub crop: Option<(usize, usize)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            lambda: DEFAULT_LAMBDA,
            reduction: Reduction::Mean,
            crop: None,
        }
    }
}

struct Prepared {
    input: ModelInput,
    gt: Tensor,
    gt_mask: Tensor,
    key: u64,
}

fn content_key(s: &TrainSample) -> u64 {
    let mut h = DefaultHasher::new();
    for d in s.sparse.depth.iter().chain(&s.gt.depth) {
        d.to_bits().hash(&mut h);
    }
    if let Some(g) = &s.gray {
        for v in &g.data {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Rows `r0..r0+h`, columns `c0..c0+w` of every channel of a `(1, C, H, W)` tensor.
fn crop(t: &Tensor, r0: usize, c0: usize, w: usize, h: usize) -> Tensor {
    let (_, c, full_h, full_w) = t.nchw().expect("4-d");
    let mut data = Vec::with_capacity(c * w * h);
    for ch in 0..c {
        for r in r0..r0 + h {
            let off = (ch * full_h + r) * full_w + c0;
            data.extend_from_slice(&t.data()[off..off + w]);
        }
    }
    Tensor::from_vec(&[1, c, h, w], data).expect("sized")
}

fn stack(parts: &[Tensor]) -> Tensor {
    let mut shape = parts[0].shape().to_vec();
    shape[0] = parts.iter().map(|t| t.shape()[0]).sum();
    let data = parts.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::from_vec(&shape, data).expect("matching shapes")
}

/// Minimize the masked L2+L1 depth loss by SGD. Returns the mean batch
/// loss of every epoch, measured before each step.
///
/// Samples are put in a canonical content order before shuffling, so the
/// result depends on the seed and the set of samples, not on their order.
pub fn train(model: &mut CompletionModel, samples: &[TrainSample], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.sgd.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one sample".into()));
    }
    let size = (samples[0].sparse.width, samples[0].sparse.height);
    let mut prepared = Vec::with_capacity(samples.len());
    for s in samples {
        if (s.sparse.width, s.sparse.height) != size {
            return Err(Error::Shape("training frames differ in size".into()));
        }
        let (w, h) = size;
        prepared.push(Prepared {
            input: model.prepare(&s.sparse, s.gray.as_ref())?,
            gt: Tensor::from_vec(&[1, 1, h, w], s.gt.depth.clone())?,
            gt_mask: Tensor::from_vec(&[1, 1, h, w], s.gt.mask.iter().map(|&m| f64::from(m)).collect())?,
            key: content_key(s),
        });
    }
    prepared.sort_by_key(|p| p.key);
    let (cw, ch) = cfg.crop.unwrap_or(size);
    if cw == 0 || ch == 0 || cw > size.0 || ch > size.1 {
        return Err(Error::InvalidArgument(format!(
            "crop {cw}x{ch} does not fit {}x{} frames",
            size.0, size.1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sgd.seed);
    let mut sgd = Sgd::new(cfg.sgd)?;
    let batch = cfg.sgd.batch.min(prepared.len());
    let mut history = Vec::with_capacity(cfg.sgd.epochs);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 0..cfg.sgd.epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(batch) {
            let mut parts: [Vec<Tensor>; 5] = Default::default();
            for &i in chunk {
                let p = &prepared[i];
                let r0 = rng.random_range(0..=size.1 - ch);
                let c0 = rng.random_range(0..=size.0 - cw);
                let mut take = |k: usize, t: &Tensor| parts[k].push(crop(t, r0, c0, cw, ch));
                take(0, &p.input.depth);
                take(1, &p.input.mask);
                take(2, &p.gt);
                take(3, &p.gt_mask);
                if let Some(gd) = &p.input.guide {
                    take(4, gd);
                }
            }
            let input = ModelInput {
                depth: stack(&parts[0]),
                mask: stack(&parts[1]),
                guide: (!parts[4].is_empty()).then(|| stack(&parts[4])),
            };
            let (gt, gt_mask) = (stack(&parts[2]), stack(&parts[3]));
            let mut g = Graph::new();
            let (pred, _) = model.forward(&mut g, &input)?;
            let loss = g.loss_l2_l1(pred, &gt, &gt_mask, cfg.lambda, cfg.reduction)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            g.backward(loss, &mut model.params)?;
            sgd.step(&mut model.params);
            if !model.params.all_finite() {
                return Err(Error::Diverged { epoch });
            }
            losses.push(value);
        }
        // sorted so the epoch mean does not depend on the batch order
        losses.sort_by(f64::total_cmp);
        history.push(losses.iter().sum::<f64>() / losses.len() as f64);
        log::debug!("epoch {epoch}: loss {:.6e}", history[epoch]);
    }
    Ok(history)
}
