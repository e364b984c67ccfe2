//! The ε-prediction U-Net.
//!
//! Layout for `depth` resolution levels with channel multipliers `1, 2, 4, 4…`:
//! a sinusoidal step embedding feeds a two-layer MLP; an input convolution is
//! followed per level by `res_blocks` residual blocks (group norm, SiLU,
//! 3×3 convolutions, additive step embedding) and a stride-2 downsampling
//! convolution between levels; one middle residual block; the decoder mirrors
//! the encoder, upsampling by nearest neighbour plus convolution and
//! concatenating the encoder output of the same level; group norm, SiLU and a
//! 3×3 convolution map back to `d` channels. There is no attention.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{
    silu, silu_backward, timestep_embedding, upsample2, upsample2_backward, Conv2d, ConvCache,
    GroupNorm, GroupNormCache, Linear, ParamLayout, Tensor,
};
use super::real::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input and output channels (endmember count).
    pub d: usize,
    pub base_width: usize,
    pub depth: usize,
    pub res_blocks: usize,
    pub time_embed_dim: usize,
    /// Group-norm groups; capped at the channel count of each layer.
    pub groups: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            base_width: 32,
            depth: 2,
            res_blocks: 2,
            time_embed_dim: 128,
            groups: 8,
            seed: 0,
        }
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_width * [1, 2, 4][level.min(2)]
    }

    /// Spatial sizes must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.depth - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.base_width == 0 || self.depth == 0 || self.res_blocks == 0 {
            return Err(Error::Invalid("model dimensions must be positive".into()));
        }
        if self.time_embed_dim == 0 || !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::Invalid(
                "time embedding dimension must be even and positive".into(),
            ));
        }
        for level in 0..self.depth {
            let c = self.channels(level);
            if !c.is_multiple_of(self.groups_for(c)) {
                return Err(Error::Invalid(format!(
                    "{c} channels not divisible into {} groups",
                    self.groups
                )));
            }
        }
        Ok(())
    }

    fn groups_for(&self, channels: usize) -> usize {
        self.groups.clamp(1, channels)
    }
}

#[derive(Debug, Clone)]
struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    time: Linear,
    norm2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

struct ResCache<T> {
    norm1: GroupNormCache<T>,
    pre1: Vec<T>,
    conv1: ConvCache<T>,
    norm2: GroupNormCache<T>,
    pre2: Vec<T>,
    conv2: ConvCache<T>,
    skip: Option<ConvCache<T>>,
    shape: (usize, usize, usize),
}

impl ResBlock {
    fn new(
        layout: &mut ParamLayout,
        cfg: &ModelConfig,
        name: &str,
        cin: usize,
        cout: usize,
    ) -> Self {
        Self {
            norm1: GroupNorm::new(layout, &format!("{name}.norm1"), cin, cfg.groups_for(cin)),
            conv1: Conv2d::new(layout, &format!("{name}.conv1"), cin, cout, 3, 1),
            time: Linear::new(layout, &format!("{name}.time"), cfg.time_embed_dim, cout),
            norm2: GroupNorm::new(layout, &format!("{name}.norm2"), cout, cfg.groups_for(cout)),
            conv2: Conv2d::new(layout, &format!("{name}.conv2"), cout, cout, 3, 1),
            skip: (cin != cout)
                .then(|| Conv2d::new(layout, &format!("{name}.skip"), cin, cout, 1, 1)),
        }
    }

    fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>, temb: &[T]) -> (Tensor<T>, ResCache<T>) {
        let (h1, norm1) = self.norm1.forward(p, x);
        let a1 = Tensor {
            c: h1.c,
            h: h1.h,
            w: h1.w,
            data: silu(&h1.data),
        };
        let (mut c1, conv1) = self.conv1.forward(p, &a1);
        let tproj = self.time.forward(p, temb);
        let hw = c1.hw();
        for (ch, &v) in tproj.iter().enumerate() {
            for e in &mut c1.data[ch * hw..(ch + 1) * hw] {
                *e += v;
            }
        }
        let (h2, norm2) = self.norm2.forward(p, &c1);
        let a2 = Tensor {
            c: h2.c,
            h: h2.h,
            w: h2.w,
            data: silu(&h2.data),
        };
        let (mut out, conv2) = self.conv2.forward(p, &a2);
        let skip = match &self.skip {
            Some(conv) => {
                let (s, cache) = conv.forward(p, x);
                out.add_assign(&s);
                Some(cache)
            }
            None => {
                out.add_assign(x);
                None
            }
        };
        let cache = ResCache {
            norm1,
            pre1: h1.data,
            conv1,
            norm2,
            pre2: h2.data,
            conv2,
            skip,
            shape: (x.c, x.h, x.w),
        };
        (out, cache)
    }

    fn backward<T: Real>(
        &self,
        p: &[T],
        g: &mut [T],
        cache: &ResCache<T>,
        temb: &[T],
        dtemb: &mut [T],
        dy: &Tensor<T>,
    ) -> Tensor<T> {
        let da2 = self.conv2.backward(p, g, &cache.conv2, dy);
        let dh2 = Tensor {
            data: silu_backward(&cache.pre2, &da2.data),
            ..da2
        };
        let dc1 = self.norm2.backward(p, g, &cache.norm2, &dh2);
        let hw = dc1.hw();
        let dproj: Vec<T> = (0..dc1.c)
            .map(|ch| dc1.data[ch * hw..(ch + 1) * hw].iter().copied().sum())
            .collect();
        let dt = self.time.backward(p, g, temb, &dproj);
        for (a, b) in dtemb.iter_mut().zip(dt) {
            *a += b;
        }
        let da1 = self.conv1.backward(p, g, &cache.conv1, &dc1);
        let dh1 = Tensor {
            data: silu_backward(&cache.pre1, &da1.data),
            ..da1
        };
        let mut dx = self.norm1.backward(p, g, &cache.norm1, &dh1);
        match (&self.skip, &cache.skip) {
            (Some(conv), Some(sc)) => dx.add_assign(&conv.backward(p, g, sc, dy)),
            _ => dx.add_assign(dy),
        }
        debug_assert_eq!((dx.c, dx.h, dx.w), cache.shape);
        dx
    }
}

#[derive(Debug)]
struct Arch {
    cfg: ModelConfig,
    layout: ParamLayout,
    time1: Linear,
    time2: Linear,
    conv_in: Conv2d,
    down_blocks: Vec<Vec<ResBlock>>,
    downsample: Vec<Conv2d>,
    mid: ResBlock,
    upsample: Vec<Conv2d>,
    up_blocks: Vec<Vec<ResBlock>>,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl Arch {
    fn new(cfg: ModelConfig) -> Self {
        let mut l = ParamLayout::default();
        let te = cfg.time_embed_dim;
        let time1 = Linear::new(&mut l, "time_mlp.0", te, te);
        let time2 = Linear::new(&mut l, "time_mlp.1", te, te);
        let c0 = cfg.channels(0);
        let conv_in = Conv2d::new(&mut l, "conv_in", cfg.d, c0, 3, 1);
        let mut down_blocks = Vec::new();
        let mut downsample = Vec::new();
        let mut cin = c0;
        for level in 0..cfg.depth {
            let c = cfg.channels(level);
            let mut blocks = Vec::new();
            for r in 0..cfg.res_blocks {
                blocks.push(ResBlock::new(
                    &mut l,
                    &cfg,
                    &format!("down.{level}.res.{r}"),
                    cin,
                    c,
                ));
                cin = c;
            }
            down_blocks.push(blocks);
            if level + 1 < cfg.depth {
                downsample.push(Conv2d::new(
                    &mut l,
                    &format!("down.{level}.downsample"),
                    c,
                    c,
                    3,
                    2,
                ));
            }
        }
        let mid = ResBlock::new(&mut l, &cfg, "mid", cin, cin);
        let mut upsample = Vec::new();
        let mut up_blocks = Vec::new();
        for level in (0..cfg.depth).rev() {
            let c = cfg.channels(level);
            if level + 1 < cfg.depth {
                upsample.push(Conv2d::new(
                    &mut l,
                    &format!("up.{level}.upsample"),
                    cin,
                    c,
                    3,
                    1,
                ));
            }
            let mut blocks = Vec::new();
            for r in 0..cfg.res_blocks {
                let input = if r == 0 { 2 * c } else { c };
                blocks.push(ResBlock::new(
                    &mut l,
                    &cfg,
                    &format!("up.{level}.res.{r}"),
                    input,
                    c,
                ));
            }
            up_blocks.push(blocks);
            cin = c;
        }
        let norm_out = GroupNorm::new(&mut l, "norm_out", c0, cfg.groups_for(c0));
        let conv_out = Conv2d::new(&mut l, "conv_out", c0, cfg.d, 3, 1);
        Self {
            cfg,
            layout: l,
            time1,
            time2,
            conv_in,
            down_blocks,
            downsample,
            mid,
            upsample,
            up_blocks,
            norm_out,
            conv_out,
        }
    }
}

struct ForwardCache<T> {
    sinusoid: Vec<T>,
    time_hidden: Vec<T>,
    time_mid: Vec<T>,
    temb_pre: Vec<T>,
    temb: Vec<T>,
    conv_in: ConvCache<T>,
    down: Vec<Vec<ResCache<T>>>,
    downsample: Vec<ConvCache<T>>,
    mid: ResCache<T>,
    upsample: Vec<ConvCache<T>>,
    up: Vec<Vec<ResCache<T>>>,
    norm_out: GroupNormCache<T>,
    pre_out: Vec<T>,
    conv_out: ConvCache<T>,
}

/// ε-predicting U-Net with parameters in one flat buffer whose order is the
/// registration order reported by [`DenoiserModel::param_names`].
#[derive(Debug, Clone)]
pub struct DenoiserModel<T: Real = f32> {
    arch: Arc<Arch>,
    pub params: Vec<T>,
}

impl<T: Real> DenoiserModel<T> {
    /// Fresh model initialised from `cfg.seed`.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let arch = Arch::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = arch
            .layout
            .initialize(&mut rng)
            .into_iter()
            .map(T::of)
            .collect();
        Ok(Self {
            arch: Arc::new(arch),
            params,
        })
    }

    pub fn from_params(cfg: ModelConfig, params: Vec<T>) -> Result<Self> {
        cfg.validate()?;
        let arch = Arch::new(cfg);
        if params.len() != arch.layout.total {
            return Err(Error::Shape(format!(
                "model needs {} parameters, got {}",
                arch.layout.total,
                params.len()
            )));
        }
        if let Some(index) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            arch: Arc::new(arch),
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.cfg
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter tensor names and lengths in canonical order.
    pub fn param_names(&self) -> Vec<(String, usize)> {
        self.arch
            .layout
            .entries
            .iter()
            .map(|(n, s, _)| (n.clone(), s.len))
            .collect()
    }

    /// The same model at another precision.
    pub fn cast<U: Real>(&self) -> DenoiserModel<U> {
        DenoiserModel {
            arch: Arc::clone(&self.arch),
            params: self.params.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    pub fn check_input(&self, x: &Tensor<T>, t: usize) -> Result<()> {
        let cfg = &self.arch.cfg;
        if x.c != cfg.d {
            return Err(Error::Shape(format!(
                "expected {} channels, got {}",
                cfg.d, x.c
            )));
        }
        let m = cfg.size_multiple();
        if x.h == 0 || x.w == 0 || !x.h.is_multiple_of(m) || !x.w.is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "spatial size {}x{} must be a positive multiple of {m}",
                x.h, x.w
            )));
        }
        if t == 0 {
            return Err(Error::Invalid("diffusion steps start at 1".into()));
        }
        Ok(())
    }

    /// Predicted noise for `x` at step `t`.
    pub fn forward(&self, x: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        self.check_input(x, t)?;
        Ok(self.forward_cached(x, t).0)
    }

    fn forward_cached(&self, x: &Tensor<T>, t: usize) -> (Tensor<T>, ForwardCache<T>) {
        let a = &*self.arch;
        let p = &self.params[..];
        let sinusoid = timestep_embedding::<T>(t, a.cfg.time_embed_dim);
        let time_hidden = a.time1.forward(p, &sinusoid);
        let time_mid = silu(&time_hidden);
        let temb_pre = a.time2.forward(p, &time_mid);
        let temb = silu(&temb_pre);

        let (mut h, conv_in) = a.conv_in.forward(p, x);
        let mut skips = Vec::with_capacity(a.cfg.depth);
        let mut down = Vec::with_capacity(a.cfg.depth);
        let mut downsample = Vec::new();
        for (level, blocks) in a.down_blocks.iter().enumerate() {
            let mut caches = Vec::with_capacity(blocks.len());
            for block in blocks {
                let (out, cache) = block.forward(p, &h, &temb);
                h = out;
                caches.push(cache);
            }
            down.push(caches);
            skips.push(h.clone());
            if let Some(conv) = a.downsample.get(level) {
                let (out, cache) = conv.forward(p, &h);
                h = out;
                downsample.push(cache);
            }
        }
        let (out, mid) = a.mid.forward(p, &h, &temb);
        h = out;
        let mut upsample = Vec::new();
        let mut up = Vec::with_capacity(a.cfg.depth);
        let mut up_convs = a.upsample.iter();
        for (i, blocks) in a.up_blocks.iter().enumerate() {
            let level = a.cfg.depth - 1 - i;
            if level + 1 < a.cfg.depth {
                let conv = up_convs.next().expect("upsample per level");
                let (out, cache) = conv.forward(p, &upsample2(&h));
                h = out;
                upsample.push(cache);
            }
            h = h.concat(&skips[level]);
            let mut caches = Vec::with_capacity(blocks.len());
            for block in blocks {
                let (out, cache) = block.forward(p, &h, &temb);
                h = out;
                caches.push(cache);
            }
            up.push(caches);
        }
        let (g, norm_out) = a.norm_out.forward(p, &h);
        let act = Tensor {
            c: g.c,
            h: g.h,
            w: g.w,
            data: silu(&g.data),
        };
        let (y, conv_out) = a.conv_out.forward(p, &act);
        let cache = ForwardCache {
            sinusoid,
            time_hidden,
            time_mid,
            temb_pre,
            temb,
            conv_in,
            down,
            downsample,
            mid,
            upsample,
            up,
            norm_out,
            pre_out: g.data,
            conv_out,
        };
        (y, cache)
    }

    fn backward(&self, cache: &ForwardCache<T>, dy: &Tensor<T>, g: &mut [T]) {
        let a = &*self.arch;
        let p = &self.params[..];
        let depth = a.cfg.depth;
        let mut dtemb = vec![T::zero(); a.cfg.time_embed_dim];

        let dact = a.conv_out.backward(p, g, &cache.conv_out, dy);
        let dg = Tensor {
            data: silu_backward(&cache.pre_out, &dact.data),
            ..dact
        };
        let mut dh = a.norm_out.backward(p, g, &cache.norm_out, &dg);

        let mut dskips: Vec<Option<Tensor<T>>> = (0..depth).map(|_| None).collect();
        for i in (0..depth).rev() {
            let level = depth - 1 - i;
            for (block, c) in a.up_blocks[i].iter().zip(&cache.up[i]).rev() {
                dh = block.backward(p, g, c, &cache.temb, &mut dtemb, &dh);
            }
            let (dup, dskip) = dh.split(a.cfg.channels(level));
            dskips[level] = Some(dskip);
            dh = dup;
            if level + 1 < depth {
                let k = depth - 2 - level;
                dh = upsample2_backward(&a.upsample[k].backward(p, g, &cache.upsample[k], &dh));
            }
        }
        dh = a
            .mid
            .backward(p, g, &cache.mid, &cache.temb, &mut dtemb, &dh);
        for level in (0..depth).rev() {
            if level + 1 < depth {
                dh = a.downsample[level].backward(p, g, &cache.downsample[level], &dh);
            }
            dh.add_assign(dskips[level].as_ref().expect("skip gradient"));
            for (block, c) in a.down_blocks[level].iter().zip(&cache.down[level]).rev() {
                dh = block.backward(p, g, c, &cache.temb, &mut dtemb, &dh);
            }
        }
        a.conv_in.backward(p, g, &cache.conv_in, &dh);

        let dpre = silu_backward(&cache.temb_pre, &dtemb);
        let dmid = a.time2.backward(p, g, &cache.time_mid, &dpre);
        let dhidden = silu_backward(&cache.time_hidden, &dmid);
        a.time1.backward(p, g, &cache.sinusoid, &dhidden);
    }

    /// Mean squared error between predicted and true noise over a batch of
    /// noised inputs, with its gradient added into `grads`.
    pub fn loss_and_grad(
        &self,
        inputs: &[Tensor<T>],
        steps: &[usize],
        noise: &[Tensor<T>],
        grads: &mut [T],
    ) -> Result<f64> {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        if inputs.is_empty() || inputs.len() != steps.len() || inputs.len() != noise.len() {
            return Err(Error::Shape(
                "batch inputs, steps and noise must align".into(),
            ));
        }
        let total: usize = inputs.iter().map(|x| x.data.len()).sum();
        let scale = T::of(2.0 / total as f64);
        let mut loss = 0.0;
        for ((x, &t), eps) in inputs.iter().zip(steps).zip(noise) {
            self.check_input(x, t)?;
            let (pred, cache) = self.forward_cached(x, t);
            let mut dy = pred.clone();
            for (d, (&p, &e)) in dy.data.iter_mut().zip(pred.data.iter().zip(&eps.data)) {
                let diff = p - e;
                loss += diff.f64() * diff.f64();
                *d = scale * diff;
            }
            self.backward(&cache, &dy, grads);
        }
        Ok(loss / total as f64)
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, inputs: &[Tensor<T>], steps: &[usize], noise: &[Tensor<T>]) -> Result<f64> {
        let total: usize = inputs.iter().map(|x| x.data.len()).sum();
        let mut loss = 0.0;
        for ((x, &t), eps) in inputs.iter().zip(steps).zip(noise) {
            let pred = self.forward(x, t)?;
            loss += pred
                .data
                .iter()
                .zip(&eps.data)
                .map(|(&p, &e)| (p.f64() - e.f64()).powi(2))
                .sum::<f64>();
        }
        Ok(loss / total as f64)
    }
}
