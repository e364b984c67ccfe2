//! Layers of the denoiser with hand-written backward passes.
//!
//! Parameters live in one flat buffer; each layer holds [`Slot`]s into it.
//! Activations are single-sample `channels × height × width` tensors. Every
//! `backward` adds parameter gradients into a flat gradient buffer laid out
//! like the parameters and returns the gradient with respect to its input.

use rand::Rng;

use super::real::{matmul, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    #[inline]
    pub fn of<'a, T>(&self, buf: &'a [T]) -> &'a [T] {
        &buf[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn of_mut<'a, T>(&self, buf: &'a mut [T]) -> &'a mut [T] {
        &mut buf[self.offset..self.offset + self.len]
    }
}

/// How a parameter tensor is initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `[-1/√fan_in, 1/√fan_in]`.
    Uniform {
        fan_in: usize,
    },
    Constant(f64),
}

/// Ordered registry of named parameter tensors. Registration order is the
/// canonical order of the flat parameter buffer.
#[derive(Debug, Clone, Default)]
pub struct ParamLayout {
    pub entries: Vec<(String, Slot, Init)>,
    pub total: usize,
}

impl ParamLayout {
    pub fn add(&mut self, name: impl Into<String>, len: usize, init: Init) -> Slot {
        let slot = Slot {
            offset: self.total,
            len,
        };
        self.total += len;
        self.entries.push((name.into(), slot, init));
        slot
    }

    pub fn initialize<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total);
        for (_, slot, init) in &self.entries {
            match *init {
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    out.extend((0..slot.len).map(|_| rng.random_range(-bound..bound)));
                }
                Init::Constant(v) => out.extend(std::iter::repeat_n(v, slot.len)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Channel concatenation `[self; other]`.
    pub fn concat(&self, other: &Tensor<T>) -> Tensor<T> {
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Tensor {
            c: self.c + other.c,
            h: self.h,
            w: self.w,
            data,
        }
    }

    /// Splits channels at `first`.
    pub fn split(self, first: usize) -> (Tensor<T>, Tensor<T>) {
        let n = first * self.hw();
        let mut a = self.data;
        let b = a.split_off(n);
        (
            Tensor {
                c: first,
                h: self.h,
                w: self.w,
                data: a,
            },
            Tensor {
                c: self.c - first,
                h: self.h,
                w: self.w,
                data: b,
            },
        )
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `x·σ(x)`.
pub fn silu<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

/// Gradient of [`silu`] given its input and the upstream gradient.
pub fn silu_backward<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let s = sigmoid(v);
            g * s * (T::one() + v * (T::one() - s))
        })
        .collect()
}

/// Sinusoidal embedding of a diffusion step (`dim` even).
pub fn timestep_embedding<T: Real>(t: usize, dim: usize) -> Vec<T> {
    let half = dim / 2;
    let mut out = vec![T::zero(); dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = T::of(arg.sin());
        out[half + i] = T::of(arg.cos());
    }
    out
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    pub weight: Slot,
    pub bias: Slot,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, name: &str, input: usize, output: usize) -> Self {
        let init = Init::Uniform { fan_in: input };
        Self {
            input,
            output,
            weight: layout.add(format!("{name}.weight"), input * output, init),
            bias: layout.add(format!("{name}.bias"), output, init),
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T]) -> Vec<T> {
        let w = self.weight.of(p);
        let mut y = self.bias.of(p).to_vec();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.input..(o + 1) * self.input];
            *yo += row.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
        }
        y
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], x: &[T], dy: &[T]) -> Vec<T> {
        let w = self.weight.of(p);
        {
            let gw = self.weight.of_mut(g);
            for (o, &d) in dy.iter().enumerate() {
                for (gwi, &xi) in gw[o * self.input..(o + 1) * self.input].iter_mut().zip(x) {
                    *gwi += d * xi;
                }
            }
        }
        for (gb, &d) in self.bias.of_mut(g).iter_mut().zip(dy) {
            *gb += d;
        }
        let mut dx = vec![T::zero(); self.input];
        for (o, &d) in dy.iter().enumerate() {
            for (dxi, &wi) in dx.iter_mut().zip(&w[o * self.input..(o + 1) * self.input]) {
                *dxi += d * wi;
            }
        }
        dx
    }
}

/// Square convolution with kernel 1 (no padding) or 3 (zero padding 1).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Slot,
    pub bias: Slot,
}

pub struct ConvCache<T> {
    cols: Vec<T>,
    in_shape: (usize, usize, usize),
}

impl Conv2d {
    pub fn new(
        layout: &mut ParamLayout,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        assert!(kernel == 1 || kernel == 3, "kernel must be 1 or 3");
        let init = Init::Uniform {
            fan_in: cin * kernel * kernel,
        };
        Self {
            cin,
            cout,
            kernel,
            stride,
            weight: layout.add(format!("{name}.weight"), cout * cin * kernel * kernel, init),
            bias: layout.add(format!("{name}.bias"), cout, init),
        }
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let p = 2 * self.pad();
        (
            (h + p - self.kernel) / self.stride + 1,
            (w + p - self.kernel) / self.stride + 1,
        )
    }

    fn im2col<T: Real>(&self, x: &Tensor<T>, ho: usize, wo: usize) -> Vec<T> {
        let (k, s, pad) = (self.kernel, self.stride, self.pad() as isize);
        if k == 1 && s == 1 {
            return x.data.clone();
        }
        let np = ho * wo;
        let mut cols = vec![T::zero(); x.c * k * k * np];
        for ci in 0..x.c {
            let plane = &x.data[ci * x.h * x.w..(ci + 1) * x.h * x.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * np..(row + 1) * np];
                    for oy in 0..ho {
                        let iy = (oy * s) as isize + ky as isize - pad;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                        let out = &mut dst[oy * wo..(oy + 1) * wo];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * s) as isize + kx as isize - pad;
                            if ix >= 0 && ix < x.w as isize {
                                *o = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Real>(
        &self,
        cols: &[T],
        shape: (usize, usize, usize),
        ho: usize,
        wo: usize,
    ) -> Tensor<T> {
        let (c, h, w) = shape;
        let (k, s, pad) = (self.kernel, self.stride, self.pad() as isize);
        if k == 1 && s == 1 {
            return Tensor {
                c,
                h,
                w,
                data: cols.to_vec(),
            };
        }
        let np = ho * wo;
        let mut x = Tensor::zeros(c, h, w);
        for ci in 0..c {
            let plane = &mut x.data[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * np..(row + 1) * np];
                    for oy in 0..ho {
                        let iy = (oy * s) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..wo {
                            let ix = (ox * s) as isize + kx as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += src[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
        x
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>) -> (Tensor<T>, ConvCache<T>) {
        debug_assert_eq!(x.c, self.cin);
        let (ho, wo) = self.out_hw(x.h, x.w);
        let cols = self.im2col(x, ho, wo);
        let np = ho * wo;
        let kk = self.cin * self.kernel * self.kernel;
        let mut y = Tensor::zeros(self.cout, ho, wo);
        for (o, &b) in self.bias.of(p).iter().enumerate() {
            y.data[o * np..(o + 1) * np].fill(b);
        }
        matmul(
            self.cout,
            kk,
            np,
            self.weight.of(p),
            false,
            &cols,
            false,
            &mut y.data,
            true,
        );
        (
            y,
            ConvCache {
                cols,
                in_shape: (x.c, x.h, x.w),
            },
        )
    }

    pub fn backward<T: Real>(
        &self,
        p: &[T],
        g: &mut [T],
        cache: &ConvCache<T>,
        dy: &Tensor<T>,
    ) -> Tensor<T> {
        let np = dy.hw();
        let kk = self.cin * self.kernel * self.kernel;
        matmul(
            self.cout,
            np,
            kk,
            &dy.data,
            false,
            &cache.cols,
            true,
            self.weight.of_mut(g),
            true,
        );
        for (o, gb) in self.bias.of_mut(g).iter_mut().enumerate() {
            *gb += dy.data[o * np..(o + 1) * np].iter().copied().sum::<T>();
        }
        let mut dcols = vec![T::zero(); kk * np];
        matmul(
            kk,
            self.cout,
            np,
            self.weight.of(p),
            true,
            &dy.data,
            false,
            &mut dcols,
            false,
        );
        self.col2im(&dcols, cache.in_shape, dy.h, dy.w)
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub channels: usize,
    pub groups: usize,
    pub gamma: Slot,
    pub beta: Slot,
}

pub struct GroupNormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

pub const GROUP_NORM_EPS: f64 = 1e-5;

impl GroupNorm {
    pub fn new(layout: &mut ParamLayout, name: &str, channels: usize, groups: usize) -> Self {
        assert!(
            groups >= 1 && channels.is_multiple_of(groups),
            "{channels} channels not divisible into {groups} groups"
        );
        Self {
            channels,
            groups,
            gamma: layout.add(format!("{name}.gamma"), channels, Init::Constant(1.0)),
            beta: layout.add(format!("{name}.beta"), channels, Init::Constant(0.0)),
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>) -> (Tensor<T>, GroupNormCache<T>) {
        let hw = x.hw();
        let per = self.channels / self.groups * hw;
        let count = T::of(per as f64);
        let eps = T::of(GROUP_NORM_EPS);
        let (gamma, beta) = (self.gamma.of(p), self.beta.of(p));
        let mut xhat = vec![T::zero(); x.data.len()];
        let mut inv_std = Vec::with_capacity(self.groups);
        let mut y = Tensor::zeros(x.c, x.h, x.w);
        for gi in 0..self.groups {
            let range = gi * per..(gi + 1) * per;
            let xs = &x.data[range.clone()];
            let mean = xs.iter().copied().sum::<T>() / count;
            let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (xh, &v) in xhat[range].iter_mut().zip(xs) {
                *xh = (v - mean) * is;
            }
        }
        for ch in 0..x.c {
            let (g, b) = (gamma[ch], beta[ch]);
            for i in ch * hw..(ch + 1) * hw {
                y.data[i] = g * xhat[i] + b;
            }
        }
        (y, GroupNormCache { xhat, inv_std })
    }

    pub fn backward<T: Real>(
        &self,
        p: &[T],
        g: &mut [T],
        cache: &GroupNormCache<T>,
        dy: &Tensor<T>,
    ) -> Tensor<T> {
        let hw = dy.hw();
        let cpg = self.channels / self.groups;
        let per = cpg * hw;
        let count = T::of(per as f64);
        let gamma = self.gamma.of(p);
        {
            let (start, mid) = (self.gamma.offset, self.beta.offset);
            for ch in 0..dy.c {
                let r = ch * hw..(ch + 1) * hw;
                let (mut sg, mut sb) = (T::zero(), T::zero());
                for i in r {
                    sg += dy.data[i] * cache.xhat[i];
                    sb += dy.data[i];
                }
                g[start + ch] += sg;
                g[mid + ch] += sb;
            }
        }
        let mut dx = Tensor::zeros(dy.c, dy.h, dy.w);
        for gi in 0..self.groups {
            let (mut m1, mut m2) = (T::zero(), T::zero());
            for ch in gi * cpg..(gi + 1) * cpg {
                for i in ch * hw..(ch + 1) * hw {
                    let dxh = dy.data[i] * gamma[ch];
                    m1 += dxh;
                    m2 += dxh * cache.xhat[i];
                }
            }
            m1 /= count;
            m2 /= count;
            let is = cache.inv_std[gi];
            for ch in gi * cpg..(gi + 1) * cpg {
                for i in ch * hw..(ch + 1) * hw {
                    let dxh = dy.data[i] * gamma[ch];
                    dx.data[i] = is * (dxh - m1 - cache.xhat[i] * m2);
                }
            }
        }
        dx
    }
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (h2, w2) = (2 * x.h, 2 * x.w);
    let mut y = Tensor::zeros(x.c, h2, w2);
    for c in 0..x.c {
        for r in 0..h2 {
            for k in 0..w2 {
                y.data[(c * h2 + r) * w2 + k] = x.data[(c * x.h + r / 2) * x.w + k / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward<T: Real>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.c, h, w);
    for c in 0..dy.c {
        for r in 0..dy.h {
            for k in 0..dy.w {
                dx.data[(c * h + r / 2) * w + k / 2] += dy.data[(c * dy.h + r) * dy.w + k];
            }
        }
    }
    dx
}
