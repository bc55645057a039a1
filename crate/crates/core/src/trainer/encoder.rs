//! Affine + tanh fusion head over the concatenated modality blocks.
//!
//! `y = normalize(tanh(W·(x - mean)/scale + b))`, where the input
//! standardization is fitted once on the training data and then frozen.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::{all_finite, cast, fmt17, from_usize, norm2, parse_real, Scalar};
use crate::similarity::NORM_TOLERANCE;

const MAGIC: &str = "featproto-encoder 1";

#[derive(Debug, Clone, PartialEq)]
pub struct FusionEncoder<T> {
    in_dim: usize,
    out_dim: usize,
    normalize: bool,
    mean: Vec<T>,
    scale: Vec<T>,
    /// Row-major `out_dim × in_dim`.
    weight: Vec<T>,
    bias: Vec<T>,
}

/// Gradient with respect to the trainable parameters (`W`, `b`).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> EncoderGrad<T> {
    pub fn zeros(enc: &FusionEncoder<T>) -> Self {
        EncoderGrad {
            weight: vec![T::zero(); enc.weight.len()],
            bias: vec![T::zero(); enc.bias.len()],
        }
    }

    /// Flat view in the same order as [`FusionEncoder::param`].
    pub fn get(&self, i: usize) -> T {
        if i < self.weight.len() {
            self.weight[i]
        } else {
            self.bias[i - self.weight.len()]
        }
    }
}

pub(crate) struct Forward<T> {
    z: Vec<T>,
    h: Vec<T>,
    norm: T,
    pub y: Vec<T>,
}

impl<T: Scalar> FusionEncoder<T> {
    /// Fits the standardization on `train` and draws `W ~ N(0, 1/in_dim)`,
    /// `b = 0` from `seed`.
    pub fn init(train: &Dataset<T>, out_dim: usize, normalize: bool, seed: u64) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if out_dim == 0 {
            return Err(Error::InvalidInput("fused dimension must be positive".into()));
        }
        let in_dim = train.input_dim();
        let n: T = from_usize(train.len());
        let mut mean = vec![T::zero(); in_dim];
        for r in &train.records {
            for (m, x) in mean.iter_mut().zip(r.concatenated()) {
                *m = *m + x;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![T::zero(); in_dim];
        for r in &train.records {
            for ((v, x), m) in var.iter_mut().zip(r.concatenated()).zip(&mean) {
                *v = *v + (x - *m) * (x - *m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > cast(NORM_TOLERANCE) {
                    s
                } else {
                    T::one()
                }
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 1.0 / (in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| cast(std * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Ok(FusionEncoder {
            in_dim,
            out_dim,
            normalize,
            mean,
            scale,
            weight,
            bias: vec![T::zero(); out_dim],
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn normalizes(&self) -> bool {
        self.normalize
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Flat parameter access: weights row-major, then biases.
    pub fn param(&self, i: usize) -> T {
        if i < self.weight.len() {
            self.weight[i]
        } else {
            self.bias[i - self.weight.len()]
        }
    }

    pub fn set_param(&mut self, i: usize, v: T) {
        if i < self.weight.len() {
            self.weight[i] = v;
        } else {
            let j = i - self.weight.len();
            self.bias[j] = v;
        }
    }

    pub(crate) fn forward(&self, x: &[T]) -> Result<Forward<T>> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                found: x.len(),
            });
        }
        if !all_finite(x) {
            return Err(Error::NonFinite("encoder input"));
        }
        let z: Vec<T> = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect();
        let h: Vec<T> = self
            .weight
            .chunks(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| (row.iter().zip(&z).map(|(&w, &v)| w * v).sum::<T>() + b).tanh())
            .collect();
        let norm = norm2(&h);
        let y = if self.normalize && norm > cast(NORM_TOLERANCE) {
            h.iter().map(|&v| v / norm).collect()
        } else {
            h.clone()
        };
        Ok(Forward { z, h, norm, y })
    }

    /// Fused feature for one concatenated input.
    pub fn encode(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(x)?.y)
    }

    /// Adds `d(loss)/d(params)` to `grad` given `dy = d(loss)/dy`.
    pub(crate) fn backward(&self, fw: &Forward<T>, dy: &[T], grad: &mut EncoderGrad<T>) {
        let dh: Vec<T> = if self.normalize && fw.norm > cast(NORM_TOLERANCE) {
            let dot: T = fw.y.iter().zip(dy).map(|(&a, &b)| a * b).sum();
            fw.y.iter().zip(dy).map(|(&y, &g)| (g - y * dot) / fw.norm).collect()
        } else {
            dy.to_vec()
        };
        for (i, (&g, &h)) in dh.iter().zip(&fw.h).enumerate() {
            let da = g * (T::one() - h * h);
            grad.bias[i] = grad.bias[i] + da;
            let row = &mut grad.weight[i * self.in_dim..(i + 1) * self.in_dim];
            for (w, &z) in row.iter_mut().zip(&fw.z) {
                *w = *w + da * z;
            }
        }
    }

    /// Gradient-descent step `θ ← θ - lr·g`.
    pub fn apply(&mut self, grad: &EncoderGrad<T>, lr: T) {
        for (w, &g) in self.weight.iter_mut().zip(&grad.weight) {
            *w = *w - lr * g;
        }
        for (b, &g) in self.bias.iter_mut().zip(&grad.bias) {
            *b = *b - lr * g;
        }
    }

    pub fn to_text(&self) -> String {
        let row = |v: &[T]| v.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(" ");
        let mut out = format!(
            "{MAGIC}\nscalar {}\nin_dim {}\nout_dim {}\nnormalize {}\n",
            T::NAME,
            self.in_dim,
            self.out_dim,
            u8::from(self.normalize)
        );
        out.push_str(&format!("mean {}\n", row(&self.mean)));
        out.push_str(&format!("scale {}\n", row(&self.scale)));
        out.push_str(&format!("bias {}\n", row(&self.bias)));
        for (i, w) in self.weight.chunks(self.in_dim).enumerate() {
            out.push_str(&format!("row {i} {}\n", row(w)));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&MAGIC) {
            return Err(Error::parse(1, format!("expected header `{MAGIC}`")));
        }
        let field = |i: usize, name: &str| -> Result<&str> {
            lines
                .get(i)
                .and_then(|l| l.strip_prefix(name))
                .and_then(|l| l.strip_prefix(' '))
                .ok_or_else(|| Error::parse(i + 1, format!("expected `{name} ...`")))
        };
        let int = |i: usize, name: &str| -> Result<usize> {
            field(i, name)?
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad {name}")))
        };
        let reals = |i: usize, s: &str, len: usize| -> Result<Vec<T>> {
            let v: Vec<T> = s
                .split(' ')
                .map(|t| parse_real(t).ok_or_else(|| Error::parse(i + 1, format!("bad real `{t}`"))))
                .collect::<Result<_>>()?;
            if v.len() != len || !all_finite(&v) {
                return Err(Error::parse(i + 1, format!("expected {len} finite reals")));
            }
            Ok(v)
        };
        let _scalar = field(1, "scalar")?;
        let in_dim = int(2, "in_dim")?;
        let out_dim = int(3, "out_dim")?;
        let normalize = match field(4, "normalize")? {
            "0" => false,
            "1" => true,
            _ => return Err(Error::parse(5, "normalize must be 0 or 1")),
        };
        let mean = reals(5, field(5, "mean")?, in_dim)?;
        let scale = reals(6, field(6, "scale")?, in_dim)?;
        let bias = reals(7, field(7, "bias")?, out_dim)?;
        let mut weight = Vec::with_capacity(in_dim * out_dim);
        for r in 0..out_dim {
            let i = 8 + r;
            let rest = field(i, "row")?;
            let (idx, vals) = rest
                .split_once(' ')
                .ok_or_else(|| Error::parse(i + 1, "expected `row <i> <reals>`"))?;
            if idx.parse::<usize>().ok() != Some(r) {
                return Err(Error::parse(i + 1, "rows must appear in order"));
            }
            weight.extend(reals(i, vals, in_dim)?);
        }
        if lines.len() > 8 + out_dim {
            return Err(Error::parse(9 + out_dim, "trailing content"));
        }
        if scale.iter().any(|&s| s <= T::zero()) {
            return Err(Error::parse(7, "scale must be positive"));
        }
        Ok(FusionEncoder {
            in_dim,
            out_dim,
            normalize,
            mean,
            scale,
            weight,
            bias,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
