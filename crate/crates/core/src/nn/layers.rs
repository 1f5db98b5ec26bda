use serde::{Deserialize, Serialize};

/// A row-major `(positions, channels)` activation. Positions at or beyond `len` are padding
/// and always hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub positions: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Activation {
    pub fn zeros(positions: usize, channels: usize, len: usize) -> Self {
        Self {
            positions,
            channels,
            len,
            data: vec![0.0; positions * channels],
        }
    }

    /// A single flat vector.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            positions: 1,
            channels: data.len(),
            len: 1,
            data,
        }
    }

    #[inline]
    pub fn at(&self, p: usize, c: usize) -> f64 {
        self.data[p * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, p: usize, c: usize) -> &mut f64 {
        &mut self.data[p * self.channels + c]
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    pub fn same_shape(&self, other: &Activation) -> bool {
        self.positions == other.positions && self.channels == other.channels && self.len == other.len
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.positions, self.channels, self.len)
    }
}

/// 1-D convolution with `same` padding over the real positions.
///
/// Weights are laid out `[out][tap][in]`. Inputs outside `0..len` read as zero and outputs
/// at padding positions are forced to zero, which keeps the layer independent of how much
/// padding follows the string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub inputs: usize,
    pub outputs: usize,
    pub width: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    fn left(&self) -> isize {
        ((self.width - 1) / 2) as isize
    }

    #[inline]
    fn w(&self, weights: &[f64], o: usize, t: usize, i: usize) -> f64 {
        weights[(o * self.width + t) * self.inputs + i]
    }

    fn source(&self, p: usize, t: usize, len: usize) -> Option<usize> {
        let q = p as isize + t as isize - self.left();
        (q >= 0 && (q as usize) < len).then_some(q as usize)
    }

    /// The affine map with the given weights; `bias = None` applies only the linear part.
    pub fn apply(&self, x: &Activation, weights: &[f64], bias: Option<&[f64]>) -> Activation {
        let mut out = Activation::zeros(x.positions, self.outputs, x.len);
        for p in 0..x.len {
            for o in 0..self.outputs {
                let mut s = bias.map_or(0.0, |b| b[o]);
                for t in 0..self.width {
                    if let Some(q) = self.source(p, t, x.len) {
                        let base = (o * self.width + t) * self.inputs;
                        let xr = x.row(q);
                        for i in 0..self.inputs {
                            s += weights[base + i] * xr[i];
                        }
                    }
                }
                *out.at_mut(p, o) = s;
            }
        }
        out
    }

    /// Gradient with respect to the input of [`Conv1d::apply`].
    pub fn transpose(&self, g: &Activation, weights: &[f64]) -> Activation {
        let mut gi = Activation::zeros(g.positions, self.inputs, g.len);
        for p in 0..g.len {
            for o in 0..self.outputs {
                let go = g.at(p, o);
                if go == 0.0 {
                    continue;
                }
                for t in 0..self.width {
                    if let Some(q) = self.source(p, t, g.len) {
                        for i in 0..self.inputs {
                            *gi.at_mut(q, i) += self.w(weights, o, t, i) * go;
                        }
                    }
                }
            }
        }
        gi
    }

    /// Accumulates `d/dW` of `<g, apply(x)>` into `dw`, and `d/db` into `db` when given.
    pub fn accumulate(&self, x: &Activation, g: &Activation, dw: &mut [f64], db: Option<&mut [f64]>, sign: Option<&[f64]>) {
        if let Some(db) = db {
            for p in 0..g.len {
                for o in 0..self.outputs {
                    db[o] += g.at(p, o);
                }
            }
        }
        for p in 0..g.len {
            for o in 0..self.outputs {
                let go = g.at(p, o);
                if go == 0.0 {
                    continue;
                }
                for t in 0..self.width {
                    if let Some(q) = self.source(p, t, x.len) {
                        let base = (o * self.width + t) * self.inputs;
                        let xr = x.row(q);
                        for i in 0..self.inputs {
                            let s = sign.map_or(1.0, |s| s[base + i]);
                            dw[base + i] += s * go * xr[i];
                        }
                    }
                }
            }
        }
    }
}

/// Fully connected layer on a flat vector. Weights are laid out `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn apply(&self, x: &Activation, weights: &[f64], bias: Option<&[f64]>) -> Activation {
        let mut out = Vec::with_capacity(self.outputs);
        for o in 0..self.outputs {
            let row = &weights[o * self.inputs..(o + 1) * self.inputs];
            let s: f64 = row.iter().zip(&x.data).map(|(w, v)| w * v).sum();
            out.push(s + bias.map_or(0.0, |b| b[o]));
        }
        Activation::vector(out)
    }

    pub fn transpose(&self, g: &Activation, weights: &[f64]) -> Activation {
        let mut gi = vec![0.0; self.inputs];
        for o in 0..self.outputs {
            let go = g.data[o];
            if go == 0.0 {
                continue;
            }
            let row = &weights[o * self.inputs..(o + 1) * self.inputs];
            for (gv, w) in gi.iter_mut().zip(row) {
                *gv += w * go;
            }
        }
        Activation::vector(gi)
    }

    pub fn accumulate(&self, x: &Activation, g: &Activation, dw: &mut [f64], db: Option<&mut [f64]>, sign: Option<&[f64]>) {
        if let Some(db) = db {
            for (b, go) in db.iter_mut().zip(&g.data) {
                *b += go;
            }
        }
        for o in 0..self.outputs {
            let go = g.data[o];
            if go == 0.0 {
                continue;
            }
            let base = o * self.inputs;
            for i in 0..self.inputs {
                let s = sign.map_or(1.0, |s| s[base + i]);
                dw[base + i] += s * go * x.data[i];
            }
        }
    }
}

/// Non-overlapping average pooling over the real positions of each window.
///
/// Window `j` covers positions `j*window .. (j+1)*window` clipped to `len`; windows with no
/// real position output zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvgPool {
    pub window: usize,
}

impl AvgPool {
    fn out_positions(&self, positions: usize) -> usize {
        positions.div_ceil(self.window)
    }

    fn span(&self, j: usize, len: usize) -> (usize, usize) {
        let lo = j * self.window;
        (lo.min(len), ((j + 1) * self.window).min(len))
    }

    pub fn apply(&self, x: &Activation) -> Activation {
        let mut out = Activation::zeros(self.out_positions(x.positions), x.channels, x.len.div_ceil(self.window));
        for j in 0..out.len {
            let (lo, hi) = self.span(j, x.len);
            let n = (hi - lo) as f64;
            for c in 0..x.channels {
                let s: f64 = (lo..hi).map(|q| x.at(q, c)).sum();
                *out.at_mut(j, c) = s / n;
            }
        }
        out
    }

    /// Gradient back to an input of shape `input`.
    pub fn transpose(&self, g: &Activation, input: &Activation) -> Activation {
        let mut gi = input.zeros_like();
        for j in 0..g.len {
            let (lo, hi) = self.span(j, input.len);
            let n = (hi - lo) as f64;
            for q in lo..hi {
                for c in 0..g.channels {
                    *gi.at_mut(q, c) += g.at(j, c) / n;
                }
            }
        }
        gi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Conv1d(Conv1d),
    Relu,
    AvgPool(AvgPool),
    Flatten,
    Linear(Linear),
}

/// Parameter gradients of one layer; both vectors are empty for layers without parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGrad {
    pub fn add(&mut self, other: &ParamGrad) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, f: f64) {
        self.weight.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= f);
    }
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::Relu => "relu",
            Layer::AvgPool(_) => "avgpool",
            Layer::Flatten => "flatten",
            Layer::Linear(_) => "linear",
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Layer::Conv1d(_) | Layer::Linear(_))
    }

    pub fn parameters(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv1d(c) => Some((&c.weight, &c.bias)),
            Layer::Linear(l) => Some((&l.weight, &l.bias)),
            _ => None,
        }
    }

    pub fn parameters_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Conv1d(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::Linear(l) => Some((&mut l.weight, &mut l.bias)),
            _ => None,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().map_or(0, |(w, b)| w.len() + b.len())
    }

    pub fn zero_grad(&self) -> ParamGrad {
        self.parameters().map_or_else(ParamGrad::default, |(w, b)| ParamGrad {
            weight: vec![0.0; w.len()],
            bias: vec![0.0; b.len()],
        })
    }

    /// Output `(positions, channels)` for an input shape, or `None` if the shapes do not chain.
    pub fn output_shape(&self, positions: usize, channels: usize) -> Option<(usize, usize)> {
        match self {
            Layer::Conv1d(c) => (c.inputs == channels && c.width >= 1).then_some((positions, c.outputs)),
            Layer::Relu => Some((positions, channels)),
            Layer::AvgPool(p) => (p.window >= 1).then(|| (p.out_positions(positions), channels)),
            Layer::Flatten => Some((1, positions * channels)),
            Layer::Linear(l) => (positions == 1 && l.inputs == channels).then_some((1, l.outputs)),
        }
    }

    pub fn forward(&self, x: &Activation) -> Activation {
        match self {
            Layer::Conv1d(c) => c.apply(x, &c.weight, Some(&c.bias)),
            Layer::Relu => Activation {
                data: x.data.iter().map(|v| v.max(0.0)).collect(),
                ..*x
            },
            Layer::AvgPool(p) => p.apply(x),
            Layer::Flatten => Activation::vector(x.data.clone()),
            Layer::Linear(l) => l.apply(x, &l.weight, Some(&l.bias)),
        }
    }

    /// Back-propagates `g` (gradient at this layer's output) given the layer input `x`,
    /// accumulating parameter gradients into `grad` and returning the input gradient.
    pub fn backward(&self, x: &Activation, g: &Activation, grad: &mut ParamGrad) -> Activation {
        match self {
            Layer::Conv1d(c) => {
                c.accumulate(x, g, &mut grad.weight, Some(&mut grad.bias), None);
                c.transpose(g, &c.weight)
            }
            Layer::Relu => Activation {
                data: x
                    .data
                    .iter()
                    .zip(&g.data)
                    .map(|(v, gv)| if *v > 0.0 { *gv } else { 0.0 })
                    .collect(),
                ..*x
            },
            Layer::AvgPool(p) => p.transpose(g, x),
            Layer::Flatten => Activation {
                data: g.data.clone(),
                ..*x
            },
            Layer::Linear(l) => {
                l.accumulate(x, g, &mut grad.weight, Some(&mut grad.bias), None);
                l.transpose(g, &l.weight)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(positions: usize, channels: usize, len: usize, data: &[f64]) -> Activation {
        Activation {
            positions,
            channels,
            len,
            data: data.to_vec(),
        }
    }

    #[test]
    fn pooling_averages_real_positions_only() {
        let x = act(5, 1, 3, &[1.0, 2.0, 6.0, 0.0, 0.0]);
        let y = AvgPool { window: 2 }.apply(&x);
        assert_eq!(y.positions, 3);
        assert_eq!(y.len, 2);
        assert_eq!(y.data, vec![1.5, 6.0, 0.0]);
    }

    #[test]
    fn conv_same_padding() {
        // Single channel, kernel [1, 1, 1]: each output sums its real neighbours.
        let c = Conv1d {
            inputs: 1,
            outputs: 1,
            width: 3,
            weight: vec![1.0; 3],
            bias: vec![0.5],
        };
        let x = act(4, 1, 3, &[1.0, 2.0, 3.0, 0.0]);
        let y = c.apply(&x, &c.weight, Some(&c.bias));
        assert_eq!(y.data, vec![3.5, 6.5, 5.5, 0.0]);
    }

    #[test]
    fn linear_is_matrix_vector_product() {
        let l = Linear {
            inputs: 2,
            outputs: 2,
            weight: vec![1.0, 2.0, -1.0, 0.5],
            bias: vec![0.0, 1.0],
        };
        let y = l.apply(&Activation::vector(vec![3.0, 4.0]), &l.weight, Some(&l.bias));
        assert_eq!(y.data, vec![11.0, 0.0]);
    }
}
