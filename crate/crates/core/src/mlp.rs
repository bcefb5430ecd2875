//! Dense multilayer perceptron with a linear output layer.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sarsa::{read_array, read_exact};
use crate::scalar::Real;

const MLP_MAGIC: &[u8; 4] = b"NMLP";
const MLP_VERSION: u16 = 1;

/// Magnitudes at or below this count as zero in sparsity diagnostics.
pub const ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Sigmoid, Activation::Tanh];

    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `a`. ReLU
    /// takes slope 0 at the kink.
    pub fn derivative<T: Real>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Tanh => T::one() - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Tanh => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == code)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Affine map with `outputs × inputs` row-major weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    fn affine_into(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.biases[o];
            for (&w, &xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    activation: Activation,
    layers: Vec<Layer<T>>,
}

/// Per-layer pre-activations and outputs of one forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache<T> {
    pub pre: Vec<Vec<T>>,
    pub post: Vec<Vec<T>>,
}

/// Desired value of one output component; the rest of the output is ignored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskedTarget<T> {
    pub index: usize,
    pub value: T,
}

/// Gradients shaped like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn flatten(&self) -> Vec<T> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers<T: Real>(layers: &[Layer<T>]) -> Vec<T> {
    let mut flat = Vec::new();
    for l in layers {
        flat.extend_from_slice(&l.weights);
        flat.extend_from_slice(&l.biases);
    }
    flat
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        for layer in &mut net.layers {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self { activation, layers })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters in layer order, weights before biases.
    pub fn params(&self) -> Vec<T> {
        flatten_layers(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    /// Applies `f(param, grad)` over matching parameters and gradients.
    pub fn zip_params_mut(&mut self, grads: &Gradients<T>, mut f: impl FnMut(usize, &mut T, T)) {
        let mut k = 0;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, &d) in l.weights.iter_mut().zip(&g.weights).chain(l.biases.iter_mut().zip(&g.biases)) {
                f(k, p, d);
                k += 1;
            }
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::Dimension {
                expected: self.input_width(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine_into(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|z| *z = self.activation.apply(*z));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer's pre-activation and output. The
    /// first `post` entry is the input itself.
    pub fn forward_cached(&self, x: &[T], cache: &mut ForwardCache<T>) -> Result<()> {
        self.check_input(x)?;
        let n = self.layers.len();
        cache.pre.resize_with(n, Vec::new);
        cache.post.resize_with(n + 1, Vec::new);
        cache.post[0].clear();
        cache.post[0].extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = cache.post.split_at_mut(i + 1);
            layer.affine_into(&before[i], &mut cache.pre[i]);
            let out = &mut after[0];
            out.clear();
            if i + 1 < n {
                out.extend(cache.pre[i].iter().map(|&z| self.activation.apply(z)));
            } else {
                out.extend_from_slice(&cache.pre[i]);
            }
        }
        Ok(())
    }

    /// Hidden-layer outputs, one vector per hidden layer.
    pub fn hidden_activations(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        let n = self.layers.len();
        Ok(cache.post[1..n].to_vec())
    }

    /// Masked mean squared error over the batch and its exact gradient.
    pub fn backward(&self, inputs: &[Vec<T>], targets: &[MaskedTarget<T>]) -> Result<(T, Gradients<T>)> {
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(Error::Dimension {
                expected: inputs.len().max(1),
                actual: targets.len(),
            });
        }
        let mut grads = Gradients {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        };
        let batch = T::from_usize(inputs.len()).unwrap();
        let n = self.layers.len();
        let mut cache = ForwardCache::default();
        let mut delta = Vec::new();
        let mut delta_prev = Vec::new();
        let mut loss = T::zero();
        for (x, t) in inputs.iter().zip(targets) {
            if t.index >= self.output_width() {
                return Err(Error::Dimension {
                    expected: self.output_width(),
                    actual: t.index,
                });
            }
            self.forward_cached(x, &mut cache)?;
            let residual = cache.post[n][t.index] - t.value;
            loss += residual * residual;
            delta.clear();
            delta.resize(self.output_width(), T::zero());
            delta[t.index] = T::lit(2.0) * residual / batch;
            for i in (0..n).rev() {
                let layer = &self.layers[i];
                let g = &mut grads.layers[i];
                let input = &cache.post[i];
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, &xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                if i == 0 {
                    break;
                }
                delta_prev.clear();
                delta_prev.resize(layer.inputs, T::zero());
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (dp, &w) in delta_prev.iter_mut().zip(row) {
                        *dp += d * w;
                    }
                }
                for (j, dp) in delta_prev.iter_mut().enumerate() {
                    *dp *= self.activation.derivative(cache.pre[i - 1][j], cache.post[i][j]);
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
        Ok((loss / batch, grads))
    }

    /// Masked batch loss without gradients.
    pub fn loss(&self, inputs: &[Vec<T>], targets: &[MaskedTarget<T>]) -> Result<T> {
        let preds = inputs
            .iter()
            .zip(targets)
            .map(|(x, t)| self.forward(x).map(|o| o[t.index]))
            .collect::<Result<Vec<T>>>()?;
        let values: Vec<T> = targets.iter().map(|t| t.value).collect();
        Ok(mse_loss(&preds, &values))
    }

    /// Layer-order checkpoint:
    ///
    /// ```text
    /// magic "NMLP" | version u16 | activation u8 (0 relu, 1 sigmoid, 2 tanh) |
    /// layer count + 1 as u32 | widths u32 × (layers + 1) | parameters f64 × count
    /// ```
    ///
    /// Little-endian throughout; parameters ordered as in [`Mlp::params`].
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        w.write_all(MLP_MAGIC).map_err(io)?;
        w.write_all(&MLP_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&[self.activation.code()]).map_err(io)?;
        let widths = self.widths();
        w.write_all(&(widths.len() as u32).to_le_bytes()).map_err(io)?;
        for width in widths {
            w.write_all(&(width as u32).to_le_bytes()).map_err(io)?;
        }
        for p in self.params() {
            w.write_all(&p.as_f64().to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MLP_MAGIC {
            return Err(Error::Checkpoint("not a network checkpoint".into()));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != MLP_VERSION {
            return Err(Error::Checkpoint(format!("unsupported network version {version}")));
        }
        let [code] = read_array::<_, 1>(r)?;
        let activation =
            Activation::from_code(code).ok_or_else(|| Error::Checkpoint(format!("unknown activation code {code}")))?;
        let count = u32::from_le_bytes(read_array(r)?) as usize;
        if count > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {count}")));
        }
        let widths = (0..count)
            .map(|_| read_array(r).map(|b| u32::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::zeros(&widths, activation).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let params = (0..net.param_count())
            .map(|_| read_array(r).map(|b| T::lit(f64::from_le_bytes(b))))
            .collect::<Result<Vec<_>>>()?;
        net.set_params(&params)?;
        Ok(net)
    }
}

/// Mean of squared differences.
pub fn mse_loss<T: Real>(pred: &[T], target: &[T]) -> T {
    assert_eq!(pred.len(), target.len(), "prediction and target lengths differ");
    if pred.is_empty() {
        return T::zero();
    }
    let sum: T = pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum();
    sum / T::from_usize(pred.len()).unwrap()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport<T> {
    /// Parameters with magnitude above the zero tolerance.
    pub nonzero_count: usize,
    pub max_weight_norm: T,
    pub output_bound: T,
    /// Hidden activations at or below the zero tolerance over all probes.
    pub inactive_hidden: usize,
    pub hidden_probed: usize,
}

impl<T: Real> SparsityReport<T> {
    pub fn inactive_fraction(&self) -> f64 {
        if self.hidden_probed == 0 {
            0.0
        } else {
            self.inactive_hidden as f64 / self.hidden_probed as f64
        }
    }
}

pub fn sparsity_report<T: Real>(net: &Mlp<T>, probes: &[Vec<T>]) -> Result<SparsityReport<T>> {
    let tol = T::lit(ZERO_TOLERANCE);
    let params = net.params();
    let nonzero_count = params.iter().filter(|p| p.abs() > tol).count();
    let max_weight_norm = params.iter().fold(T::zero(), |m, p| m.max(p.abs()));
    let mut output_bound = T::zero();
    let mut inactive_hidden = 0;
    let mut hidden_probed = 0;
    let mut cache = ForwardCache::default();
    let n = net.layers.len();
    for x in probes {
        net.forward_cached(x, &mut cache)?;
        output_bound = cache.post[n].iter().fold(output_bound, |m, o| m.max(o.abs()));
        for layer in &cache.post[1..n] {
            hidden_probed += layer.len();
            inactive_hidden += layer.iter().filter(|a| a.abs() <= tol).count();
        }
    }
    Ok(SparsityReport {
        nonzero_count,
        max_weight_norm,
        output_bound,
        inactive_hidden,
        hidden_probed,
    })
}
