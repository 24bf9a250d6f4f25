//! Dense residual network with hand-written reverse-mode gradients.
//!
//! Layout for `num_layers = L`: layer 0 maps the input to the hidden width,
//! layers `1..L-1` are residual blocks `x + act(W·drop(x) + b)`, and the last
//! layer is a plain affine map to the head's parameter vector. All but the
//! last layer are followed by the activation; dropout precedes every layer
//! except the first and the last.

mod optim;

pub use optim::{adam_step, plateau_scheduler, OptimizerState, PlateauScheduler};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    /// Linear network; only used to check dropout scaling.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Silu => a * sigmoid(a),
            Activation::Identity => a,
        }
    }

    #[inline]
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(a);
                s * (1.0 + a * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout_prob: f64,
    pub output_dim: usize,
    pub activation: Activation,
}

impl NetworkConfig {
    pub const DEFAULT_HIDDEN: usize = 256;
    pub const DEFAULT_LAYERS: usize = 6;
    pub const DEFAULT_DROPOUT: f64 = 0.2;

    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        NetworkConfig {
            input_dim,
            hidden_dim,
            num_layers: Self::DEFAULT_LAYERS,
            dropout_prob: Self::DEFAULT_DROPOUT,
            output_dim,
            activation: Activation::Silu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 2 {
            return Err(Error::config(format!(
                "network needs at least 2 layers, got {}",
                self.num_layers
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::config(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_prob
            )));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("network dimensions must be positive"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.num_layers)
            .map(|l| {
                let fan_in = if l == 0 { self.input_dim } else { self.hidden_dim };
                let fan_out = if l + 1 == self.num_layers {
                    self.output_dim
                } else {
                    self.hidden_dim
                };
                (fan_in, fan_out)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    fn has_dropout(&self, layer: usize) -> bool {
        layer > 0 && layer + 1 < self.num_layers && self.dropout_prob > 0.0
    }

    fn is_residual(&self, layer: usize) -> bool {
        layer > 0 && layer + 1 < self.num_layers
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
}

/// Network weights in one flat vector.
///
/// Per layer the weight matrix (`fan_in × fan_out`, row-major) is stored
/// first, then the bias. Every mutable access bumps a generation counter so
/// that tapes recorded against older weights are rejected.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    config: NetworkConfig,
    slots: Vec<LayerSlot>,
    flat: Vec<f64>,
    generation: u64,
}

impl PartialEq for NetworkParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.flat == other.flat
    }
}

fn slots_for(config: &NetworkConfig) -> Vec<LayerSlot> {
    let mut offset = 0;
    config
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let slot = LayerSlot {
                fan_in,
                fan_out,
                weight: offset,
                bias: offset + fan_in * fan_out,
            };
            offset += fan_in * fan_out + fan_out;
            slot
        })
        .collect()
}

impl NetworkParams {
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let n = config.param_count();
        Ok(NetworkParams {
            slots: slots_for(&config),
            config,
            flat: vec![0.0; n],
            generation: 0,
        })
    }

    /// Uniform fan-in initialisation in `±1/√fan_in` for weights and biases.
    pub fn init<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        for slot in p.slots.clone() {
            let limit = 1.0 / (slot.fan_in as f64).sqrt();
            let end = slot.bias + slot.fan_out;
            for w in &mut p.flat[slot.weight..end] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(p)
    }

    pub fn from_flat(config: NetworkConfig, flat: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if flat.len() != config.param_count() {
            return Err(Error::contract(format!(
                "flat parameter vector has {} entries, config needs {}",
                flat.len(),
                config.param_count()
            )));
        }
        Ok(NetworkParams {
            slots: slots_for(&config),
            config,
            flat,
            generation: 0,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.flat.clone()
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.flat
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let s = self.slots[layer];
        ArrayView2::from_shape((s.fan_in, s.fan_out), &self.flat[s.weight..s.bias]).unwrap()
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let s = self.slots[layer];
        ArrayView1::from(&self.flat[s.bias..s.bias + s.fan_out])
    }

    pub fn layer_mut(&mut self, layer: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        self.generation += 1;
        let s = self.slots[layer];
        let (w, rest) = self.flat[s.weight..].split_at_mut(s.fan_in * s.fan_out);
        (
            ArrayViewMut2::from_shape((s.fan_in, s.fan_out), w).unwrap(),
            ArrayViewMut1::from(&mut rest[..s.fan_out]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

struct LayerRecord {
    /// Input after dropout, i.e. what multiplied the weights.
    input: Array2<f64>,
    preact: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Everything `backward` needs from one `forward` call.
pub struct Tape {
    generation: u64,
    layers: Vec<LayerRecord>,
}

fn check_input(params: &NetworkParams, input: &ArrayView2<f64>) -> Result<()> {
    if input.ncols() != params.config.input_dim {
        return Err(Error::contract(format!(
            "input has {} features, network expects {}",
            input.ncols(),
            params.config.input_dim
        )));
    }
    Ok(())
}

fn dense(x: &ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut a = x.dot(&w);
    a += &b;
    a
}

/// Runs a batch (one sample per row) and records a tape.
pub fn forward<R: Rng + ?Sized>(
    params: &NetworkParams,
    input: ArrayView2<f64>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Array2<f64>, Tape)> {
    check_input(params, &input)?;
    let cfg = &params.config;
    let keep = 1.0 - cfg.dropout_prob;
    let mut x = input.to_owned();
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let mask = (mode == Mode::Train && cfg.has_dropout(l)).then(|| {
            Array2::from_shape_fn(x.raw_dim(), |_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        });
        let dropped = match &mask {
            Some(m) => &x * m,
            None => x.clone(),
        };
        let preact = dense(&dropped.view(), params.weight(l), params.bias(l));
        let out = if l + 1 == cfg.num_layers {
            preact.clone()
        } else {
            let act = preact.mapv(|a| cfg.activation.apply(a));
            if cfg.is_residual(l) {
                act + &x
            } else {
                act
            }
        };
        layers.push(LayerRecord {
            input: dropped,
            preact,
            mask,
        });
        x = out;
    }
    Ok((
        x,
        Tape {
            generation: params.generation,
            layers,
        },
    ))
}

/// Deterministic inference; dropout is the identity.
pub fn forward_eval(params: &NetworkParams, input: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input(params, &input)?;
    let cfg = &params.config;
    let mut x = input.to_owned();
    for l in 0..cfg.num_layers {
        let preact = dense(&x.view(), params.weight(l), params.bias(l));
        x = if l + 1 == cfg.num_layers {
            preact
        } else {
            let mut act = preact.mapv_into(|a| cfg.activation.apply(a));
            if cfg.is_residual(l) {
                act += &x;
            }
            act
        };
    }
    Ok(x)
}

/// Gradient of `Σ output_grad ⊙ output` with respect to every parameter,
/// laid out like [`NetworkParams::flat`].
pub fn backward(params: &NetworkParams, tape: &Tape, output_grad: ArrayView2<f64>) -> Result<Vec<f64>> {
    if tape.generation != params.generation {
        return Err(Error::StaleTape {
            recorded: tape.generation,
            current: params.generation,
        });
    }
    let cfg = &params.config;
    let batch = tape.layers[0].input.nrows();
    if output_grad.dim() != (batch, cfg.output_dim) {
        return Err(Error::contract(format!(
            "output gradient shape {:?}, expected {:?}",
            output_grad.dim(),
            (batch, cfg.output_dim)
        )));
    }
    let mut grad = vec![0.0; params.len()];
    let mut g = output_grad.to_owned();
    for l in (0..cfg.num_layers).rev() {
        let rec = &tape.layers[l];
        let slot = params.slots[l];
        let ga = if l + 1 == cfg.num_layers {
            g.clone()
        } else {
            let mut ga = g.clone();
            Zip::from(&mut ga)
                .and(&rec.preact)
                .for_each(|gv, &a| *gv *= cfg.activation.derivative(a));
            ga
        };
        let dw = rec.input.t().dot(&ga);
        // `dot` may return column-major output; copy in logical order.
        for (dst, v) in grad[slot.weight..slot.bias].iter_mut().zip(dw.iter()) {
            *dst = *v;
        }
        let db: Array1<f64> = ga.sum_axis(Axis(0));
        grad[slot.bias..slot.bias + slot.fan_out].copy_from_slice(db.as_slice().unwrap());
        if l > 0 {
            let mut gx = ga.dot(&params.weight(l).t());
            if let Some(m) = &rec.mask {
                gx *= m;
            }
            if cfg.is_residual(l) {
                gx += &g;
            }
            g = gx;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = NetworkParams::zeros(NetworkConfig::new(48, 16, 42)).unwrap();
        let x = Array2::from_elem((3, 48), 1.7);
        let y = forward_eval(&p, x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_gradient_of_single_layer() {
        // y = w x with a 2-layer net whose hidden layer is the identity.
        let mut cfg = NetworkConfig::new(1, 1, 1);
        cfg.num_layers = 2;
        cfg.activation = Activation::Identity;
        let mut p = NetworkParams::zeros(cfg).unwrap();
        p.flat_mut().copy_from_slice(&[1.0, 0.0, 3.0, 0.0]);
        let (y, tape) = forward(&p, array![[2.0]].view(), Mode::Eval, &mut rng(0)).unwrap();
        assert_eq!(y[[0, 0]], 6.0);
        let g = backward(&p, &tape, array![[1.0]].view()).unwrap();
        // d/dw_last = hidden = 2; d/dw_first = 3 * 2
        assert_eq!(g, vec![6.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradient() {
        let p = NetworkParams::init(NetworkConfig::new(4, 6, 3), &mut rng(1)).unwrap();
        let x = Array2::from_elem((5, 4), 0.3);
        let (_, tape) = forward(&p, x.view(), Mode::Train, &mut rng(2)).unwrap();
        let g = backward(&p, &tape, Array2::zeros((5, 3)).view()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut p = NetworkParams::init(NetworkConfig::new(4, 6, 3), &mut rng(1)).unwrap();
        let x = Array2::from_elem((2, 4), 0.3);
        let (_, tape) = forward(&p, x.view(), Mode::Eval, &mut rng(2)).unwrap();
        p.flat_mut()[0] += 1.0;
        let err = backward(&p, &tape, Array2::ones((2, 3)).view()).unwrap_err();
        assert!(matches!(err, Error::StaleTape { .. }));
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let p = NetworkParams::zeros(NetworkConfig::new(4, 6, 3)).unwrap();
        assert!(matches!(
            forward_eval(&p, Array2::zeros((1, 5)).view()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn eval_is_deterministic_and_train_differs() {
        let p = NetworkParams::init(NetworkConfig::new(8, 16, 4), &mut rng(3)).unwrap();
        let x = Array2::from_shape_fn((4, 8), |(i, j)| (i * 8 + j) as f64 * 0.1);
        let a = forward_eval(&p, x.view()).unwrap();
        let b = forward_eval(&p, x.view()).unwrap();
        assert_eq!(a, b);
        let (c, _) = forward(&p, x.view(), Mode::Eval, &mut rng(9)).unwrap();
        assert_eq!(a, c);
        let (d, _) = forward(&p, x.view(), Mode::Train, &mut rng(9)).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn config_validation() {
        let mut c = NetworkConfig::new(48, 256, 840);
        assert!(c.validate().is_ok());
        c.num_layers = 1;
        assert!(c.validate().is_err());
        c.num_layers = 6;
        c.dropout_prob = 1.0;
        assert!(c.validate().is_err());
    }
}
