use rand::Rng;

use super::Parameterized;
use crate::{Error, Result, Scalar};

/// Hidden layer widths used by every network in the pipeline.
pub const HIDDEN_SIZES: [usize; 2] = [32, 32];

/// Fully connected network: tanh on hidden layers, linear output.
///
/// All weights and biases live in one flat vector. Layer `l` maps
/// `sizes[l] -> sizes[l + 1]` and stores its weight matrix row-major
/// (`out x in`) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Activations recorded by [`Mlp::forward_trace`]: `acts[0]` is the input,
/// `acts[l]` the output of layer `l` (after tanh for hidden layers).
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub acts: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("trace holds at least the input")
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let tail = ra.iter().zip(rb).fold(T::zero(), |s, (&x, &y)| s + x * y);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::from_params(sizes, vec![T::zero(); param_count(sizes)])
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = T::lit(rng.gen_range(-limit..limit));
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<T>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn layer(&self, l: usize, off: usize) -> (&[T], &[T]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (w, b)
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_trace(x)?.acts.pop().unwrap())
    }

    pub fn forward_trace(&self, x: &[T]) -> Result<Trace<T>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l, off);
            let input = &acts[l];
            let n_in = self.sizes[l];
            let hidden = l + 1 < self.n_layers();
            let out: Vec<T> = b
                .iter()
                .enumerate()
                .map(|(o, &bias)| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = bias + dot(row, input);
                    if hidden {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            off += w.len() + b.len();
            acts.push(out);
        }
        Ok(Trace { acts })
    }

    /// Reverse-mode pass. Accumulates dLoss/dParams into `grad` and returns
    /// dLoss/dInput, given `d_out` = dLoss/dOutput at the traced point.
    pub fn backward(&self, trace: &Trace<T>, d_out: &[T], grad: &mut [T]) -> Result<Vec<T>> {
        if grad.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        self.pull_back(trace, d_out, Some(grad))
    }

    /// dLoss/dInput only; parameter gradients are not formed.
    pub fn input_grad(&self, trace: &Trace<T>, d_out: &[T]) -> Result<Vec<T>> {
        self.pull_back(trace, d_out, None)
    }

    fn pull_back(&self, trace: &Trace<T>, d_out: &[T], mut grad: Option<&mut [T]>) -> Result<Vec<T>> {
        if d_out.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: d_out.len(),
            });
        }
        let mut off = self.params.len();
        let mut delta = d_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            let input = &trace.acts[l];
            if let Some(grad) = grad.as_deref_mut() {
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for (g, &xi) in row.iter_mut().zip(input) {
                        *g = *g + d * xi;
                    }
                    let gb = &mut grad[off + n_in * n_out + o];
                    *gb = *gb + d;
                }
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut d_in = vec![T::zero(); n_in];
            for o in 0..n_out {
                let d = delta[o];
                for (di, &wi) in d_in.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *di = *di + wi * d;
                }
            }
            if l > 0 {
                // input to this layer came out of a tanh
                for (di, &a) in d_in.iter_mut().zip(input) {
                    *di = *di * (T::one() - a * a);
                }
            }
            delta = d_in;
        }
        Ok(delta)
    }
}

impl<T: Scalar> Parameterized<T> for Mlp<T> {
    fn params(&self) -> &[T] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }
}

/// MLP value function. For discrete actions the input is the encoded state
/// and the output has one unit per action; as a continuous critic the input
/// is `[state, action]` and the output is a single unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpQ<T> {
    net: Mlp<T>,
}

impl<T: Scalar> MlpQ<T> {
    pub fn new(net: Mlp<T>) -> Self {
        Self { net }
    }

    pub fn discrete<R: Rng + ?Sized>(state_dim: usize, n_actions: usize, rng: &mut R) -> Result<Self> {
        let sizes = [state_dim, HIDDEN_SIZES[0], HIDDEN_SIZES[1], n_actions];
        Ok(Self::new(Mlp::xavier(&sizes, rng)?))
    }

    pub fn critic<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        let sizes = [state_dim + action_dim, HIDDEN_SIZES[0], HIDDEN_SIZES[1], 1];
        Ok(Self::new(Mlp::xavier(&sizes, rng)?))
    }

    pub fn net(&self) -> &Mlp<T> {
        &self.net
    }

    /// Critic value `Q(s, a)`.
    pub fn value(&self, s: &[T], a: &[T]) -> Result<T> {
        let x: Vec<T> = s.iter().chain(a).copied().collect();
        Ok(self.net.forward(&x)?[0])
    }

    /// Critic value and dQ/da at `(s, a)`.
    pub fn value_and_action_grad(&self, s: &[T], a: &[T]) -> Result<(T, Vec<T>)> {
        let x: Vec<T> = s.iter().chain(a).copied().collect();
        let trace = self.net.forward_trace(&x)?;
        let q = trace.output()[0];
        let d_in = self.net.input_grad(&trace, &[T::one()])?;
        Ok((q, d_in[s.len()..].to_vec()))
    }
}

impl<T: Scalar> Parameterized<T> for MlpQ<T> {
    fn params(&self) -> &[T] {
        self.net.params()
    }

    fn params_mut(&mut self) -> &mut [T] {
        self.net.params_mut()
    }
}

/// Deterministic actor; the linear head is squashed by tanh into
/// `[low, high]` per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpActor<T> {
    net: Mlp<T>,
    low: Vec<T>,
    high: Vec<T>,
}

impl<T: Scalar> MlpActor<T> {
    pub fn new(net: Mlp<T>, low: Vec<T>, high: Vec<T>) -> Result<Self> {
        if low.len() != net.output_dim() || high.len() != net.output_dim() {
            return Err(Error::Dimension {
                expected: net.output_dim(),
                got: low.len().min(high.len()),
            });
        }
        if low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidArgument("actor bounds need low < high".into()));
        }
        Ok(Self { net, low, high })
    }

    pub fn xavier<R: Rng + ?Sized>(state_dim: usize, low: Vec<T>, high: Vec<T>, rng: &mut R) -> Result<Self> {
        let sizes = [state_dim, HIDDEN_SIZES[0], HIDDEN_SIZES[1], low.len()];
        Self::new(Mlp::xavier(&sizes, rng)?, low, high)
    }

    pub fn net(&self) -> &Mlp<T> {
        &self.net
    }

    pub fn low(&self) -> &[T] {
        &self.low
    }

    pub fn high(&self) -> &[T] {
        &self.high
    }

    fn squash(&self, z: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        z.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(&z, (&lo, &hi))| {
                let mid = (hi + lo) / two;
                let half = (hi - lo) / two;
                // tanh can round to exactly ±1; keep the output in the box
                (mid + half * z.tanh()).max(lo).min(hi)
            })
            .collect()
    }

    pub fn act(&self, s: &[T]) -> Result<Vec<T>> {
        Ok(self.squash(&self.net.forward(s)?))
    }

    /// Action at `s`; `d_action` maps that action to dLoss/dAction, which is
    /// pulled back and accumulated into `grad`.
    pub fn act_with_backward(&self, s: &[T], d_action: impl FnOnce(&[T]) -> Vec<T>, grad: &mut [T]) -> Result<Vec<T>> {
        let trace = self.net.forward_trace(s)?;
        let z = trace.output();
        let a = self.squash(z);
        let d_a = d_action(&a);
        let two = T::lit(2.0);
        let d_z: Vec<T> = z
            .iter()
            .zip(&d_a)
            .zip(self.low.iter().zip(&self.high))
            .map(|((&z, &d), (&lo, &hi))| {
                let t = z.tanh();
                d * (hi - lo) / two * (T::one() - t * t)
            })
            .collect();
        self.net.backward(&trace, &d_z, grad)?;
        Ok(a)
    }
}

impl<T: Scalar> Parameterized<T> for MlpActor<T> {
    fn params(&self) -> &[T] {
        self.net.params()
    }

    fn params_mut(&mut self) -> &mut [T] {
        self.net.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from_seed;

    /// Straight-line affine + tanh chain written independently of `Mlp`.
    fn reference_forward(sizes: &[usize], p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let mut out = vec![0.0; n_out];
            for (o, v) in out.iter_mut().enumerate() {
                let mut z = p[off + n_in * n_out + o];
                for i in 0..n_in {
                    z += p[off + o * n_in + i] * a[i];
                }
                *v = if l + 1 < layers { z.tanh() } else { z };
            }
            off += n_in * n_out + n_out;
            a = out;
        }
        a
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[4, 8, 3]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn forward_matches_reference_chain() {
        let mut rng = rng_from_seed(11);
        let sizes = [4, 32, 32, 3];
        let net = Mlp::<f64>::xavier(&sizes, &mut rng).unwrap();
        let mut p = net.params().to_vec();
        // non-zero biases so the bias path is exercised too
        for (i, v) in p.iter_mut().enumerate() {
            *v += 0.01 * ((i % 7) as f64 - 3.0);
        }
        let net = Mlp::from_params(&sizes, p.clone()).unwrap();
        for k in 0..20 {
            let x: Vec<f64> = (0..4).map(|i| ((k * 4 + i) as f64 * 0.37).sin()).collect();
            let got = net.forward(&x).unwrap();
            let want = reference_forward(&sizes, &p, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn f32_forward_tracks_f64() {
        let mut rng = rng_from_seed(3);
        let net64 = Mlp::<f64>::xavier(&[2, 32, 32, 1], &mut rng).unwrap();
        let p32: Vec<f32> = net64.params().iter().map(|&v| v as f32).collect();
        let net32 = Mlp::<f32>::from_params(net64.sizes(), p32).unwrap();
        let y64 = net64.forward(&[0.3, -0.7]).unwrap()[0];
        let y32 = net32.forward(&[0.3, -0.7]).unwrap()[0];
        assert!((y64 - f64::from(y32)).abs() < 1e-5);
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let net = Mlp::<f64>::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::Dimension { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn actor_stays_inside_bounds() {
        let mut rng = rng_from_seed(5);
        let net = Mlp::<f64>::xavier(&[2, 32, 32, 1], &mut rng).unwrap();
        // blow the weights up so the head saturates
        let p: Vec<f64> = net.params().iter().map(|v| v * 50.0).collect();
        let actor = MlpActor::new(Mlp::from_params(net.sizes(), p).unwrap(), vec![-1.0], vec![1.0]).unwrap();
        for _ in 0..10_000 {
            let s = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)];
            let a = actor.act(&s).unwrap()[0];
            assert!((-1.0..=1.0).contains(&a));
        }
    }
}
