//! Small dense and gated-recurrent networks with hand-written backprop.
//!
//! Parameters live in one flat `Vec<f64>` per network so that optimizers,
//! target copies and checkpoints can treat them uniformly. A [`Net`] is an
//! optional GRU front-end followed by an MLP head. The head may take an extra
//! input (a critic's action) that bypasses the recurrent part.

use ndarray::{
    concatenate, linalg::general_mat_mul, s, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` by the derivative, given the activation's output.
    fn backprop(self, grad: &mut Array2<f64>, out: &Array2<f64>) {
        match self {
            Activation::Relu => grad.zip_mut_with(out, |g, &y| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => grad.zip_mut_with(out, |g, &y| *g *= 1.0 - y * y),
            Activation::Identity => {}
        }
    }
}

fn matrix(p: &[f64], offset: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &p[offset..offset + rows * cols]).expect("parameter slice shape")
}

fn matrix_mut(p: &mut [f64], offset: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[offset..offset + rows * cols]).expect("parameter slice shape")
}

fn vector(p: &[f64], offset: usize, len: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&p[offset..offset + len])
}

fn vector_mut(p: &mut [f64], offset: usize, len: usize) -> ArrayViewMut1<'_, f64> {
    ArrayViewMut1::from(&mut p[offset..offset + len])
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    weight: usize,
    bias: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Dense {
    fn size(fan_in: usize, fan_out: usize) -> usize {
        fan_in * fan_out + fan_out
    }
}

/// Fully connected layers with a shared hidden activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden_activation: Activation,
    output_activation: Activation,
    offset: usize,
    len: usize,
}

impl Mlp {
    fn new(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        offset: usize,
    ) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut at = offset;
        let layers = widths
            .windows(2)
            .map(|w| {
                let d = Dense {
                    weight: at,
                    bias: at + w[0] * w[1],
                    fan_in: w[0],
                    fan_out: w[1],
                };
                at += Dense::size(w[0], w[1]);
                d
            })
            .collect();
        Self {
            layers,
            hidden_activation,
            output_activation,
            offset,
            len: at - offset,
        }
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Returns the outputs of every layer, input first.
    fn forward(&self, p: &[f64], x: Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for (i, l) in self.layers.iter().enumerate() {
            let prev = acts.last().expect("input present");
            let mut z = prev.dot(&matrix(p, l.weight, l.fan_in, l.fan_out));
            z += &vector(p, l.bias, l.fan_out);
            self.activation(i).apply(&mut z);
            acts.push(z);
        }
        acts
    }

    /// Accumulates parameter gradients into `g` and returns the input gradient.
    fn backward(&self, p: &[f64], acts: &[Array2<f64>], grad_out: Array2<f64>, g: &mut [f64]) -> Array2<f64> {
        let mut delta = grad_out;
        for (i, l) in self.layers.iter().enumerate().rev() {
            self.activation(i).backprop(&mut delta, &acts[i + 1]);
            let prev = &acts[i];
            general_mat_mul(
                1.0,
                &prev.t(),
                &delta,
                1.0,
                &mut matrix_mut(g, l.weight, l.fan_in, l.fan_out),
            );
            vector_mut(g, l.bias, l.fan_out).scaled_add(1.0, &delta.sum_axis(Axis(0)));
            delta = delta.dot(&matrix(p, l.weight, l.fan_in, l.fan_out).t());
        }
        delta
    }

    fn init<R: Rng + ?Sized>(&self, p: &mut [f64], final_scale: Option<f64>, rng: &mut R) {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let bound = match final_scale {
                Some(s) if i == last => s,
                _ => 1.0 / (l.fan_in as f64).sqrt(),
            };
            for v in &mut p[l.weight..l.bias + l.fan_out] {
                *v = rng.random_range(-bound..=bound);
            }
        }
    }
}

/// Gated recurrent unit with gate order reset, update, candidate.
///
/// `r = sig(x Wi_r + bi_r + h Wh_r + bh_r)`,
/// `z = sig(x Wi_z + bi_z + h Wh_z + bh_z)`,
/// `n = tanh(x Wi_n + bi_n + r * (h Wh_n + bh_n))`,
/// `h' = (1 - z) * n + z * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    input: usize,
    hidden: usize,
    wi: usize,
    wh: usize,
    bi: usize,
    bh: usize,
    len: usize,
}

#[derive(Debug, Clone)]
struct GruStep {
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    /// `h Wh_n + bh_n`, needed for the reset-gate gradient.
    hn: Array2<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Gru {
    fn new(input: usize, hidden: usize, offset: usize) -> Self {
        let h3 = 3 * hidden;
        let wi = offset;
        let wh = wi + input * h3;
        let bi = wh + hidden * h3;
        let bh = bi + h3;
        Self {
            input,
            hidden,
            wi,
            wh,
            bi,
            bh,
            len: bh + h3 - offset,
        }
    }

    fn step(&self, p: &[f64], x: &Array2<f64>, h: &Array2<f64>) -> (Array2<f64>, GruStep) {
        let hd = self.hidden;
        let b = x.nrows();
        let mut gi = x.dot(&matrix(p, self.wi, self.input, 3 * hd));
        gi += &vector(p, self.bi, 3 * hd);
        let mut gh = h.dot(&matrix(p, self.wh, hd, 3 * hd));
        gh += &vector(p, self.bh, 3 * hd);

        let mut r = Array2::zeros((b, hd));
        let mut z = Array2::zeros((b, hd));
        let mut n = Array2::zeros((b, hd));
        let mut hn = Array2::zeros((b, hd));
        let mut h_new = Array2::zeros((b, hd));
        for i in 0..b {
            for j in 0..hd {
                let rv = sigmoid(gi[[i, j]] + gh[[i, j]]);
                let zv = sigmoid(gi[[i, hd + j]] + gh[[i, hd + j]]);
                let hv = gh[[i, 2 * hd + j]];
                let nv = (gi[[i, 2 * hd + j]] + rv * hv).tanh();
                r[[i, j]] = rv;
                z[[i, j]] = zv;
                n[[i, j]] = nv;
                hn[[i, j]] = hv;
                h_new[[i, j]] = nv + zv * (h[[i, j]] - nv);
            }
        }
        (h_new, GruStep { r, z, n, hn })
    }

    /// Backprop through one step. Returns `(dx, dh_prev)`.
    fn step_backward(
        &self,
        p: &[f64],
        x: &Array2<f64>,
        h_prev: &Array2<f64>,
        c: &GruStep,
        dh: &Array2<f64>,
        g: &mut [f64],
    ) -> (Array2<f64>, Array2<f64>) {
        let hd = self.hidden;
        let b = x.nrows();
        let mut dgi = Array2::zeros((b, 3 * hd));
        let mut dgh = Array2::zeros((b, 3 * hd));
        let mut dh_prev = Array2::zeros((b, hd));
        for i in 0..b {
            for j in 0..hd {
                let (r, z, n) = (c.r[[i, j]], c.z[[i, j]], c.n[[i, j]]);
                let d = dh[[i, j]];
                let dn_pre = d * (1.0 - z) * (1.0 - n * n);
                let dr_pre = dn_pre * c.hn[[i, j]] * r * (1.0 - r);
                let dz_pre = d * (h_prev[[i, j]] - n) * z * (1.0 - z);
                dgi[[i, j]] = dr_pre;
                dgi[[i, hd + j]] = dz_pre;
                dgi[[i, 2 * hd + j]] = dn_pre;
                dgh[[i, j]] = dr_pre;
                dgh[[i, hd + j]] = dz_pre;
                dgh[[i, 2 * hd + j]] = dn_pre * r;
                dh_prev[[i, j]] = d * z;
            }
        }

        general_mat_mul(1.0, &x.t(), &dgi, 1.0, &mut matrix_mut(g, self.wi, self.input, 3 * hd));
        general_mat_mul(1.0, &h_prev.t(), &dgh, 1.0, &mut matrix_mut(g, self.wh, hd, 3 * hd));
        vector_mut(g, self.bi, 3 * hd).scaled_add(1.0, &dgi.sum_axis(Axis(0)));
        vector_mut(g, self.bh, 3 * hd).scaled_add(1.0, &dgh.sum_axis(Axis(0)));

        let dx = dgi.dot(&matrix(p, self.wi, self.input, 3 * hd).t());
        general_mat_mul(1.0, &dgh, &matrix(p, self.wh, hd, 3 * hd).t(), 1.0, &mut dh_prev);
        (dx, dh_prev)
    }

    fn init<R: Rng + ?Sized>(&self, p: &mut [f64], rng: &mut R) {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        for v in &mut p[self.wi..self.wi + self.len] {
            *v = rng.random_range(-bound..=bound);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    /// Width of the main (per-step) input.
    pub input: usize,
    /// Width of an input fed straight to the head, e.g. a critic's action.
    pub extra: usize,
    /// Hidden width of a GRU front-end, if any.
    pub recurrent: Option<usize>,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Initialize the last layer in `[-s, s]` instead of fan-in scaling.
    pub final_init: Option<f64>,
}

impl NetSpec {
    pub fn actor(input: usize, output: usize, layers: usize, width: usize) -> Self {
        Self {
            input,
            extra: 0,
            recurrent: None,
            hidden: vec![width; layers],
            output,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Tanh,
            final_init: Some(3e-3),
        }
    }

    pub fn critic(input: usize, action: usize, layers: usize, width: usize) -> Self {
        Self {
            input,
            extra: action,
            recurrent: None,
            hidden: vec![width; layers],
            output: 1,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            final_init: Some(3e-3),
        }
    }

    pub fn with_recurrent(mut self, hidden: usize) -> Self {
        self.recurrent = Some(hidden);
        self
    }
}

/// Optional GRU followed by an MLP head.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    spec: NetSpec,
    gru: Option<Gru>,
    mlp: Mlp,
    len: usize,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Output per step, each `batch x output`.
    pub outputs: Vec<Array2<f64>>,
    inputs: Vec<Array2<f64>>,
    /// Hidden states `h_0 ..= h_T` of the GRU (empty without one).
    hiddens: Vec<Array2<f64>>,
    steps: Vec<GruStep>,
    /// Head activations over all steps stacked along the batch axis.
    head: Vec<Array2<f64>>,
    batch: usize,
}

/// Gradients with respect to the inputs of a forward pass.
#[derive(Debug, Clone)]
pub struct InputGrads {
    pub inputs: Vec<Array2<f64>>,
    pub extras: Vec<Array2<f64>>,
}

impl Net {
    pub fn new(spec: NetSpec) -> Self {
        assert!(spec.input > 0 && spec.output > 0, "network needs inputs and outputs");
        assert!(
            !spec.hidden.is_empty() && spec.hidden.iter().all(|w| *w > 0),
            "need at least one hidden layer"
        );
        let gru = spec.recurrent.map(|h| Gru::new(spec.input, h, 0));
        let head_offset = gru.as_ref().map_or(0, |g| g.len);
        let feature = spec.recurrent.unwrap_or(spec.input);
        let mlp = Mlp::new(
            feature + spec.extra,
            &spec.hidden,
            spec.output,
            spec.hidden_activation,
            spec.output_activation,
            head_offset,
        );
        let len = head_offset + mlp.len;
        Self { spec, gru, mlp, len }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.len
    }

    pub fn is_recurrent(&self) -> bool {
        self.gru.is_some()
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.len];
        if let Some(g) = &self.gru {
            g.init(&mut p, rng);
        }
        self.mlp.init(&mut p, self.spec.final_init, rng);
        p
    }

    /// Runs the network over a sequence of `batch x input` matrices, starting
    /// from a zero hidden state. A feed-forward net treats every step
    /// independently. `extras` is empty or has one matrix per step.
    pub fn forward(&self, p: &[f64], inputs: &[Array2<f64>], extras: &[Array2<f64>]) -> ForwardPass {
        assert_eq!(p.len(), self.len, "parameter count mismatch");
        assert!(!inputs.is_empty(), "empty sequence");
        let batch = inputs[0].nrows();
        for x in inputs {
            assert_eq!(x.dim(), (batch, self.spec.input), "input shape mismatch");
        }
        if self.spec.extra > 0 {
            assert_eq!(extras.len(), inputs.len(), "one extra input per step");
            for e in extras {
                assert_eq!(e.dim(), (batch, self.spec.extra), "extra input shape mismatch");
            }
        }

        let mut hiddens = Vec::new();
        let mut steps = Vec::new();
        let features: Vec<Array2<f64>> = match &self.gru {
            Some(g) => {
                hiddens.push(Array2::zeros((batch, g.hidden)));
                for x in inputs {
                    let (h, c) = g.step(p, x, hiddens.last().expect("initial state"));
                    hiddens.push(h);
                    steps.push(c);
                }
                hiddens[1..].to_vec()
            }
            None => inputs.to_vec(),
        };

        let rows: Vec<Array2<f64>> = features
            .iter()
            .enumerate()
            .map(|(t, f)| {
                if self.spec.extra > 0 {
                    concatenate![Axis(1), *f, extras[t]]
                } else {
                    f.clone()
                }
            })
            .collect();
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        let stacked = concatenate(Axis(0), &views).expect("stack head input");
        let head = self.mlp.forward(p, stacked);
        let out = head.last().expect("head output");
        let outputs = (0..inputs.len())
            .map(|t| out.slice(s![t * batch..(t + 1) * batch, ..]).to_owned())
            .collect();

        ForwardPass {
            outputs,
            inputs: inputs.to_vec(),
            hiddens,
            steps,
            head,
            batch,
        }
    }

    /// Single-step convenience for feed-forward use.
    pub fn predict(&self, p: &[f64], x: &Array2<f64>, extra: Option<&Array2<f64>>) -> Array2<f64> {
        let extras = extra.map(|e| vec![e.clone()]).unwrap_or_default();
        self.forward(p, std::slice::from_ref(x), &extras).outputs.remove(0)
    }

    /// Backprop from per-step output gradients. Parameter gradients are
    /// added to `g`.
    pub fn backward(&self, p: &[f64], pass: &ForwardPass, grad_outputs: &[Array2<f64>], g: &mut [f64]) -> InputGrads {
        assert_eq!(g.len(), self.len, "gradient buffer mismatch");
        assert_eq!(grad_outputs.len(), pass.outputs.len(), "one output gradient per step");
        let b = pass.batch;
        let views: Vec<_> = grad_outputs.iter().map(|r| r.view()).collect();
        let stacked = concatenate(Axis(0), &views).expect("stack output gradients");
        let d_head = self.mlp.backward(p, &pass.head, stacked, g);

        let feature = self.spec.recurrent.unwrap_or(self.spec.input);
        let steps = pass.outputs.len();
        let mut d_features = Vec::with_capacity(steps);
        let mut extras = Vec::new();
        for t in 0..steps {
            let block = d_head.slice(s![t * b..(t + 1) * b, ..]);
            d_features.push(block.slice(s![.., 0..feature]).to_owned());
            if self.spec.extra > 0 {
                extras.push(block.slice(s![.., feature..]).to_owned());
            }
        }

        let inputs = match &self.gru {
            None => d_features,
            Some(gru) => {
                let mut dx = vec![Array2::zeros((b, self.spec.input)); steps];
                let mut carry = Array2::<f64>::zeros((b, gru.hidden));
                for t in (0..steps).rev() {
                    let dh = &carry + &d_features[t];
                    let (d_in, d_prev) =
                        gru.step_backward(p, &pass.inputs[t], &pass.hiddens[t], &pass.steps[t], &dh, g);
                    dx[t] = d_in;
                    carry = d_prev;
                }
                dx
            }
        };
        InputGrads { inputs, extras }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let spec = NetSpec {
            output_activation: Activation::Identity,
            ..NetSpec::actor(3, 2, 2, 5)
        };
        let net = Net::new(spec);
        let p = vec![0.0; net.num_params()];
        let y = net.predict(&p, &Array2::ones((4, 3)), None);
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        // One hidden layer of width 3 with identity weights and a ReLU that
        // sees only positive inputs, then an identity output layer.
        let net = Net::new(NetSpec {
            input: 3,
            extra: 0,
            recurrent: None,
            hidden: vec![3],
            output: 3,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            final_init: None,
        });
        let mut p = vec![0.0; net.num_params()];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
            p[12 + i * 3 + i] = 1.0;
        }
        let x = Array2::from_shape_vec((1, 3), vec![0.5, 1.5, 2.5]).unwrap();
        assert_eq!(net.predict(&p, &x, None), x);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Net::new(NetSpec::critic(4, 2, 3, 8).with_recurrent(6));
        let p = net.init_params(&mut rng);
        let xs: Vec<_> = (0..3).map(|_| random_matrix(&mut rng, 5, 4)).collect();
        let es: Vec<_> = (0..3).map(|_| random_matrix(&mut rng, 5, 2)).collect();
        let a = net.forward(&p, &xs, &es).outputs;
        let b = net.forward(&p, &xs, &es).outputs;
        assert_eq!(a, b);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Net::new(NetSpec::actor(3, 2, 2, 6));
        let p = net.init_params(&mut rng);
        let x = random_matrix(&mut rng, 4, 3);
        let pass = net.forward(&p, std::slice::from_ref(&x), &[]);
        let mut g = vec![0.0; net.num_params()];
        net.backward(&p, &pass, &[Array2::zeros((4, 2))], &mut g);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quadratic_loss_matches_analytic_gradient() {
        // Single linear layer y = x W + b, loss ||y - t||^2: dW = 2 x^T (y - t).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(3, &[], 2, Activation::Identity, Activation::Identity, 0);
        let mut p = vec![0.0; mlp.len];
        mlp.init(&mut p, None, &mut rng);
        let x = random_matrix(&mut rng, 1, 3);
        let target = random_matrix(&mut rng, 1, 2);
        let acts = mlp.forward(&p, x.clone());
        let resid = &acts[1] - &target;
        let mut g = vec![0.0; mlp.len];
        mlp.backward(&p, &acts, 2.0 * &resid, &mut g);
        for i in 0..3 {
            for j in 0..2 {
                let analytic = 2.0 * resid[[0, j]] * x[[0, i]];
                assert!((g[i * 2 + j] - analytic).abs() < 1e-12);
            }
        }
        for j in 0..2 {
            assert!((g[6 + j] - 2.0 * resid[[0, j]]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_gru_matches_cell_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Net::new(NetSpec {
            output_activation: Activation::Identity,
            ..NetSpec::actor(2, 1, 1, 3).with_recurrent(2)
        });
        let p = net.init_params(&mut rng);
        let x = random_matrix(&mut rng, 1, 2);
        let pass = net.forward(&p, std::slice::from_ref(&x), &[]);
        let h = &pass.hiddens[1];

        // Direct evaluation from zero state: h' = (1 - z) * n.
        let (wi, bi) = (matrix(&p, 0, 2, 6), vector(&p, 2 * 6 + 2 * 6, 6));
        let bh = vector(&p, 2 * 6 + 2 * 6 + 6, 6);
        for k in 0..2 {
            let pre = |gate: usize| {
                let col = gate * 2 + k;
                x[[0, 0]] * wi[[0, col]] + x[[0, 1]] * wi[[1, col]] + bi[col]
            };
            let r = sigmoid(pre(0) + bh[k]);
            let z = sigmoid(pre(1) + bh[2 + k]);
            let n = (pre(2) + r * bh[4 + k]).tanh();
            assert!((h[[0, k]] - (1.0 - z) * n).abs() < 1e-14);
        }
    }
}
