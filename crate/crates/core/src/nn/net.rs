use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Observation, COLOR_CODES, STATE_CODES, TYPE_CODES, VIEW_SIZE};
use crate::numlin;

/// Observation type codes that can occur, in one-hot plane order.
const TYPE_PLANES: [u8; 6] = [0, 1, 2, 4, 5, 8];
pub const INPUT_PLANES: usize = TYPE_PLANES.len() + COLOR_CODES + STATE_CODES;

/// Layer sizes. Three 2x2 convolutions with a 2x2 stride-1 max-pool after the
/// first, then affine actor and critic heads on the flattened features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_planes: usize,
    pub view: usize,
    pub channels: [usize; 3],
    pub actions: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_planes: INPUT_PLANES,
            view: VIEW_SIZE,
            channels: [16, 32, 64],
            actions: crate::gridworld::NUM_ACTIONS,
        }
    }
}

impl Architecture {
    fn validate(&self) -> Result<()> {
        if self.view < 5 || self.actions == 0 || self.input_planes == 0 || self.channels.contains(&0) {
            return Err(Error::InvalidArgument(format!("unsupported architecture {self:?}")));
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        let side = self.view - 4;
        self.channels[2] * side * side
    }

    pub fn input_len(&self) -> usize {
        self.input_planes * self.view * self.view
    }

    /// `(name, shape)` of every parameter tensor in storage order.
    pub fn manifest(&self) -> Vec<(&'static str, Vec<usize>)> {
        let [c1, c2, c3] = self.channels;
        let f = self.features();
        vec![
            ("conv1.weight", vec![c1, self.input_planes, 2, 2]),
            ("conv1.bias", vec![c1]),
            ("conv2.weight", vec![c2, c1, 2, 2]),
            ("conv2.bias", vec![c2]),
            ("conv3.weight", vec![c3, c2, 2, 2]),
            ("conv3.bias", vec![c3]),
            ("actor.weight", vec![self.actions, f]),
            ("actor.bias", vec![self.actions]),
            ("critic.weight", vec![1, f]),
            ("critic.bias", vec![1]),
        ]
    }
}

/// One named parameter block with its gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

/// Parameters of every layer live in one flat vector, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticNet {
    arch: Architecture,
    offsets: Vec<usize>,
    params: Vec<f64>,
    grads: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    conv1: Vec<f64>,
    pool_arg: Vec<usize>,
    pooled: Vec<f64>,
    conv2: Vec<f64>,
    features: Vec<f64>,
    pub scores: Vec<f64>,
    pub value: f64,
}

/// One-hot planes `[type(6) | color(6) | state(3)]`, channel-major.
pub fn embed_observation(obs: &Observation) -> Vec<f64> {
    let n = VIEW_SIZE * VIEW_SIZE;
    let mut x = vec![0.0; INPUT_PLANES * n];
    for row in 0..VIEW_SIZE {
        for col in 0..VIEW_SIZE {
            let cell = obs.get(row, col);
            let pix = row * VIEW_SIZE + col;
            let t = TYPE_PLANES
                .iter()
                .position(|&c| c == cell.type_id)
                .expect("observation type code");
            debug_assert!((cell.type_id as usize) < TYPE_CODES);
            x[t * n + pix] = 1.0;
            x[(TYPE_PLANES.len() + cell.color_id as usize) * n + pix] = 1.0;
            x[(TYPE_PLANES.len() + COLOR_CODES + cell.state_id as usize) * n + pix] = 1.0;
        }
    }
    x
}

/// Orthogonal `rows x cols` block scaled by `gain`, row-major.
fn orthogonal(rows: usize, cols: usize, gain: f64, seed: u64) -> Result<Vec<f64>> {
    let m = if rows >= cols {
        numlin::sample_semi_orthogonal(rows, cols, seed)?
    } else {
        numlin::sample_semi_orthogonal(cols, rows, seed)?.transpose()
    };
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(m[(i, j)] * gain);
        }
    }
    Ok(out)
}

fn conv_forward(
    input: &[f64],
    in_ch: usize,
    side: usize,
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
) -> Vec<f64> {
    let os = side - 1;
    let mut out = vec![0.0; out_ch * os * os];
    for o in 0..out_ch {
        out[o * os * os..(o + 1) * os * os].fill(bias[o]);
    }
    for c in 0..in_ch {
        for iy in 0..side {
            for ix in 0..side {
                let v = input[(c * side + iy) * side + ix];
                if v == 0.0 {
                    continue;
                }
                for ky in 0..2 {
                    if iy < ky || iy - ky >= os {
                        continue;
                    }
                    let y = iy - ky;
                    for kx in 0..2 {
                        if ix < kx || ix - kx >= os {
                            continue;
                        }
                        let x = ix - kx;
                        for o in 0..out_ch {
                            out[(o * os + y) * os + x] += weight[((o * in_ch + c) * 2 + ky) * 2 + kx] * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    in_ch: usize,
    side: usize,
    weight: &[f64],
    out_ch: usize,
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let os = side - 1;
    let mut din = want_input_grad.then(|| vec![0.0; in_ch * side * side]);
    for o in 0..out_ch {
        for y in 0..os {
            for x in 0..os {
                let g = dout[(o * os + y) * os + x];
                if g == 0.0 {
                    continue;
                }
                dbias[o] += g;
                for c in 0..in_ch {
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let ii = (c * side + y + ky) * side + x + kx;
                            let wi = ((o * in_ch + c) * 2 + ky) * 2 + kx;
                            dweight[wi] += g * input[ii];
                            if let Some(d) = din.as_mut() {
                                d[ii] += g * weight[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    din
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

impl ActorCriticNet {
    /// Orthogonal weights (gain √2 for the convolutions, 0.01 for the actor
    /// head, 1 for the critic head) and zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let manifest = arch.manifest();
        let mut offsets = Vec::with_capacity(manifest.len() + 1);
        let mut total = 0;
        for (_, shape) in &manifest {
            offsets.push(total);
            total += shape.iter().product::<usize>();
        }
        offsets.push(total);
        let mut params = vec![0.0; total];
        let gains = [2f64.sqrt(), 2f64.sqrt(), 2f64.sqrt(), 0.01, 1.0];
        for (layer, gain) in gains.into_iter().enumerate() {
            let idx = 2 * layer;
            let shape = &manifest[idx].1;
            let rows = shape[0];
            let cols: usize = shape[1..].iter().product();
            let w = orthogonal(rows, cols, gain, crate::rng::derive_seed(seed, manifest[idx].0, 0))?;
            params[offsets[idx]..offsets[idx + 1]].copy_from_slice(&w);
        }
        Ok(Self {
            arch,
            offsets,
            grads: vec![0.0; total],
            params,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn zero_grad(&mut self) {
        self.grads.fill(0.0);
    }

    fn block(&self, i: usize) -> &[f64] {
        &self.params[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Named copies of every parameter block and its gradient.
    pub fn tensors(&self) -> Vec<ParamTensor> {
        self.arch
            .manifest()
            .into_iter()
            .enumerate()
            .map(|(i, (name, shape))| ParamTensor {
                name: name.to_string(),
                shape,
                values: self.block(i).to_vec(),
                grad: self.grads[self.offsets[i]..self.offsets[i + 1]].to_vec(),
            })
            .collect()
    }

    /// Rebuilds a net from tensors, checking names and shapes against `arch`.
    pub fn from_tensors(arch: Architecture, tensors: &[ParamTensor]) -> Result<Self> {
        let mut net = Self::new(arch, 0)?;
        let manifest = arch.manifest();
        if tensors.len() != manifest.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                manifest.len(),
                tensors.len()
            )));
        }
        for (i, ((name, shape), t)) in manifest.iter().zip(tensors).enumerate() {
            let len = shape.iter().product::<usize>();
            if t.name != *name || t.shape != *shape || t.values.len() != len {
                return Err(Error::Checkpoint(format!(
                    "tensor {i}: expected {name} {shape:?}, found {} {:?} with {} values",
                    t.name,
                    t.shape,
                    t.values.len()
                )));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor {name} has non-finite values")));
            }
            let (a, b) = (net.offsets[i], net.offsets[i + 1]);
            net.params[a..b].copy_from_slice(&t.values);
        }
        Ok(net)
    }

    pub fn forward(&self, obs: &Observation) -> (Vec<f64>, f64) {
        let cache = self.forward_cached(embed_observation(obs));
        (cache.scores, cache.value)
    }

    /// Forward pass on an already embedded observation, keeping activations.
    pub fn forward_cached(&self, input: Vec<f64>) -> ForwardCache {
        let a = self.arch;
        let [c1, c2, c3] = a.channels;
        let v = a.view;
        assert_eq!(input.len(), a.input_len(), "input length");

        let mut conv1 = conv_forward(&input, a.input_planes, v, self.block(0), self.block(1), c1);
        relu_in_place(&mut conv1);

        // 2x2 max-pool, stride 1
        let s1 = v - 1;
        let s2 = v - 2;
        let mut pooled = vec![0.0; c1 * s2 * s2];
        let mut pool_arg = vec![0; c1 * s2 * s2];
        for c in 0..c1 {
            for y in 0..s2 {
                for x in 0..s2 {
                    let mut best = (c * s1 + y) * s1 + x;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = (c * s1 + y + dy) * s1 + x + dx;
                        if conv1[i] > conv1[best] {
                            best = i;
                        }
                    }
                    let o = (c * s2 + y) * s2 + x;
                    pooled[o] = conv1[best];
                    pool_arg[o] = best;
                }
            }
        }

        let mut conv2 = conv_forward(&pooled, c1, s2, self.block(2), self.block(3), c2);
        relu_in_place(&mut conv2);
        let mut features = conv_forward(&conv2, c2, v - 3, self.block(4), self.block(5), c3);
        relu_in_place(&mut features);

        let f = a.features();
        let aw = self.block(6);
        let ab = self.block(7);
        let scores: Vec<f64> = (0..a.actions)
            .map(|i| ab[i] + aw[i * f..(i + 1) * f].iter().zip(&features).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        let value = self.block(9)[0]
            + self.block(8).iter().zip(&features).map(|(w, x)| w * x).sum::<f64>();

        ForwardCache {
            input,
            conv1,
            pool_arg,
            pooled,
            conv2,
            features,
            scores,
            value,
        }
    }

    /// Accumulates into the gradient buffer the parameter gradient of a loss
    /// whose derivatives with respect to the scores and the value are
    /// `dscores` and `dvalue`.
    pub fn backward(&mut self, cache: &ForwardCache, dscores: &[f64], dvalue: f64) {
        let a = self.arch;
        let [c1, c2, c3] = a.channels;
        let v = a.view;
        let f = a.features();
        assert_eq!(dscores.len(), a.actions, "score gradient length");
        let off = self.offsets.clone();
        let (params, grads) = (&self.params, &mut self.grads);

        let mut dfeat = vec![0.0; f];
        for (i, &g) in dscores.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads[off[7] + i] += g;
            let w = &params[off[6] + i * f..off[6] + (i + 1) * f];
            let dw = &mut grads[off[6] + i * f..off[6] + (i + 1) * f];
            for j in 0..f {
                dw[j] += g * cache.features[j];
                dfeat[j] += g * w[j];
            }
        }
        if dvalue != 0.0 {
            grads[off[9]] += dvalue;
            for j in 0..f {
                grads[off[8] + j] += dvalue * cache.features[j];
                dfeat[j] += dvalue * params[off[8] + j];
            }
        }
        for (d, &x) in dfeat.iter_mut().zip(&cache.features) {
            if x <= 0.0 {
                *d = 0.0;
            }
        }

        let (w3, rest) = grads[off[4]..off[6]].split_at_mut(off[5] - off[4]);
        let mut dconv2 = conv_backward(
            &cache.conv2,
            c2,
            v - 3,
            &params[off[4]..off[5]],
            c3,
            &dfeat,
            w3,
            rest,
            true,
        )
        .expect("input gradient");
        for (d, &x) in dconv2.iter_mut().zip(&cache.conv2) {
            if x <= 0.0 {
                *d = 0.0;
            }
        }

        let (w2, rest) = grads[off[2]..off[4]].split_at_mut(off[3] - off[2]);
        let dpooled = conv_backward(
            &cache.pooled,
            c1,
            v - 2,
            &params[off[2]..off[3]],
            c2,
            &dconv2,
            w2,
            rest,
            true,
        )
        .expect("input gradient");

        let mut dconv1 = vec![0.0; cache.conv1.len()];
        for (o, &g) in dpooled.iter().enumerate() {
            dconv1[cache.pool_arg[o]] += g;
        }
        for (d, &x) in dconv1.iter_mut().zip(&cache.conv1) {
            if x <= 0.0 {
                *d = 0.0;
            }
        }

        let (w1, rest) = grads[off[0]..off[2]].split_at_mut(off[1] - off[0]);
        conv_backward(
            &cache.input,
            a.input_planes,
            v,
            &params[off[0]..off[1]],
            c1,
            &dconv1,
            w1,
            rest,
            false,
        );
    }
}
