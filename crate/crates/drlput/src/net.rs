//! The policy network pi(a | s, theta).
//!
//! Categorical features pass through per-feature embedding tables, get
//! concatenated with numerical and dense features, then batch norm, a stack
//! of linear+ReLU layers, and a softmax head over the flat action space.
//!
//! Parameters are stored in one flat vector addressed through a tensor
//! manifest; the same manifest drives SGD updates, the checkpoint layout,
//! and finite-difference checks. Storage precision is generic: production
//! nets hold `f32`, while gradient checks promote to `f64` and run the
//! identical code path. All arithmetic and reductions are performed in
//! `f64` regardless of storage type.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::ActionGrid;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, RequestState};
use crate::rng::stream;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

/// Parameter storage scalar.
pub trait Param: Copy + std::fmt::Debug + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Param for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Param for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Network shape knobs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig { embed_dim: 8, hidden: vec![64, 32] }
    }
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct PolicyNet<P: Param = f32> {
    pub schema: FeatureSchema,
    pub grid: ActionGrid,
    pub arch: ArchConfig,
    /// All learnable parameters, addressed via `manifest`.
    pub params: Vec<P>,
    /// Batch-norm running statistics (not learnable, not in gradients).
    pub running_mean: Vec<P>,
    pub running_var: Vec<P>,
    pub manifest: Vec<TensorSpec>,
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache {
    pub mode: Mode,
    x: Vec<Vec<f64>>,
    mean: Vec<f64>,
    var: Vec<f64>,
    xhat: Vec<Vec<f64>>,
    /// Input rows to each linear layer; `layer_inputs[0]` is the batch-norm output.
    layer_inputs: Vec<Vec<Vec<f64>>>,
    /// Pre-activation rows per layer; the last entry is the logits.
    preacts: Vec<Vec<Vec<f64>>>,
    pub log_probs: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

/// Manifest layout shared by init, checkpointing, and the backward pass.
fn build_manifest(schema: &FeatureSchema, grid: &ActionGrid, arch: &ArchConfig) -> (Vec<TensorSpec>, usize) {
    let mut manifest = Vec::new();
    let mut offset = 0usize;
    let mut push = |name: String, shape: Vec<usize>, offset: &mut usize| {
        let len: usize = shape.iter().product();
        manifest.push(TensorSpec { name, shape, offset: *offset });
        *offset += len;
    };
    for c in &schema.categorical {
        push(format!("embed_{}", c.name), vec![c.cardinality, arch.embed_dim], &mut offset);
    }
    let input_dim = schema.categorical.len() * arch.embed_dim
        + schema.numerical.len()
        + schema.dense.iter().map(|d| d.dimension).sum::<usize>();
    push("bn_scale".into(), vec![input_dim], &mut offset);
    push("bn_shift".into(), vec![input_dim], &mut offset);
    let mut fan_in = input_dim;
    for (l, width) in arch.hidden.iter().enumerate() {
        push(format!("layer{l}_weight"), vec![*width, fan_in], &mut offset);
        push(format!("layer{l}_bias"), vec![*width], &mut offset);
        fan_in = *width;
    }
    let out = grid.num_actions();
    let l = arch.hidden.len();
    push(format!("layer{l}_weight"), vec![out, fan_in], &mut offset);
    push(format!("layer{l}_bias"), vec![out], &mut offset);
    (manifest, offset)
}

impl<P: Param> PolicyNet<P> {
    /// Deterministic initialization: embeddings and linear weights from a
    /// scaled uniform distribution (scale 1/sqrt(fan_in)), biases zero,
    /// batch-norm scale 1 / shift 0.
    pub fn init(schema: FeatureSchema, grid: ActionGrid, arch: ArchConfig, seed: u64) -> Result<Self> {
        schema.validate()?;
        grid.validate()?;
        if arch.embed_dim == 0 {
            return Err(Error::Config("policy: embed_dim must be >= 1".into()));
        }
        let (manifest, total) = build_manifest(&schema, &grid, &arch);
        let mut params = vec![P::from_f64(0.0); total];
        for (t_idx, t) in manifest.iter().enumerate() {
            let slot = &mut params[t.offset..t.offset + t.len()];
            let mut rng = stream(seed, t_idx as u64, "init");
            if t.name.starts_with("embed_") {
                let s = 1.0 / (arch.embed_dim as f64).sqrt();
                for p in slot.iter_mut() {
                    *p = P::from_f64((2.0 * rng.gen::<f64>() - 1.0) * s);
                }
            } else if t.name == "bn_scale" {
                slot.iter_mut().for_each(|p| *p = P::from_f64(1.0));
            } else if t.name == "bn_shift" || t.name.ends_with("_bias") {
                // already zero
            } else if t.name == format!("layer{}_weight", arch.hidden.len()) {
                // Down-scaled output layer: an untrained policy stays near
                // uniform so offline gates read ~zero relative gain.
                let s = 0.01 / (t.shape[1] as f64).sqrt();
                for p in slot.iter_mut() {
                    *p = P::from_f64((2.0 * rng.gen::<f64>() - 1.0) * s);
                }
            } else {
                // linear weight, shape [out, in]
                let s = 1.0 / (t.shape[1] as f64).sqrt();
                for p in slot.iter_mut() {
                    *p = P::from_f64((2.0 * rng.gen::<f64>() - 1.0) * s);
                }
            }
        }
        let input_dim = manifest.iter().find(|t| t.name == "bn_scale").unwrap().len();
        Ok(PolicyNet {
            schema,
            grid,
            arch,
            params,
            running_mean: vec![P::from_f64(0.0); input_dim],
            running_var: vec![P::from_f64(1.0); input_dim],
            manifest,
        })
    }


    /// Fills the output layer with small random values; useful in tests
    /// because [`PolicyNet::init`] deliberately zeroes it.
    pub fn randomize_output_layer(&mut self, seed: u64) {
        let name = format!("layer{}_weight", self.arch.hidden.len());
        let t = self.manifest.iter().find(|t| t.name == name).unwrap().clone();
        let s = 1.0 / (t.shape[1] as f64).sqrt();
        let mut rng = stream(seed, 0, "randout");
        for i in t.offset..t.offset + t.len() {
            let v = (2.0 * rand::Rng::gen::<f64>(&mut rng) - 1.0) * s;
            self.params[i] = P::from_f64(v);
        }
    }

    pub fn input_dim(&self) -> usize {
        self.manifest.iter().find(|t| t.name == "bn_scale").unwrap().len()
    }

    pub fn num_actions(&self) -> usize {
        self.grid.num_actions()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn get_param(&self, i: usize) -> f64 {
        self.params[i].to_f64()
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        self.params[i] = P::from_f64(v);
    }

    fn tensor(&self, name: &str) -> &TensorSpec {
        self.manifest.iter().find(|t| t.name == name).expect("tensor in manifest")
    }

    fn slice(&self, spec: &TensorSpec) -> &[P] {
        &self.params[spec.offset..spec.offset + spec.len()]
    }

    /// Embeds and concatenates one state into the network's input row.
    fn build_input(&self, state: &RequestState) -> Result<Vec<f64>> {
        state.check_against(&self.schema)?;
        let mut row = Vec::with_capacity(self.input_dim());
        for (i, spec) in self.schema.categorical.iter().enumerate() {
            let t = self.tensor(&format!("embed_{}", spec.name));
            let d = self.arch.embed_dim;
            let start = t.offset + state.categorical[i] * d;
            row.extend(self.params[start..start + d].iter().map(|p| p.to_f64()));
        }
        row.extend_from_slice(&state.numerical);
        for v in &state.dense {
            row.extend_from_slice(v);
        }
        Ok(row)
    }

    /// Full forward pass. Train mode uses batch statistics (batch size must
    /// be >= 2); eval mode uses running statistics and never mutates state.
    pub fn forward_cache(&self, states: &[RequestState], mode: Mode) -> Result<ForwardCache> {
        let b = states.len();
        if b == 0 {
            return Err(Error::Config("policy: empty batch".into()));
        }
        if mode == Mode::Train && b < 2 {
            return Err(Error::Config("policy: train-mode forward requires batch size >= 2".into()));
        }
        let d = self.input_dim();
        let mut x = Vec::with_capacity(b);
        for s in states {
            x.push(self.build_input(s)?);
        }

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0f64; d];
                for row in &x {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= b as f64);
                let mut var = vec![0.0f64; d];
                for row in &x {
                    for ((vv, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        let c = v - m;
                        *vv += c * c;
                    }
                }
                var.iter_mut().for_each(|v| *v /= b as f64);
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.iter().map(|p| p.to_f64()).collect(),
                self.running_var.iter().map(|p| p.to_f64()).collect(),
            ),
        };

        let scale = self.slice(self.tensor("bn_scale")).to_vec();
        let shift = self.slice(self.tensor("bn_shift")).to_vec();
        let mut xhat = Vec::with_capacity(b);
        let mut bn_out = Vec::with_capacity(b);
        for row in &x {
            let mut h = Vec::with_capacity(d);
            let mut y = Vec::with_capacity(d);
            for j in 0..d {
                let xh = (row[j] - mean[j]) / (var[j] + BN_EPS).sqrt();
                h.push(xh);
                y.push(scale[j].to_f64() * xh + shift[j].to_f64());
            }
            xhat.push(h);
            bn_out.push(y);
        }

        let n_layers = self.arch.hidden.len() + 1;
        let mut layer_inputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_layers);
        let mut preacts: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_layers);
        let mut current = bn_out;
        for l in 0..n_layers {
            let w = self.tensor(&format!("layer{l}_weight"));
            let (out_dim, in_dim) = (w.shape[0], w.shape[1]);
            let wdata = self.slice(w);
            let bias = self.slice(self.tensor(&format!("layer{l}_bias"))).to_vec();
            let mut z_rows = Vec::with_capacity(b);
            for row in &current {
                let mut z = Vec::with_capacity(out_dim);
                for o in 0..out_dim {
                    let mut acc = bias[o].to_f64();
                    let wrow = &wdata[o * in_dim..(o + 1) * in_dim];
                    for (wv, xv) in wrow.iter().zip(row) {
                        acc += wv.to_f64() * xv;
                    }
                    z.push(acc);
                }
                z_rows.push(z);
            }
            layer_inputs.push(std::mem::take(&mut current));
            if l + 1 < n_layers {
                current = z_rows.iter().map(|z| z.iter().map(|v| v.max(0.0)).collect()).collect();
            }
            preacts.push(z_rows);
        }

        // Numerically stable log-softmax over the logits.
        let logits = preacts.last().unwrap();
        let mut log_probs = Vec::with_capacity(b);
        let mut probs = Vec::with_capacity(b);
        for z in logits {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let lse = m + sum.ln();
            log_probs.push(z.iter().map(|v| v - lse).collect());
            // Direct normalization rather than exp(log_prob): equal logits
            // then yield an exactly uniform distribution.
            probs.push(exps.iter().map(|e| e / sum).collect());
        }

        Ok(ForwardCache { mode, x, mean, var, xhat, layer_inputs, preacts, log_probs, probs })
    }

    /// Per-state action distributions.
    pub fn forward(&self, states: &[RequestState], mode: Mode) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward_cache(states, mode)?.probs)
    }

    /// Folds one train-mode batch's statistics into the running statistics.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        debug_assert_eq!(cache.mode, Mode::Train);
        for j in 0..self.running_mean.len() {
            let m = BN_MOMENTUM * self.running_mean[j].to_f64() + (1.0 - BN_MOMENTUM) * cache.mean[j];
            let v = BN_MOMENTUM * self.running_var[j].to_f64() + (1.0 - BN_MOMENTUM) * cache.var[j];
            self.running_mean[j] = P::from_f64(m);
            self.running_var[j] = P::from_f64(v);
        }
    }

    /// Log-probability of one action in one state (eval mode).
    pub fn log_prob(&self, state: &RequestState, flat_action: usize) -> Result<f64> {
        if flat_action >= self.num_actions() {
            return Err(Error::Config(format!("policy: action {flat_action} out of range")));
        }
        let cache = self.forward_cache(std::slice::from_ref(state), Mode::Eval)?;
        Ok(cache.log_probs[0][flat_action])
    }

    /// REINFORCE batch loss `L = -(1/B) sum_i w_i * log pi(a_i | s_i)`.
    pub fn loss(&self, cache: &ForwardCache, actions: &[usize], weights: &[f64]) -> f64 {
        let b = cache.log_probs.len();
        debug_assert!(actions.len() == b && weights.len() == b);
        let mut acc = 0.0;
        for i in 0..b {
            acc += weights[i] * cache.log_probs[i][actions[i]];
        }
        -acc / b as f64
    }

    /// Gradient of [`PolicyNet::loss`] with respect to every learnable
    /// parameter, aligned with `params`. Embedding rows not touched by the
    /// batch have exactly zero gradient.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        states: &[RequestState],
        actions: &[usize],
        weights: &[f64],
    ) -> Result<Vec<f64>> {
        let b = cache.log_probs.len();
        if states.len() != b || actions.len() != b || weights.len() != b {
            return Err(Error::Config("policy: backward batch does not match forward batch".into()));
        }
        if cache.mode != Mode::Train {
            return Err(Error::Config("policy: backward requires a train-mode forward cache".into()));
        }
        let mut grads = vec![0.0f64; self.params.len()];

        // dL/dlogits
        let n_actions = self.num_actions();
        let mut dz: Vec<Vec<f64>> = Vec::with_capacity(b);
        for i in 0..b {
            let scale = weights[i] / b as f64;
            let mut row: Vec<f64> = cache.probs[i].iter().map(|p| scale * p).collect();
            debug_assert!(actions[i] < n_actions);
            row[actions[i]] -= scale;
            dz.push(row);
        }

        // Linear layers, last to first.
        let n_layers = self.arch.hidden.len() + 1;
        for l in (0..n_layers).rev() {
            let wspec = self.tensor(&format!("layer{l}_weight")).clone();
            let bspec = self.tensor(&format!("layer{l}_bias")).clone();
            let (out_dim, in_dim) = (wspec.shape[0], wspec.shape[1]);
            let wdata = self.slice(&wspec);
            let inputs = &cache.layer_inputs[l];
            let mut dinput = vec![vec![0.0f64; in_dim]; b];
            for i in 0..b {
                for o in 0..out_dim {
                    let g = dz[i][o];
                    if g == 0.0 {
                        continue;
                    }
                    grads[bspec.offset + o] += g;
                    let wrow = &wdata[o * in_dim..(o + 1) * in_dim];
                    let grow = &mut grads[wspec.offset + o * in_dim..wspec.offset + (o + 1) * in_dim];
                    for j in 0..in_dim {
                        grow[j] += g * inputs[i][j];
                        dinput[i][j] += g * wrow[j].to_f64();
                    }
                }
            }
            if l > 0 {
                // Through the previous layer's ReLU.
                let prev_z = &cache.preacts[l - 1];
                for i in 0..b {
                    for j in 0..in_dim {
                        if prev_z[i][j] <= 0.0 {
                            dinput[i][j] = 0.0;
                        }
                    }
                }
            }
            dz = dinput;
        }

        // Batch norm: dz now holds dL/dy where y = scale * xhat + shift.
        let d = self.input_dim();
        let scale_spec = self.tensor("bn_scale").clone();
        let shift_spec = self.tensor("bn_shift").clone();
        let scale = self.slice(&scale_spec);
        let mut dx = vec![vec![0.0f64; d]; b];
        for j in 0..d {
            let mut dscale = 0.0;
            let mut dshift = 0.0;
            for i in 0..b {
                dscale += dz[i][j] * cache.xhat[i][j];
                dshift += dz[i][j];
            }
            grads[scale_spec.offset + j] += dscale;
            grads[shift_spec.offset + j] += dshift;
            let inv_std = 1.0 / (cache.var[j] + BN_EPS).sqrt();
            let s = scale[j].to_f64();
            // Gradient through the batch statistics.
            let mean_dxhat = s * dshift / b as f64;
            let mean_dxhat_xhat = s * dscale / b as f64;
            for i in 0..b {
                let dxhat = dz[i][j] * s;
                dx[i][j] = inv_std * (dxhat - mean_dxhat - cache.xhat[i][j] * mean_dxhat_xhat);
            }
        }

        // Scatter input gradients into the touched embedding rows.
        let ed = self.arch.embed_dim;
        for (ci, spec) in self.schema.categorical.iter().enumerate() {
            let t = self.tensor(&format!("embed_{}", spec.name)).clone();
            let col = ci * ed;
            for i in 0..b {
                let row_off = t.offset + states[i].categorical[ci] * ed;
                for k in 0..ed {
                    grads[row_off + k] += dx[i][col + k];
                }
            }
        }

        let _ = &cache.x; // inputs beyond embeddings receive no gradient
        Ok(grads)
    }

    /// SGD step: `theta <- theta - eta * grad`.
    pub fn apply_gradients(&mut self, grads: &[f64], step_size: f64) {
        debug_assert_eq!(grads.len(), self.params.len());
        for (p, g) in self.params.iter_mut().zip(grads) {
            *p = P::from_f64(p.to_f64() - step_size * g);
        }
    }
}

impl PolicyNet<f32> {
    /// Exact promotion to a 64-bit copy for finite-difference checks.
    pub fn promote(&self) -> PolicyNet<f64> {
        PolicyNet {
            schema: self.schema.clone(),
            grid: self.grid.clone(),
            arch: self.arch.clone(),
            params: self.params.iter().map(|p| *p as f64).collect(),
            running_mean: self.running_mean.iter().map(|p| *p as f64).collect(),
            running_var: self.running_var.iter().map(|p| *p as f64).collect(),
            manifest: self.manifest.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Greedy,
    Sample,
}

/// Picks an action index from one distribution. Greedy takes the argmax with
/// lowest-index tie-break; Sample draws from the distribution.
pub fn select_action<R: Rng>(dist: &[f64], mode: SelectMode, rng: &mut R) -> usize {
    match mode {
        SelectMode::Greedy => {
            let mut best = 0usize;
            for (i, p) in dist.iter().enumerate().skip(1) {
                if *p > dist[best] {
                    best = i;
                }
            }
            best
        }
        SelectMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, p) in dist.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            dist.len() - 1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{CategoricalSpec, DenseSpec};

    fn small_schema() -> FeatureSchema {
        FeatureSchema {
            categorical: vec![
                CategoricalSpec { name: "segment".into(), cardinality: 4 },
                CategoricalSpec { name: "hour".into(), cardinality: 4 },
            ],
            numerical: vec!["hist_ctr".into(), "hist_cvr".into()],
            dense: vec![DenseSpec { name: "activity".into(), dimension: 3 }],
        }
    }

    fn small_net(seed: u64) -> PolicyNet<f32> {
        let grid = ActionGrid::default_grid(3); // 27 actions
        let arch = ArchConfig { embed_dim: 4, hidden: vec![16] };
        PolicyNet::init(small_schema(), grid, arch, seed).unwrap()
    }

    fn random_states(n: usize, seed: u64) -> Vec<RequestState> {
        let mut rng = stream(seed, 0, "teststates");
        (0..n)
            .map(|_| RequestState {
                categorical: vec![rng.gen_range(0..4), rng.gen_range(0..4)],
                numerical: vec![rng.gen::<f64>(), rng.gen::<f64>()],
                dense: vec![vec![rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]],
            })
            .collect()
    }

    #[test]
    fn init_is_deterministic() {
        let a = small_net(11);
        let b = small_net(11);
        assert_eq!(a.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
                   b.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>());
        let c = small_net(12);
        assert_ne!(a.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
                   c.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn forward_rows_are_distributions() {
        let net = small_net(3);
        let states = random_states(5, 1);
        for row in net.forward(&states, Mode::Train).unwrap() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-5);
            assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn zeroed_output_layer_gives_uniform() {
        let mut net = small_net(3);
        let t = net.tensor("layer1_weight").clone();
        for i in t.offset..t.offset + t.len() {
            net.set_param(i, 0.0);
        }
        let states = random_states(2, 2);
        let probs = net.forward(&states, Mode::Eval).unwrap();
        let n = net.num_actions() as f64;
        for row in probs {
            for p in row {
                assert!((p - 1.0 / n).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn train_mode_rejects_batch_of_one() {
        let net = small_net(3);
        let states = random_states(1, 2);
        assert!(net.forward(&states, Mode::Train).is_err());
        assert!(net.forward(&states, Mode::Eval).is_ok());
    }

    #[test]
    fn eval_mode_is_pure() {
        let net = small_net(5);
        let states = random_states(3, 7);
        let a = net.forward(&states, Mode::Eval).unwrap();
        let b = net.forward(&states, Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_prob_matches_forward() {
        let net = small_net(5);
        let states = random_states(4, 9);
        let probs = net.forward(&states, Mode::Eval).unwrap();
        for (i, s) in states.iter().enumerate() {
            for a in [0usize, 13, 26] {
                let lp = net.log_prob(s, a).unwrap();
                assert!(lp <= 0.0);
                assert!((lp.exp() - probs[i][a]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn log_softmax_is_stable_for_huge_logits() {
        // Two actions, logits 1000 and 0, via a hand-built net.
        let grid = ActionGrid {
            weight_groups: vec![crate::action::GroupSpec {
                name: "click".into(),
                members: vec!["w_click".into()],
                min: 0.0,
                max: 1.0,
            }],
            reserve: crate::action::Bounds { min: 0.0, max: 1.0 },
            values_per_group: 2,
        };
        let schema = FeatureSchema {
            categorical: vec![CategoricalSpec { name: "c".into(), cardinality: 2 }],
            numerical: vec![],
            dense: vec![],
        };
        let arch = ArchConfig { embed_dim: 2, hidden: vec![] };
        let mut net: PolicyNet<f32> = PolicyNet::init(schema, grid, arch, 0).unwrap();
        // Zero the output weights, put 1000 in the first output bias.
        let w = net.tensor("layer0_weight").clone();
        for i in w.offset..w.offset + w.len() {
            net.set_param(i, 0.0);
        }
        let b = net.tensor("layer0_bias").clone();
        net.set_param(b.offset, 1000.0);
        let state = RequestState { categorical: vec![0], numerical: vec![], dense: vec![] };
        let lp = net.log_prob(&state, 0).unwrap();
        assert!(lp.is_finite());
        assert!(lp.abs() < 1e-9);
    }

    #[test]
    fn zero_weights_give_zero_gradients() {
        let net = small_net(8);
        let states = random_states(6, 3);
        let cache = net.forward_cache(&states, Mode::Train).unwrap();
        let grads = net.backward(&cache, &states, &[0, 1, 2, 3, 4, 5], &[0.0; 6]).unwrap();
        assert!(grads.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let net = small_net(8);
        let states = random_states(3, 4);
        let actions = [1usize, 5, 9];
        let weights = [0.5, 1.5, 0.25];
        let cache = net.forward_cache(&states, Mode::Train).unwrap();
        let g1 = net.backward(&cache, &states, &actions, &weights).unwrap();

        let states2: Vec<_> = states.iter().chain(states.iter()).cloned().collect();
        let actions2: Vec<_> = actions.iter().chain(actions.iter()).cloned().collect();
        let weights2: Vec<_> = weights.iter().chain(weights.iter()).cloned().collect();
        let cache2 = net.forward_cache(&states2, Mode::Train).unwrap();
        let g2 = net.backward(&cache2, &states2, &actions2, &weights2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn doubling_rewards_doubles_gradient() {
        let net = small_net(8);
        let states = random_states(4, 5);
        let actions = [2usize, 7, 11, 3];
        let w1 = [0.3, 1.0, 0.7, 2.0];
        let w2: Vec<f64> = w1.iter().map(|w| 2.0 * w).collect();
        let cache = net.forward_cache(&states, Mode::Train).unwrap();
        let g1 = net.backward(&cache, &states, &actions, &w1).unwrap();
        let g2 = net.backward(&cache, &states, &actions, &w2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn untouched_embedding_rows_have_zero_gradient() {
        let mut net = small_net(8);
        net.randomize_output_layer(8);
        // All states use segment id 0; rows 1..4 of the segment table must stay zero.
        let mut states = random_states(4, 6);
        for s in &mut states {
            s.categorical[0] = 0;
        }
        let cache = net.forward_cache(&states, Mode::Train).unwrap();
        let grads = net.backward(&cache, &states, &[1, 2, 3, 4], &[1.0; 4]).unwrap();
        let t = net.tensor("embed_segment").clone();
        let d = net.arch.embed_dim;
        assert!(grads[t.offset + d..t.offset + t.len()].iter().all(|g| *g == 0.0));
        assert!(grads[t.offset..t.offset + d].iter().any(|g| *g != 0.0));
    }

    #[test]
    fn greedy_selection_rules() {
        let mut rng = stream(0, 0, "select");
        let mut dist = vec![0.0; 10];
        dist[7] = 1.0;
        assert_eq!(select_action(&dist, SelectMode::Greedy, &mut rng), 7);
        // Exact two-way tie goes to the lower index.
        let tie = vec![0.1, 0.4, 0.4, 0.1];
        assert_eq!(select_action(&tie, SelectMode::Greedy, &mut rng), 1);
        let det = vec![1.0, 0.0, 0.0];
        for _ in 0..20 {
            assert_eq!(select_action(&det, SelectMode::Sample, &mut rng), 0);
        }
    }

    #[test]
    fn greedy_invariant_to_logit_shift() {
        // Softmax of shifted logits preserves the argmax.
        let logits = [0.3, -1.2, 2.5, 2.5, 0.0];
        let softmax = |z: &[f64]| -> Vec<f64> {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
            z.iter().map(|v| (v - m).exp() / s).collect()
        };
        let mut rng = stream(0, 0, "shift");
        let base = select_action(&softmax(&logits), SelectMode::Greedy, &mut rng);
        for c in [-100.0, -1.0, 0.5, 42.0] {
            let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
            assert_eq!(select_action(&softmax(&shifted), SelectMode::Greedy, &mut rng), base);
        }
    }

    #[test]
    fn gradient_check_small_net() {
        // Central finite differences on the promoted f64 copy.
        let mut net32 = small_net(21);
        net32.randomize_output_layer(77);
        let mut net = net32.promote();
        let states = random_states(5, 12);
        let actions = [3usize, 14, 0, 26, 7];
        let weights = [0.8, 0.1, 1.3, 0.0, 2.1];
        let cache = net.forward_cache(&states, Mode::Train).unwrap();
        let grads = net.backward(&cache, &states, &actions, &weights).unwrap();

        let mut rng = stream(99, 0, "fdcheck");
        let eps = 1e-3;
        let mut max_rel = 0.0f64;
        for _ in 0..150 {
            let i = rng.gen_range(0..net.num_params());
            let orig = net.get_param(i);
            net.set_param(i, orig + eps);
            let lp = {
                let c = net.forward_cache(&states, Mode::Train).unwrap();
                net.loss(&c, &actions, &weights)
            };
            net.set_param(i, orig - eps);
            let lm = {
                let c = net.forward_cache(&states, Mode::Train).unwrap();
                net.loss(&c, &actions, &weights)
            };
            net.set_param(i, orig);
            let fd = (lp - lm) / (2.0 * eps);
            let denom = grads[i].abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max((grads[i] - fd).abs() / denom);
        }
        assert!(max_rel <= 1e-3, "max relative gradient error {max_rel}");
    }
}
