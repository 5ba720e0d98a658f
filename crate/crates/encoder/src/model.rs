//! Pre-norm transformer encoder with a CLS token, written out by hand so
//! every gradient is explicit.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::patch::PatchSequence;
use crate::EncoderError;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_patches: usize,
    pub patch_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub d_e: usize,
}

impl EncoderConfig {
    /// Toy-scale encoder for an X×Y complex input cut into `n_patches`.
    pub fn toy(x: usize, y: usize, n_patches: usize, d_e: usize) -> Result<Self, EncoderError> {
        let patch_len = crate::patch::patch_length(x, y, n_patches)?;
        let cfg = Self { n_patches, patch_len, d_model: 128, n_layers: 2, n_heads: 4, d_ff: 256, d_e };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let dims = [self.n_patches, self.patch_len, self.d_model, self.n_heads, self.d_ff, self.d_e];
        if dims.contains(&0) {
            return Err(EncoderError::Config("encoder dimensions must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(EncoderError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn seq_len(&self) -> usize {
        self.n_patches + 1
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
    /// No key bias: it shifts every score row by a constant and cancels in the softmax.
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// L×d_model.
    pub patch_projection: Array2<f64>,
    /// (P+1)×d_model, row 0 belongs to the CLS token.
    pub positional_encoding: Array2<f64>,
    pub cls_token: Array1<f64>,
    pub mask_token: Array1<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
    /// Reconstruction head for masked modeling, d_model×L.
    pub recon_weight: Array2<f64>,
    pub recon_bias: Array1<f64>,
    /// d_model×d_e.
    pub output_projection: Array2<f64>,
}

fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let u = Uniform::new_inclusive(-a, a).expect("finite bound");
    Array2::from_shape_fn((rows, cols), |_| u.sample(rng))
}

fn sinusoidal(rows: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, d), |(pos, i)| {
        let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let a = pos as f64 * freq;
        if i % 2 == 0 {
            a.sin()
        } else {
            a.cos()
        }
    })
}

impl LayerParams {
    fn init<R: Rng + ?Sized>(d: usize, d_ff: usize, rng: &mut R) -> Self {
        let z = |n| Array1::zeros(n);
        Self {
            ln1_gain: Array1::ones(d),
            ln1_bias: z(d),
            w_q: xavier(d, d, rng),
            b_q: z(d),
            w_k: xavier(d, d, rng),
            w_v: xavier(d, d, rng),
            b_v: z(d),
            w_o: xavier(d, d, rng),
            b_o: z(d),
            ln2_gain: Array1::ones(d),
            ln2_bias: z(d),
            w_ff1: xavier(d, d_ff, rng),
            b_ff1: z(d_ff),
            w_ff2: xavier(d_ff, d, rng),
            b_ff2: z(d),
        }
    }

    fn zeros(d: usize, d_ff: usize) -> Self {
        let v = |n| Array1::zeros(n);
        let m = |r, c| Array2::zeros((r, c));
        Self {
            ln1_gain: v(d),
            ln1_bias: v(d),
            w_q: m(d, d),
            b_q: v(d),
            w_k: m(d, d),
            w_v: m(d, d),
            b_v: v(d),
            w_o: m(d, d),
            b_o: v(d),
            ln2_gain: v(d),
            ln2_bias: v(d),
            w_ff1: m(d, d_ff),
            b_ff1: v(d_ff),
            w_ff2: m(d_ff, d),
            b_ff2: v(d),
        }
    }
}


/// A named view of one parameter tensor.
pub struct ParamRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

fn view1(name: String, a: &Array1<f64>) -> ParamRef<'_> {
    ParamRef { name, shape: vec![a.len()], data: a.as_slice().expect("contiguous") }
}

fn view2(name: String, a: &Array2<f64>) -> ParamRef<'_> {
    ParamRef { name, shape: a.shape().to_vec(), data: a.as_slice().expect("contiguous") }
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self, EncoderError> {
        config.validate()?;
        let d = config.d_model;
        let small = Normal::new(0.0, 0.02).expect("valid sigma");
        Ok(Self {
            config,
            patch_projection: xavier(config.patch_len, d, rng),
            positional_encoding: sinusoidal(config.seq_len(), d),
            cls_token: Array1::from_shape_fn(d, |_| small.sample(rng)),
            mask_token: Array1::from_shape_fn(d, |_| small.sample(rng)),
            layers: (0..config.n_layers).map(|_| LayerParams::init(d, config.d_ff, rng)).collect(),
            final_gain: Array1::ones(d),
            final_bias: Array1::zeros(d),
            recon_weight: xavier(d, config.patch_len, rng),
            recon_bias: Array1::zeros(config.patch_len),
            output_projection: xavier(d, config.d_e, rng),
        })
    }

    /// Same shapes, every entry zero (used for gradient accumulators).
    pub fn zeros(config: EncoderConfig) -> Self {
        let d = config.d_model;
        Self {
            config,
            patch_projection: Array2::zeros((config.patch_len, d)),
            positional_encoding: Array2::zeros((config.seq_len(), d)),
            cls_token: Array1::zeros(d),
            mask_token: Array1::zeros(d),
            layers: (0..config.n_layers).map(|_| LayerParams::zeros(d, config.d_ff)).collect(),
            final_gain: Array1::zeros(d),
            final_bias: Array1::zeros(d),
            recon_weight: Array2::zeros((d, config.patch_len)),
            recon_bias: Array1::zeros(config.patch_len),
            output_projection: Array2::zeros((d, config.d_e)),
        }
    }

    /// Every tensor in checkpoint order.
    pub fn tensors(&self) -> Vec<ParamRef<'_>> {
        let mut out = vec![
            view2("patch_projection".into(), &self.patch_projection),
            view2("positional_encoding".into(), &self.positional_encoding),
            view1("cls_token".into(), &self.cls_token),
            view1("mask_token".into(), &self.mask_token),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push(view1(format!("layer{i}.ln1_gain"), &l.ln1_gain));
            out.push(view1(format!("layer{i}.ln1_bias"), &l.ln1_bias));
            out.push(view2(format!("layer{i}.w_q"), &l.w_q));
            out.push(view1(format!("layer{i}.b_q"), &l.b_q));
            out.push(view2(format!("layer{i}.w_k"), &l.w_k));
            out.push(view2(format!("layer{i}.w_v"), &l.w_v));
            out.push(view1(format!("layer{i}.b_v"), &l.b_v));
            out.push(view2(format!("layer{i}.w_o"), &l.w_o));
            out.push(view1(format!("layer{i}.b_o"), &l.b_o));
            out.push(view1(format!("layer{i}.ln2_gain"), &l.ln2_gain));
            out.push(view1(format!("layer{i}.ln2_bias"), &l.ln2_bias));
            out.push(view2(format!("layer{i}.w_ff1"), &l.w_ff1));
            out.push(view1(format!("layer{i}.b_ff1"), &l.b_ff1));
            out.push(view2(format!("layer{i}.w_ff2"), &l.w_ff2));
            out.push(view1(format!("layer{i}.b_ff2"), &l.b_ff2));
        }
        out.push(view1("final_gain".into(), &self.final_gain));
        out.push(view1("final_bias".into(), &self.final_bias));
        out.push(view2("recon_weight".into(), &self.recon_weight));
        out.push(view1("recon_bias".into(), &self.recon_bias));
        out.push(view2("output_projection".into(), &self.output_projection));
        out
    }

    /// Mutable slices in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        fn sl<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("contiguous")
        }
        let mut out: Vec<&mut [f64]> = vec![
            sl(&mut self.patch_projection),
            sl(&mut self.positional_encoding),
            sl(&mut self.cls_token),
            sl(&mut self.mask_token),
        ];
        for l in self.layers.iter_mut() {
            out.push(sl(&mut l.ln1_gain));
            out.push(sl(&mut l.ln1_bias));
            out.push(sl(&mut l.w_q));
            out.push(sl(&mut l.b_q));
            out.push(sl(&mut l.w_k));
            out.push(sl(&mut l.w_v));
            out.push(sl(&mut l.b_v));
            out.push(sl(&mut l.w_o));
            out.push(sl(&mut l.b_o));
            out.push(sl(&mut l.ln2_gain));
            out.push(sl(&mut l.ln2_bias));
            out.push(sl(&mut l.w_ff1));
            out.push(sl(&mut l.b_ff1));
            out.push(sl(&mut l.w_ff2));
            out.push(sl(&mut l.b_ff2));
        }
        out.push(sl(&mut self.final_gain));
        out.push(sl(&mut self.final_bias));
        out.push(sl(&mut self.recon_weight));
        out.push(sl(&mut self.recon_bias));
        out.push(sl(&mut self.output_projection));
        out
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.data.len()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensor_sizes().iter().sum()
    }

    /// All parameters except the output projection, flattened.
    pub fn frozen_values(&self) -> Vec<f64> {
        self.tensors().iter().filter(|t| t.name != "output_projection").flat_map(|t| t.data.iter().copied()).collect()
    }

    fn check_batch(&self, batch: &[PatchSequence]) -> Result<(), EncoderError> {
        let c = &self.config;
        for s in batch {
            if s.patches.dim() != (c.n_patches, c.patch_len) {
                return Err(EncoderError::Dimension {
                    what: "patch sequence",
                    expected: c.n_patches * c.patch_len,
                    got: s.patches.len(),
                });
            }
            if s.mask.len() != c.n_patches {
                return Err(EncoderError::Dimension { what: "mask length", expected: c.n_patches, got: s.mask.len() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mu = row.sum() / d;
        row -= mu;
        let var = row.dot(&row) / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        row *= *s;
    }
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, inv_std })
}

/// Returns dx and accumulates dgain, dbias.
fn layer_norm_back(
    dy: &Array2<f64>,
    cache: &NormCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * gain;
    for ((mut row, xh), &s) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(cache.inv_std.iter()) {
        let mean_g = row.sum() / d;
        let mean_gx = row.dot(&xh) / d;
        row.zip_mut_with(&xh, |g, &x| *g = s * (*g - mean_g - x * mean_gx));
    }
    dx
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: NormCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// One T×T matrix per (sequence, head), sequence-major.
    attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln2: NormCache,
    bn: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// (B·P)×L patches with masked rows zeroed.
    patch_inputs: Array2<f64>,
    masks: Vec<bool>,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
}

impl ForwardCache {
    /// Attention probabilities for sequence `b`, layer `layer`, head `head`.
    pub fn attention(&self, b: usize, layer: usize, head: usize) -> &Array2<f64> {
        let h = self.layers[layer].attn.len() / self.batch;
        &self.layers[layer].attn[b * h + head]
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let z = row.sum();
        row /= z;
    }
}

/// Runs the encoder on a batch. Output rows are sequence-major: row
/// `b·(P+1)` is the CLS embedding of sequence `b`, followed by its P patch rows.
pub fn forward(params: &EncoderParams, batch: &[PatchSequence]) -> Result<(Array2<f64>, ForwardCache), EncoderError> {
    params.check_batch(batch)?;
    let c = params.config;
    let (t, p, d, hd) = (c.seq_len(), c.n_patches, c.d_model, c.head_dim());
    let bsz = batch.len();

    let mut patch_inputs = Array2::zeros((bsz * p, c.patch_len));
    let mut masks = Vec::with_capacity(bsz * p);
    for (b, s) in batch.iter().enumerate() {
        for j in 0..p {
            masks.push(s.mask[j]);
            if !s.mask[j] {
                patch_inputs.row_mut(b * p + j).assign(&s.patches.row(j));
            }
        }
    }
    let projected = patch_inputs.dot(&params.patch_projection);
    let mut x = Array2::zeros((bsz * t, d));
    for b in 0..bsz {
        x.row_mut(b * t).assign(&params.cls_token);
        for j in 0..p {
            let mut row = x.row_mut(b * t + 1 + j);
            if masks[b * p + j] {
                row.assign(&params.mask_token);
            } else {
                row.assign(&projected.row(b * p + j));
            }
        }
        let mut block = x.slice_mut(s![b * t..(b + 1) * t, ..]);
        block += &params.positional_encoding;
    }

    let scale = 1.0 / (hd as f64).sqrt();
    let mut caches = Vec::with_capacity(c.n_layers);
    for lp in &params.layers {
        let (a, ln1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
        let q = affine(&a, &lp.w_q, &lp.b_q);
        let k = a.dot(&lp.w_k);
        let v = affine(&a, &lp.w_v, &lp.b_v);
        let mut ctx = Array2::zeros((bsz * t, d));
        let mut attn = Vec::with_capacity(bsz * c.n_heads);
        for b in 0..bsz {
            let rows = b * t..(b + 1) * t;
            for h in 0..c.n_heads {
                let cols = h * hd..(h + 1) * hd;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = k.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);
                let mut sc = qh.dot(&kh.t()) * scale;
                softmax_rows(&mut sc);
                ctx.slice_mut(s![rows.clone(), cols]).assign(&sc.dot(&vh));
                attn.push(sc);
            }
        }
        x = x + affine(&ctx, &lp.w_o, &lp.b_o);
        let (bn, ln2) = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias);
        let ff_pre = affine(&bn, &lp.w_ff1, &lp.b_ff1);
        let ff_act = ff_pre.mapv(|z| z.max(0.0));
        x = x + affine(&ff_act, &lp.w_ff2, &lp.b_ff2);
        caches.push(LayerCache { ln1, a, q, k, v, attn, ctx, ln2, bn, ff_pre, ff_act });
    }
    let (z, final_norm) = layer_norm(&x, &params.final_gain, &params.final_bias);
    Ok((z, ForwardCache { batch: bsz, patch_inputs, masks, layers: caches, final_norm }))
}

fn add_outer(dw: &mut Array2<f64>, x: ArrayView2<f64>, dy: ArrayView2<f64>) {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, dw);
}

/// Backpropagates `dz` (gradient w.r.t. the forward output) into `grads`.
/// Output-projection and reconstruction-head gradients are not touched.
pub fn backward(params: &EncoderParams, cache: &ForwardCache, dz: &Array2<f64>, grads: &mut EncoderParams) {
    let c = params.config;
    let (t, p, hd) = (c.seq_len(), c.n_patches, c.head_dim());
    let bsz = cache.batch;
    let scale = 1.0 / (hd as f64).sqrt();

    let mut dx = layer_norm_back(dz, &cache.final_norm, &params.final_gain, &mut grads.final_gain, &mut grads.final_bias);
    for (li, (lp, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let gl = &mut grads.layers[li];
        // feed-forward branch
        add_outer(&mut gl.w_ff2, lc.ff_act.view(), dx.view());
        gl.b_ff2 += &dx.sum_axis(Axis(0));
        let mut dpre = dx.dot(&lp.w_ff2.t());
        dpre.zip_mut_with(&lc.ff_pre, |g, &z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
        add_outer(&mut gl.w_ff1, lc.bn.view(), dpre.view());
        gl.b_ff1 += &dpre.sum_axis(Axis(0));
        let dbn = dpre.dot(&lp.w_ff1.t());
        dx += &layer_norm_back(&dbn, &lc.ln2, &lp.ln2_gain, &mut gl.ln2_gain, &mut gl.ln2_bias);

        // attention branch
        add_outer(&mut gl.w_o, lc.ctx.view(), dx.view());
        gl.b_o += &dx.sum_axis(Axis(0));
        let dctx = dx.dot(&lp.w_o.t());
        let mut dq = Array2::zeros(lc.q.raw_dim());
        let mut dk = Array2::zeros(lc.k.raw_dim());
        let mut dv = Array2::zeros(lc.v.raw_dim());
        for b in 0..bsz {
            let rows = b * t..(b + 1) * t;
            for h in 0..c.n_heads {
                let cols = h * hd..(h + 1) * hd;
                let a = &lc.attn[b * c.n_heads + h];
                let dout = dctx.slice(s![rows.clone(), cols.clone()]);
                let qh = lc.q.slice(s![rows.clone(), cols.clone()]);
                let kh = lc.k.slice(s![rows.clone(), cols.clone()]);
                let vh = lc.v.slice(s![rows.clone(), cols.clone()]);
                dv.slice_mut(s![rows.clone(), cols.clone()]).assign(&a.t().dot(&dout));
                let da = dout.dot(&vh.t());
                let mut ds = &da * a;
                for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                    let tot = row.sum();
                    row.zip_mut_with(&arow, |g, &pr| *g -= pr * tot);
                }
                ds *= scale;
                dq.slice_mut(s![rows.clone(), cols.clone()]).assign(&ds.dot(&kh));
                dk.slice_mut(s![rows.clone(), cols]).assign(&ds.t().dot(&qh));
            }
        }
        let mut da_in = dq.dot(&lp.w_q.t());
        da_in += &dk.dot(&lp.w_k.t());
        da_in += &dv.dot(&lp.w_v.t());
        add_outer(&mut gl.w_q, lc.a.view(), dq.view());
        add_outer(&mut gl.w_k, lc.a.view(), dk.view());
        add_outer(&mut gl.w_v, lc.a.view(), dv.view());
        gl.b_q += &dq.sum_axis(Axis(0));
        gl.b_v += &dv.sum_axis(Axis(0));
        dx += &layer_norm_back(&da_in, &lc.ln1, &lp.ln1_gain, &mut gl.ln1_gain, &mut gl.ln1_bias);
    }

    // embedding layer
    let mut dproj = Array2::zeros((bsz * p, c.d_model));
    for b in 0..bsz {
        let block = dx.slice(s![b * t..(b + 1) * t, ..]);
        grads.positional_encoding += &block;
        grads.cls_token += &block.row(0);
        for j in 0..p {
            if cache.masks[b * p + j] {
                grads.mask_token += &block.row(1 + j);
            } else {
                dproj.row_mut(b * p + j).assign(&block.row(1 + j));
            }
        }
    }
    add_outer(&mut grads.patch_projection, cache.patch_inputs.view(), dproj.view());
}

/// CLS rows (B×d_model) of a forward output.
pub fn cls_rows(z: &Array2<f64>, config: &EncoderConfig) -> Array2<f64> {
    let t = config.seq_len();
    let b = z.nrows() / t;
    Array2::from_shape_fn((b, config.d_model), |(i, j)| z[[i * t, j]])
}

/// Patch rows (B·P×d_model) of a forward output.
pub fn patch_rows(z: &Array2<f64>, config: &EncoderConfig) -> Array2<f64> {
    let (t, p) = (config.seq_len(), config.n_patches);
    let b = z.nrows() / t;
    let mut out = Array2::zeros((b * p, config.d_model));
    for i in 0..b {
        out.slice_mut(s![i * p..(i + 1) * p, ..]).assign(&z.slice(s![i * t + 1..(i + 1) * t, ..]));
    }
    out
}

/// CLS embedding (d_model) and patch embeddings (P×d_model) for one sequence.
pub fn encode(seq: &PatchSequence, params: &EncoderParams) -> Result<(Array1<f64>, Array2<f64>), EncoderError> {
    let (z, _) = forward(params, std::slice::from_ref(seq))?;
    Ok((z.row(0).to_owned(), z.slice(s![1.., ..]).to_owned()))
}

/// Applies the output projection to each CLS row: B×d_e.
pub fn project(cls: &Array2<f64>, params: &EncoderParams) -> Array2<f64> {
    cls.dot(&params.output_projection)
}

fn locate(sizes: &[usize], mut i: usize) -> (usize, usize) {
    for (g, &n) in sizes.iter().enumerate() {
        if i < n {
            return (g, i);
        }
        i -= n;
    }
    panic!("parameter index out of range");
}

impl ris_learn::ParamVector for EncoderParams {
    fn param_len(&self) -> usize {
        self.num_params()
    }

    fn get_param(&self, i: usize) -> f64 {
        let t = self.tensors();
        let (g, j) = locate(&t.iter().map(|t| t.data.len()).collect::<Vec<_>>(), i);
        t[g].data[j]
    }

    fn set_param(&mut self, i: usize, value: f64) {
        let (g, j) = locate(&self.tensor_sizes(), i);
        self.tensors_mut()[g][j] = value;
    }
}
