//! A small pre-LayerNorm transformer encoder with a tied output projection,
//! trained from scratch with hand-written backpropagation.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskPlan;
use crate::mlm::vocab::{Vocabulary, MASK};
use crate::mlm::MlmBackend;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    /// Standard deviation of the token and position embedding initializer.
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            layers: 2,
            heads: 4,
            ff_dim: 256,
            max_len: 128,
            init_std: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.ff_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("ff_dim and max_len must be positive".into()));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    ln1_g: Array1<f64>,
    ln1_b: Array1<f64>,
    wq: Array2<f64>,
    bq: Array1<f64>,
    wk: Array2<f64>,
    bk: Array1<f64>,
    wv: Array2<f64>,
    bv: Array1<f64>,
    wo: Array2<f64>,
    bo: Array1<f64>,
    ln2_g: Array1<f64>,
    ln2_b: Array1<f64>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl Block {
    fn zeros(d: usize, f: usize) -> Self {
        Block {
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        fn one(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("contiguous")
        }
        fn two(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("contiguous")
        }
        vec![
            one(&self.ln1_g),
            one(&self.ln1_b),
            two(&self.wq),
            one(&self.bq),
            two(&self.wk),
            one(&self.bk),
            two(&self.wv),
            one(&self.bv),
            two(&self.wo),
            one(&self.bo),
            one(&self.ln2_g),
            one(&self.ln2_b),
            two(&self.w1),
            one(&self.b1),
            two(&self.w2),
            one(&self.b2),
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.ln1_g.as_slice_mut().expect("contiguous"),
            self.ln1_b.as_slice_mut().expect("contiguous"),
            self.wq.as_slice_mut().expect("contiguous"),
            self.bq.as_slice_mut().expect("contiguous"),
            self.wk.as_slice_mut().expect("contiguous"),
            self.bk.as_slice_mut().expect("contiguous"),
            self.wv.as_slice_mut().expect("contiguous"),
            self.bv.as_slice_mut().expect("contiguous"),
            self.wo.as_slice_mut().expect("contiguous"),
            self.bo.as_slice_mut().expect("contiguous"),
            self.ln2_g.as_slice_mut().expect("contiguous"),
            self.ln2_b.as_slice_mut().expect("contiguous"),
            self.w1.as_slice_mut().expect("contiguous"),
            self.b1.as_slice_mut().expect("contiguous"),
            self.w2.as_slice_mut().expect("contiguous"),
            self.b2.as_slice_mut().expect("contiguous"),
        ]
    }
}

/// All trainable tensors. Gradients and optimizer state use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub(crate) tok_emb: Array2<f64>,
    pub(crate) pos_emb: Array2<f64>,
    pub(crate) blocks: Vec<Block>,
    pub(crate) lnf_g: Array1<f64>,
    pub(crate) lnf_b: Array1<f64>,
    pub(crate) out_bias: Array1<f64>,
}

impl Params {
    pub(crate) fn zeros(vocab: usize, cfg: &ModelConfig) -> Self {
        Params {
            tok_emb: Array2::zeros((vocab, cfg.dim)),
            pos_emb: Array2::zeros((cfg.max_len, cfg.dim)),
            blocks: (0..cfg.layers)
                .map(|_| Block::zeros(cfg.dim, cfg.ff_dim))
                .collect(),
            lnf_g: Array1::zeros(cfg.dim),
            lnf_b: Array1::zeros(cfg.dim),
            out_bias: Array1::zeros(vocab),
        }
    }

    fn init<R: Rng + ?Sized>(vocab: usize, cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Params::zeros(vocab, cfg);
        let mut fill = |a: &mut [f64], std: f64| {
            for x in a {
                let z: f64 = StandardNormal.sample(rng);
                *x = std * z;
            }
        };
        fill(p.tok_emb.as_slice_mut().unwrap(), cfg.init_std);
        fill(p.pos_emb.as_slice_mut().unwrap(), cfg.init_std);
        let fan_in_d = 1.0 / (cfg.dim as f64).sqrt();
        let fan_in_f = 1.0 / (cfg.ff_dim as f64).sqrt();
        for b in &mut p.blocks {
            for w in [&mut b.wq, &mut b.wk, &mut b.wv, &mut b.wo, &mut b.w1] {
                fill(w.as_slice_mut().unwrap(), fan_in_d);
            }
            fill(b.w2.as_slice_mut().unwrap(), fan_in_f);
            b.ln1_g.fill(1.0);
            b.ln2_g.fill(1.0);
        }
        p.lnf_g.fill(1.0);
        p
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.tok_emb.as_slice().expect("contiguous"),
            self.pos_emb.as_slice().expect("contiguous"),
        ];
        for b in &self.blocks {
            out.extend(b.slices());
        }
        out.push(self.lnf_g.as_slice().expect("contiguous"));
        out.push(self.lnf_b.as_slice().expect("contiguous"));
        out.push(self.out_bias.as_slice().expect("contiguous"));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.tok_emb.as_slice_mut().expect("contiguous"),
            self.pos_emb.as_slice_mut().expect("contiguous"),
        ];
        for b in &mut self.blocks {
            out.extend(b.slices_mut());
        }
        out.push(self.lnf_g.as_slice_mut().expect("contiguous"));
        out.push(self.lnf_b.as_slice_mut().expect("contiguous"));
        out.push(self.out_bias.as_slice_mut().expect("contiguous"));
        out
    }

    /// Zero tensors shaped like `self`, e.g. for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
    }

    pub(crate) fn sum_squares(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|x| x * x)
            .sum()
    }
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let (rows, d) = x.dim();
    let mut xhat = Array2::zeros((rows, d));
    let mut rstd = Array1::zeros(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = inv;
        for (o, v) in xhat.row_mut(r).iter_mut().zip(row.iter()) {
            *o = (v - mean) * inv;
        }
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_back(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    let (rows, d) = dy.dim();
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let dxhat = dy * g;
    let mut dx = Array2::zeros((rows, d));
    for r in 0..rows {
        let dxh = dxhat.row(r);
        let xh = cache.xhat.row(r);
        let mean_dxh = dxh.sum() / d as f64;
        let mean_dxh_xh = dxh.dot(&xh) / d as f64;
        let inv = cache.rstd[r];
        for ((o, a), b) in dx.row_mut(r).iter_mut().zip(dxh.iter()).zip(xh.iter()) {
            *o = inv * (a - mean_dxh - b * mean_dxh_xh);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row /= sum;
    }
}

/// `acc += a^T b`
fn add_at_b(acc: &mut Array2<f64>, a: &ArrayView2<f64>, b: &ArrayView2<f64>) {
    general_mat_mul(1.0, &a.t(), b, 1.0, acc);
}

struct BlockCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    ln2: LnCache,
    c: Array2<f64>,
    u: Array2<f64>,
    z: Array2<f64>,
}

struct ForwardCache {
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    y: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlm {
    pub(crate) vocab: Vocabulary,
    pub(crate) config: ModelConfig,
    pub(crate) params: Params,
    /// Optimizer steps taken so far.
    pub(crate) steps: u64,
    /// Mean masked-token loss of each completed fine-tuning epoch.
    pub(crate) loss_history: Vec<f64>,
}

impl TinyMlm {
    pub fn new<R: Rng + ?Sized>(vocab: Vocabulary, config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = Params::init(vocab.len(), &config, rng);
        Ok(TinyMlm {
            vocab,
            config,
            params,
            steps: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Embedding row of a vocabulary id.
    pub fn embedding(&self, id: usize) -> Vec<f64> {
        self.params.tok_emb.row(id).to_vec()
    }

    pub(crate) fn set_embedding(&mut self, id: usize, row: &[f64]) {
        self.params
            .tok_emb
            .row_mut(id)
            .iter_mut()
            .zip(row)
            .for_each(|(d, s)| *d = *s);
    }

    /// Input ids of the masked sequence.
    pub fn encode(&self, plan: &MaskPlan) -> Result<Vec<usize>> {
        let items = plan.base().items();
        if items.len() > self.config.max_len {
            return Err(Error::Length {
                length: items.len(),
                max: self.config.max_len,
            });
        }
        Ok(items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                if plan.is_masked(i) {
                    MASK
                } else {
                    self.vocab.item_id(item)
                }
            })
            .collect())
    }

    fn forward(&self, ids: &[usize]) -> ForwardCache {
        let p = &self.params;
        let cfg = &self.config;
        let len = ids.len();
        let d = cfg.dim;
        let dh = d / cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut h = Array2::zeros((len, d));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = h.row_mut(i);
            row += &p.tok_emb.row(id);
            row += &p.pos_emb.row(i);
        }

        let mut caches = Vec::with_capacity(p.blocks.len());
        for b in &p.blocks {
            let (a, ln1) = layer_norm(&h, &b.ln1_g, &b.ln1_b);
            let q = a.dot(&b.wq) + &b.bq;
            let k = a.dot(&b.wk) + &b.bk;
            let v = a.dot(&b.wv) + &b.bv;
            let mut o = Array2::zeros((len, d));
            let mut probs = Vec::with_capacity(cfg.heads);
            for head in 0..cfg.heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t());
                scores *= scale;
                softmax_rows(&mut scores);
                o.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            h = h + o.dot(&b.wo) + &b.bo;
            let (c, ln2) = layer_norm(&h, &b.ln2_g, &b.ln2_b);
            let u = c.dot(&b.w1) + &b.b1;
            let z = u.mapv(gelu);
            h = h + z.dot(&b.w2) + &b.b2;
            caches.push(BlockCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                o,
                ln2,
                c,
                u,
                z,
            });
        }
        let (y, lnf) = layer_norm(&h, &p.lnf_g, &p.lnf_b);
        ForwardCache {
            blocks: caches,
            lnf,
            y,
        }
    }

    fn output_probs(&self, y: &Array2<f64>, positions: &[usize]) -> Array2<f64> {
        let ym = y.select(Axis(0), positions);
        let mut logits = ym.dot(&self.params.tok_emb.t()) + &self.params.out_bias;
        softmax_rows(&mut logits);
        logits
    }

    /// Distributions over the vocabulary at the given positions of `ids`.
    pub fn predict_ids(&self, ids: &[usize], positions: &[usize]) -> Vec<Vec<f64>> {
        let cache = self.forward(ids);
        self.output_probs(&cache.y, positions)
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    /// Summed negative log-likelihood of `targets` at `positions`, with the
    /// gradient of `scale * nll` accumulated into `grads`.
    pub fn loss_and_grad(
        &self,
        ids: &[usize],
        positions: &[usize],
        targets: &[usize],
        scale: f64,
        grads: &mut Params,
    ) -> f64 {
        debug_assert_eq!(positions.len(), targets.len());
        let p = &self.params;
        let cfg = &self.config;
        let len = ids.len();
        let d = cfg.dim;
        let dh = d / cfg.heads;
        let att_scale = 1.0 / (dh as f64).sqrt();

        let cache = self.forward(ids);
        let probs = self.output_probs(&cache.y, positions);
        let mut nll = 0.0;
        let mut dlogits = probs;
        for (r, &t) in targets.iter().enumerate() {
            nll -= dlogits[[r, t]].ln();
            dlogits[[r, t]] -= 1.0;
        }
        dlogits *= scale;

        let ym = cache.y.select(Axis(0), positions);
        add_at_b(&mut grads.tok_emb, &dlogits.view(), &ym.view());
        grads.out_bias += &dlogits.sum_axis(Axis(0));
        let dym = dlogits.dot(&p.tok_emb);
        let mut dy = Array2::zeros((len, d));
        for (r, &pos) in positions.iter().enumerate() {
            let mut row = dy.row_mut(pos);
            row += &dym.row(r);
        }

        let mut dh_ = layer_norm_back(&dy, &cache.lnf, &p.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);

        for (bi, (b, c)) in p.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let g = &mut grads.blocks[bi];

            // Feed-forward branch.
            add_at_b(&mut g.w2, &c.z.view(), &dh_.view());
            g.b2 += &dh_.sum_axis(Axis(0));
            let mut du = dh_.dot(&b.w2.t());
            du.zip_mut_with(&c.u, |x, &u| *x *= gelu_grad(u));
            add_at_b(&mut g.w1, &c.c.view(), &du.view());
            g.b1 += &du.sum_axis(Axis(0));
            let dc = du.dot(&b.w1.t());
            dh_ += &layer_norm_back(&dc, &c.ln2, &b.ln2_g, &mut g.ln2_g, &mut g.ln2_b);

            // Attention branch.
            add_at_b(&mut g.wo, &c.o.view(), &dh_.view());
            g.bo += &dh_.sum_axis(Axis(0));
            let d_o = dh_.dot(&b.wo.t());
            let mut dq = Array2::zeros((len, d));
            let mut dk = Array2::zeros((len, d));
            let mut dv = Array2::zeros((len, d));
            for head in 0..cfg.heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let pr = &c.probs[head];
                let doh = d_o.slice(cols);
                let dp = doh.dot(&c.v.slice(cols).t());
                dv.slice_mut(cols).assign(&pr.t().dot(&doh));
                let row_dot = (&dp * pr).sum_axis(Axis(1)).insert_axis(Axis(1));
                let mut ds = (&dp - &row_dot) * pr;
                ds *= att_scale;
                dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
            }
            let av = c.a.view();
            add_at_b(&mut g.wq, &av, &dq.view());
            add_at_b(&mut g.wk, &av, &dk.view());
            add_at_b(&mut g.wv, &av, &dv.view());
            g.bq += &dq.sum_axis(Axis(0));
            g.bk += &dk.sum_axis(Axis(0));
            g.bv += &dv.sum_axis(Axis(0));
            let da = dq.dot(&b.wq.t()) + dk.dot(&b.wk.t()) + dv.dot(&b.wv.t());
            dh_ += &layer_norm_back(&da, &c.ln1, &b.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
        }

        for (i, &id) in ids.iter().enumerate() {
            let row = dh_.row(i);
            let mut t = grads.tok_emb.row_mut(id);
            t += &row;
            let mut pe = grads.pos_emb.row_mut(i);
            pe += &row;
        }
        nll
    }

    /// Summed negative log-likelihood without gradients.
    pub fn loss(&self, ids: &[usize], positions: &[usize], targets: &[usize]) -> f64 {
        let cache = self.forward(ids);
        let probs = self.output_probs(&cache.y, positions);
        targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -probs[[r, t]].ln())
            .sum()
    }
}

impl MlmBackend for TinyMlm {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn predict(&self, plan: &MaskPlan) -> Result<Vec<Vec<f64>>> {
        let ids = self.encode(plan)?;
        Ok(self.predict_ids(&ids, plan.positions()))
    }
}
