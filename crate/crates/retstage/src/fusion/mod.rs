//! Fusion strategies, the staging classifier, and the tabular baseline.
//!
//! Every strategy emits a 1024-d fused vector: the image half first, the
//! tabular half second. The image encoder is frozen, so no gradient is
//! propagated into the image embeddings; the tabular projection, the
//! strategy parameters, and the classifier all train.

mod attention;

pub use attention::{attention_backward, scaled_dot_attention, AttentionCache};

use crate::data::{FUSED_EMBED_DIM, IMAGE_EMBED_DIM};
use crate::encoders::TabularProjection;
use crate::error::{Error, Result};
use crate::nn::{prefixed, HasParams, LinearLayer, ParamSlot, Relu};
use crate::rng;
use crate::tensor::Tensor;

pub const TOKEN_DIM: usize = IMAGE_EMBED_DIM;
pub const FUSED_DIM: usize = FUSED_EMBED_DIM;
pub const NUM_STAGES: usize = 5;
pub const TAB_TOKENS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Concat,
    Fc,
    CrossAttention,
}

impl Strategy {
    pub fn tag(self) -> &'static str {
        match self {
            Strategy::Concat => "concat",
            Strategy::Fc => "fc",
            Strategy::CrossAttention => "xattn",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        match s {
            "concat" => Ok(Strategy::Concat),
            "fc" => Ok(Strategy::Fc),
            "xattn" => Ok(Strategy::CrossAttention),
            other => Err(Error::config(format!(
                "unknown strategy '{other}' (expected concat|fc|xattn)"
            ))),
        }
    }

    pub fn all() -> [Strategy; 3] {
        [Strategy::Concat, Strategy::Fc, Strategy::CrossAttention]
    }
}

/// Mean over token rows.
pub fn mean_pool(tokens: &Tensor) -> Vec<f64> {
    let n = tokens.rows();
    let d = tokens.cols();
    let mut out = vec![0.0; d];
    for i in 0..n {
        for (o, v) in out.iter_mut().zip(tokens.row(i)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= n as f64);
    out
}

/// [mean(img tokens) || mean(tab tokens)], image half first.
pub fn fuse_concat(img_tokens: &Tensor, tab_tokens: &Tensor) -> Result<Vec<f64>> {
    if img_tokens.cols() != TOKEN_DIM || tab_tokens.cols() != TOKEN_DIM {
        return Err(Error::dim(format!(
            "fuse_concat wants {TOKEN_DIM}-d tokens, got {} and {}",
            img_tokens.cols(),
            tab_tokens.cols()
        )));
    }
    let mut fused = mean_pool(img_tokens);
    fused.extend(mean_pool(tab_tokens));
    Ok(fused)
}

/// Q/K/V projections for the two attention directions.
pub struct CrossAttentionBlock {
    pub img_q: LinearLayer,
    pub tab_k: LinearLayer,
    pub tab_v: LinearLayer,
    pub tab_q: LinearLayer,
    pub img_k: LinearLayer,
    pub img_v: LinearLayer,
}

impl CrossAttentionBlock {
    fn new(rng: &mut impl rand::Rng) -> Self {
        let mut layer = || LinearLayer::new(TOKEN_DIM, TOKEN_DIM, rng);
        CrossAttentionBlock {
            img_q: layer(),
            tab_k: layer(),
            tab_v: layer(),
            tab_q: layer(),
            img_k: layer(),
            img_v: layer(),
        }
    }

    /// Identity projections, for the degenerate-case contracts.
    pub fn identity() -> Self {
        CrossAttentionBlock {
            img_q: LinearLayer::identity(TOKEN_DIM),
            tab_k: LinearLayer::identity(TOKEN_DIM),
            tab_v: LinearLayer::identity(TOKEN_DIM),
            tab_q: LinearLayer::identity(TOKEN_DIM),
            img_k: LinearLayer::identity(TOKEN_DIM),
            img_v: LinearLayer::identity(TOKEN_DIM),
        }
    }

    fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        let mut slots = prefixed("img_q", self.img_q.param_slots());
        slots.extend(prefixed("tab_k", self.tab_k.param_slots()));
        slots.extend(prefixed("tab_v", self.tab_v.param_slots()));
        slots.extend(prefixed("tab_q", self.tab_q.param_slots()));
        slots.extend(prefixed("img_k", self.img_k.param_slots()));
        slots.extend(prefixed("img_v", self.img_v.param_slots()));
        slots
    }

    fn zero_grads(&mut self) {
        self.img_q.zero_grads();
        self.tab_k.zero_grads();
        self.tab_v.zero_grads();
        self.tab_q.zero_grads();
        self.img_k.zero_grads();
        self.img_v.zero_grads();
    }
}

struct FusionCache {
    n: usize,
    attn_a: Vec<AttentionCache>,
    attn_b: Vec<AttentionCache>,
}

/// Multimodal staging model: tabular projection + one fusion strategy +
/// linear classifier head (1024 -> 5).
pub struct FusionModel {
    pub strategy: Strategy,
    pub projection: TabularProjection,
    pub fc: Option<LinearLayer>,
    pub attn: Option<CrossAttentionBlock>,
    pub classifier: LinearLayer,
    cache: Option<FusionCache>,
}

impl FusionModel {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "fusion-init");
        let projection = TabularProjection::new(&mut rng);
        let fc = match strategy {
            Strategy::Fc => Some(LinearLayer::new(FUSED_DIM, FUSED_DIM, &mut rng)),
            _ => None,
        };
        let attn = match strategy {
            Strategy::CrossAttention => Some(CrossAttentionBlock::new(&mut rng)),
            _ => None,
        };
        let classifier = LinearLayer::new(FUSED_DIM, NUM_STAGES, &mut rng);
        FusionModel {
            strategy,
            projection,
            fc,
            attn,
            classifier,
            cache: None,
        }
    }

    fn check_inputs(&self, img: &Tensor, tab: &Tensor) -> Result<usize> {
        if img.cols() != IMAGE_EMBED_DIM {
            return Err(Error::dim(format!(
                "image embeddings must be {IMAGE_EMBED_DIM}-d, got {}",
                img.cols()
            )));
        }
        if tab.cols() != TAB_TOKENS {
            return Err(Error::dim(format!(
                "expected {TAB_TOKENS} selected features, got {}",
                tab.cols()
            )));
        }
        if img.rows() != tab.rows() {
            return Err(Error::dim(format!(
                "{} image rows vs {} tabular rows",
                img.rows(),
                tab.rows()
            )));
        }
        Ok(img.rows())
    }

    /// Fused 1024-d representation for a batch. `img` is `[n x 512]` frozen
    /// image embeddings, `tab` is `[n x 4]` standardized selected features.
    pub fn fuse(&mut self, img: &Tensor, tab: &Tensor) -> Result<Tensor> {
        let n = self.check_inputs(img, tab)?;
        let tokens = self.projection.forward(tab)?; // [(n*4) x 512]

        let mut fused = Tensor::zeros(vec![n, FUSED_DIM]);
        let mut cache = FusionCache {
            n,
            attn_a: Vec::new(),
            attn_b: Vec::new(),
        };

        match self.strategy {
            Strategy::Concat | Strategy::Fc => {
                for i in 0..n {
                    let row = fused.row_mut(i);
                    row[..TOKEN_DIM].copy_from_slice(img.row(i));
                    for j in 0..TAB_TOKENS {
                        let tok = tokens.row(i * TAB_TOKENS + j);
                        for (t, v) in tok.iter().enumerate() {
                            row[TOKEN_DIM + t] += v / TAB_TOKENS as f64;
                        }
                    }
                }
                if self.strategy == Strategy::Fc {
                    let fc = self.fc.as_mut().expect("fc strategy has fc layer");
                    fused = fc.forward(&fused)?;
                }
            }
            Strategy::CrossAttention => {
                let attn = self.attn.as_mut().expect("xattn strategy has block");
                let q_img = attn.img_q.forward(img)?;
                let k_tab = attn.tab_k.forward(&tokens)?;
                let v_tab = attn.tab_v.forward(&tokens)?;
                let q_tab = attn.tab_q.forward(&tokens)?;
                let k_img = attn.img_k.forward(img)?;
                let v_img = attn.img_v.forward(img)?;
                for i in 0..n {
                    let take = |t: &Tensor, from: usize, rows: usize| {
                        let mut data = Vec::with_capacity(rows * TOKEN_DIM);
                        for r in from..from + rows {
                            data.extend_from_slice(t.row(r));
                        }
                        Tensor::new(vec![rows, TOKEN_DIM], data).expect("slice shapes agree")
                    };
                    let qa = take(&q_img, i, 1);
                    let ka = take(&k_tab, i * TAB_TOKENS, TAB_TOKENS);
                    let va = take(&v_tab, i * TAB_TOKENS, TAB_TOKENS);
                    let (out_a, cache_a) = scaled_dot_attention(&qa, &ka, &va)?;

                    let qb = take(&q_tab, i * TAB_TOKENS, TAB_TOKENS);
                    let kb = take(&k_img, i, 1);
                    let vb = take(&v_img, i, 1);
                    let (out_b, cache_b) = scaled_dot_attention(&qb, &kb, &vb)?;

                    let row = fused.row_mut(i);
                    row[..TOKEN_DIM].copy_from_slice(out_a.row(0));
                    let pooled_b = mean_pool(&out_b);
                    row[TOKEN_DIM..].copy_from_slice(&pooled_b);

                    cache.attn_a.push(cache_a);
                    cache.attn_b.push(cache_b);
                }
            }
        }

        self.cache = Some(cache);
        Ok(fused)
    }

    /// Stage logits `[n x 5]`.
    pub fn forward(&mut self, img: &Tensor, tab: &Tensor) -> Result<Tensor> {
        let fused = self.fuse(img, tab)?;
        self.classifier.forward(&fused)
    }

    pub fn backward(&mut self, d_logits: &Tensor) -> Result<()> {
        let d_fused = self.classifier.backward(d_logits)?;
        self.backward_fused(&d_fused)
    }

    /// Backward from a gradient on the fused representation.
    pub fn backward_fused(&mut self, d_fused: &Tensor) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::dim("fusion backward before forward"))?;
        let n = cache.n;
        if d_fused.rows() != n || d_fused.cols() != FUSED_DIM {
            return Err(Error::dim("fusion backward: d_fused shape mismatch"));
        }

        let d_concat_to_tokens = |d: &Tensor| -> Tensor {
            // second half of each fused gradient row spreads over 4 tokens
            let mut d_tokens = Tensor::zeros(vec![n * TAB_TOKENS, TOKEN_DIM]);
            for i in 0..n {
                let src = &d.row(i)[TOKEN_DIM..];
                for j in 0..TAB_TOKENS {
                    let dst = d_tokens.row_mut(i * TAB_TOKENS + j);
                    for (t, v) in src.iter().enumerate() {
                        dst[t] = v / TAB_TOKENS as f64;
                    }
                }
            }
            d_tokens
        };

        let d_tokens = match self.strategy {
            Strategy::Concat => d_concat_to_tokens(d_fused),
            Strategy::Fc => {
                let fc = self.fc.as_mut().expect("fc strategy has fc layer");
                let d_concat = fc.backward(d_fused)?;
                d_concat_to_tokens(&d_concat)
            }
            Strategy::CrossAttention => {
                let mut dq_img = Tensor::zeros(vec![n, TOKEN_DIM]);
                let mut dk_tab = Tensor::zeros(vec![n * TAB_TOKENS, TOKEN_DIM]);
                let mut dv_tab = Tensor::zeros(vec![n * TAB_TOKENS, TOKEN_DIM]);
                let mut dq_tab = Tensor::zeros(vec![n * TAB_TOKENS, TOKEN_DIM]);
                let mut dk_img = Tensor::zeros(vec![n, TOKEN_DIM]);
                let mut dv_img = Tensor::zeros(vec![n, TOKEN_DIM]);

                for i in 0..n {
                    let d_row = d_fused.row(i);
                    let d_out_a =
                        Tensor::new(vec![1, TOKEN_DIM], d_row[..TOKEN_DIM].to_vec())?;
                    let (dqa, dka, dva) = attention_backward(&cache.attn_a[i], &d_out_a)?;
                    dq_img.row_mut(i).copy_from_slice(dqa.row(0));
                    for j in 0..TAB_TOKENS {
                        dk_tab.row_mut(i * TAB_TOKENS + j).copy_from_slice(dka.row(j));
                        dv_tab.row_mut(i * TAB_TOKENS + j).copy_from_slice(dva.row(j));
                    }

                    // mean pooling over the 4 direction-B outputs
                    let mut d_out_b = Tensor::zeros(vec![TAB_TOKENS, TOKEN_DIM]);
                    for j in 0..TAB_TOKENS {
                        let dst = d_out_b.row_mut(j);
                        for (t, v) in d_row[TOKEN_DIM..].iter().enumerate() {
                            dst[t] = v / TAB_TOKENS as f64;
                        }
                    }
                    let (dqb, dkb, dvb) = attention_backward(&cache.attn_b[i], &d_out_b)?;
                    for j in 0..TAB_TOKENS {
                        dq_tab.row_mut(i * TAB_TOKENS + j).copy_from_slice(dqb.row(j));
                    }
                    dk_img.row_mut(i).copy_from_slice(dkb.row(0));
                    dv_img.row_mut(i).copy_from_slice(dvb.row(0));
                }

                let attn = self.attn.as_mut().expect("xattn strategy has block");
                // image-side gradients stop at the frozen encoder
                attn.img_q.backward(&dq_img)?;
                attn.img_k.backward(&dk_img)?;
                attn.img_v.backward(&dv_img)?;
                let d1 = attn.tab_k.backward(&dk_tab)?;
                let d2 = attn.tab_v.backward(&dv_tab)?;
                let d3 = attn.tab_q.backward(&dq_tab)?;
                let mut d_tokens = d1;
                for (o, (a, b)) in d_tokens
                    .data_mut()
                    .iter_mut()
                    .zip(d2.data().iter().zip(d3.data()))
                {
                    *o += a + b;
                }
                d_tokens
            }
        };

        self.projection.backward(&d_tokens)?;
        Ok(())
    }
}

impl HasParams for FusionModel {
    fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        let mut slots = prefixed("projection", self.projection.param_slots());
        if let Some(fc) = self.fc.as_mut() {
            slots.extend(prefixed("fc", fc.param_slots()));
        }
        if let Some(attn) = self.attn.as_mut() {
            slots.extend(prefixed("attn", attn.param_slots()));
        }
        slots.extend(prefixed("classifier", self.classifier.param_slots()));
        slots
    }

    fn zero_grads(&mut self) {
        self.projection.zero_grads();
        if let Some(fc) = self.fc.as_mut() {
            fc.zero_grads();
        }
        if let Some(attn) = self.attn.as_mut() {
            attn.zero_grads();
        }
        self.classifier.zero_grads();
    }
}

/// Unimodal tabular baseline: Linear(17 -> 32) + ReLU + Linear(32 -> 5).
pub struct TabularNet {
    pub l1: LinearLayer,
    relu: Relu,
    pub l2: LinearLayer,
}

impl TabularNet {
    pub const IN_DIM: usize = 17;
    pub const HIDDEN: usize = 32;

    pub fn new(seed: u64) -> Self {
        let mut rng = rng::stream(seed, "tabular-init");
        TabularNet {
            l1: LinearLayer::new(Self::IN_DIM, Self::HIDDEN, &mut rng),
            relu: Relu::new(),
            l2: LinearLayer::new(Self::HIDDEN, NUM_STAGES, &mut rng),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let h = self.l1.forward(x)?;
        let a = self.relu.forward(&h);
        self.l2.forward(&a)
    }

    pub fn backward(&mut self, d_logits: &Tensor) -> Result<Tensor> {
        let da = self.l2.backward(d_logits)?;
        let dh = self.relu.backward(&da)?;
        self.l1.backward(&dh)
    }
}

impl HasParams for TabularNet {
    fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        let mut slots = prefixed("l1", self.l1.param_slots());
        slots.extend(prefixed("l2", self.l2.param_slots()));
        slots
    }

    fn zero_grads(&mut self) {
        self.l1.zero_grads();
        self.l2.zero_grads();
    }
}
