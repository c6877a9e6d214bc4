//! Pre-norm transformer encoder with a `<CLS>` classification head.

use std::ops::Range;

use super::ops::{gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, softmax_in_place, LayerNormCache};
use super::{apply_mask, ClassifierConfig, Dropout, Init, LayoutBuilder};

pub(crate) struct Block {
    ln1_g: Range<usize>,
    ln1_b: Range<usize>,
    wq: Range<usize>,
    bq: Range<usize>,
    wk: Range<usize>,
    bk: Range<usize>,
    wv: Range<usize>,
    bv: Range<usize>,
    wo: Range<usize>,
    bo: Range<usize>,
    ln2_g: Range<usize>,
    ln2_b: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

pub(crate) struct Index {
    tok: Range<usize>,
    pos: Range<usize>,
    blocks: Vec<Block>,
    lnf_g: Range<usize>,
    lnf_b: Range<usize>,
    head_w: Range<usize>,
    head_b: Range<usize>,
}

fn xavier(fan_in: usize, fan_out: usize) -> Init {
    Init::Uniform((6.0 / (fan_in + fan_out) as f64).sqrt())
}

impl Index {
    pub(crate) fn build(cfg: &ClassifierConfig, vocab_size: usize, b: &mut LayoutBuilder, inits: &mut Vec<Init>) -> Index {
        let d = cfg.embed_dim;
        let f = cfg.ff_dim;
        let mut push = |name: String, len: usize, decay: bool, init: Init| {
            inits.push(init);
            b.push(name, len, decay)
        };
        // Uniform(√3·0.02) has standard deviation 0.02.
        let emb = Init::Uniform(0.02 * 3f64.sqrt());
        let tok = push("tok_emb".into(), vocab_size * d, false, emb);
        let pos = push("pos_emb".into(), cfg.window * d, false, emb);
        let mut blocks = Vec::new();
        for l in 0..cfg.layers {
            let n = |s: &str| format!("block{l}.{s}");
            blocks.push(Block {
                ln1_g: push(n("ln1_gain"), d, false, Init::One),
                ln1_b: push(n("ln1_bias"), d, false, Init::Zero),
                wq: push(n("attn_q_w"), d * d, true, xavier(d, d)),
                bq: push(n("attn_q_b"), d, false, Init::Zero),
                wk: push(n("attn_k_w"), d * d, true, xavier(d, d)),
                bk: push(n("attn_k_b"), d, false, Init::Zero),
                wv: push(n("attn_v_w"), d * d, true, xavier(d, d)),
                bv: push(n("attn_v_b"), d, false, Init::Zero),
                wo: push(n("attn_out_w"), d * d, true, xavier(d, d)),
                bo: push(n("attn_out_b"), d, false, Init::Zero),
                ln2_g: push(n("ln2_gain"), d, false, Init::One),
                ln2_b: push(n("ln2_bias"), d, false, Init::Zero),
                w1: push(n("ff_in_w"), d * f, true, xavier(d, f)),
                b1: push(n("ff_in_b"), f, false, Init::Zero),
                w2: push(n("ff_out_w"), f * d, true, xavier(f, d)),
                b2: push(n("ff_out_b"), d, false, Init::Zero),
            });
        }
        Index {
            tok,
            pos,
            blocks,
            lnf_g: push("final_ln_gain".into(), d, false, Init::One),
            lnf_b: push("final_ln_bias".into(), d, false, Init::Zero),
            head_w: push("head_w".into(), d * 2, true, Init::Zero),
            head_b: push("head_b".into(), 2, false, Init::Zero),
        }
    }

    pub(crate) fn forward(&self, p: &[f64], cfg: &ClassifierConfig, ids: &[u32], dropout_seed: Option<u64>) -> Forward {
        let n = ids.len();
        let d = cfg.embed_dim;
        let f = cfg.ff_dim;
        let heads = cfg.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut drop = Dropout::new(dropout_seed, cfg.dropout);

        let tok = &p[self.tok.clone()];
        let pos = &p[self.pos.clone()];
        let mut x = vec![0.0; n * d];
        for (i, &id) in ids.iter().enumerate() {
            let t = &tok[id as usize * d..(id as usize + 1) * d];
            let q = &pos[i * d..(i + 1) * d];
            for c in 0..d {
                x[i * d + c] = t[c] + q[c];
            }
        }
        let emb_mask = drop.as_mut().map(|m| m.apply(&mut x));

        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (h1, ln1) = layer_norm(&x, n, d, &p[b.ln1_g.clone()], &p[b.ln1_b.clone()]);
            let q = linear(&h1, n, d, &p[b.wq.clone()], &p[b.bq.clone()], d);
            let k = linear(&h1, n, d, &p[b.wk.clone()], &p[b.bk.clone()], d);
            let v = linear(&h1, n, d, &p[b.wv.clone()], &p[b.bv.clone()], d);
            // attn[h][i][j]
            let mut attn = vec![0.0; heads * n * n];
            let mut ctx = vec![0.0; n * d];
            for h in 0..heads {
                let off = h * dh;
                for i in 0..n {
                    let row = &mut attn[(h * n + i) * n..(h * n + i + 1) * n];
                    let qi = &q[i * d + off..i * d + off + dh];
                    for (j, s) in row.iter_mut().enumerate() {
                        *s = scale * super::ops::dot(qi, &k[j * d + off..j * d + off + dh]);
                    }
                    softmax_in_place(row);
                    let ci = &mut ctx[i * d + off..i * d + off + dh];
                    for (j, &a) in row.iter().enumerate() {
                        for (cv, &vv) in ci.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                            *cv += a * vv;
                        }
                    }
                }
            }
            let mut a_out = linear(&ctx, n, d, &p[b.wo.clone()], &p[b.bo.clone()], d);
            let attn_mask = drop.as_mut().map(|m| m.apply(&mut a_out));
            let x_mid: Vec<f64> = x.iter().zip(&a_out).map(|(a, b)| a + b).collect();

            let (h2, ln2) = layer_norm(&x_mid, n, d, &p[b.ln2_g.clone()], &p[b.ln2_b.clone()]);
            let u = linear(&h2, n, d, &p[b.w1.clone()], &p[b.b1.clone()], f);
            let g: Vec<f64> = u.iter().map(|&v| gelu(v)).collect();
            let mut ff = linear(&g, n, f, &p[b.w2.clone()], &p[b.b2.clone()], d);
            let ff_mask = drop.as_mut().map(|m| m.apply(&mut ff));
            let x_out: Vec<f64> = x_mid.iter().zip(&ff).map(|(a, b)| a + b).collect();

            blocks.push(BlockCache { ln1, h1, q, k, v, attn, ctx, attn_mask, ln2, h2, u, g, ff_mask });
            x = x_out;
        }

        let (cls, lnf) = layer_norm(&x[..d], 1, d, &p[self.lnf_g.clone()], &p[self.lnf_b.clone()]);
        let z = linear(&cls, 1, d, &p[self.head_w.clone()], &p[self.head_b.clone()], 2);
        Forward { logits: [z[0], z[1]], emb_mask, blocks, lnf, cls }
    }

    /// Adds the gradient of the loss into `grad`, given `dz = ∂loss/∂logits`.
    pub(crate) fn backward(&self, p: &[f64], cfg: &ClassifierConfig, ids: &[u32], fwd: &Forward, dz: [f64; 2], grad: &mut [f64]) {
        let n = ids.len();
        let d = cfg.embed_dim;
        let f = cfg.ff_dim;
        let heads = cfg.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let (dhw, dhb) = split2(grad, &self.head_w, &self.head_b);
        let dcls = linear_backward(&fwd.cls, 1, d, &p[self.head_w.clone()], 2, &dz, dhw, dhb);
        let (dg, db) = split2(grad, &self.lnf_g, &self.lnf_b);
        let dcls_in = layer_norm_backward(&fwd.lnf, 1, d, &p[self.lnf_g.clone()], &dcls, dg, db);
        let mut dx = vec![0.0; n * d];
        dx[..d].copy_from_slice(&dcls_in);

        for (b, c) in self.blocks.iter().zip(&fwd.blocks).rev() {
            // Feed-forward sublayer: x_out = x_mid + drop(g·W2 + b2).
            let mut dff = dx.clone();
            apply_mask(c.ff_mask.as_ref(), &mut dff);
            let (dw2, db2) = split2(grad, &b.w2, &b.b2);
            let mut dgl = linear_backward(&c.g, n, f, &p[b.w2.clone()], d, &dff, dw2, db2);
            for (gv, &uv) in dgl.iter_mut().zip(&c.u) {
                *gv *= gelu_grad(uv);
            }
            let (dw1, db1) = split2(grad, &b.w1, &b.b1);
            let dh2 = linear_backward(&c.h2, n, d, &p[b.w1.clone()], f, &dgl, dw1, db1);
            let (dg2, dbn2) = split2(grad, &b.ln2_g, &b.ln2_b);
            let dmid = layer_norm_backward(&c.ln2, n, d, &p[b.ln2_g.clone()], &dh2, dg2, dbn2);
            for (a, v) in dx.iter_mut().zip(&dmid) {
                *a += v;
            }

            // Attention sublayer: x_mid = x + drop(ctx·Wo + bo).
            let mut da = dx.clone();
            apply_mask(c.attn_mask.as_ref(), &mut da);
            let (dwo, dbo) = split2(grad, &b.wo, &b.bo);
            let dctx = linear_backward(&c.ctx, n, d, &p[b.wo.clone()], d, &da, dwo, dbo);
            let mut dq = vec![0.0; n * d];
            let mut dk = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            let mut dscore = vec![0.0; n];
            for h in 0..heads {
                let off = h * dh;
                for i in 0..n {
                    let a = &c.attn[(h * n + i) * n..(h * n + i + 1) * n];
                    let dci = &dctx[i * d + off..i * d + off + dh];
                    let mut sum = 0.0;
                    for j in 0..n {
                        let vj = &c.v[j * d + off..j * d + off + dh];
                        let da_ij = super::ops::dot(dci, vj);
                        dscore[j] = da_ij;
                        sum += da_ij * a[j];
                        for (dvv, &g) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                            *dvv += a[j] * g;
                        }
                    }
                    for j in 0..n {
                        let ds = a[j] * (dscore[j] - sum) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj = &c.k[j * d + off..j * d + off + dh];
                        let qi = &c.q[i * d + off..i * d + off + dh];
                        for t in 0..dh {
                            dq[i * d + off + t] += ds * kj[t];
                            dk[j * d + off + t] += ds * qi[t];
                        }
                    }
                }
            }
            let (dwq, dbq) = split2(grad, &b.wq, &b.bq);
            let mut dh1 = linear_backward(&c.h1, n, d, &p[b.wq.clone()], d, &dq, dwq, dbq);
            let (dwk, dbk) = split2(grad, &b.wk, &b.bk);
            let dh1k = linear_backward(&c.h1, n, d, &p[b.wk.clone()], d, &dk, dwk, dbk);
            let (dwv, dbv) = split2(grad, &b.wv, &b.bv);
            let dh1v = linear_backward(&c.h1, n, d, &p[b.wv.clone()], d, &dv, dwv, dbv);
            for ((a, k), v) in dh1.iter_mut().zip(&dh1k).zip(&dh1v) {
                *a += k + v;
            }
            let (dg1, dbn1) = split2(grad, &b.ln1_g, &b.ln1_b);
            let dxin = layer_norm_backward(&c.ln1, n, d, &p[b.ln1_g.clone()], &dh1, dg1, dbn1);
            for (a, v) in dx.iter_mut().zip(&dxin) {
                *a += v;
            }
        }

        apply_mask(fwd.emb_mask.as_ref(), &mut dx);
        for (i, &id) in ids.iter().enumerate() {
            let src = &dx[i * d..(i + 1) * d];
            let t0 = self.tok.start + id as usize * d;
            for (g, &s) in grad[t0..t0 + d].iter_mut().zip(src) {
                *g += s;
            }
            let p0 = self.pos.start + i * d;
            for (g, &s) in grad[p0..p0 + d].iter_mut().zip(src) {
                *g += s;
            }
        }
    }
}

/// Two disjoint mutable sub-slices of `grad`; `a` must precede `b`.
pub(crate) fn split2<'a>(grad: &'a mut [f64], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = grad.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

pub(crate) struct BlockCache {
    ln1: LayerNormCache,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    ctx: Vec<f64>,
    attn_mask: Option<Vec<f64>>,
    ln2: LayerNormCache,
    h2: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    ff_mask: Option<Vec<f64>>,
}

pub(crate) struct Forward {
    pub logits: [f64; 2],
    emb_mask: Option<Vec<f64>>,
    blocks: Vec<BlockCache>,
    lnf: LayerNormCache,
    cls: Vec<f64>,
}
