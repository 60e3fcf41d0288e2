//! Scalar reference implementations of the token matching function, the
//! level similarity and the contrastive loss, written as plain loops.
#![allow(dead_code)]

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Sum over text tokens of the softmax-weighted similarity to the image
/// tokens, with logits `lambda * s / |s|`.
pub fn psi(text: &[Vec<f64>], image: &[Vec<f64>], lambda: f64) -> f64 {
    let mut total = 0.0;
    for t in text {
        let mut s = Vec::with_capacity(image.len());
        for v in image {
            s.push(dot(t, v));
        }
        let mut sq = 0.0;
        for x in &s {
            sq += x * x;
        }
        let norm = sq.sqrt().max(1e-12);
        let mut top = f64::NEG_INFINITY;
        for x in &s {
            top = top.max(lambda * x / norm);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for x in &s {
            let w = (lambda * x / norm - top).exp();
            num += w * x;
            den += w;
        }
        total += num / den;
    }
    total
}

/// One text: token vectors and whether each is a structure token.
pub struct Text {
    pub tokens: Vec<Vec<f64>>,
    pub structure: Vec<bool>,
}

/// One image: detail-grid tokens and global-structure tokens.
pub struct Image {
    pub detail: Vec<Vec<f64>>,
    pub global: Vec<Vec<f64>>,
}

pub fn sim_level(t: &Text, v: &Image, lambda: f64, detail: bool, structure: bool) -> f64 {
    let mut det = Vec::new();
    let mut st = Vec::new();
    for (tok, &is_s) in t.tokens.iter().zip(&t.structure) {
        if is_s {
            st.push(tok.clone());
        } else {
            det.push(tok.clone());
        }
    }
    let mut s = 0.0;
    if detail {
        s += psi(&det, &v.detail, lambda);
    }
    if structure {
        s += psi(&st, &v.global, lambda);
    }
    s / t.tokens.len() as f64
}

/// Symmetric InfoNCE where, for anchor `i`, any other index with the same
/// id is left out of both denominators. `sim[i][j]` is text `i` vs image `j`.
pub fn contrastive(sim: &[Vec<f64>], ids: &[usize]) -> f64 {
    let b = ids.len();
    let mut total = 0.0;
    for i in 0..b {
        let (mut t2i, mut i2t) = (0.0, 0.0);
        for j in 0..b {
            if j == i || ids[j] != ids[i] {
                t2i += sim[i][j].exp();
                i2t += sim[j][i].exp();
            }
        }
        total += (sim[i][i].exp() / t2i).ln() + (sim[i][i].exp() / i2t).ln();
    }
    -total / (2.0 * b as f64)
}

/// Tokens of a `[d, h, w]` channel-major grid, row-major over positions.
pub fn grid_tokens(data: &[f64], d: usize, h: usize, w: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(h * w);
    for p in 0..h * w {
        let mut tok = Vec::with_capacity(d);
        for c in 0..d {
            tok.push(data[c * h * w + p]);
        }
        out.push(tok);
    }
    out
}
