//! Random token sequences for the text fusion contract.
#![allow(dead_code)]

use higita_core::autograd::Graph;
use higita_core::data::{PaddedSequences, Slot};
use higita_core::lexicon::{SequenceKind, EOS_ID, LEAF_BASE, OP_BASE};
use higita_core::nn::{ParamBuilder, ParamStore};
use higita_core::tensor::Tensor;
use higita_core::text_encoder::{valid_flags, TextEncoder, TextEncoderConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RADICALS: usize = 7;

pub fn encoder(fusion_layers: usize) -> (TextEncoder, ParamStore) {
    let cfg = TextEncoderConfig {
        layers: 1,
        fusion_layers,
        dim: 8,
        heads: 2,
        radical_count: RADICALS,
        residual_init: 1.0,
        ..TextEncoderConfig::default()
    };
    let mut b = ParamBuilder::new(17);
    let e = TextEncoder::new(&mut b, &cfg);
    (e, b.finish())
}

/// One sequence of `picks.len()` tokens plus eos; each pick chooses an op
/// or a leaf token.
pub fn sequence(kind: SequenceKind, picks: &[(bool, u32)]) -> PaddedSequences {
    let leaves = match kind {
        SequenceKind::Radical => RADICALS as u32,
        SequenceKind::Stroke => 5,
    };
    let mut ids = Vec::new();
    let mut slots = Vec::new();
    for &(op, x) in picks {
        if op {
            ids.push(OP_BASE + x % 12);
            slots.push(Slot::Structure);
        } else {
            ids.push(LEAF_BASE + x % leaves);
            slots.push(Slot::Detail);
        }
    }
    ids.push(EOS_ID);
    slots.push(Slot::Detail);
    PaddedSequences {
        kind,
        rows: 1,
        max_len: ids.len(),
        valid_len: vec![ids.len()],
        ids,
        slots,
    }
}

fn same(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape() && a.data() == b.data()
}

/// With one fusion layer: the refined radical output has `K+1` rows, the
/// refined stroke output `J+1`, and they are exactly the first `K+1` and
/// last `J+1` rows of the global block's `K+J+2` output.
pub fn split_holds(r: &[(bool, u32)], s: &[(bool, u32)]) -> bool {
    let (enc, store) = encoder(1);
    let rad = sequence(SequenceKind::Radical, r);
    let st = sequence(SequenceKind::Stroke, s);
    let (k, j, d) = (r.len() + 1, s.len() + 1, 8);
    let g = Graph::inference();
    let out = enc.forward(&g, &store, &rad, &st).unwrap();
    if out.q_r_refined.shape() != [1, k, d] || out.q_s_refined.shape() != [1, j, d] {
        return false;
    }
    let layer = &enc.fusion.layers[0];
    let (vr, vs) = (valid_flags(&rad), valid_flags(&st));
    let (cr, cs) = layer.scab(&g, &store, out.q_r, out.q_s, &vr, &vs);
    let valid: Vec<bool> = vr.iter().chain(&vs).copied().collect();
    let m = layer.gsab(&g, &store, cr, cs, &valid).value();
    if m.shape() != [1, k + j, d] {
        return false;
    }
    let head = Tensor::new(&[1, k, d], m.data()[..k * d].to_vec());
    let tail = Tensor::new(&[1, j, d], m.data()[k * d..].to_vec());
    same(&head, &out.q_r_refined.value()) && same(&tail, &out.q_s_refined.value())
}

/// With no fusion layers the refined outputs equal the encoder outputs.
pub fn identity_holds(r: &[(bool, u32)], s: &[(bool, u32)]) -> bool {
    let (enc, store) = encoder(0);
    let rad = sequence(SequenceKind::Radical, r);
    let st = sequence(SequenceKind::Stroke, s);
    let g = Graph::inference();
    let out = enc.forward(&g, &store, &rad, &st).unwrap();
    same(&out.q_r.value(), &out.q_r_refined.value())
        && same(&out.q_s.value(), &out.q_s_refined.value())
}

/// Random picks of length `0..max`.
pub fn random_picks(rng: &mut ChaCha8Rng, max: usize) -> Vec<(bool, u32)> {
    let n = rng.random_range(0..max);
    (0..n)
        .map(|_| (rng.random_bool(0.4), rng.random()))
        .collect()
}

/// Runs both contracts on `pairs` random `(K, J)` pairs; returns how many
/// pairs satisfied both.
pub fn fusion_contract(pairs: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..pairs)
        .filter(|_| {
            let r = random_picks(&mut rng, 30);
            let s = random_picks(&mut rng, 45);
            split_holds(&r, &s) && identity_holds(&r, &s)
        })
        .count()
}
