//! A small model and toy samples for tests that run the whole pipeline.
#![allow(dead_code)]

use higita_core::alignment::LossWeights;
use higita_core::autograd::Graph;
use higita_core::data::{render_samples, Batch, Sample};
use higita_core::image_encoder::ImageEncoderConfig;
use higita_core::lexicon::synth::{toy_lexicon, ToyLexiconConfig};
use higita_core::lexicon::{Lexicon, MAX_SEQ_LEN};
use higita_core::model::{HiGita, ModelConfig};
use higita_core::nn::{ParamId, ParamStore};
use higita_core::text_encoder::TextEncoderConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn lexicon(characters: usize) -> Lexicon {
    toy_lexicon(&ToyLexiconConfig {
        characters,
        radicals: 12,
        ..ToyLexiconConfig::default()
    })
    .expect("toy lexicon")
}

pub fn config(size: usize, dim: usize, radical_count: usize, fusion_layers: usize) -> ModelConfig {
    ModelConfig {
        image: ImageEncoderConfig {
            input_size: size,
            widths: [4, 8, 8],
            dim,
        },
        text: TextEncoderConfig {
            layers: 1,
            fusion_layers,
            dim,
            heads: 2,
            max_len: MAX_SEQ_LEN,
            radical_count,
            residual_init: 1.0,
        },
        lambda_init: 10.0,
    }
}

pub fn samples(lex: &Lexicon, chars: &[char], size: usize, seed: u64) -> Vec<Sample> {
    render_samples(lex, chars, size, 1, seed).expect("render")
}

pub fn batch(samples: &[Sample]) -> Batch {
    let refs: Vec<&Sample> = samples.iter().collect();
    Batch::from_samples(&refs)
}

fn loss(model: &HiGita, store: &ParamStore, batch: &Batch, w: &LossWeights) -> f64 {
    let g = Graph::with_mode(false, true);
    model.losses(&g, store, batch, w).unwrap().total.item()
}

pub struct GradCheck {
    pub checked: usize,
    pub includes_lambda: bool,
    pub max_rel_error: f64,
}

/// Compares backpropagated gradients of the full weighted loss with
/// central differences at `coords` random parameter coordinates plus
/// lambda. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn full_model_gradcheck(coords: usize, seed: u64) -> GradCheck {
    let lex = lexicon(20);
    let chars = lex.characters();
    let cfg = config(32, 8, lex.radicals().len(), 1);
    let (model, mut store) = HiGita::new(&cfg, seed).unwrap();
    let batch = batch(&samples(&lex, &chars[..3], 32, seed));
    let w = LossWeights::default();

    let g = Graph::training();
    let total = model.losses(&g, &store, &batch, &w).unwrap().total;
    let grads = g.backward(total);
    let analytic: Vec<(ParamId, higita_core::tensor::Tensor)> = g.param_grads(&grads);
    drop(grads);
    drop(g);
    let grad_at = |id: ParamId, k: usize| {
        analytic
            .iter()
            .find(|(p, _)| *p == id)
            .map_or(0.0, |(_, t)| t.data()[k])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let trainable: Vec<ParamId> = store
        .trainable_ids()
        .into_iter()
        .filter(|&id| id != model.lambda)
        .collect();
    let mut picks = vec![(model.lambda, 0)];
    while picks.len() < coords + 1 {
        let id = trainable[rng.random_range(0..trainable.len())];
        let k = rng.random_range(0..store.get(id).numel());
        if grad_at(id, k).abs() > 1e-6 && !picks.contains(&(id, k)) {
            picks.push((id, k));
        }
    }

    let h = 1e-5;
    let mut worst = 0.0f64;
    for &(id, k) in &picks {
        let x = store.get(id).data()[k];
        store.get_mut(id).data_mut()[k] = x + h;
        let up = loss(&model, &store, &batch, &w);
        store.get_mut(id).data_mut()[k] = x - h;
        let down = loss(&model, &store, &batch, &w);
        store.get_mut(id).data_mut()[k] = x;
        let numeric = (up - down) / (2.0 * h);
        let a = grad_at(id, k);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    GradCheck {
        checked: picks.len(),
        includes_lambda: picks[0].0 == model.lambda,
        max_rel_error: worst,
    }
}

/// Per-level losses and total of a batch holding two renderings of one
/// character.
pub fn identical_pair_losses(char_index: usize, seed: u64) -> ([f64; 4], f64) {
    let lex = lexicon(20);
    let c = lex.characters()[char_index];
    let mut s = samples(&lex, &[c], 32, seed);
    s.extend(samples(&lex, &[c], 32, seed + 1));
    let cfg = config(32, 8, lex.radicals().len(), 1);
    let (model, store) = HiGita::new(&cfg, seed).unwrap();
    let r = higita_core::train::eval_losses(&model, &store, &batch(&s), &LossWeights::default())
        .unwrap();
    (r.levels, r.total)
}
