//! Randomized comparisons of the graph implementation against the scalar
//! oracles. Each returns the largest error seen.
#![allow(dead_code)]

use higita_core::alignment::{
    contrastive_loss, decoupled_sim, multi_level_loss, psi, Components, LossWeights,
};
use higita_core::autograd::Graph;
use higita_core::data::{PaddedSequences, Slot};
use higita_core::lexicon::SequenceKind;
use higita_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::oracle;

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn rows(data: &[f64], n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| data[i * d..(i + 1) * d].to_vec()).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// psi on `instances` random problems with up to 6 text tokens, 16 image
/// tokens and 16 dimensions.
pub fn psi_max_error(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=16);
        let d = rng.random_range(1..=16);
        let lambda = rng.random_range(0.1..20.0);
        let t = normals(&mut rng, n * d);
        let v = normals(&mut rng, m * d);
        let got = psi(
            &Tensor::new(&[n, d], t.clone()),
            &Tensor::new(&[m, d], v.clone()),
            lambda,
        );
        let want = oracle::psi(&rows(&t, n, d), &rows(&v, m, d), lambda);
        worst = worst.max(rel(got, want));
    }
    worst
}

struct Problem {
    seqs: PaddedSequences,
    d: usize,
    q: Vec<f64>,
    grid: (Vec<f64>, usize, usize),
    global: (Vec<f64>, usize, usize),
    ids: Vec<usize>,
}

fn problem(rng: &mut ChaCha8Rng) -> Problem {
    let b = rng.random_range(1..=4);
    let d = rng.random_range(1..=8);
    let lens: Vec<usize> = (0..b).map(|_| rng.random_range(1..=8)).collect();
    let max_len = lens.iter().max().unwrap() + rng.random_range(0..=2);
    let mut slots = Vec::new();
    let mut valid_len = Vec::new();
    for &len in &lens {
        for p in 0..max_len {
            slots.push(if p + 1 == len {
                Slot::Detail
            } else if p < len {
                if rng.random_bool(0.4) {
                    Slot::Structure
                } else {
                    Slot::Detail
                }
            } else {
                Slot::Pad
            });
        }
        valid_len.push(len);
    }
    let seqs = PaddedSequences {
        kind: SequenceKind::Stroke,
        rows: b,
        max_len,
        ids: vec![0; b * max_len],
        slots,
        valid_len,
    };
    let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let (hu, wu) = (rng.random_range(1..=2), rng.random_range(1..=2));
    Problem {
        q: normals(rng, b * max_len * d),
        grid: (normals(rng, b * d * h * w), h, w),
        global: (normals(rng, b * d * hu * wu), hu, wu),
        ids: (0..b).map(|_| rng.random_range(0..b)).collect(),
        seqs,
        d,
    }
}

fn oracle_sim(p: &Problem, lambda: f64, detail: bool, structure: bool) -> Vec<Vec<f64>> {
    let (b, len, d) = (p.seqs.rows, p.seqs.max_len, p.d);
    let texts: Vec<oracle::Text> = (0..b)
        .map(|i| {
            let mut t = oracle::Text {
                tokens: Vec::new(),
                structure: Vec::new(),
            };
            for pos in 0..len {
                let slot = p.seqs.slots[i * len + pos];
                if slot != Slot::Pad {
                    let at = (i * len + pos) * d;
                    t.tokens.push(p.q[at..at + d].to_vec());
                    t.structure.push(slot == Slot::Structure);
                }
            }
            t
        })
        .collect();
    let (g, h, w) = (&p.grid.0, p.grid.1, p.grid.2);
    let (u, hu, wu) = (&p.global.0, p.global.1, p.global.2);
    let images: Vec<oracle::Image> = (0..b)
        .map(|j| oracle::Image {
            detail: oracle::grid_tokens(&g[j * d * h * w..(j + 1) * d * h * w], d, h, w),
            global: oracle::grid_tokens(&u[j * d * hu * wu..(j + 1) * d * hu * wu], d, hu, wu),
        })
        .collect();
    texts
        .iter()
        .map(|t| {
            images
                .iter()
                .map(|v| oracle::sim_level(t, v, lambda, detail, structure))
                .collect()
        })
        .collect()
}

fn graph_sim(p: &Problem, lambda: f64, components: Components) -> Vec<Vec<f64>> {
    let (b, d) = (p.seqs.rows, p.d);
    let g = Graph::inference();
    let sim = decoupled_sim(
        &g,
        g.constant(Tensor::new(&[b, p.seqs.max_len, d], p.q.clone())),
        &p.seqs,
        g.constant(Tensor::new(&[b, d, p.grid.1, p.grid.2], p.grid.0.clone())),
        g.constant(Tensor::new(
            &[b, d, p.global.1, p.global.2],
            p.global.0.clone(),
        )),
        g.constant(Tensor::scalar(lambda)),
        components,
    )
    .value();
    rows(sim.data(), b, b)
}

fn graph_loss(sim: &[Vec<f64>], ids: &[usize]) -> f64 {
    let b = ids.len();
    let g = Graph::inference();
    let flat: Vec<f64> = sim.iter().flatten().copied().collect();
    contrastive_loss(&g, g.constant(Tensor::new(&[b, b], flat)), ids).item()
}

/// Level similarities (all three component choices), the contrastive loss
/// with duplicate masking, and the weighted multi-level total on `batches`
/// random batches of up to 4 texts and images.
pub fn level_loss_max_error(batches: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..batches {
        let p = problem(&mut rng);
        let lambda = rng.random_range(0.5..15.0);
        let cases = [
            (Components::Both, true, true),
            (Components::DetailOnly, true, false),
            (Components::StructureOnly, false, true),
        ];
        for (c, det, st) in cases {
            let got = graph_sim(&p, lambda, c);
            let want = oracle_sim(&p, lambda, det, st);
            for (gr, wr) in got.iter().zip(&want) {
                for (x, y) in gr.iter().zip(wr) {
                    worst = worst.max(rel(*x, *y));
                }
            }
            worst = worst.max(rel(
                graph_loss(&got, &p.ids),
                oracle::contrastive(&want, &p.ids),
            ));
        }

        let b = p.ids.len();
        let sims: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|_| rows(&normals(&mut rng, b * b), b, b))
            .collect();
        let weights = LossWeights {
            alpha: rng.random_range(0.0..2.0),
            beta: rng.random_range(0.0..2.0),
        };
        let g = Graph::inference();
        let vars = [0, 1, 2, 3].map(|k| {
            let flat: Vec<f64> = sims[k].iter().flatten().copied().collect();
            g.constant(Tensor::new(&[b, b], flat))
        });
        let (_, total) = multi_level_loss(&g, &vars, &weights, &p.ids);
        let want = weights.alpha * oracle::contrastive(&sims[0], &p.ids)
            + weights.alpha * oracle::contrastive(&sims[1], &p.ids)
            + weights.beta * oracle::contrastive(&sims[2], &p.ids)
            + weights.beta * oracle::contrastive(&sims[3], &p.ids);
        worst = worst.max(rel(total.item(), want));
    }
    worst
}

/// Contrastive loss on batches of 2 to 6 where some characters repeat,
/// against the oracle that drops repeats from each anchor's denominators.
pub fn dedup_max_error(batches: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..batches {
        let b = rng.random_range(2..=6);
        let distinct = rng.random_range(1..b);
        let ids: Vec<usize> = (0..b)
            .map(|i| {
                if i < distinct {
                    i
                } else {
                    rng.random_range(0..distinct)
                }
            })
            .collect();
        let sim = rows(&normals(&mut rng, b * b), b, b);
        worst = worst.max(rel(graph_loss(&sim, &ids), oracle::contrastive(&sim, &ids)));
    }
    worst
}
