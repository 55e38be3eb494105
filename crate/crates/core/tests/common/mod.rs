//! Random instance generators and brute-force oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use barrier_cert::arrangement::{Arrangement, FlipSet, Region};
use barrier_cert::lp::TAU_FACE;
use barrier_cert::nn::{Activation, AffineMap, Functional, Layer, NeuralNetwork, ShallowNN};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_functional(rng: &mut ChaCha8Rng, n: usize) -> Functional {
    Functional::new((0..n).map(|_| gauss(rng)).collect(), gauss(rng))
}

pub fn random_arrangement(rng: &mut ChaCha8Rng, big_n: usize, n: usize) -> Arrangement {
    Arrangement::new((0..big_n).map(|_| random_functional(rng, n)).collect(), n).unwrap()
}

pub fn random_affine(rng: &mut ChaCha8Rng, d_out: usize, d_in: usize, scale: f64) -> AffineMap {
    AffineMap::new(
        (0..d_out).map(|_| (0..d_in).map(|_| scale * gauss(rng)).collect()).collect(),
        (0..d_out).map(|_| scale * gauss(rng)).collect(),
    )
    .unwrap()
}

pub fn random_shallow(rng: &mut ChaCha8Rng, big_n: usize, n: usize) -> ShallowNN {
    ShallowNN::new(random_affine(rng, big_n, n, 1.0), random_affine(rng, 1, big_n, 1.0)).unwrap()
}

/// Random shallow net shifted so that it is negative at a random seed point.
pub fn random_negative_seeded(rng: &mut ChaCha8Rng, big_n: usize, n: usize) -> (ShallowNN, Vec<f64>) {
    let net = random_shallow(rng, big_n, n);
    let x0: Vec<f64> = (0..n).map(|_| gauss(rng)).collect();
    let shift = net.eval(&x0) + rng.gen_range(0.1..1.0);
    let out = net.output();
    let shifted = ShallowNN::new(
        net.hidden().clone(),
        AffineMap::new(out.rows(), vec![out.bias()[0] - shift]).unwrap(),
    )
    .unwrap();
    (shifted, x0)
}

pub fn random_network(rng: &mut ChaCha8Rng, widths: &[usize]) -> NeuralNetwork {
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let kind = if k + 2 == widths.len() { Activation::Linear } else { Activation::Relu };
            Layer::new(random_affine(rng, w[1], w[0], 1.0 / (w[0] as f64).sqrt()), kind)
        })
        .collect();
    NeuralNetwork::new(layers).unwrap()
}

pub fn all_regions(big_n: usize) -> impl Iterator<Item = Region> {
    (0..1u64 << big_n).map(move |mask| Region::new(FlipSet::from_indices(big_n, (0..big_n).filter(|i| mask >> i & 1 == 1))))
}

/// Every sign pattern whose open cell has interior clearance above the face threshold.
pub fn brute_force_regions(arr: &Arrangement) -> BTreeSet<Region> {
    all_regions(arr.len())
        .filter(|r| arr.cell_slack(r, &[]).unwrap().clears(TAU_FACE))
        .collect()
}

/// Regions whose cell meets `{net < 0}`, joined through faces where the
/// local map is negative, then the connected part containing `seed`.
pub fn brute_force_component(net: &ShallowNN, seed: &Region) -> BTreeSet<Region> {
    let arr = Arrangement::new(net.activation_hyperplanes(), net.input_dim()).unwrap();
    let members: BTreeSet<Region> = all_regions(arr.len())
        .filter(|r| {
            let t = net.local_affine(r);
            arr.cell_slack(r, &[t]).unwrap().clears(TAU_FACE)
        })
        .collect();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    if members.contains(seed) {
        seen.insert(seed.clone());
        queue.push_back(seed.clone());
    }
    while let Some(r) = queue.pop_front() {
        let t = net.local_affine(&r);
        for i in 0..arr.len() {
            let next = r.flipped(i);
            if seen.contains(&next) || !members.contains(&next) {
                continue;
            }
            if arr.face_slack(&r, i, std::slice::from_ref(&t)).unwrap().clears(TAU_FACE) {
                seen.insert(next.clone());
                queue.push_back(next);
            }
        }
    }
    seen
}
