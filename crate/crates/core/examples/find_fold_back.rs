//! Random search for a small planar barrier whose sub-level component
//! cannot be enumerated by forward passes alone. Prints the network JSON
//! and the seed point on success.
//!
//!     cargo run -p barrier-cert-core --example find_fold_back -- [max_neurons] [seed]

use barrier_cert::io::{network_to_value, to_json_string};
use barrier_cert::nn::{AffineMap, ShallowNN};
use barrier_cert::sublevel::{enumerate_sublevel_component, enumerate_sublevel_component_with, BackwardMode, SubLevelOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn round(v: f64) -> f64 {
    (v * 4.0).round() / 4.0
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let max_n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fwd_only = SubLevelOptions { backward: BackwardMode::Disabled, ..Default::default() };
    for big_n in 3..=max_n {
        for _ in 0..20000 {
            let mut g = |s: f64| round(rng.gen_range(-s..s));
            let w1: Vec<Vec<f64>> = (0..big_n).map(|_| vec![g(2.0), g(2.0)]).collect();
            let b1: Vec<f64> = (0..big_n).map(|_| g(2.0)).collect();
            let w2: Vec<f64> = (0..big_n).map(|_| g(2.0)).collect();
            let b2 = g(2.0);
            let x0 = vec![0.0, 0.0];
            if b1.iter().any(|b| b.abs() < 0.2) {
                continue;
            }
            let net = ShallowNN::new(
                AffineMap::new(w1, b1).unwrap(),
                AffineMap::new(vec![w2], vec![b2]).unwrap(),
            )
            .unwrap();
            if net.eval(&x0) > -0.1 {
                continue;
            }
            let (Ok(full), Ok(fwd)) = (
                enumerate_sublevel_component(&net, &x0),
                enumerate_sublevel_component_with(&net, &x0, &fwd_only),
            ) else {
                continue;
            };
            if fwd.len() < full.len() {
                eprintln!("N={big_n}: full {} regions, forward-only {}", full.len(), fwd.len());
                print!("{}", to_json_string(&network_to_value(net.network())));
                return;
            }
        }
    }
    eprintln!("no instance found");
    std::process::exit(1);
}
