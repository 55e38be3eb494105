mod common;

use barrier_cert::certify::{certify, check_positivity_outside, component_bounding_box, Verdict};
use barrier_cert::hyperrect::HyperRectangle;
use barrier_cert::io::{Lipschitz, ProblemInstance};
use barrier_cert::nn::{Activation, AffineMap, Layer, NeuralNetwork, ShallowNN};
use barrier_cert::sublevel::enumerate_sublevel_component;
use common::*;
use rand::Rng;

/// Σ_i relu(x_i − a) + relu(−x_i − a) − c: negative on a rounded diamond.
fn diamond(n: usize, a: f64, c: f64) -> ShallowNN {
    let mut w = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut row = vec![0.0; n];
            row[i] = s;
            w.push(row);
        }
    }
    ShallowNN::new(
        AffineMap::new(w, vec![-a; 2 * n]).unwrap(),
        AffineMap::new(vec![vec![1.0; 2 * n]], vec![-c]).unwrap(),
    )
    .unwrap()
}

fn scaled_identity(n: usize, k: f64) -> NeuralNetwork {
    let rows = (0..n).map(|i| (0..n).map(|j| if i == j { k } else { 0.0 }).collect()).collect();
    NeuralNetwork::new(vec![Layer::new(AffineMap::new(rows, vec![0.0; n]).unwrap(), Activation::Linear)]).unwrap()
}

fn contraction_problem(half_width: f64) -> ProblemInstance {
    ProblemInstance {
        dynamics: scaled_identity(2, 0.5),
        barrier: diamond(2, 0.1, 0.5),
        safe_set: HyperRectangle::ball(&[0.0, 0.0], half_width).unwrap(),
        eps: 0.05,
        x0: vec![0.01, 0.02],
        lipschitz: Lipschitz::Auto,
    }
}

#[test]
fn contraction_with_diamond_barrier_is_certified() {
    let p = contraction_problem(2.0);
    let c = certify(&p).unwrap();
    assert_eq!(c.verdict, Verdict::Certified);
    assert!(c.gamma > 0.0 && c.gamma_valid);
    assert_eq!(c.lipschitz, Some(0.5));
    let comp = c.component.as_ref().unwrap();
    // Four hyperplanes in general position: nine cells, all meeting the diamond.
    assert_eq!(comp.len(), 9);

    // Decrease condition on samples from every partition box.
    let mut r = rng(51);
    for b in &c.x_partial {
        for _ in 0..1000 {
            let x: Vec<f64> = (0..2).map(|i| r.gen_range(b.bx.lo()[i]..=b.bx.hi()[i])).collect();
            let y = p.dynamics.evaluate(&x).unwrap();
            assert!(p.barrier.eval(&y) - c.gamma * p.barrier.eval(&x) <= 1e-6);
        }
    }

    // Bounding box encloses rejection-sampled points of the component.
    let bbox = c.component_bbox.as_ref().unwrap();
    let mut hits = 0;
    for _ in 0..10_000 {
        let x = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        if p.barrier.eval(&x) <= 0.0 {
            hits += 1;
            assert!(bbox.contains_tol(&x, 1e-9));
        }
    }
    assert!(hits > 0);
    // The barrier is even, so the box is symmetric about the origin.
    for i in 0..2 {
        assert!((bbox.lo()[i] + bbox.hi()[i]).abs() < 1e-6);
    }
    assert!((bbox.hi()[0] - 0.6).abs() < 1e-6);
}

#[test]
fn trajectories_stay_in_the_component() {
    let p = contraction_problem(2.0);
    let c = certify(&p).unwrap();
    let comp = c.component.unwrap();
    let mut r = rng(52);
    let mut started = 0;
    while started < 200 {
        let mut x = vec![r.gen_range(-0.6..0.6), r.gen_range(-0.6..0.6)];
        if p.barrier.eval(&x) > 0.0 {
            continue;
        }
        started += 1;
        for _ in 0..200 {
            x = p.dynamics.evaluate(&x).unwrap();
            assert!(p.barrier.eval(&x) <= 1e-7);
            assert!(comp.covers_point(&x, 1e-9));
        }
    }
}

#[test]
fn leaking_barrier_fails_containment() {
    // Negative set is a slab |x_1| < 0.4 unbounded in x_2: leaves any box.
    let barrier = ShallowNN::new(
        AffineMap::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![-0.1, -0.1]).unwrap(),
        AffineMap::new(vec![vec![1.0, 1.0]], vec![-0.3]).unwrap(),
    )
    .unwrap();
    let p = ProblemInstance {
        dynamics: scaled_identity(2, 0.5),
        barrier,
        safe_set: HyperRectangle::ball(&[0.0, 0.0], 1.0).unwrap(),
        eps: 0.1,
        x0: vec![0.01, 0.02],
        lipschitz: Lipschitz::Auto,
    };
    let c = certify(&p).unwrap();
    assert_eq!(c.verdict, Verdict::FailedContainment);
    let rep = c.containment.unwrap();
    assert!(!rep.contained());
}

#[test]
fn second_well_inside_the_ball_fails_positivity() {
    // A second, disjoint negative well far from the origin in 1D.
    let knots = [-0.3, 0.0, 0.3, 1.2, 1.5, 1.8];
    let slopes = [0.0, -1.0, 1.0, 0.0, -1.0, 1.0, 0.0];
    let w1 = knots.iter().map(|_| vec![1.0]).collect();
    let b1 = knots.iter().map(|k| -k).collect();
    let w2 = (0..knots.len()).map(|k| slopes[k + 1] - slopes[k]).collect();
    // Value 0.1 outside the wells, −0.2 at their centres 0 and 1.5.
    let bf = ShallowNN::new(AffineMap::new(w1, b1).unwrap(), AffineMap::new(vec![w2], vec![0.1]).unwrap()).unwrap();
    let f = |x: f64| bf.eval(&[x]);
    assert!(f(0.0) < 0.0 && f(0.5) > 0.0 && f(1.5) < 0.0);
    let comp = enumerate_sublevel_component(&bf, &[0.05]).unwrap();
    let (bbox, _) = component_bounding_box(&comp).unwrap();
    assert!(bbox.hi()[0] < 1.0);
    let ball = HyperRectangle::ball(&[0.05], 3.0).unwrap();
    let (ok, _, _) = check_positivity_outside(&bf, &comp, &ball, &[0.05]).unwrap();
    assert!(!ok);
    let small = HyperRectangle::ball(&[0.05], 0.8).unwrap();
    let (ok, _, _) = check_positivity_outside(&bf, &comp, &small, &[0.05]).unwrap();
    assert!(ok);
}

#[test]
fn enlarging_the_safe_set_keeps_the_verdict() {
    for hw in [1.5, 2.0, 3.0] {
        let c = certify(&contraction_problem(hw)).unwrap();
        assert_eq!(c.verdict, Verdict::Certified, "half width {hw}");
    }
}
