//! CROWN-style backward bound propagation for ReLU networks over boxes.
//!
//! Every ReLU layer's pre-activation bounds are obtained by a full backward
//! pass from that layer to the input, so deeper layers see tight
//! intermediate intervals. Unstable neurons (`l < 0 < u`) are relaxed by the
//! chord `u(z − l)/(u − l)` from above and by `α z` from below, with
//! `α = 1` when `u ≥ |l|` and `α = 0` otherwise.

use crate::error::{Error, Result};
use crate::hyperrect::HyperRectangle;
use crate::lp::functional_box_bounds;
use crate::nn::{Activation, Functional, NeuralNetwork};

/// Affine envelopes `A_lo x + b_lo ≤ net(x) ≤ A_up x + b_up` valid on `domain`.
#[derive(Debug, Clone)]
pub struct LinearBounds {
    pub a_up: Vec<Vec<f64>>,
    pub b_up: Vec<f64>,
    pub a_lo: Vec<Vec<f64>>,
    pub b_lo: Vec<f64>,
    pub domain: HyperRectangle,
}

impl LinearBounds {
    pub fn upper(&self, i: usize) -> Functional {
        Functional::new(self.a_up[i].clone(), self.b_up[i])
    }

    pub fn lower(&self, i: usize) -> Functional {
        Functional::new(self.a_lo[i].clone(), self.b_lo[i])
    }

    pub fn output_dim(&self) -> usize {
        self.b_up.len()
    }

    /// Concretize over the domain box.
    pub fn concretize(&self) -> BoundMatrix {
        let rows = (0..self.output_dim())
            .map(|i| {
                let (lo, _) = functional_box_bounds(&self.lower(i), &self.domain);
                let (_, hi) = functional_box_bounds(&self.upper(i), &self.domain);
                [lo, hi]
            })
            .collect();
        BoundMatrix { rows }
    }
}

/// `m × 2` matrix of `[lower, upper]` output bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundMatrix {
    pub rows: Vec<[f64; 2]>,
}

impl BoundMatrix {
    pub fn lower(&self, i: usize) -> f64 {
        self.rows[i][0]
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.rows[i][1]
    }

    /// Row-wise intersection; sound when both matrices enclose the same set.
    pub fn intersect(&self, other: &BoundMatrix) -> BoundMatrix {
        BoundMatrix {
            rows: self
                .rows
                .iter()
                .zip(&other.rows)
                .map(|(a, b)| [a[0].max(b[0]), a[1].min(b[1])])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Relaxation {
    up_slope: f64,
    up_offset: f64,
    lo_slope: f64,
}

impl Relaxation {
    fn new(l: f64, u: f64) -> Self {
        if l >= 0.0 {
            Self {
                up_slope: 1.0,
                up_offset: 0.0,
                lo_slope: 1.0,
            }
        } else if u <= 0.0 {
            Self {
                up_slope: 0.0,
                up_offset: 0.0,
                lo_slope: 0.0,
            }
        } else {
            let s = u / (u - l);
            Self {
                up_slope: s,
                up_offset: -s * l,
                lo_slope: if u >= -l { 1.0 } else { 0.0 },
            }
        }
    }
}

/// Coefficients of an affine expression in some intermediate quantity.
struct Expr {
    coeffs: Vec<Vec<f64>>,
    constant: Vec<f64>,
}

impl Expr {
    fn identity(m: usize) -> Self {
        let mut coeffs = vec![vec![0.0; m]; m];
        for (i, row) in coeffs.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self {
            coeffs,
            constant: vec![0.0; m],
        }
    }

    /// Push through `h = relu(z)` using the given relaxations; `upper` picks
    /// which side of the bound this expression represents.
    fn through_relu(&mut self, relax: &[Relaxation], upper: bool) {
        for (row, c) in self.coeffs.iter_mut().zip(self.constant.iter_mut()) {
            for (lam, r) in row.iter_mut().zip(relax) {
                let use_upper_line = (*lam >= 0.0) == upper;
                if use_upper_line {
                    *c += *lam * r.up_offset;
                    *lam *= r.up_slope;
                } else {
                    *lam *= r.lo_slope;
                }
            }
        }
    }

    /// Push through `z = W h + b`.
    fn through_affine(&mut self, map: &crate::nn::AffineMap) {
        let d_in = map.d_in();
        for (row, c) in self.coeffs.iter_mut().zip(self.constant.iter_mut()) {
            let mut next = vec![0.0; d_in];
            for (k, &lam) in row.iter().enumerate() {
                if lam == 0.0 {
                    continue;
                }
                *c += lam * map.bias()[k];
                for (nj, &w) in next.iter_mut().zip(map.row(k)) {
                    *nj += lam * w;
                }
            }
            *row = next;
        }
    }
}

struct Propagator<'a> {
    net: &'a NeuralNetwork,
    domain: &'a HyperRectangle,
    /// Relaxations of the ReLU following layer `k`, once known.
    relax: Vec<Option<Vec<Relaxation>>>,
}

impl<'a> Propagator<'a> {
    /// Bounds on the output of layer `k` (post-activation when `include_act`).
    fn backward(&self, k: usize, include_act: bool) -> LinearBounds {
        let layers = self.net.layers();
        let m = layers[k].map.d_out();
        let mut up = Expr::identity(m);
        let mut lo = Expr::identity(m);
        if include_act && layers[k].kind == Activation::Relu {
            let r = self.relax[k].as_ref().expect("relaxation computed");
            up.through_relu(r, true);
            lo.through_relu(r, false);
        }
        for j in (0..=k).rev() {
            up.through_affine(&layers[j].map);
            lo.through_affine(&layers[j].map);
            if j > 0 && layers[j - 1].kind == Activation::Relu {
                let r = self.relax[j - 1].as_ref().expect("relaxation computed");
                up.through_relu(r, true);
                lo.through_relu(r, false);
            }
        }
        LinearBounds {
            a_up: up.coeffs,
            b_up: up.constant,
            a_lo: lo.coeffs,
            b_lo: lo.constant,
            domain: self.domain.clone(),
        }
    }
}

/// Sound affine relaxation of `net` over `bx`.
pub fn linear_relax(net: &NeuralNetwork, bx: &HyperRectangle) -> Result<LinearBounds> {
    if net.input_dim() != bx.dim() {
        return Err(Error::Dimension(format!(
            "network expects {} inputs, box has dimension {}",
            net.input_dim(),
            bx.dim()
        )));
    }
    let layers = net.layers();
    let mut prop = Propagator {
        net,
        domain: bx,
        relax: vec![None; layers.len()],
    };
    for k in 0..layers.len() {
        if layers[k].kind == Activation::Relu {
            let pre = prop.backward(k, false).concretize();
            prop.relax[k] = Some(
                pre.rows
                    .iter()
                    .map(|&[l, u]| Relaxation::new(l, u))
                    .collect(),
            );
        }
    }
    Ok(prop.backward(layers.len() - 1, true))
}

/// Interval enclosure of `net` over `bx`, one `[lower, upper]` row per output.
pub fn get_fn_bd(net: &NeuralNetwork, bx: &HyperRectangle) -> Result<BoundMatrix> {
    Ok(linear_relax(net, bx)?.concretize())
}

/// Bounds over `bx` that are never looser than `parent`, the bounds of a
/// box containing `bx`. With adaptive lower slopes a sub-box can otherwise
/// receive a wider interval than its parent.
pub fn get_fn_bd_within(net: &NeuralNetwork, bx: &HyperRectangle, parent: Option<&BoundMatrix>) -> Result<BoundMatrix> {
    let own = get_fn_bd(net, bx)?;
    Ok(match parent {
        Some(p) => own.intersect(p),
        None => own,
    })
}
