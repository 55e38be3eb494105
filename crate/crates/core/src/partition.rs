//! Recursive box partitioning that certifies the one-step decrease
//! condition `B(f(x)) − γ B(x) ≤ 0` on a union of boxes.

use rayon::prelude::*;

use crate::crown::{get_fn_bd, get_fn_bd_within, BoundMatrix};
use crate::error::{Error, Result};
use crate::hyperrect::HyperRectangle;
use crate::nn::{NeuralNetwork, ShallowNN};

/// A box that passed the gate `u_f ≤ 0 ∧ l_BF ≤ 0`, with the bounds that admitted it.
#[derive(Debug, Clone)]
pub struct CertifiedBox {
    pub bx: HyperRectangle,
    /// Lower bound of the barrier over the box.
    pub l_bf: f64,
    /// Upper bound of the barrier composed with the dynamics over the box.
    pub u_f: f64,
}

impl CertifiedBox {
    /// Largest γ admissible on this box: `u_f / l_BF`, or 0 when `l_BF = 0`.
    pub fn gamma(&self) -> f64 {
        if self.l_bf < 0.0 {
            self.u_f / self.l_bf
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct PartitionResult {
    pub boxes: Vec<HyperRectangle>,
    pub gamma: f64,
    /// `γ_B` per box, aligned with `boxes`.
    pub per_box_ratios: Vec<f64>,
    pub gamma_valid: bool,
    pub certified: Vec<CertifiedBox>,
}

/// Rows `[lo_i, hi_i]` bounding `x`.
pub fn get_extents(x: &HyperRectangle) -> Vec<[f64; 2]> {
    x.extents()
}

struct Ctx<'a> {
    barrier: &'a NeuralNetwork,
    composed: NeuralNetwork,
    eps: f64,
}

impl Ctx<'_> {
    /// `parent` holds the barrier and composed bounds of the enclosing box.
    fn recurse(&self, test: HyperRectangle, parent: Option<(&BoundMatrix, &BoundMatrix)>) -> Result<Vec<CertifiedBox>> {
        let bf = get_fn_bd_within(self.barrier, &test, parent.map(|p| p.0))?;
        let f = get_fn_bd_within(&self.composed, &test, parent.map(|p| p.1))?;
        let l_bf = bf.lower(0);
        let u_f = f.upper(0);
        if !(l_bf.is_finite() && u_f.is_finite()) {
            return Err(Error::NumericalFailure {
                message: "non-finite network bound".into(),
                hyperplane: None,
            });
        }
        if l_bf <= 0.0 && u_f <= 0.0 {
            return Ok(vec![CertifiedBox { bx: test, l_bf, u_f }]);
        }
        let widest = get_extents(&test)
            .iter()
            .map(|[lo, hi]| (hi - lo).abs())
            .fold(0.0, f64::max);
        if l_bf <= 0.0 && u_f > 0.0 && widest > self.eps {
            let parts: Result<Vec<Vec<CertifiedBox>>> = test
                .split_midpoint()
                .into_par_iter()
                .map(|child| self.recurse(child, Some((&bf, &f))))
                .collect();
            Ok(parts?.into_iter().flatten().collect())
        } else {
            Ok(Vec::new())
        }
    }
}

fn check_inputs(test: &HyperRectangle, barrier: &ShallowNN, dynamics: &NeuralNetwork, eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let n = test.dim();
    if dynamics.input_dim() != n || dynamics.output_dim() != n || barrier.input_dim() != n {
        return Err(Error::Dimension(format!(
            "box dimension {n}, dynamics {}→{}, barrier input {}",
            dynamics.input_dim(),
            dynamics.output_dim(),
            barrier.input_dim()
        )));
    }
    Ok(())
}

/// Boxes inside `test` on which the decrease gate holds, sorted by `lo`.
pub fn get_neg_d_set_detailed(
    test: &HyperRectangle,
    barrier: &ShallowNN,
    dynamics: &NeuralNetwork,
    eps: f64,
) -> Result<Vec<CertifiedBox>> {
    check_inputs(test, barrier, dynamics, eps)?;
    let ctx = Ctx {
        barrier: barrier.network(),
        composed: NeuralNetwork::compose(barrier.network(), dynamics)?,
        eps,
    };
    let mut out = ctx.recurse(test.clone(), None)?;
    out.sort_by(|a, b| a.bx.lex_cmp(&b.bx));
    Ok(out)
}

pub fn get_neg_d_set(
    test: &HyperRectangle,
    barrier: &ShallowNN,
    dynamics: &NeuralNetwork,
    eps: f64,
) -> Result<Vec<HyperRectangle>> {
    Ok(get_neg_d_set_detailed(test, barrier, dynamics, eps)?
        .into_iter()
        .map(|c| c.bx)
        .collect())
}

/// Common γ for a set of gated boxes; `valid` reports whether it is strictly positive.
pub fn compute_gamma(boxes: &[CertifiedBox]) -> Result<(f64, bool)> {
    if boxes.is_empty() {
        return Err(Error::Empty("no boxes passed the decrease gate".into()));
    }
    let gamma = boxes.iter().map(CertifiedBox::gamma).fold(f64::INFINITY, f64::min);
    Ok((gamma, gamma > 0.0))
}

/// Recompute per-box bounds for externally supplied boxes and derive γ.
pub fn compute_gamma_for(
    boxes: &[HyperRectangle],
    barrier: &ShallowNN,
    dynamics: &NeuralNetwork,
) -> Result<(f64, bool)> {
    let composed = NeuralNetwork::compose(barrier.network(), dynamics)?;
    let gated: Result<Vec<CertifiedBox>> = boxes
        .iter()
        .map(|b| {
            let l_bf = get_fn_bd(barrier.network(), b)?.lower(0);
            let u_f = get_fn_bd(&composed, b)?.upper(0);
            if l_bf > 0.0 || u_f > 0.0 {
                return Err(Error::InvalidInput("box fails the decrease gate".into()));
            }
            Ok(CertifiedBox { bx: b.clone(), l_bf, u_f })
        })
        .collect();
    compute_gamma(&gated?)
}

/// Run the partition and assemble a [`PartitionResult`].
pub fn partition(
    test: &HyperRectangle,
    barrier: &ShallowNN,
    dynamics: &NeuralNetwork,
    eps: f64,
) -> Result<PartitionResult> {
    let certified = get_neg_d_set_detailed(test, barrier, dynamics, eps)?;
    let (gamma, gamma_valid) = if certified.is_empty() {
        (0.0, false)
    } else {
        compute_gamma(&certified)?
    };
    Ok(PartitionResult {
        boxes: certified.iter().map(|c| c.bx.clone()).collect(),
        per_box_ratios: certified.iter().map(CertifiedBox::gamma).collect(),
        gamma,
        gamma_valid,
        certified,
    })
}
