//! Linear programming with a fixed contract: free variables, affine
//! constraints against zero, maximization. Backed by `microlp`.

use std::sync::atomic::{AtomicU64, Ordering};

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

use crate::error::{Error, Result};
use crate::hyperrect::HyperRectangle;
use crate::nn::{AffineMap, Functional};

/// Feasibility tolerance on reported optima.
pub const TAU_FEAS: f64 = 1e-8;
/// Accuracy of reported optimal costs.
pub const TAU_OPT: f64 = 1e-7;
/// A slack LP certifies a full-dimensional face or cell iff its cost exceeds this.
pub const TAU_FACE: f64 = 1e-7;
/// Upper bound placed on the slack variable so slack LPs over unbounded
/// cells stay bounded.
pub const SLACK_CAP: f64 = 1.0;

static LP_COUNT: AtomicU64 = AtomicU64::new(0);

/// Number of LPs solved by this process so far.
pub fn solved_count() -> u64 {
    LP_COUNT.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `f(x) ≤ 0`
    Le,
    /// `f(x) = 0`
    Eq,
    /// `f(x) ≥ 0`
    Ge,
}

/// `max objective·x` subject to `f_k(x) ⋈ 0`, with `x` free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<(Functional, Relation)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub x_opt: Option<Vec<f64>>,
    pub cost: Option<f64>,
}

impl LpResult {
    fn without_point(status: LpStatus) -> Self {
        Self {
            status,
            x_opt: None,
            cost: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, f: Functional, rel: Relation) -> &mut Self {
        self.constraints.push((f, rel));
        self
    }

    fn validate(&self) -> Result<()> {
        if let Some((f, _)) = self.constraints.iter().find(|(f, _)| f.dim() != self.dim()) {
            return Err(Error::Dimension(format!(
                "constraint has {} coefficients, objective has {}",
                f.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Solve the program. Numerical trouble is reported through
    /// [`LpStatus::NumericalFailure`], never as infeasibility.
    pub fn solve(&self) -> Result<LpResult> {
        self.validate()?;
        self.solve_bounded(&vec![(f64::NEG_INFINITY, f64::INFINITY); self.dim()])
    }

    pub(crate) fn solve_bounded(&self, bounds: &[(f64, f64)]) -> Result<LpResult> {
        LP_COUNT.fetch_add(1, Ordering::Relaxed);
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = self
            .objective
            .iter()
            .zip(bounds)
            .map(|(&c, &b)| problem.add_var(c, b))
            .collect();
        for (f, rel) in &self.constraints {
            let terms: Vec<_> = vars
                .iter()
                .zip(&f.coeffs)
                .filter(|(_, &a)| a != 0.0)
                .map(|(&v, &a)| (v, a))
                .collect();
            let op = match rel {
                Relation::Le => ComparisonOp::Le,
                Relation::Eq => ComparisonOp::Eq,
                Relation::Ge => ComparisonOp::Ge,
            };
            if terms.is_empty() {
                // Constant constraint: decide it here, the backend dislikes empty rows.
                let ok = match rel {
                    Relation::Le => f.constant <= TAU_FEAS,
                    Relation::Eq => f.constant.abs() <= TAU_FEAS,
                    Relation::Ge => f.constant >= -TAU_FEAS,
                };
                if !ok {
                    return Ok(LpResult::without_point(LpStatus::Infeasible));
                }
                continue;
            }
            problem.add_constraint(&terms[..], op, -f.constant);
        }
        let outcome = match problem.solve() {
            Ok(SolveOutcome::Solution(sol)) => sol,
            Ok(SolveOutcome::Interrupted(_)) => {
                return Ok(LpResult::without_point(LpStatus::NumericalFailure))
            }
            Err(microlp::Error::Infeasible) => {
                return Ok(LpResult::without_point(LpStatus::Infeasible))
            }
            Err(microlp::Error::Unbounded) => {
                return Ok(LpResult::without_point(LpStatus::Unbounded))
            }
            Err(e) => {
                log::debug!("lp backend failure: {e}");
                return Ok(LpResult::without_point(LpStatus::NumericalFailure));
            }
        };
        let x: Vec<f64> = vars.iter().map(|&v| outcome[v]).collect();
        if !self.satisfied_by(&x) || x.iter().any(|v| !v.is_finite()) {
            return Ok(LpResult::without_point(LpStatus::NumericalFailure));
        }
        let cost = crate::nn::dot(&self.objective, &x);
        Ok(LpResult {
            status: LpStatus::Optimal,
            x_opt: Some(x),
            cost: Some(cost),
        })
    }

    /// Constraint check with tolerance scaled to the row's magnitude at `x`.
    pub fn satisfied_by(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|(f, rel)| {
            let v = f.eval(x);
            let scale = 1.0
                + f.constant.abs()
                + f.coeffs.iter().zip(x).map(|(a, b)| (a * b).abs()).sum::<f64>();
            let tol = TAU_FEAS * scale;
            match rel {
                Relation::Le => v <= tol,
                Relation::Eq => v.abs() <= tol,
                Relation::Ge => v >= -tol,
            }
        })
    }
}

/// Constraint roles in a slack LP over `(x, x_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlackRole {
    /// `g(x) + x_s ≤ 0`: strict inequality encoded through the slack.
    Strict,
    /// `g(x) ≤ 0`
    Closed,
    /// `g(x) ≥ 0`
    NonNegative,
    /// `g(x) = 0`
    Zero,
}

/// Builder for the interiority LPs `max x_s` used by face and cell tests.
/// Every constraint is rescaled to a unit gradient, so the optimal slack is a
/// Euclidean clearance.
#[derive(Debug, Clone)]
pub struct SlackLp {
    dim: usize,
    rows: Vec<(Functional, SlackRole)>,
}

#[derive(Debug, Clone)]
pub struct SlackOutcome {
    /// Optimal slack, or `None` when infeasible.
    pub slack: Option<f64>,
    pub witness: Option<Vec<f64>>,
}

impl SlackOutcome {
    pub fn clears(&self, tau: f64) -> bool {
        self.slack.is_some_and(|s| s > tau)
    }
}

impl SlackLp {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
        }
    }

    pub fn add(&mut self, g: &Functional, role: SlackRole) -> &mut Self {
        debug_assert_eq!(g.dim(), self.dim);
        let norm = g.grad_norm();
        let g = if norm > 0.0 { g.scaled(1.0 / norm) } else { g.clone() };
        self.rows.push((g, role));
        self
    }

    pub fn solve(&self) -> Result<SlackOutcome> {
        let n = self.dim;
        let mut objective = vec![0.0; n + 1];
        objective[n] = 1.0;
        let mut lp = LinearProgram::new(objective);
        for (g, role) in &self.rows {
            let mut coeffs = g.coeffs.clone();
            coeffs.push(if *role == SlackRole::Strict { 1.0 } else { 0.0 });
            let f = Functional::new(coeffs, g.constant);
            let rel = match role {
                SlackRole::Strict | SlackRole::Closed => Relation::Le,
                SlackRole::NonNegative => Relation::Ge,
                SlackRole::Zero => Relation::Eq,
            };
            lp.push(f, rel);
        }
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
        bounds.push((0.0, SLACK_CAP));
        let res = lp.solve_bounded(&bounds)?;
        match res.status {
            LpStatus::Optimal => {
                let mut x = res.x_opt.unwrap();
                let s = x.pop().unwrap();
                Ok(SlackOutcome {
                    slack: Some(s),
                    witness: Some(x),
                })
            }
            LpStatus::Infeasible => Ok(SlackOutcome {
                slack: None,
                witness: None,
            }),
            LpStatus::Unbounded => Err(Error::NumericalFailure {
                message: "slack LP reported unbounded despite capped slack".into(),
                hyperplane: None,
            }),
            LpStatus::NumericalFailure => Err(Error::NumericalFailure {
                message: "slack LP".into(),
                hyperplane: None,
            }),
        }
    }
}

/// Exact interval image of an affine map over a box.
pub fn box_bounds(f: &AffineMap, bx: &HyperRectangle) -> Result<(Vec<f64>, Vec<f64>)> {
    if f.d_in() != bx.dim() {
        return Err(Error::Dimension(format!(
            "map expects {} inputs, box has dimension {}",
            f.d_in(),
            bx.dim()
        )));
    }
    let mut lo = f.bias().to_vec();
    let mut hi = f.bias().to_vec();
    for i in 0..f.d_out() {
        for (j, &w) in f.row(i).iter().enumerate() {
            let a = w * bx.lo()[j];
            let b = w * bx.hi()[j];
            lo[i] += a.min(b);
            hi[i] += a.max(b);
        }
    }
    Ok((lo, hi))
}

/// Minimum and maximum of a single functional over a box.
pub fn functional_box_bounds(f: &Functional, bx: &HyperRectangle) -> (f64, f64) {
    let mut lo = f.constant;
    let mut hi = f.constant;
    for (j, &w) in f.coeffs.iter().enumerate() {
        let a = w * bx.lo()[j];
        let b = w * bx.hi()[j];
        lo += a.min(b);
        hi += a.max(b);
    }
    (lo, hi)
}
