use crate::error::{Error, Result};
use crate::nn::Functional;

/// Axis-aligned box `{x : lo ≤ x ≤ hi}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRectangle {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl HyperRectangle {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.is_empty() {
            return Err(Error::Dimension("box has dimension zero".into()));
        }
        for i in 0..lo.len() {
            if !(lo[i].is_finite() && hi[i].is_finite()) || lo[i] > hi[i] {
                return Err(Error::InvalidInput(format!(
                    "box axis {i}: [{}, {}] is not a finite interval",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Max-norm ball of radius `r` around `center`.
    pub fn ball(center: &[f64], r: f64) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - r).collect(),
            center.iter().map(|c| c + r).collect(),
        )
    }

    pub fn point(x: &[f64]) -> Result<Self> {
        Self::new(x.to_vec(), x.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn max_side(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        self.widths().into_iter().product()
    }

    /// `[lo_i, hi_i]` per axis.
    pub fn extents(&self) -> Vec<[f64; 2]> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| [l, h]).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_tol(x, 0.0)
    }

    pub fn contains_tol(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| x[i] >= self.lo[i] - tol && x[i] <= self.hi[i] + tol)
    }

    pub fn contains_box(&self, other: &HyperRectangle, tol: f64) -> bool {
        (0..self.dim()).all(|i| other.lo[i] >= self.lo[i] - tol && other.hi[i] <= self.hi[i] + tol)
    }

    /// Volume of the intersection with `other`.
    pub fn overlap_volume(&self, other: &HyperRectangle) -> f64 {
        (0..self.dim())
            .map(|i| (self.hi[i].min(other.hi[i]) - self.lo[i].max(other.lo[i])).max(0.0))
            .product()
    }

    /// The 2ⁿ boxes obtained by cutting every axis at its midpoint. Child `k`
    /// takes the upper half of axis `i` when bit `i` of `k` is set.
    pub fn split_midpoint(&self) -> Vec<HyperRectangle> {
        let n = self.dim();
        let mid = self.center();
        (0..1usize << n)
            .map(|k| {
                let mut lo = self.lo.clone();
                let mut hi = self.hi.clone();
                for i in 0..n {
                    if k >> i & 1 == 1 {
                        lo[i] = mid[i];
                    } else {
                        hi[i] = mid[i];
                    }
                }
                HyperRectangle { lo, hi }
            })
            .collect()
    }

    pub fn corners(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let n = self.dim();
        (0..1usize << n).map(move |k| {
            (0..n)
                .map(|i| if k >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                .collect()
        })
    }

    /// `sup_{x ∈ box} ‖x − c‖_∞`.
    pub fn max_norm_distance(&self, c: &[f64]) -> f64 {
        (0..self.dim())
            .map(|i| (self.hi[i] - c[i]).abs().max((self.lo[i] - c[i]).abs()))
            .fold(0.0, f64::max)
    }

    /// Facet functionals `g(x) ≤ 0` whose intersection is the box: for each
    /// axis `i`, `lo_i − x_i` then `x_i − hi_i`.
    pub fn facet_functionals(&self) -> Vec<Functional> {
        let n = self.dim();
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = -1.0;
            out.push(Functional::new(e.clone(), self.lo[i]));
            e[i] = 1.0;
            out.push(Functional::new(e, -self.hi[i]));
        }
        out
    }

    /// Lexicographic order on `lo` then `hi`.
    pub fn lex_cmp(&self, other: &HyperRectangle) -> std::cmp::Ordering {
        self.lo
            .iter()
            .chain(&self.hi)
            .zip(other.lo.iter().chain(&other.hi))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}
