//! The end-to-end check: a decrease region from box partitioning, the
//! sub-level component through the initial state, containment of that
//! component in the decrease region, and positivity of the barrier on the
//! one-step reach ball outside the component.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::arrangement::{enumerate_regions, Arrangement, Region, TAU_SIGN};
use crate::error::{Error, Result};
use crate::hyperrect::HyperRectangle;
use crate::io::{Lipschitz, ProblemInstance};
use crate::lp::{LinearProgram, LpStatus, Relation, SlackLp, SlackRole, TAU_FACE};
use crate::nn::{Functional, NeuralNetwork, ShallowNN};
use crate::partition::{partition, CertifiedBox, PartitionResult};
use crate::sublevel::{enumerate_sublevel_component_with, BoundaryFace, SubLevelComponent, SubLevelOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Certified,
    FailedSubproblem1,
    FailedContainment,
    FailedPositivity,
    GammaNotStrict,
}

impl Verdict {
    pub fn is_certified(self) -> bool {
        self == Verdict::Certified
    }
}

/// One replayable check. Regions are given as sorted lists of flipped
/// hyperplane indices in the barrier's arrangement.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum AuditRecord {
    /// Decrease gate on one partition box.
    DecreaseBox { lo: Vec<f64>, hi: Vec<f64>, l_bf: f64, u_f: f64, gamma_b: f64 },
    /// The component reaches a face of the hull of the decrease region.
    HullFaceHit { region: Vec<usize>, face: usize },
    /// The component crosses an exposed piece of the decrease region's boundary.
    ExposedFaceHit { region: Vec<usize>, piece_lo: Vec<f64>, piece_hi: Vec<f64>, slack: f64 },
    /// Per-region bounding box of the closed cell intersected with the sub-level set.
    RegionBox { region: Vec<usize>, lo: Vec<f64>, hi: Vec<f64> },
    /// Minimum of the barrier over a non-component cell inside the reach ball.
    Positivity { region: Vec<usize>, min_value: f64, passed: bool },
}

/// Outcome of the containment check.
#[derive(Debug, Clone, Default)]
pub struct ContainmentReport {
    pub hull_hits: Vec<(Region, usize)>,
    pub exposed_hits: Vec<(Region, HyperRectangle, f64)>,
    pub exposed_pieces: usize,
    pub seed_inside: bool,
}

impl ContainmentReport {
    pub fn contained(&self) -> bool {
        self.seed_inside && self.hull_hits.is_empty() && self.exposed_hits.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub gamma: f64,
    pub gamma_valid: bool,
    pub x_partial: Vec<CertifiedBox>,
    /// Seed actually used (it may be nudged off activation hyperplanes).
    pub x0: Vec<f64>,
    pub component: Option<SubLevelComponent>,
    pub containment: Option<ContainmentReport>,
    pub component_bbox: Option<HyperRectangle>,
    pub lipschitz: Option<f64>,
    pub c_ball_radius: Option<f64>,
    pub positivity_regions: Option<usize>,
    pub verdict: Verdict,
    pub audit: Vec<AuditRecord>,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(&'static str, f64)>,
}

pub(crate) fn flips_of(r: &Region) -> Vec<usize> {
    r.flipped_indices()
}

/// Smallest box containing every box in `boxes`.
pub fn hull(boxes: &[HyperRectangle]) -> Result<HyperRectangle> {
    let first = boxes.first().ok_or_else(|| Error::Empty("no boxes".into()))?;
    let mut lo = first.lo().to_vec();
    let mut hi = first.hi().to_vec();
    for b in &boxes[1..] {
        for i in 0..lo.len() {
            lo[i] = lo[i].min(b.lo()[i]);
            hi[i] = hi[i].max(b.hi()[i]);
        }
    }
    HyperRectangle::new(lo, hi)
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// `piece` minus `cut`, both flat along `axis`.
fn subtract(piece: &HyperRectangle, cut: &HyperRectangle, axis: usize) -> Vec<HyperRectangle> {
    let n = piece.dim();
    let overlaps = (0..n)
        .filter(|&j| j != axis)
        .all(|j| cut.lo()[j] < piece.hi()[j] && cut.hi()[j] > piece.lo()[j]);
    if !overlaps {
        return vec![piece.clone()];
    }
    let mut out = Vec::new();
    let (mut lo, mut hi) = (piece.lo().to_vec(), piece.hi().to_vec());
    for j in (0..n).filter(|&j| j != axis) {
        if cut.lo()[j] > lo[j] {
            let mut h = hi.clone();
            h[j] = cut.lo()[j];
            out.push(HyperRectangle::new(lo.clone(), h).expect("ordered bounds"));
            lo[j] = cut.lo()[j];
        }
        if cut.hi()[j] < hi[j] {
            let mut l = lo.clone();
            l[j] = cut.hi()[j];
            out.push(HyperRectangle::new(l, hi.clone()).expect("ordered bounds"));
            hi[j] = cut.hi()[j];
        }
    }
    out
}

/// Pieces of box facets that lie on the boundary of the union of `boxes`
/// but not on the boundary of their hull. Each piece is a box that is flat
/// along one axis, returned with that axis.
pub fn exposed_facets(boxes: &[HyperRectangle]) -> Result<Vec<(usize, HyperRectangle)>> {
    let h = hull(boxes)?;
    let n = h.dim();
    let mut out = Vec::new();
    for b in boxes {
        for axis in 0..n {
            for upper in [false, true] {
                let c = if upper { b.hi()[axis] } else { b.lo()[axis] };
                if same(c, h.lo()[axis]) || same(c, h.hi()[axis]) {
                    continue;
                }
                let flat = |x: &HyperRectangle| {
                    let mut lo = x.lo().to_vec();
                    let mut hi = x.hi().to_vec();
                    lo[axis] = c;
                    hi[axis] = c;
                    HyperRectangle::new(lo, hi).expect("ordered bounds")
                };
                let mut pieces = vec![flat(b)];
                for other in boxes {
                    let touches = if upper { same(other.lo()[axis], c) } else { same(other.hi()[axis], c) };
                    if !touches {
                        continue;
                    }
                    let cut = flat(other);
                    pieces = pieces.iter().flat_map(|p| subtract(p, &cut, axis)).collect();
                    if pieces.is_empty() {
                        break;
                    }
                }
                out.extend(
                    pieces
                        .into_iter()
                        .filter(|p| (0..n).all(|j| j == axis || p.hi()[j] - p.lo()[j] > 1e-12))
                        .map(|p| (axis, p)),
                );
            }
        }
    }
    Ok(out)
}

fn boxes_meet(a: &HyperRectangle, b: &HyperRectangle) -> bool {
    (0..a.dim()).all(|i| a.lo()[i] <= b.hi()[i] + 1e-9 && b.lo()[i] <= a.hi()[i] + 1e-9)
}

/// Clearance by which `region ∩ {t < 0}` meets the relative interior of a flat piece.
fn piece_slack(arr: &Arrangement, region: &Region, t: &Functional, axis: usize, piece: &HyperRectangle) -> Result<Option<f64>> {
    let n = arr.dim();
    let mut lp = SlackLp::new(n);
    for i in 0..arr.len() {
        lp.add(&arr.signed(region, i), SlackRole::Strict);
    }
    lp.add(t, SlackRole::Strict);
    for (k, f) in piece.facet_functionals().into_iter().enumerate() {
        if k / 2 == axis {
            if k % 2 == 0 {
                lp.add(&f, SlackRole::Zero);
            }
        } else {
            lp.add(&f, SlackRole::Strict);
        }
    }
    Ok(lp.solve()?.slack)
}

/// Whether the component, enumerated inside the hull of `x_partial`, stays
/// inside the union of `x_partial`. It fails when a component region meets
/// the hull's faces or an exposed piece of the union's boundary where the
/// barrier is negative.
pub fn check_containment(
    component: &SubLevelComponent,
    x_partial: &[HyperRectangle],
    x0: &[f64],
) -> Result<ContainmentReport> {
    let mut report = ContainmentReport {
        seed_inside: x_partial.iter().any(|b| b.contains(x0)),
        ..Default::default()
    };
    for (r, f) in &component.boundary_faces {
        if let BoundaryFace::Confinement(j) = f {
            report.hull_hits.push((r.clone(), *j));
        }
    }
    let pieces = exposed_facets(x_partial)?;
    report.exposed_pieces = pieces.len();
    if pieces.is_empty() {
        return Ok(report);
    }
    // Per-region bounding boxes let most pieces skip the LP.
    let (_, region_boxes) = component_bounding_box(component)?;
    let hits: Result<Vec<Vec<(Region, HyperRectangle, f64)>>> = region_boxes
        .par_iter()
        .map(|(r, rb)| {
            let t = component.affine(r).expect("component region");
            let mut out = Vec::new();
            for (axis, p) in pieces.iter().filter(|(_, p)| boxes_meet(rb, p)) {
                if let Some(s) = piece_slack(&component.arrangement, r, t, *axis, p)? {
                    if s > TAU_FACE {
                        out.push((r.clone(), p.clone(), s));
                    }
                }
            }
            Ok(out)
        })
        .collect();
    report.exposed_hits = hits?.into_iter().flatten().collect();
    Ok(report)
}

fn closed_region_lp(arr: &Arrangement, region: &Region, t: Option<&Functional>, objective: Vec<f64>) -> LinearProgram {
    let mut lp = LinearProgram::new(objective);
    for i in 0..arr.len() {
        lp.push(arr.signed(region, i), Relation::Le);
    }
    for c in arr.confinement() {
        lp.push(c.clone(), Relation::Le);
    }
    if let Some(t) = t {
        lp.push(t.clone(), Relation::Le);
    }
    lp
}

fn lp_value(lp: &LinearProgram, what: &str) -> Result<f64> {
    let res = lp.solve()?;
    match res.status {
        LpStatus::Optimal => Ok(res.cost.expect("optimal cost")),
        LpStatus::Unbounded => Err(Error::Unbounded(what.to_string())),
        LpStatus::Infeasible => Err(Error::NumericalFailure {
            message: format!("{what}: LP infeasible on a region known to be non-empty"),
            hyperplane: None,
        }),
        LpStatus::NumericalFailure => Err(Error::NumericalFailure {
            message: what.to_string(),
            hyperplane: None,
        }),
    }
}

/// Bounding box of the closed cells of the component intersected with the
/// sub-level set, with the per-region boxes.
pub fn component_bounding_box(component: &SubLevelComponent) -> Result<(HyperRectangle, Vec<(Region, HyperRectangle)>)> {
    let arr = &component.arrangement;
    let n = arr.dim();
    let regions = component.regions.sorted_regions();
    if regions.is_empty() {
        return Err(Error::Empty("component has no regions".into()));
    }
    let boxes: Result<Vec<HyperRectangle>> = regions
        .par_iter()
        .map(|r| {
            let t = component.affine(r).expect("component region");
            let mut lo = vec![0.0; n];
            let mut hi = vec![0.0; n];
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                hi[i] = lp_value(&closed_region_lp(arr, r, Some(t), e.clone()), "component extent")?;
                e[i] = -1.0;
                lo[i] = -lp_value(&closed_region_lp(arr, r, Some(t), e), "component extent")?;
            }
            // Guard against last-bit inversions on flat cells.
            for i in 0..n {
                if lo[i] > hi[i] {
                    let m = 0.5 * (lo[i] + hi[i]);
                    lo[i] = m;
                    hi[i] = m;
                }
            }
            HyperRectangle::new(lo, hi)
        })
        .collect();
    let boxes = boxes?;
    let total = hull(&boxes)?;
    Ok((total, regions.into_iter().zip(boxes).collect()))
}

/// `(L + 1)·sup‖x − x0‖∞ + sup‖nf(x0) − x‖∞` over `bbox`.
pub fn c_ball_radius(bbox: &HyperRectangle, x0: &[f64], nf_at_x0: &[f64], l: f64) -> f64 {
    (l + 1.0) * bbox.max_norm_distance(x0) + bbox.max_norm_distance(nf_at_x0)
}

/// Product of the layers' max-norm operator norms: a global max-norm
/// Lipschitz bound for a ReLU network.
pub fn lipschitz_estimate(nf: &NeuralNetwork) -> f64 {
    nf.lipschitz_estimate()
}

/// Every region of the barrier's arrangement inside `c_ball` that is not
/// in the component must keep the barrier above zero on its closed cell.
pub fn check_positivity_outside(
    nbf: &ShallowNN,
    component: &SubLevelComponent,
    c_ball: &HyperRectangle,
    x0: &[f64],
) -> Result<(bool, Vec<AuditRecord>, usize)> {
    let arr = Arrangement::new(nbf.activation_hyperplanes(), nbf.input_dim())?
        .with_confinement(c_ball.facet_functionals())?;
    let seed = arr.find_interior_region(x0)?;
    let table = enumerate_regions(&arr, &seed)?;
    let regions: Vec<Region> = table.sorted_regions().into_iter().filter(|r| !component.contains(r)).collect();
    let records: Result<Vec<AuditRecord>> = regions
        .par_iter()
        .map(|r| {
            let t = nbf.local_affine(r);
            // max −t(x) over the closed cell, i.e. −min t.
            let lp = closed_region_lp(&arr, r, None, t.coeffs.iter().map(|c| -c).collect());
            let min_value = t.constant - lp_value(&lp, "positivity")?;
            Ok(AuditRecord::Positivity {
                region: flips_of(r),
                min_value,
                passed: min_value > TAU_FACE,
            })
        })
        .collect();
    let records = records?;
    let ok = records
        .iter()
        .all(|a| matches!(a, AuditRecord::Positivity { passed: true, .. }));
    Ok((ok, records, table.len()))
}

/// Move `x0` off activation hyperplanes by the smallest of a fixed list of
/// offsets that keeps it admissible.
fn nudge_seed(nbf: &ShallowNN, x0: &[f64], admissible: impl Fn(&[f64]) -> bool) -> Option<Vec<f64>> {
    let clear = |x: &[f64]| nbf.activation_hyperplanes().iter().all(|f| f.eval(x).abs() > TAU_SIGN);
    if clear(x0) {
        return Some(x0.to_vec());
    }
    let n = x0.len();
    for k in 1..=12 {
        let step = 1e-7 * f64::powi(4.0, k);
        for sign in [1.0, -1.0] {
            // Irrational-ish direction so the offset rarely lands on another hyperplane.
            let x: Vec<f64> = (0..n)
                .map(|i| x0[i] + sign * step * (1.0 + (i as f64 + 1.0) * std::f64::consts::FRAC_1_SQRT_2).fract().max(0.3))
                .collect();
            if clear(&x) && admissible(&x) {
                return Some(x);
            }
        }
    }
    None
}

/// Outcome of the zero-sublevel half of the pipeline on a given decrease region.
#[derive(Debug, Clone)]
pub struct SubLevelCheck {
    /// Seed actually used.
    pub x0: Vec<f64>,
    pub component: Option<SubLevelComponent>,
    pub containment: Option<ContainmentReport>,
    pub component_bbox: Option<HyperRectangle>,
    pub c_ball_radius: Option<f64>,
    pub positivity_regions: Option<usize>,
    pub verdict: Verdict,
    pub audit: Vec<AuditRecord>,
    pub timings: Vec<(&'static str, f64)>,
}

impl SubLevelCheck {
    fn failed(x0: Vec<f64>, containment: ContainmentReport) -> Self {
        Self {
            x0,
            component: None,
            containment: Some(containment),
            component_bbox: None,
            c_ball_radius: None,
            positivity_regions: None,
            verdict: Verdict::FailedContainment,
            audit: Vec::new(),
            timings: Vec::new(),
        }
    }
}

/// Certify that the component of `{nbf ≤ 0}` through `x0` lies inside the
/// union of `x_partial` and that the barrier is positive on the rest of the
/// one-step reach ball.
///
/// `next_state` maps the (possibly nudged) seed to its successor and
/// `lipschitz` bounds the dynamics in the max norm.
pub fn certify_sublevel(
    nbf: &ShallowNN,
    x_partial: &[HyperRectangle],
    x0: &[f64],
    next_state: impl Fn(&[f64]) -> Result<Vec<f64>>,
    lipschitz: f64,
) -> Result<SubLevelCheck> {
    let value = nbf.eval(x0);
    if !(value < -TAU_FACE) {
        return Err(Error::SeedNotNegative { value });
    }
    let h = hull(x_partial)?;
    let in_partial = |x: &[f64]| x_partial.iter().any(|b| b.contains(x)) && nbf.eval(x) < -TAU_FACE;
    let Some(x0) = nudge_seed(nbf, x0, |x| in_partial(x) && h.contains(x)) else {
        if !x_partial.iter().any(|b| b.contains(x0)) {
            return Ok(SubLevelCheck::failed(x0.to_vec(), ContainmentReport::default()));
        }
        return Err(Error::DegenerateSeed { index: 0, tol: TAU_SIGN });
    };
    if !h.contains(&x0) || h.facet_functionals().iter().any(|f| f.eval(&x0) >= 0.0) {
        // The seed sits on the hull boundary, outside the decrease region's interior.
        return Ok(SubLevelCheck::failed(x0, ContainmentReport::default()));
    }
    let opts = SubLevelOptions {
        confinement: h.facet_functionals(),
        ..Default::default()
    };
    let mut timings = Vec::new();
    let clock = Instant::now();
    let component = enumerate_sublevel_component_with(nbf, &x0, &opts)?;
    timings.push(("enumerate", clock.elapsed().as_secs_f64()));
    let clock = Instant::now();
    let containment = check_containment(&component, x_partial, &x0)?;
    timings.push(("containment", clock.elapsed().as_secs_f64()));
    let mut audit = Vec::new();
    for (r, j) in &containment.hull_hits {
        audit.push(AuditRecord::HullFaceHit { region: flips_of(r), face: *j });
    }
    for (r, piece, s) in &containment.exposed_hits {
        audit.push(AuditRecord::ExposedFaceHit {
            region: flips_of(r),
            piece_lo: piece.lo().to_vec(),
            piece_hi: piece.hi().to_vec(),
            slack: *s,
        });
    }
    if !containment.contained() {
        let mut out = SubLevelCheck::failed(x0, containment);
        out.component = Some(component);
        out.audit = audit;
        out.timings = timings;
        return Ok(out);
    }

    let clock = Instant::now();
    let (bbox, per_region) = component_bounding_box(&component)?;
    for (r, b) in &per_region {
        audit.push(AuditRecord::RegionBox {
            region: flips_of(r),
            lo: b.lo().to_vec(),
            hi: b.hi().to_vec(),
        });
    }
    let nf_x0 = next_state(&x0)?;
    let radius = c_ball_radius(&bbox, &x0, &nf_x0, lipschitz);
    let ball = HyperRectangle::ball(&x0, radius)?;
    let (positive, records, total) = check_positivity_outside(nbf, &component, &ball, &x0)?;
    audit.extend(records);
    timings.push(("positivity", clock.elapsed().as_secs_f64()));
    Ok(SubLevelCheck {
        x0,
        component: Some(component),
        containment: Some(containment),
        component_bbox: Some(bbox),
        c_ball_radius: Some(radius),
        positivity_regions: Some(total),
        verdict: if positive { Verdict::Certified } else { Verdict::FailedPositivity },
        audit,
        timings,
    })
}

/// Run the whole pipeline on a problem instance.
pub fn certify(p: &ProblemInstance) -> Result<Certificate> {
    p.validate()?;
    let clock = Instant::now();
    let part: PartitionResult = partition(&p.safe_set, &p.barrier, &p.dynamics, p.eps)?;
    let partition_seconds = clock.elapsed().as_secs_f64();
    let mut cert = Certificate {
        gamma: part.gamma,
        gamma_valid: part.gamma_valid,
        x_partial: part.certified.clone(),
        x0: p.x0.clone(),
        component: None,
        containment: None,
        component_bbox: None,
        lipschitz: None,
        c_ball_radius: None,
        positivity_regions: None,
        verdict: Verdict::FailedSubproblem1,
        audit: part
            .certified
            .iter()
            .map(|c| AuditRecord::DecreaseBox {
                lo: c.bx.lo().to_vec(),
                hi: c.bx.hi().to_vec(),
                l_bf: c.l_bf,
                u_f: c.u_f,
                gamma_b: c.gamma(),
            })
            .collect(),
        timings: vec![("partition", partition_seconds)],
    };
    if part.boxes.is_empty() {
        return Ok(cert);
    }
    if !part.gamma_valid {
        cert.verdict = Verdict::GammaNotStrict;
        return Ok(cert);
    }
    let l = match p.lipschitz {
        Lipschitz::Auto => lipschitz_estimate(&p.dynamics),
        Lipschitz::Given(l) => l,
    };
    let check = certify_sublevel(&p.barrier, &part.boxes, &p.x0, |x| p.dynamics.evaluate(x), l)?;
    cert.x0 = check.x0;
    cert.component = check.component;
    cert.containment = check.containment;
    cert.component_bbox = check.component_bbox;
    cert.c_ball_radius = check.c_ball_radius;
    cert.positivity_regions = check.positivity_regions;
    if cert.component_bbox.is_some() {
        cert.lipschitz = Some(l);
    }
    cert.verdict = check.verdict;
    cert.audit.extend(check.audit);
    cert.timings.extend(check.timings);
    Ok(cert)
}
