//! JSON views of pipeline artifacts and plot-data export.
//!
//! Everything here produces [`serde_json::Value`] trees so that output is
//! byte-stable: sorted keys, shortest round-trip floats, a schema tag on
//! every top-level document.

use serde_json::{json, Value};

use crate::arrangement::{Arrangement, Discovery, Region, RegionTable};
use crate::certify::{component_bounding_box, Certificate, ContainmentReport, SubLevelCheck};
use crate::crown::BoundMatrix;
use crate::error::Result;
use crate::hyperrect::HyperRectangle;
use crate::io::{box_to_value, SCHEMA};
use crate::lp::TAU_FEAS;
use crate::nn::Functional;
use crate::partition::{CertifiedBox, PartitionResult};
use crate::sublevel::{BoundaryFace, SubLevelComponent};

fn functional_to_value(f: &Functional) -> Value {
    json!({ "coeffs": f.coeffs, "constant": f.constant })
}

fn discovery_to_value(d: Discovery) -> Value {
    match d {
        Discovery::Seed => json!("seed"),
        Discovery::Forward(i) => json!({ "forward": i }),
        Discovery::Backward(i) => json!({ "backward": i }),
    }
}

fn certified_box_to_value(c: &CertifiedBox) -> Value {
    json!({
        "lo": c.bx.lo(),
        "hi": c.bx.hi(),
        "l_bf": c.l_bf,
        "u_f": c.u_f,
        "gamma_b": c.gamma(),
    })
}

pub fn bounds_to_value(bx: &HyperRectangle, bounds: &BoundMatrix) -> Value {
    json!({
        "schema": SCHEMA,
        "box": box_to_value(bx),
        "lower": bounds.rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
        "upper": bounds.rows.iter().map(|r| r[1]).collect::<Vec<_>>(),
    })
}

pub fn partition_to_value(res: &PartitionResult) -> Value {
    json!({
        "schema": SCHEMA,
        "gamma": res.gamma,
        "gamma_valid": res.gamma_valid,
        "num_boxes": res.certified.len(),
        "boxes": res.certified.iter().map(certified_box_to_value).collect::<Vec<_>>(),
    })
}

/// Regions in canonical order with discovery data and witnesses.
pub fn region_table_to_value(table: &RegionTable) -> Value {
    let regions: Vec<Value> = table
        .sorted_regions()
        .iter()
        .map(|r| {
            let rec = table.get(r).expect("region from table");
            json!({
                "flips": r.flipped_indices(),
                "level": rec.level,
                "discovered_by": discovery_to_value(rec.discovered_by),
                "face_witness": rec.face_witness,
            })
        })
        .collect();
    json!({ "schema": SCHEMA, "num_regions": table.len(), "regions": regions })
}

pub fn component_to_value(c: &SubLevelComponent) -> Value {
    let regions: Vec<Value> = c
        .regions
        .sorted_regions()
        .iter()
        .map(|r| {
            let rec = c.regions.get(r).expect("region from table");
            json!({
                "flips": r.flipped_indices(),
                "level": rec.level,
                "discovered_by": discovery_to_value(rec.discovered_by),
                "face_witness": rec.face_witness,
                "affine": c.affine(r).map(functional_to_value),
            })
        })
        .collect();
    let mut faces = c.boundary_faces.clone();
    faces.sort();
    let faces: Vec<Value> = faces
        .iter()
        .map(|(r, f)| {
            let face = match f {
                BoundaryFace::ZeroCrossing => json!("zero_crossing"),
                BoundaryFace::Confinement(j) => json!({ "confinement": j }),
            };
            json!({ "flips": r.flipped_indices(), "face": face })
        })
        .collect();
    json!({
        "schema": SCHEMA,
        "num_neurons": c.arrangement.len(),
        "num_regions": c.len(),
        "seed_region": c.seed_region.flipped_indices(),
        "regions": regions,
        "boundary_faces": faces,
    })
}

fn containment_to_value(c: &ContainmentReport) -> Value {
    json!({
        "contained": c.contained(),
        "seed_inside": c.seed_inside,
        "hull_hits": c.hull_hits.len(),
        "exposed_pieces": c.exposed_pieces,
        "exposed_hits": c.exposed_hits.len(),
    })
}

fn component_summary(c: &SubLevelComponent) -> Value {
    json!({
        "num_regions": c.len(),
        "seed_region": c.seed_region.flipped_indices(),
        "regions": c.regions.sorted_regions().iter().map(Region::flipped_indices).collect::<Vec<_>>(),
    })
}

pub fn certificate_to_value(cert: &Certificate) -> Value {
    json!({
        "schema": SCHEMA,
        "verdict": cert.verdict,
        "gamma": cert.gamma,
        "gamma_valid": cert.gamma_valid,
        "x_partial": cert.x_partial.iter().map(certified_box_to_value).collect::<Vec<_>>(),
        "x0": cert.x0,
        "component": cert.component.as_ref().map(component_summary),
        "containment": cert.containment.as_ref().map(containment_to_value),
        "component_bbox": cert.component_bbox.as_ref().map(box_to_value),
        "lipschitz": cert.lipschitz,
        "c_ball_radius": cert.c_ball_radius,
        "positivity_regions": cert.positivity_regions,
        "audit": serde_json::to_value(&cert.audit).expect("audit records serialize"),
    })
}

pub fn sublevel_check_to_value(check: &SubLevelCheck, x_partial: &[HyperRectangle]) -> Value {
    json!({
        "schema": SCHEMA,
        "verdict": check.verdict,
        "x_partial": x_partial.iter().map(box_to_value).collect::<Vec<_>>(),
        "x0": check.x0,
        "component": check.component.as_ref().map(component_summary),
        "containment": check.containment.as_ref().map(containment_to_value),
        "component_bbox": check.component_bbox.as_ref().map(box_to_value),
        "c_ball_radius": check.c_ball_radius,
        "positivity_regions": check.positivity_regions,
        "audit": serde_json::to_value(&check.audit).expect("audit records serialize"),
    })
}

/// Vertices, in counter-clockwise order, of the planar polygon
/// `{x : g(x) ≤ 0 for all g}`; empty if it has no area.
///
/// Candidate vertices are the pairwise intersections of the constraint
/// lines that satisfy every constraint; the input must be bounded.
pub fn polygon_2d(constraints: &[Functional]) -> Vec<[f64; 2]> {
    let tol = TAU_FEAS;
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for (a, f) in constraints.iter().enumerate() {
        for g in &constraints[a + 1..] {
            let (a1, b1, c1) = (f.coeffs[0], f.coeffs[1], f.constant);
            let (a2, b2, c2) = (g.coeffs[0], g.coeffs[1], g.constant);
            let det = a1 * b2 - a2 * b1;
            let scale = f.grad_norm() * g.grad_norm();
            if det.abs() <= 1e-12 * scale || scale == 0.0 {
                continue;
            }
            let p = [(-c1 * b2 + c2 * b1) / det, (-a1 * c2 + a2 * c1) / det];
            let ok = constraints
                .iter()
                .all(|h| h.eval(&p) <= tol * (1.0 + h.grad_norm() * (p[0].abs() + p[1].abs())));
            if ok && !pts.iter().any(|q| (q[0] - p[0]).abs() + (q[1] - p[1]).abs() <= 1e-9 * (1.0 + p[0].abs() + p[1].abs())) {
                pts.push(p);
            }
        }
    }
    if pts.len() < 3 {
        return Vec::new();
    }
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|p, q| (p[1] - cy).atan2(p[0] - cx).total_cmp(&(q[1] - cy).atan2(q[0] - cx)));
    pts
}

/// Closed cell of `region` intersected with its confinement, an optional
/// sub-level constraint and a clipping box.
fn cell_constraints(arr: &Arrangement, region: &Region, t: Option<&Functional>, clip: &HyperRectangle) -> Vec<Functional> {
    let mut cs: Vec<Functional> = (0..arr.len()).map(|i| arr.signed(region, i)).collect();
    cs.extend(arr.confinement().iter().cloned());
    cs.extend(t.cloned());
    cs.extend(clip.facet_functionals());
    cs
}

/// Plot data for a certification run or a bare component.
///
/// In the plane each component region becomes a polygon (its closed cell
/// intersected with the sub-level set); in higher dimensions it becomes the
/// bounding box of that set.
pub fn plot_data(component: &SubLevelComponent, x_partial: &[HyperRectangle], clip: &HyperRectangle) -> Result<Value> {
    let arr = &component.arrangement;
    let regions: Vec<Value> = if arr.dim() == 2 {
        component
            .regions
            .sorted_regions()
            .iter()
            .map(|r| {
                let poly = polygon_2d(&cell_constraints(arr, r, component.affine(r), clip));
                json!({ "flips": r.flipped_indices(), "polygon": poly })
            })
            .collect()
    } else {
        component_bounding_box(component)?
            .1
            .iter()
            .map(|(r, b)| json!({ "flips": r.flipped_indices(), "lo": b.lo(), "hi": b.hi() }))
            .collect()
    };
    Ok(json!({
        "schema": SCHEMA,
        "dim": arr.dim(),
        "clip": box_to_value(clip),
        "x_partial": x_partial.iter().map(box_to_value).collect::<Vec<_>>(),
        "regions": regions,
    }))
}
