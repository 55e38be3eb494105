//! Enumeration of the regions meeting one connected component of the
//! interior of a shallow network's zero sub-level set.
//!
//! The traversal is the level-wise region enumeration of [`crate::arrangement`]
//! with two changes: a face only counts if the local affine map is negative
//! somewhere on it, and regions that meet the negative set may also
//! un-flip hyperplanes (the backward pass), which recovers regions hidden
//! behind places where the sub-level boundary folds back.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::arrangement::{merge_faces, Arrangement, Discovery, FlipSet, Region, RegionRecord, RegionTable};
use crate::error::{Error, Result};
use crate::lp::{SlackLp, SlackRole, TAU_FACE};
use crate::nn::{Functional, ShallowNN};

/// Which hyperplanes a region may un-flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackwardMode {
    /// Every flipped hyperplane, once the region meets the negative set.
    #[default]
    Gated,
    /// Only fold-back faces. Slower; mirrors the completeness argument.
    FoldBackOnly,
    /// Forward passes only.
    Disabled,
}

#[derive(Debug, Clone, Default)]
pub struct SubLevelOptions {
    pub backward: BackwardMode,
    /// Skip re-testing the hyperplane through which a region was discovered.
    pub skip_discovering: bool,
    /// Faces `c(x) ≤ 0` of a polytope the enumeration is confined to.
    pub confinement: Vec<Functional>,
}

/// Where the sub-level set leaves a region's cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryFace {
    /// The local affine map vanishes inside the cell.
    ZeroCrossing,
    /// Confining face `j` meets the negative part of the cell.
    Confinement(usize),
}

#[derive(Debug, Clone)]
pub struct SubLevelComponent {
    /// Regions keyed by their flip sets in the barrier's own arrangement.
    pub regions: RegionTable,
    pub seed_region: Region,
    /// The local affine map of each region.
    pub per_region_affine: HashMap<FlipSet, Functional>,
    pub boundary_faces: Vec<(Region, BoundaryFace)>,
    pub arrangement: Arrangement,
}

impl SubLevelComponent {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn contains(&self, region: &Region) -> bool {
        self.regions.contains(region)
    }

    pub fn affine(&self, region: &Region) -> Option<&Functional> {
        self.per_region_affine.get(region.flips())
    }

    /// Whether `x` lies in the closure of a component region, treating
    /// hyperplanes within `tol` of `x` as either side.
    pub fn covers_point(&self, x: &[f64], tol: f64) -> bool {
        let arr = &self.arrangement;
        let mut flips = FlipSet::new(arr.len());
        let mut ambiguous = Vec::new();
        for (i, f) in arr.functionals().iter().enumerate() {
            let v = f.eval(x);
            if v > 0.0 {
                flips.insert(i);
            }
            if v.abs() <= tol {
                ambiguous.push(i);
            }
        }
        if self.regions.contains(&Region::new(flips.clone())) {
            return true;
        }
        // Try flipping ambiguous hyperplanes, one at a time and then in pairs.
        for (k, &i) in ambiguous.iter().enumerate() {
            let a = flips.toggled(i);
            if self.regions.contains(&Region::new(a.clone())) {
                return true;
            }
            for &j in &ambiguous[k + 1..] {
                if self.regions.contains(&Region::new(a.toggled(j))) {
                    return true;
                }
            }
        }
        false
    }

    /// Regions with a confining face meeting the negative set.
    pub fn confinement_hits(&self) -> Vec<(Region, usize)> {
        self.boundary_faces
            .iter()
            .filter_map(|(r, f)| match f {
                BoundaryFace::Confinement(j) => Some((r.clone(), *j)),
                BoundaryFace::ZeroCrossing => None,
            })
            .collect()
    }
}

/// Whether hyperplane `i` bounds a face of `region` that meets `{t_r < 0}`.
pub fn zsub_adjacent(arr: &Arrangement, region: &Region, i: usize, t_r: &Functional) -> Result<bool> {
    Ok(arr.face_slack(region, i, std::slice::from_ref(t_r))?.clears(TAU_FACE))
}

/// Flipped hyperplanes of `region` bounding a fold-back face: the face is
/// full-dimensional, its closure meets `{t_r = 0}`, and it meets `{t_r < 0}`.
pub fn detect_fold_back_faces(arr: &Arrangement, region: &Region, t_r: &Functional) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for i in region.flipped_indices() {
        if !arr.face_slack(region, i, &[])?.clears(TAU_FACE) {
            continue;
        }
        if !zsub_adjacent(arr, region, i, t_r)? {
            continue;
        }
        let mut closure = SlackLp::new(arr.dim());
        for j in 0..arr.len() {
            let role = if j == i { SlackRole::Zero } else { SlackRole::Closed };
            closure.add(&arr.signed(region, j), role);
        }
        for c in arr.confinement() {
            closure.add(c, SlackRole::Closed);
        }
        closure.add(t_r, SlackRole::Zero);
        if closure.solve().map_err(|e| e.at_hyperplane(i))?.slack.is_some() {
            out.push(i);
        }
    }
    Ok(out)
}

struct Walk<'a> {
    net: &'a ShallowNN,
    /// Arrangement rebased so the seed region is the base region.
    based: Arrangement,
    frame: FlipSet,
    opts: &'a SubLevelOptions,
}

type Faces = Vec<(usize, Vec<f64>)>;

impl Walk<'_> {
    fn affine(&self, rel: &Region) -> Functional {
        self.net.local_affine(&Region::new(rel.flips().symmetric_difference(&self.frame)))
    }

    /// Forward and backward faces of one region, computed without touching the table.
    fn successors(&self, rel: &Region, discovered_by: Discovery) -> Result<(Faces, Faces)> {
        let t = self.affine(rel);
        let extra = std::slice::from_ref(&t);
        let skip = |d: Discovery| self.opts.skip_discovering && discovered_by == d;

        let fwd_test: Vec<usize> = rel
            .unflipped_indices()
            .into_iter()
            .filter(|&i| !skip(Discovery::Backward(i)))
            .collect();
        let fwd = self.based.face_hyperplanes(rel, &fwd_test, extra)?;

        let bwd = match self.opts.backward {
            BackwardMode::Disabled => Vec::new(),
            _ if rel.rank() == 0 => Vec::new(),
            mode => {
                if !self.based.cell_slack(rel, extra)?.clears(TAU_FACE) {
                    Vec::new()
                } else {
                    let candidates = if mode == BackwardMode::FoldBackOnly {
                        detect_fold_back_faces(&self.based, rel, &t)?
                    } else {
                        rel.flipped_indices()
                    };
                    let test: Vec<usize> = candidates
                        .into_iter()
                        .filter(|&i| !skip(Discovery::Forward(i)))
                        .collect();
                    self.based.face_hyperplanes(rel, &test, extra)?
                }
            }
        };
        Ok((fwd, bwd))
    }
}

/// Forward and backward successors of `region` in the sub-level traversal;
/// new regions are inserted in `table` and returned.
pub fn find_successors_fwd_bkwd(
    arr: &Arrangement,
    net: &ShallowNN,
    region: &Region,
    table: &mut RegionTable,
    level: usize,
) -> Result<Vec<Region>> {
    let opts = SubLevelOptions::default();
    let walk = Walk {
        net,
        based: arr.clone(),
        frame: FlipSet::new(arr.len()),
        opts: &opts,
    };
    let discovered_by = table.get(region).map(|r| r.discovered_by).unwrap_or(Discovery::Seed);
    let (fwd, bwd) = walk.successors(region, discovered_by)?;
    let mut out = merge_faces(region, fwd, Discovery::Forward, table, level);
    out.extend(merge_faces(region, bwd, Discovery::Backward, table, level));
    Ok(out)
}

/// Regions meeting the connected component of `{nbf < 0}` that contains `x0`.
pub fn enumerate_sublevel_component(nbf: &ShallowNN, x0: &[f64]) -> Result<SubLevelComponent> {
    enumerate_sublevel_component_with(nbf, x0, &SubLevelOptions::default())
}

pub fn enumerate_sublevel_component_with(
    nbf: &ShallowNN,
    x0: &[f64],
    opts: &SubLevelOptions,
) -> Result<SubLevelComponent> {
    if x0.len() != nbf.input_dim() {
        return Err(Error::Dimension(format!(
            "seed has {} entries, barrier takes {} inputs",
            x0.len(),
            nbf.input_dim()
        )));
    }
    let value = nbf.eval(x0);
    if !(value < -TAU_FACE) {
        return Err(Error::SeedNotNegative { value });
    }
    let arr = Arrangement::new(nbf.activation_hyperplanes(), nbf.input_dim())?
        .with_confinement(opts.confinement.clone())?;
    if let Some((i, j)) = arr.shared_hyperplane() {
        // Regions across a shared hyperplane would be silently missed.
        return Err(Error::InvalidNetwork(format!(
            "neurons {i} and {j} switch on the same hyperplane; merge or perturb them"
        )));
    }
    if let Some(j) = arr.confinement().iter().position(|c| c.eval(x0) >= 0.0) {
        return Err(Error::InvalidInput(format!("seed lies outside confining face {j}")));
    }
    let seed = arr.find_interior_region(x0)?;
    let walk = Walk {
        net: nbf,
        based: arr.rebase(&seed),
        frame: seed.flips().clone(),
        opts,
    };

    let base = Region::base(arr.len());
    let mut table = RegionTable::new();
    table.insert(RegionRecord {
        region: base.clone(),
        discovered_by: Discovery::Seed,
        level: 0,
        face_witness: Some(x0.to_vec()),
    });
    let mut current = vec![base];
    let mut level = 0;
    while !current.is_empty() {
        level += 1;
        let found: Result<Vec<(Faces, Faces)>> = current
            .par_iter()
            .map(|r| walk.successors(r, table.get(r).expect("region in table").discovered_by))
            .collect();
        let mut next = Vec::new();
        for (r, (fwd, bwd)) in current.iter().zip(found?) {
            next.extend(merge_faces(r, fwd, Discovery::Forward, &mut table, level));
            next.extend(merge_faces(r, bwd, Discovery::Backward, &mut table, level));
        }
        next.sort();
        current = next;
    }
    let regions = table.reframed(seed.flips());
    log::debug!("sub-level component: {} regions in {} levels", regions.len(), level);

    let per_region_affine: HashMap<FlipSet, Functional> = regions
        .regions()
        .map(|r| (r.flips().clone(), nbf.local_affine(r)))
        .collect();

    let sorted = regions.sorted_regions();
    let faces: Result<Vec<Vec<BoundaryFace>>> = sorted
        .par_iter()
        .map(|r| boundary_faces_of(&arr, r, &per_region_affine[r.flips()]))
        .collect();
    let boundary_faces = sorted
        .iter()
        .zip(faces?)
        .flat_map(|(r, fs)| fs.into_iter().map(move |f| (r.clone(), f)))
        .collect();

    Ok(SubLevelComponent {
        regions,
        seed_region: seed,
        per_region_affine,
        boundary_faces,
        arrangement: arr,
    })
}

fn boundary_faces_of(arr: &Arrangement, region: &Region, t: &Functional) -> Result<Vec<BoundaryFace>> {
    let mut out = Vec::new();
    let mut zero = SlackLp::new(arr.dim());
    for i in 0..arr.len() {
        zero.add(&arr.signed(region, i), SlackRole::Strict);
    }
    for c in arr.confinement() {
        zero.add(c, SlackRole::Strict);
    }
    zero.add(t, SlackRole::Zero);
    if zero.solve()?.clears(TAU_FACE) {
        out.push(BoundaryFace::ZeroCrossing);
    }
    for j in 0..arr.confinement().len() {
        if arr.confinement_face_slack(region, j, std::slice::from_ref(t))?.clears(TAU_FACE) {
            out.push(BoundaryFace::Confinement(j));
        }
    }
    Ok(out)
}
