//! Hyperplane arrangements, regions as flip sets, and level-wise region
//! enumeration driven by slack LPs.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{SlackLp, SlackOutcome, SlackRole, TAU_FACE};
use crate::nn::Functional;

/// A seed point must clear every hyperplane by more than this.
pub const TAU_SIGN: f64 = 1e-9;

/// Fixed-width bitset over hyperplane indices.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlipSet {
    words: Vec<u64>,
    universe: usize,
}

impl FlipSet {
    pub fn new(universe: usize) -> Self {
        Self {
            words: vec![0; universe.div_ceil(64).max(1)],
            universe,
        }
    }

    pub fn from_indices(universe: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::new(universe);
        for i in indices {
            s.insert(i);
        }
        s
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.universe, "index {i} outside universe {}", self.universe);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn toggle(&mut self, i: usize) {
        assert!(i < self.universe, "index {i} outside universe {}", self.universe);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn toggled(&self, i: usize) -> Self {
        let mut s = self.clone();
        s.toggle(i);
        s
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.universe).filter(move |&i| self.contains(i))
    }

    pub fn complement_iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.universe).filter(move |&i| !self.contains(i))
    }

    pub fn symmetric_difference(&self, other: &FlipSet) -> FlipSet {
        debug_assert_eq!(self.universe, other.universe);
        FlipSet {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            universe: self.universe,
        }
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for FlipSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Full-dimensional region, identified by the hyperplanes on whose positive
/// side it lies.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Region {
    flips: FlipSet,
}

impl Region {
    pub fn new(flips: FlipSet) -> Self {
        Self { flips }
    }

    pub fn base(universe: usize) -> Self {
        Self::new(FlipSet::new(universe))
    }

    pub fn flips(&self) -> &FlipSet {
        &self.flips
    }

    /// +1 on flipped hyperplanes, −1 otherwise.
    pub fn sign(&self, i: usize) -> f64 {
        if self.flips.contains(i) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn flipped(&self, i: usize) -> Region {
        Region::new(self.flips.toggled(i))
    }

    pub fn flipped_indices(&self) -> Vec<usize> {
        self.flips.iter().collect()
    }

    pub fn unflipped_indices(&self) -> Vec<usize> {
        self.flips.complement_iter().collect()
    }

    pub fn rank(&self) -> usize {
        self.flips.count()
    }
}

/// Ordered hyperplanes `ℓ_i(x) = 0` plus optional confining faces `c_j(x) ≤ 0`
/// that every region is intersected with and that are never flipped.
#[derive(Debug, Clone)]
pub struct Arrangement {
    functionals: Vec<Functional>,
    confinement: Vec<Functional>,
    dim: usize,
}

impl Arrangement {
    pub fn new(functionals: Vec<Functional>, dim: usize) -> Result<Self> {
        if let Some(f) = functionals.iter().find(|f| f.dim() != dim) {
            return Err(Error::Dimension(format!(
                "functional of dimension {} in an arrangement of dimension {dim}",
                f.dim()
            )));
        }
        Ok(Self {
            functionals,
            confinement: Vec::new(),
            dim,
        })
    }

    /// First pair `(i, j)` of hyperplanes that coincide, as the same or
    /// opposite functional up to positive scaling (relative tolerance 1e-12).
    ///
    /// Single-flip traversal never separates such a pair, so regions across
    /// the shared hyperplane are unreachable. Constant functionals are skipped.
    pub fn shared_hyperplane(&self) -> Option<(usize, usize)> {
        let keys: Vec<Option<Vec<f64>>> = self
            .functionals
            .iter()
            .map(|f| {
                if f.grad_norm() == 0.0 {
                    return None;
                }
                let mut v: Vec<f64> = f.coeffs.iter().copied().chain([f.constant]).collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                let lead = *v.iter().find(|a| **a != 0.0).expect("nonzero gradient");
                let s = lead.signum() / norm;
                v.iter_mut().for_each(|a| *a *= s);
                Some(v)
            })
            .collect();
        for i in 0..keys.len() {
            let Some(a) = &keys[i] else { continue };
            for (j, b) in keys.iter().enumerate().skip(i + 1) {
                if let Some(b) = b {
                    if a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12) {
                        return Some((i, j));
                    }
                }
            }
        }
        None
    }

    /// Confine to the polytope `{x : c_j(x) ≤ 0 ∀j}`.
    pub fn with_confinement(mut self, faces: Vec<Functional>) -> Result<Self> {
        if let Some(f) = faces.iter().find(|f| f.dim() != self.dim) {
            return Err(Error::Dimension(format!(
                "confining face of dimension {} in an arrangement of dimension {}",
                f.dim(),
                self.dim
            )));
        }
        self.confinement = faces;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn functionals(&self) -> &[Functional] {
        &self.functionals
    }

    pub fn confinement(&self) -> &[Functional] {
        &self.confinement
    }

    /// `𝔰(ℓ_i)·ℓ_i`: negative on the region.
    pub fn signed(&self, region: &Region, i: usize) -> Functional {
        let f = &self.functionals[i];
        if region.flips.contains(i) {
            f.negated()
        } else {
            f.clone()
        }
    }

    /// Arrangement with the same hyperplanes in which `region` is the base region.
    pub fn rebase(&self, region: &Region) -> Arrangement {
        Arrangement {
            functionals: (0..self.len()).map(|i| self.signed(region, i)).collect(),
            confinement: self.confinement.clone(),
            dim: self.dim,
        }
    }

    /// Region containing `x0`.
    pub fn find_interior_region(&self, x0: &[f64]) -> Result<Region> {
        if x0.len() != self.dim {
            return Err(Error::Dimension(format!(
                "seed has {} entries, arrangement dimension is {}",
                x0.len(),
                self.dim
            )));
        }
        let mut flips = FlipSet::new(self.len());
        for (i, f) in self.functionals.iter().enumerate() {
            let v = f.eval(x0);
            if v.abs() <= TAU_SIGN {
                return Err(Error::DegenerateSeed { index: i, tol: TAU_SIGN });
            }
            if v > 0.0 {
                flips.insert(i);
            }
        }
        Ok(Region::new(flips))
    }

    fn region_lp(&self, region: &Region, skip: Option<usize>, extra: &[Functional]) -> SlackLp {
        let mut lp = SlackLp::new(self.dim);
        for i in 0..self.len() {
            if Some(i) != skip {
                lp.add(&self.signed(region, i), SlackRole::Strict);
            }
        }
        for c in self.confinement.iter().chain(extra) {
            lp.add(c, SlackRole::Strict);
        }
        lp
    }

    /// Interior clearance of `region ∩ {g < 0 : g ∈ extra}` (confinement included).
    pub fn cell_slack(&self, region: &Region, extra: &[Functional]) -> Result<SlackOutcome> {
        self.region_lp(region, None, extra).solve()
    }

    pub fn is_full_dimensional(&self, region: &Region) -> Result<bool> {
        Ok(self.cell_slack(region, &[])?.clears(TAU_FACE))
    }

    /// Face test for hyperplane `i` of `region`: the other hyperplanes and
    /// every `extra` constraint keep slack, while `ℓ_i` is pinned to zero.
    pub fn face_slack(&self, region: &Region, i: usize, extra: &[Functional]) -> Result<SlackOutcome> {
        let mut lp = self.region_lp(region, Some(i), extra);
        let li = self.signed(region, i);
        lp.add(&li, SlackRole::Closed);
        lp.add(&li, SlackRole::NonNegative);
        lp.solve().map_err(|e| e.at_hyperplane(i))
    }

    /// Face test for confining face `j`, with the same conventions as [`Self::face_slack`].
    pub fn confinement_face_slack(&self, region: &Region, j: usize, extra: &[Functional]) -> Result<SlackOutcome> {
        let mut lp = SlackLp::new(self.dim);
        for i in 0..self.len() {
            lp.add(&self.signed(region, i), SlackRole::Strict);
        }
        for (k, c) in self.confinement.iter().enumerate() {
            if k != j {
                lp.add(c, SlackRole::Strict);
            }
        }
        for g in extra {
            lp.add(g, SlackRole::Strict);
        }
        lp.add(&self.confinement[j], SlackRole::Closed);
        lp.add(&self.confinement[j], SlackRole::NonNegative);
        lp.solve()
    }

    /// Hyperplanes among `test` that bound a full-dimensional face of `region`
    /// under the extra constraints, with the face witness.
    pub fn face_hyperplanes(
        &self,
        region: &Region,
        test: &[usize],
        extra: &[Functional],
    ) -> Result<Vec<(usize, Vec<f64>)>> {
        let mut out = Vec::new();
        for &i in test {
            let res = self.face_slack(region, i, extra)?;
            if res.clears(TAU_FACE) {
                out.push((i, res.witness.unwrap()));
            }
        }
        Ok(out)
    }
}

/// How a region entered a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discovery {
    Seed,
    /// Flipping hyperplane `i` of the parent.
    Forward(usize),
    /// Un-flipping hyperplane `i` of the parent.
    Backward(usize),
}

#[derive(Debug, Clone)]
pub struct RegionRecord {
    pub region: Region,
    pub discovered_by: Discovery,
    /// Number of BFS rounds before insertion.
    pub level: usize,
    /// A point on the face through which the region was discovered.
    pub face_witness: Option<Vec<f64>>,
}

/// Hash table of regions keyed by flip set, with insert-if-absent semantics
/// and insertion-ordered iteration.
#[derive(Debug, Clone, Default)]
pub struct RegionTable {
    map: HashMap<FlipSet, usize>,
    records: Vec<RegionRecord>,
}

impl RegionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, region: &Region) -> bool {
        self.map.contains_key(region.flips())
    }

    pub fn get(&self, region: &Region) -> Option<&RegionRecord> {
        self.map.get(region.flips()).map(|&k| &self.records[k])
    }

    /// Returns `true` when the region was not present.
    pub fn insert(&mut self, record: RegionRecord) -> bool {
        if self.map.contains_key(record.region.flips()) {
            return false;
        }
        self.map.insert(record.region.flips().clone(), self.records.len());
        self.records.push(record);
        true
    }

    pub fn records(&self) -> &[RegionRecord] {
        &self.records
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.records.iter().map(|r| &r.region)
    }

    /// Flip sets in canonical (sorted) order.
    pub fn sorted_regions(&self) -> Vec<Region> {
        let mut v: Vec<Region> = self.regions().cloned().collect();
        v.sort();
        v
    }

    /// Re-key every region by XOR with `frame`, translating between an
    /// arrangement and its rebased copy.
    pub(crate) fn reframed(self, frame: &FlipSet) -> RegionTable {
        let mut out = RegionTable::new();
        for mut rec in self.records {
            rec.region = Region::new(rec.region.flips.symmetric_difference(frame));
            out.insert(rec);
        }
        out
    }
}

/// Regions reached from `region` by flipping one hyperplane in `test` whose
/// face is full-dimensional under `add_constr`; new ones are inserted in
/// `table` and returned.
pub fn find_successors(
    arr: &Arrangement,
    region: &Region,
    test: &[usize],
    add_constr: &[Functional],
    table: &mut RegionTable,
    level: usize,
) -> Result<Vec<Region>> {
    let faces = arr.face_hyperplanes(region, test, add_constr)?;
    Ok(merge_faces(region, faces, Discovery::Forward, table, level))
}

pub(crate) fn merge_faces(
    region: &Region,
    faces: Vec<(usize, Vec<f64>)>,
    tag: fn(usize) -> Discovery,
    table: &mut RegionTable,
    level: usize,
) -> Vec<Region> {
    let mut out = Vec::new();
    for (i, w) in faces {
        let next = region.flipped(i);
        if table.insert(RegionRecord {
            region: next.clone(),
            discovered_by: tag(i),
            level,
            face_witness: Some(w),
        }) {
            out.push(next);
        }
    }
    out
}

/// All full-dimensional regions of `arr` (within its confinement), by
/// level-wise flipping from `seed`. Regions are keyed in the frame of `arr`.
pub fn enumerate_regions(arr: &Arrangement, seed: &Region) -> Result<RegionTable> {
    if seed.flips().universe() != arr.len() {
        return Err(Error::Dimension(format!(
            "seed region over {} hyperplanes, arrangement has {}",
            seed.flips().universe(),
            arr.len()
        )));
    }
    let based = arr.rebase(seed);
    let base = Region::base(arr.len());
    if !based.is_full_dimensional(&base)? {
        return Err(Error::InvalidInput("seed region is not full-dimensional".into()));
    }
    let mut table = RegionTable::new();
    table.insert(RegionRecord {
        region: base.clone(),
        discovered_by: Discovery::Seed,
        level: 0,
        face_witness: None,
    });
    let mut current = vec![base];
    let mut level = 0;
    while !current.is_empty() {
        level += 1;
        let found: Result<Vec<Vec<(usize, Vec<f64>)>>> = current
            .par_iter()
            .map(|r| based.face_hyperplanes(r, &r.unflipped_indices(), &[]))
            .collect();
        let mut next = Vec::new();
        for (r, faces) in current.iter().zip(found?) {
            next.extend(merge_faces(r, faces, Discovery::Forward, &mut table, level));
        }
        next.sort();
        current = next;
    }
    Ok(table.reframed(seed.flips()))
}
