//! Lattice geometry on ℤ²: finite regions, block grids, connectivity,
//! complements, thickenings, closed hulls and boundaries.
//!
//! Sites are `(x, y)` pairs of `i64` so that outer boundaries of regions
//! touching the edge of a finite lattice remain representable.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{param, Result};

pub type Site = (i64, i64);

/// The four nearest-neighbour offsets.
pub const NN4: [Site; 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// The eight offsets of the closed-box adjacency.
pub const NN8: [Site; 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// The square lattice `Λ_N = {0..N-1}²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeGeom {
    side: usize,
}

impl LatticeGeom {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return param("lattice side must be at least 1");
        }
        Ok(Self { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn contains(&self, (x, y): Site) -> bool {
        let n = self.side as i64;
        (0..n).contains(&x) && (0..n).contains(&y)
    }

    pub fn region(&self) -> Region {
        Region::rect(0, 0, self.side as i64, self.side as i64)
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Ambient space for complement decompositions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ambient {
    Finite(LatticeGeom),
    Infinite,
}

/// A finite set of sites with its bounding box.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Region {
    sites: BTreeSet<Site>,
    bbox: Option<(Site, Site)>,
}

impl Region {
    pub fn new() -> Self {
        Self::default()
    }

    /// The rectangle `[x0, x0+w) × [y0, y0+h)`.
    pub fn rect(x0: i64, y0: i64, w: i64, h: i64) -> Self {
        let mut r = Self::new();
        for x in x0..x0 + w {
            for y in y0..y0 + h {
                r.sites.insert((x, y));
            }
        }
        r.refresh_bbox();
        r
    }

    /// The square `Q_l(z) = z + [0, l)²`.
    pub fn square(z: Site, l: i64) -> Self {
        Self::rect(z.0, z.1, l, l)
    }

    pub fn insert(&mut self, s: Site) -> bool {
        let fresh = self.sites.insert(s);
        if fresh {
            self.bbox = Some(match self.bbox {
                None => (s, s),
                Some((lo, hi)) => ((lo.0.min(s.0), lo.1.min(s.1)), (hi.0.max(s.0), hi.1.max(s.1))),
            });
        }
        fresh
    }

    pub fn remove(&mut self, s: Site) -> bool {
        let had = self.sites.remove(&s);
        if had {
            self.refresh_bbox();
        }
        had
    }

    fn refresh_bbox(&mut self) {
        self.bbox = None;
        for &s in &self.sites {
            self.bbox = Some(match self.bbox {
                None => (s, s),
                Some((lo, hi)) => ((lo.0.min(s.0), lo.1.min(s.1)), (hi.0.max(s.0), hi.1.max(s.1))),
            });
        }
    }

    pub fn contains(&self, s: Site) -> bool {
        self.sites.contains(&s)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Inclusive bounding box `(min, max)`, `None` when empty.
    pub fn bbox(&self) -> Option<(Site, Site)> {
        self.bbox
    }

    /// Sites in lexicographic `(x, y)` order.
    pub fn iter(&self) -> impl Iterator<Item = Site> + '_ {
        self.sites.iter().copied()
    }

    pub fn sites(&self) -> &BTreeSet<Site> {
        &self.sites
    }

    pub fn union(&self, other: &Region) -> Region {
        self.sites.union(&other.sites).copied().collect()
    }

    pub fn intersection(&self, other: &Region) -> Region {
        self.sites.intersection(&other.sites).copied().collect()
    }

    pub fn difference(&self, other: &Region) -> Region {
        self.sites.difference(&other.sites).copied().collect()
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.sites.is_subset(&other.sites)
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.sites.is_disjoint(&other.sites)
    }

    pub fn extend_from(&mut self, other: &Region) {
        for s in other.iter() {
            self.insert(s);
        }
    }

    /// Restriction to `Λ_N`.
    pub fn clip(&self, geom: &LatticeGeom) -> Region {
        self.iter().filter(|&s| geom.contains(s)).collect()
    }

    /// Minimum ℓ∞ distance from `s` to the region, `None` when empty.
    pub fn dist_linf(&self, s: Site) -> Option<i64> {
        self.iter()
            .map(|t| (t.0 - s.0).abs().max((t.1 - s.1).abs()))
            .min()
    }

    /// Whether every site of `Q_l(z)` lies in the region.
    pub fn contains_square(&self, z: Site, l: i64) -> bool {
        (z.0..z.0 + l).all(|x| (z.1..z.1 + l).all(|y| self.contains((x, y))))
    }

    /// Sites with at least one 8-neighbour outside the region.
    fn rim8(&self) -> impl Iterator<Item = Site> + '_ {
        self.iter()
            .filter(move |&(x, y)| NN8.iter().any(|&(dx, dy)| !self.contains((x + dx, y + dy))))
    }
}

impl FromIterator<Site> for Region {
    fn from_iter<I: IntoIterator<Item = Site>>(iter: I) -> Self {
        let mut r = Region { sites: iter.into_iter().collect(), bbox: None };
        r.refresh_bbox();
        r
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<[i64; 2]> = self.iter().map(|(x, y)| [x, y]).collect();
        v.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<[i64; 2]> = Vec::deserialize(de)?;
        Ok(v.into_iter().map(|[x, y]| (x, y)).collect())
    }
}

/// A tiling of ℤ² by blocks `Q_{L₀}(r) = r + [0, L₀)²` with anchors
/// `r ∈ offset + L₀ℤ²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub block_side: i64,
    pub offset: Site,
}

impl BlockGrid {
    pub fn new(block_side: i64) -> Result<Self> {
        Self::shifted(block_side, (0, 0))
    }

    pub fn shifted(block_side: i64, offset: Site) -> Result<Self> {
        if block_side < 1 {
            return param("block side must be at least 1");
        }
        Ok(Self { block_side, offset })
    }

    /// The four half-shifted grids of the family 𝒬*: offsets 0 and L₀/2 per axis.
    pub fn half_shifts(block_side: i64) -> Result<[BlockGrid; 4]> {
        let h = block_side / 2;
        Ok([
            Self::shifted(block_side, (0, 0))?,
            Self::shifted(block_side, (h, 0))?,
            Self::shifted(block_side, (0, h))?,
            Self::shifted(block_side, (h, h))?,
        ])
    }

    /// Index of the block containing `s`.
    pub fn index_of(&self, s: Site) -> Site {
        (
            (s.0 - self.offset.0).div_euclid(self.block_side),
            (s.1 - self.offset.1).div_euclid(self.block_side),
        )
    }

    pub fn anchor(&self, idx: Site) -> Site {
        (self.offset.0 + idx.0 * self.block_side, self.offset.1 + idx.1 * self.block_side)
    }

    pub fn block(&self, idx: Site) -> Region {
        Region::square(self.anchor(idx), self.block_side)
    }

    /// Indices of blocks fully contained in `Λ_N`, row-major in `(y, x)`.
    pub fn blocks_inside(&self, geom: &LatticeGeom) -> Vec<Site> {
        let n = geom.side() as i64;
        let lo = |o: i64| (-o).div_euclid(self.block_side) - 1;
        let hi = |o: i64| (n - o).div_euclid(self.block_side) + 1;
        let mut out = Vec::new();
        for j in lo(self.offset.1)..=hi(self.offset.1) {
            for i in lo(self.offset.0)..=hi(self.offset.0) {
                let a = self.anchor((i, j));
                if a.0 >= 0 && a.1 >= 0 && a.0 + self.block_side <= n && a.1 + self.block_side <= n {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Blocks meeting the region.
    pub fn cover(&self, region: &Region) -> BlockSet {
        let mut b = BlockSet::new(*self);
        for s in region.iter() {
            b.idx.insert(self.index_of(s));
        }
        b
    }

    /// Blocks entirely contained in the region.
    pub fn inner(&self, region: &Region) -> BlockSet {
        let mut b = BlockSet::new(*self);
        for i in self.cover(region).idx {
            if region.contains_square(self.anchor(i), self.block_side) {
                b.idx.insert(i);
            }
        }
        b
    }

    /// Whether the region is a union of blocks of this grid.
    pub fn is_measurable(&self, region: &Region) -> bool {
        self.cover(region).len() * (self.block_side * self.block_side) as usize == region.len()
    }
}

/// A set of blocks of one [`BlockGrid`], stored by block index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSet {
    pub grid: BlockGrid,
    pub idx: BTreeSet<Site>,
}

#[derive(Serialize, Deserialize)]
struct BlockSetRepr {
    block_side: i64,
    anchors: Vec<[i64; 2]>,
}

impl Serialize for BlockSet {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        BlockSetRepr {
            block_side: self.grid.block_side,
            anchors: self
                .idx
                .iter()
                .map(|&i| {
                    let a = self.grid.anchor(i);
                    [a.0, a.1]
                })
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for BlockSet {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let r = BlockSetRepr::deserialize(de)?;
        if r.block_side < 1 {
            return Err(serde::de::Error::custom("block_side must be positive"));
        }
        let offset = r
            .anchors
            .first()
            .map(|a| (a[0].rem_euclid(r.block_side), a[1].rem_euclid(r.block_side)))
            .unwrap_or((0, 0));
        let grid = BlockGrid { block_side: r.block_side, offset };
        let mut set = BlockSet::new(grid);
        for [x, y] in r.anchors {
            if (x - offset.0).rem_euclid(r.block_side) != 0 || (y - offset.1).rem_euclid(r.block_side) != 0 {
                return Err(serde::de::Error::custom("anchors not on a common block grid"));
            }
            set.idx.insert(grid.index_of((x, y)));
        }
        Ok(set)
    }
}

impl BlockSet {
    pub fn new(grid: BlockGrid) -> Self {
        Self { grid, idx: BTreeSet::new() }
    }

    pub fn from_indices(grid: BlockGrid, idx: impl IntoIterator<Item = Site>) -> Self {
        Self { grid, idx: idx.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn contains(&self, i: Site) -> bool {
        self.idx.contains(&i)
    }

    /// Union of the sites of all blocks.
    pub fn region(&self) -> Region {
        let l = self.grid.block_side;
        let mut sites = BTreeSet::new();
        for &i in &self.idx {
            let (ax, ay) = self.grid.anchor(i);
            for x in ax..ax + l {
                for y in ay..ay + l {
                    sites.insert((x, y));
                }
            }
        }
        sites.into_iter().collect()
    }
}

/// Maximal 8-connected components of a block set, ordered by smallest index.
pub fn connected_components(blocks: &BlockSet) -> Vec<BlockSet> {
    components8(&blocks.idx)
        .into_iter()
        .map(|c| BlockSet { grid: blocks.grid, idx: c })
        .collect()
}

/// Maximal 8-connected components of a site set.
pub fn site_components(region: &Region) -> Vec<Region> {
    components8(region.sites()).into_iter().map(|c| c.into_iter().collect()).collect()
}

fn components8(set: &BTreeSet<Site>) -> Vec<BTreeSet<Site>> {
    let mut seen: BTreeSet<Site> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in set {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some((x, y)) = queue.pop_front() {
            comp.insert((x, y));
            for (dx, dy) in NN8 {
                let n = (x + dx, y + dy);
                if set.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// The complement of a bounded region split into its exterior and its
/// finite interior components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Complement {
    /// For a finite ambient, the exterior inside `Λ_N`; for the infinite
    /// ambient, the exterior restricted to the bounding box grown by one.
    pub exterior: Region,
    pub interiors: Vec<Region>,
}

/// Splits the complement of `region` into 4-connected components.
///
/// Complement components are 4-connected because closed unit boxes around
/// diagonal region sites touch at a corner and separate the plane there.
/// A component is exterior when it reaches the bounding frame (infinite
/// ambient) or the edge of `Λ_N` (finite ambient).
pub fn decompose_complement(region: &Region, ambient: Ambient) -> Complement {
    let (lo, hi) = match ambient {
        Ambient::Finite(g) => {
            let n = g.side() as i64;
            ((0, 0), (n - 1, n - 1))
        }
        Ambient::Infinite => match region.bbox() {
            None => return Complement { exterior: Region::new(), interiors: vec![] },
            Some((lo, hi)) => ((lo.0 - 1, lo.1 - 1), (hi.0 + 1, hi.1 + 1)),
        },
    };
    let w = (hi.0 - lo.0 + 1) as usize;
    let h = (hi.1 - lo.1 + 1) as usize;
    let at = |(x, y): Site| (x - lo.0) as usize * h + (y - lo.1) as usize;
    let inside = |(x, y): Site| x >= lo.0 && x <= hi.0 && y >= lo.1 && y <= hi.1;
    let mut label = vec![usize::MAX; w * h];
    let mut comps: Vec<(Vec<Site>, bool)> = Vec::new();
    for x in lo.0..=hi.0 {
        for y in lo.1..=hi.1 {
            let s = (x, y);
            if region.contains(s) || label[at(s)] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut sites = Vec::new();
            let mut touches = false;
            let mut queue = VecDeque::from([s]);
            label[at(s)] = id;
            while let Some(c) = queue.pop_front() {
                sites.push(c);
                if c.0 == lo.0 || c.0 == hi.0 || c.1 == lo.1 || c.1 == hi.1 {
                    touches = true;
                }
                for (dx, dy) in NN4 {
                    let n = (c.0 + dx, c.1 + dy);
                    if inside(n) && !region.contains(n) && label[at(n)] == usize::MAX {
                        label[at(n)] = id;
                        queue.push_back(n);
                    }
                }
            }
            comps.push((sites, touches));
        }
    }
    let mut exterior = Region::new();
    let mut interiors = Vec::new();
    for (sites, touches) in comps {
        if touches {
            for s in sites {
                exterior.insert(s);
            }
        } else {
            interiors.push(sites.into_iter().collect());
        }
    }
    Complement { exterior, interiors }
}

/// Union of all interior components in ℤ².
pub fn interior(region: &Region) -> Region {
    let mut out = Region::new();
    for c in decompose_complement(region, Ambient::Infinite).interiors {
        out.extend_from(&c);
    }
    out
}

/// Union of `L₀`-blocks of `grid` at minimum ℓ∞ distance `< radius` from the region.
pub fn thicken_on(region: &Region, grid: BlockGrid, radius: i64) -> BlockSet {
    let mut out = BlockSet::new(grid);
    if radius <= 0 {
        return out;
    }
    let r = radius - 1;
    // A nearest region site to any outside block lies on the 8-rim.
    for (x, y) in region.rim8() {
        let (i0, j0) = grid.index_of((x - r, y - r));
        let (i1, j1) = grid.index_of((x + r, y + r));
        for i in i0..=i1 {
            for j in j0..=j1 {
                out.idx.insert((i, j));
            }
        }
    }
    for s in region.iter() {
        out.idx.insert(grid.index_of(s));
    }
    out
}

/// `thicken_on` over the unshifted grid, returned as a site set.
pub fn thicken(region: &Region, l0: i64, radius: i64) -> Result<Region> {
    Ok(thicken_on(region, BlockGrid::new(l0)?, radius).region())
}

/// `cl(A) = δ_L(A) ∪ Int(A)`.
pub fn closed_hull(region: &Region, l: i64) -> Result<Region> {
    Ok(thicken(region, l, l)?.union(&interior(region)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Inner,
    Outer,
}

/// Inner boundary `∂ⁱR` or outer boundary `∂ᵒR` under 4-neighbour adjacency.
pub fn boundary(region: &Region, side: Side) -> Region {
    match side {
        Side::Inner => region
            .iter()
            .filter(|&(x, y)| NN4.iter().any(|&(dx, dy)| !region.contains((x + dx, y + dy))))
            .collect(),
        Side::Outer => region
            .iter()
            .flat_map(|(x, y)| NN4.iter().map(move |&(dx, dy)| (x + dx, y + dy)))
            .filter(|&s| !region.contains(s))
            .collect(),
    }
}

/// Unordered nearest-neighbour edges with at least one endpoint in `R`;
/// `internal` edges have both endpoints in `R`.
pub fn edges_meeting(region: &Region) -> (Vec<(Site, Site)>, Vec<(Site, Site)>) {
    let mut internal = Vec::new();
    let mut crossing = Vec::new();
    for (x, y) in region.iter() {
        for (dx, dy) in NN4 {
            let n = (x + dx, y + dy);
            if region.contains(n) {
                if (x, y) < n {
                    internal.push(((x, y), n));
                }
            } else {
                crossing.push(((x, y), n));
            }
        }
    }
    (internal, crossing)
}
