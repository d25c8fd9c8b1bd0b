//! Triangular lattice geometry: axial coordinates, regions, the hexagonal
//! dual and polygon discretization.
//!
//! Sites are addressed in axial coordinates `(k, l)` embedded at
//! `k + l e^{iπ/3}`. Every region stores its sites in row-major order
//! (`l` ascending, then `k`), which is the canonical ordinal used by
//! configurations, and a dense neighbor table for fast sweeps.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Sentinel for a missing neighbor in [`Region::adjacency`].
pub const NONE: u32 = u32::MAX;

/// Counterclockwise neighbor offsets, starting with the positive real axis.
pub const DIRECTIONS: [AxialCoord; 6] = [
    AxialCoord::new(1, 0),
    AxialCoord::new(0, 1),
    AxialCoord::new(-1, 1),
    AxialCoord::new(-1, 0),
    AxialCoord::new(0, -1),
    AxialCoord::new(1, -1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AxialCoord {
    pub k: i32,
    pub l: i32,
}

impl AxialCoord {
    pub const ORIGIN: AxialCoord = AxialCoord::new(0, 0);

    pub const fn new(k: i32, l: i32) -> Self {
        Self { k, l }
    }

    /// Position in the complex plane for unit mesh.
    pub fn embed(self) -> Complex64 {
        Complex64::new(self.k as f64 + 0.5 * self.l as f64, 0.5 * SQRT3 * self.l as f64)
    }

    /// Graph distance to the origin.
    pub fn norm(self) -> u32 {
        let (k, l) = (self.k as i64, self.l as i64);
        k.abs().max(l.abs()).max((k + l).abs()) as u32
    }

    pub fn distance(self, other: AxialCoord) -> u32 {
        (self - other).norm()
    }

    pub fn neighbor(self, dir: usize) -> AxialCoord {
        self + DIRECTIONS[dir % 6]
    }

    /// Index `d` with `other == self.neighbor(d)`, if the two are adjacent.
    pub fn direction_to(self, other: AxialCoord) -> Option<usize> {
        let diff = other - self;
        DIRECTIONS.iter().position(|&d| d == diff)
    }

    /// Rotation by π/3 about the origin.
    pub fn rotate60(self) -> AxialCoord {
        AxialCoord::new(-self.l, self.k + self.l)
    }
}

impl std::ops::Add for AxialCoord {
    type Output = AxialCoord;
    fn add(self, o: AxialCoord) -> AxialCoord {
        AxialCoord::new(self.k + o.k, self.l + o.l)
    }
}

impl std::ops::Sub for AxialCoord {
    type Output = AxialCoord;
    fn sub(self, o: AxialCoord) -> AxialCoord {
        AxialCoord::new(self.k - o.k, self.l - o.l)
    }
}

impl std::ops::Mul<i32> for AxialCoord {
    type Output = AxialCoord;
    fn mul(self, s: i32) -> AxialCoord {
        AxialCoord::new(self.k * s, self.l * s)
    }
}

impl fmt::Display for AxialCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k, self.l)
    }
}

/// The sites at distance exactly `n` from the origin, counterclockwise from
/// the corner `(n, 0)`.
pub fn ring(n: u32) -> Vec<AxialCoord> {
    if n == 0 {
        return vec![AxialCoord::ORIGIN];
    }
    let n = n as i32;
    let mut out = Vec::with_capacity(6 * n as usize);
    for i in 0..6 {
        let corner = DIRECTIONS[i] * n;
        let step = DIRECTIONS[(i + 2) % 6];
        for j in 0..n {
            out.push(corner + step * j);
        }
    }
    out
}

/// Polar angle of a point in `[0, 2π)`.
pub fn turn_angle(z: Complex64) -> f64 {
    let a = z.im.atan2(z.re);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

// ---------------------------------------------------------------------------
// Hexagonal dual

/// Orientation of a triangular face of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    /// `{(k,l), (k+1,l), (k,l+1)}`
    Up,
    /// `{(k+1,l), (k,l+1), (k+1,l+1)}`
    Down,
}

/// A vertex of the hexagonal lattice, i.e. a triangular face of the
/// site lattice, keyed by the face's base coordinate and orientation.
///
/// Corner `j` of the hexagon around site `s` is the triangle
/// `{s, s + DIRECTIONS[j], s + DIRECTIONS[j + 1]}`; [`DualVertex::corner`]
/// maps each of the three `(site, corner)` names of a vertex to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualVertex {
    pub base: AxialCoord,
    pub face: Face,
}

impl DualVertex {
    pub const fn new(base: AxialCoord, face: Face) -> Self {
        Self { base, face }
    }

    pub fn corner(site: AxialCoord, j: usize) -> Self {
        let (k, l) = (site.k, site.l);
        let (base, face) = match j % 6 {
            0 => ((k, l), Face::Up),
            1 => ((k - 1, l), Face::Down),
            2 => ((k - 1, l), Face::Up),
            3 => ((k - 1, l - 1), Face::Down),
            4 => ((k, l - 1), Face::Up),
            _ => ((k, l - 1), Face::Down),
        };
        Self::new(AxialCoord::new(base.0, base.1), face)
    }

    /// The three sites (hexagons) meeting at this vertex.
    pub fn sites(self) -> [AxialCoord; 3] {
        let b = self.base;
        match self.face {
            Face::Up => [b, b + AxialCoord::new(1, 0), b + AxialCoord::new(0, 1)],
            Face::Down => [
                b + AxialCoord::new(1, 0),
                b + AxialCoord::new(0, 1),
                b + AxialCoord::new(1, 1),
            ],
        }
    }

    pub fn contains(self, s: AxialCoord) -> bool {
        self.sites().contains(&s)
    }

    /// The site of this face other than `a` and `b`.
    pub fn third(self, a: AxialCoord, b: AxialCoord) -> AxialCoord {
        let s = self.sites();
        *s.iter().find(|&&x| x != a && x != b).expect("face has three distinct sites")
    }

    pub fn embed(self) -> Complex64 {
        let s = self.sites();
        (s[0].embed() + s[1].embed() + s[2].embed()) / 3.0
    }

    /// The face containing the three given mutually adjacent sites.
    pub fn from_sites(a: AxialCoord, b: AxialCoord, c: AxialCoord) -> Self {
        let d = a.direction_to(b).expect("sites of a face are adjacent");
        let cand = DualVertex::corner(a, d);
        if cand.contains(c) {
            cand
        } else {
            DualVertex::corner(a, (d + 5) % 6)
        }
    }

    /// The face on the other side of the edge `{a, b}`.
    pub fn across(self, a: AxialCoord, b: AxialCoord) -> DualVertex {
        let d = a.direction_to(b).expect("edge endpoints are adjacent");
        let left = DualVertex::corner(a, d);
        if left == self {
            DualVertex::corner(a, (d + 5) % 6)
        } else {
            left
        }
    }
}

/// An edge of the hexagonal lattice, identified with the pair of sites
/// (hexagons) it separates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualEdge {
    a: AxialCoord,
    b: AxialCoord,
}

impl DualEdge {
    pub fn new(a: AxialCoord, b: AxialCoord) -> Self {
        debug_assert!(a.direction_to(b).is_some());
        if a <= b {
            Self { a, b }
        } else {
            Self { a: b, b: a }
        }
    }

    pub fn faces(self) -> (AxialCoord, AxialCoord) {
        (self.a, self.b)
    }

    pub fn endpoints(self) -> (DualVertex, DualVertex) {
        let d = self.a.direction_to(self.b).expect("adjacent");
        (DualVertex::corner(self.a, d), DualVertex::corner(self.a, (d + 5) % 6))
    }
}

// ---------------------------------------------------------------------------
// Regions

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub polygon: Vec<Complex64>,
    pub delta: f64,
    pub marks: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball { n: u32 },
    Annulus { inner: u32, outer: u32 },
    Rhombus { w: u32, h: u32 },
    HalfPlaneAnnulus { inner: u32, outer: u32 },
    Torus { n: u32 },
    Domain(DomainSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    All,
    /// Region sites adjacent to the complement. For annuli, the ring next
    /// to the hole.
    InnerBoundary,
    /// Lattice sites outside a simply connected region adjacent to it. For
    /// annuli, the outermost ring of the region.
    OuterBoundary,
    /// Side `1..=6` of a hexagonal ball or `1..=4` of a rhombus.
    Side(usize),
    /// Boundary arc `i` (from mark `i` to mark `i+1`) of a domain.
    Arc(usize),
}

/// The boundary of a simply connected region as a counterclockwise cycle
/// of dual vertices; `edges[i]` joins `vertices[i]` to `vertices[i + 1]`
/// and separates an interior site from an exterior one.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCycle {
    pub vertices: Vec<DualVertex>,
    pub edges: Vec<(AxialCoord, AxialCoord)>,
    /// Indices into `vertices` of the marked points, in counterclockwise order.
    pub marks: Vec<usize>,
}

impl BoundaryCycle {
    /// Vertices with two exterior sites, where a boundary color can switch.
    pub fn is_transition(&self, i: usize, region: &Region) -> bool {
        let n = self.vertices.len();
        let prev = self.edges[(i + n - 1) % n].1;
        let next = self.edges[i].1;
        prev != next && !region.contains(prev) && !region.contains(next)
    }

    /// Index of the transition vertex closest to `z` (in region units).
    pub fn nearest_transition(&self, region: &Region, z: Complex64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.vertices.len() {
            if !self.is_transition(i, region) {
                continue;
            }
            let d = (region.embed_vertex(self.vertices[i]) - z).norm();
            if best.map_or(true, |(_, bd)| d < bd - 1e-12) {
                best = Some((i, d));
            }
        }
        best.map(|b| b.0)
    }

    pub fn index_of(&self, v: DualVertex) -> Option<usize> {
        self.vertices.iter().position(|&x| x == v)
    }

    /// Edge indices of the counterclockwise arc from vertex `from` to `to`.
    pub fn arc_edges(&self, from: usize, to: usize) -> Vec<usize> {
        let n = self.vertices.len();
        let mut out = Vec::new();
        let mut i = from;
        loop {
            out.push(i);
            i = (i + 1) % n;
            if i == to {
                break;
            }
        }
        out
    }
}

/// A finite set of lattice sites with its neighbor structure.
#[derive(Debug, Clone)]
pub struct Region {
    shape: Shape,
    sites: Vec<AxialCoord>,
    kmin: i32,
    lmin: i32,
    width: usize,
    height: usize,
    grid: Vec<u32>,
    adjacency: Vec<[u32; 6]>,
    boundary: Option<BoundaryCycle>,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
    }
}

impl Region {
    pub fn ball(n: u32) -> Result<Self> {
        Self::new(Shape::Ball { n })
    }

    pub fn annulus(inner: u32, outer: u32) -> Result<Self> {
        Self::new(Shape::Annulus { inner, outer })
    }

    pub fn rhombus(w: u32, h: u32) -> Result<Self> {
        Self::new(Shape::Rhombus { w, h })
    }

    pub fn half_plane_annulus(inner: u32, outer: u32) -> Result<Self> {
        Self::new(Shape::HalfPlaneAnnulus { inner, outer })
    }

    pub fn torus(n: u32) -> Result<Self> {
        Self::new(Shape::Torus { n })
    }

    pub fn new(shape: Shape) -> Result<Self> {
        let sites: Vec<AxialCoord> = match &shape {
            Shape::Ball { n } => {
                let n = *n as i32;
                row_major(-n, n, -n, n, |c| c.norm() as i32 <= n)
            }
            Shape::Annulus { inner, outer } => {
                if inner >= outer {
                    return Err(Error::domain(format!("annulus needs inner < outer, got {inner} >= {outer}")));
                }
                let (a, b) = (*inner, *outer as i32);
                row_major(-b, b, -b, b, |c| c.norm() > a && c.norm() as i32 <= b)
            }
            Shape::HalfPlaneAnnulus { inner, outer } => {
                if inner >= outer {
                    return Err(Error::domain(format!("annulus needs inner < outer, got {inner} >= {outer}")));
                }
                let (a, b) = (*inner, *outer as i32);
                row_major(-b, b, 1, b, |c| c.norm() > a && c.norm() as i32 <= b)
            }
            Shape::Rhombus { w, h } => row_major(0, *w as i32, 0, *h as i32, |_| true),
            Shape::Torus { n } => {
                if *n == 0 {
                    return Err(Error::domain("torus size must be positive"));
                }
                let n = *n as i32;
                row_major(0, n - 1, 0, n - 1, |_| true)
            }
            Shape::Domain(spec) => discretize_sites(spec)?,
        };
        let mut region = Self::from_sites(shape, sites);
        if !matches!(region.shape, Shape::Torus { .. } | Shape::Annulus { .. }) {
            region.boundary = region.trace_boundary()?;
        }
        if let Shape::Domain(spec) = &region.shape {
            let spec = spec.clone();
            region.check_connected()?;
            region.place_marks(&spec)?;
        }
        Ok(region)
    }

    fn from_sites(shape: Shape, sites: Vec<AxialCoord>) -> Self {
        let (mut kmin, mut kmax, mut lmin, mut lmax) = (0, 0, 0, 0);
        if let Some(f) = sites.first() {
            (kmin, kmax, lmin, lmax) = (f.k, f.k, f.l, f.l);
        }
        for s in &sites {
            kmin = kmin.min(s.k);
            kmax = kmax.max(s.k);
            lmin = lmin.min(s.l);
            lmax = lmax.max(s.l);
        }
        let width = (kmax - kmin + 1) as usize;
        let height = (lmax - lmin + 1) as usize;
        let mut grid = vec![NONE; width * height];
        for (i, s) in sites.iter().enumerate() {
            grid[(s.l - lmin) as usize * width + (s.k - kmin) as usize] = i as u32;
        }
        let mut region = Region {
            shape,
            sites,
            kmin,
            lmin,
            width,
            height,
            grid,
            adjacency: Vec::new(),
            boundary: None,
        };
        let adjacency = region
            .sites
            .iter()
            .map(|&s| {
                let mut row = [NONE; 6];
                for (d, slot) in row.iter_mut().enumerate() {
                    *slot = region.ordinal(s.neighbor(d)).map_or(NONE, |i| i as u32);
                }
                row
            })
            .collect();
        region.adjacency = adjacency;
        region
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[AxialCoord] {
        &self.sites
    }

    pub fn site(&self, ordinal: usize) -> AxialCoord {
        self.sites[ordinal]
    }

    pub fn adjacency(&self) -> &[[u32; 6]] {
        &self.adjacency
    }

    pub fn boundary(&self) -> Option<&BoundaryCycle> {
        self.boundary.as_ref()
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.shape, Shape::Torus { .. })
    }

    /// Mesh size used for embedding (1 except for discretized domains).
    pub fn mesh(&self) -> f64 {
        match &self.shape {
            Shape::Domain(spec) => spec.delta,
            _ => 1.0,
        }
    }

    pub fn embed_site(&self, s: AxialCoord) -> Complex64 {
        s.embed() * self.mesh()
    }

    pub fn embed_vertex(&self, v: DualVertex) -> Complex64 {
        v.embed() * self.mesh()
    }

    /// Representative coordinate (reduced modulo `n` on a torus).
    pub fn canonical(&self, c: AxialCoord) -> AxialCoord {
        match self.shape {
            Shape::Torus { n } => {
                let n = n as i32;
                AxialCoord::new(c.k.rem_euclid(n), c.l.rem_euclid(n))
            }
            _ => c,
        }
    }

    /// Ordinal of `c`, wrapping on a torus.
    #[inline]
    pub fn ordinal(&self, c: AxialCoord) -> Option<usize> {
        let c = self.canonical(c);
        let dk = c.k - self.kmin;
        let dl = c.l - self.lmin;
        if dk < 0 || dl < 0 || dk as usize >= self.width || dl as usize >= self.height {
            return None;
        }
        let v = self.grid[dl as usize * self.width + dk as usize];
        (v != NONE).then_some(v as usize)
    }

    pub fn contains(&self, c: AxialCoord) -> bool {
        self.ordinal(c).is_some()
    }

    fn require(&self, c: AxialCoord) -> Result<usize> {
        self.ordinal(c)
            .ok_or_else(|| Error::domain(format!("site {c} is not in the region")))
    }

    /// Neighbors of `c` inside the region, counterclockwise from direction 0.
    pub fn neighbors(&self, c: AxialCoord) -> Result<Vec<AxialCoord>> {
        let i = self.require(c)?;
        Ok(self.adjacency[i]
            .iter()
            .filter(|&&j| j != NONE)
            .map(|&j| self.sites[j as usize])
            .collect())
    }

    pub fn region_sites(&self, selector: Selector) -> Result<Vec<AxialCoord>> {
        let invalid = || Error::selector(format!("{selector:?} is not defined for {:?}", self.shape_name()));
        match (&self.shape, selector) {
            (_, Selector::All) => Ok(self.sites.clone()),
            (Shape::Ball { n }, Selector::InnerBoundary) => Ok(ring(*n)),
            (Shape::Ball { n }, Selector::OuterBoundary) => Ok(ring(n + 1)),
            (Shape::Ball { n }, Selector::Side(i)) if (1..=6).contains(&i) && *n > 0 => {
                Ok(hexagon_side(*n, i))
            }
            (Shape::Annulus { inner, .. }, Selector::InnerBoundary) => Ok(ring(inner + 1)),
            (Shape::Annulus { outer, .. }, Selector::OuterBoundary) => Ok(ring(*outer)),
            (Shape::HalfPlaneAnnulus { inner, .. }, Selector::InnerBoundary) => {
                Ok(ring(inner + 1).into_iter().filter(|c| c.l >= 1).collect())
            }
            (Shape::HalfPlaneAnnulus { outer, .. }, Selector::OuterBoundary) => {
                Ok(ring(*outer).into_iter().filter(|c| c.l >= 1).collect())
            }
            (Shape::Rhombus { w, h }, Selector::Side(i)) if (1..=4).contains(&i) => {
                let (w, h) = (*w as i32, *h as i32);
                Ok(match i {
                    1 => (0..=w).map(|k| AxialCoord::new(k, 0)).collect(),
                    2 => (0..=h).map(|l| AxialCoord::new(w, l)).collect(),
                    3 => (0..=w).rev().map(|k| AxialCoord::new(k, h)).collect(),
                    _ => (0..=h).rev().map(|l| AxialCoord::new(0, l)).collect(),
                })
            }
            (Shape::Domain(_), Selector::Arc(i)) => {
                let b = self.boundary.as_ref().ok_or_else(invalid)?;
                if i >= b.marks.len() || b.marks.len() < 2 {
                    return Err(invalid());
                }
                Ok(self.arc_sites(i))
            }
            (Shape::Torus { .. }, _) | (Shape::Annulus { .. }, _) | (Shape::HalfPlaneAnnulus { .. }, _) => {
                Err(invalid())
            }
            (_, Selector::InnerBoundary) => {
                let b = self.boundary.as_ref().ok_or_else(invalid)?;
                Ok(dedup_keep_order(b.edges.iter().map(|e| e.0)))
            }
            (_, Selector::OuterBoundary) => {
                let b = self.boundary.as_ref().ok_or_else(invalid)?;
                Ok(dedup_keep_order(b.edges.iter().map(|e| e.1)))
            }
            _ => Err(invalid()),
        }
    }

    /// Interior sites adjacent to boundary arc `i` of a marked domain.
    pub fn arc_sites(&self, i: usize) -> Vec<AxialCoord> {
        let b = self.boundary.as_ref().expect("marked domain has a boundary");
        let m = b.marks.len();
        let edges = b.arc_edges(b.marks[i], b.marks[(i + 1) % m]);
        dedup_keep_order(edges.into_iter().map(|e| b.edges[e].0))
    }

    fn shape_name(&self) -> &'static str {
        match self.shape {
            Shape::Ball { .. } => "ball",
            Shape::Annulus { .. } => "annulus",
            Shape::Rhombus { .. } => "rhombus",
            Shape::HalfPlaneAnnulus { .. } => "halfplane-annulus",
            Shape::Torus { .. } => "torus",
            Shape::Domain(_) => "domain",
        }
    }

    fn check_connected(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::DegenerateDomain("no lattice site inside the polygon".into()));
        }
        let mut seen = vec![false; self.sites.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if v != NONE && !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v as usize);
                }
            }
        }
        if count != self.sites.len() {
            return Err(Error::DegenerateDomain(format!(
                "discretized site set is disconnected ({count} of {} sites reachable)",
                self.sites.len()
            )));
        }
        Ok(())
    }

    /// Walks every interior/exterior edge; returns the cycle when there is
    /// exactly one.
    fn trace_boundary(&self) -> Result<Option<BoundaryCycle>> {
        let mut visited: HashMap<(AxialCoord, AxialCoord), ()> = HashMap::new();
        let mut cycles = Vec::new();
        for (i, &s) in self.sites.iter().enumerate() {
            for d in 0..6 {
                if self.adjacency[i][d] != NONE {
                    continue;
                }
                let g = s.neighbor(d);
                if visited.contains_key(&(s, g)) {
                    continue;
                }
                let cyc = self.walk_boundary(s, g);
                for e in &cyc.edges {
                    visited.insert(*e, ());
                }
                cycles.push(cyc);
            }
        }
        match cycles.len() {
            0 => Ok(None),
            1 => Ok(cycles.pop()),
            k => match self.shape {
                Shape::Domain(_) => Err(Error::DegenerateDomain(format!(
                    "discretized domain has {k} boundary components; only simply connected domains are supported"
                ))),
                _ => Ok(None),
            },
        }
    }

    fn walk_boundary(&self, s: AxialCoord, g: AxialCoord) -> BoundaryCycle {
        // The exploration turn rule keeps "open" faces on the right, so the
        // exterior plays open and the walk circles the region counterclockwise.
        let d = s.direction_to(g).expect("adjacent");
        let start = DualVertex::corner(s, d);
        let (mut inner, mut outer, mut face) = (s, g, start);
        let mut vertices = vec![start];
        let mut edges = Vec::new();
        loop {
            let w = face.third(inner, outer);
            if self.contains(w) {
                inner = w;
            } else {
                outer = w;
            }
            edges.push((inner, outer));
            face = face.across(inner, outer);
            if face == start {
                break;
            }
            vertices.push(face);
        }
        BoundaryCycle { vertices, edges, marks: Vec::new() }
    }

    fn place_marks(&mut self, spec: &DomainSpec) -> Result<()> {
        let Some(mut b) = self.boundary.take() else {
            return Err(Error::DegenerateDomain("domain has no boundary cycle".into()));
        };
        let mut marks = Vec::with_capacity(spec.marks.len());
        for &z in &spec.marks {
            let i = b
                .nearest_transition(self, z)
                .ok_or_else(|| Error::DegenerateDomain("no boundary vertex for marked point".into()))?;
            if marks.contains(&i) {
                return Err(Error::DegenerateDomain(format!(
                    "marked points collapse onto the same boundary vertex at mesh {}",
                    spec.delta
                )));
            }
            marks.push(i);
        }
        // Marks are supplied counterclockwise; keep that cyclic order while
        // allowing the cycle's own starting point to fall anywhere.
        if marks.len() > 2 {
            let first = marks[0];
            let n = b.vertices.len();
            let rel: Vec<usize> = marks.iter().map(|&m| (m + n - first) % n).collect();
            if rel.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::DegenerateDomain(
                    "marked points are not in counterclockwise order along the boundary".into(),
                ));
            }
        }
        b.marks = marks;
        self.boundary = Some(b);
        Ok(())
    }
}

fn row_major(
    kmin: i32,
    kmax: i32,
    lmin: i32,
    lmax: i32,
    keep: impl Fn(AxialCoord) -> bool,
) -> Vec<AxialCoord> {
    let mut out = Vec::new();
    for l in lmin..=lmax {
        for k in kmin..=kmax {
            let c = AxialCoord::new(k, l);
            if keep(c) {
                out.push(c);
            }
        }
    }
    out
}

fn dedup_keep_order(it: impl Iterator<Item = AxialCoord>) -> Vec<AxialCoord> {
    let mut seen = std::collections::HashSet::new();
    it.filter(|c| seen.insert(*c)).collect()
}

/// Side `i` (1-based) of the hexagon `∂Λ_n`: the `n + 1` sites from corner
/// `i - 1` to corner `i`, both corners included.
///
/// Adjacent sides share their corner site; a corner touches the exterior
/// along both sides, which is what keeps the open/closed side-crossing
/// duality exact.
pub fn hexagon_side(n: u32, i: usize) -> Vec<AxialCoord> {
    let r = ring(n);
    let n = n as usize;
    let start = (i - 1) * n;
    (0..=n).map(|j| r[(start + j) % r.len()]).collect()
}

// ---------------------------------------------------------------------------
// Polygon discretization

/// Closed point-in-polygon test: points on an edge count as inside.
pub fn point_in_polygon(poly: &[Complex64], z: Complex64) -> bool {
    let n = poly.len();
    for i in 0..n {
        if on_segment(poly[i], poly[(i + 1) % n], z) {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.im > z.im) != (b.im > z.im) {
            let x = a.re + (z.im - a.im) * (b.re - a.re) / (b.im - a.im);
            if z.re < x {
                inside = !inside;
            }
        }
    }
    inside
}

const GEOM_EPS: f64 = 1e-9;

fn on_segment(a: Complex64, b: Complex64, z: Complex64) -> bool {
    let ab = b - a;
    let az = z - a;
    let cross = ab.re * az.im - ab.im * az.re;
    let len = ab.norm();
    if len == 0.0 {
        return az.norm() <= GEOM_EPS;
    }
    if cross.abs() > GEOM_EPS * len {
        return false;
    }
    let t = (ab.re * az.re + ab.im * az.im) / (len * len);
    (-GEOM_EPS..=1.0 + GEOM_EPS).contains(&t)
}

fn segments_cross_properly(p1: Complex64, p2: Complex64, q1: Complex64, q2: Complex64) -> bool {
    let orient = |a: Complex64, b: Complex64, c: Complex64| {
        let v = (b.re - a.re) * (c.im - a.im) - (b.im - a.im) * (c.re - a.re);
        if v > GEOM_EPS {
            1
        } else if v < -GEOM_EPS {
            -1
        } else {
            0
        }
    };
    let (o1, o2) = (orient(p1, p2, q1), orient(p1, p2, q2));
    let (o3, o4) = (orient(q1, q2, p1), orient(q1, q2, p2));
    o1 * o2 < 0 && o3 * o4 < 0
}

fn segment_inside(poly: &[Complex64], a: Complex64, b: Complex64) -> bool {
    let n = poly.len();
    if !point_in_polygon(poly, (a + b) * 0.5) {
        return false;
    }
    !(0..n).any(|i| segments_cross_properly(a, b, poly[i], poly[(i + 1) % n]))
}

fn validate_polygon(spec: &DomainSpec) -> Result<()> {
    let poly = &spec.polygon;
    if poly.len() < 3 {
        return Err(Error::domain("polygon needs at least 3 vertices"));
    }
    if !(spec.delta.is_finite() && spec.delta > 0.0) {
        return Err(Error::domain(format!("mesh must be positive, got {}", spec.delta)));
    }
    if poly.iter().chain(&spec.marks).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::domain("non-finite coordinate"));
    }
    let n = poly.len();
    for i in 0..n {
        for j in i + 1..n {
            if (j == i + 1) || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross_properly(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return Err(Error::domain("polygon is not simple"));
            }
        }
    }
    let area: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.re * b.im - b.re * a.im
        })
        .sum();
    if area <= 0.0 {
        return Err(Error::domain("polygon must be given counterclockwise"));
    }
    Ok(())
}

/// Sites of `δ𝕋` inside the polygon; pairs of inside sites whose joining
/// edge leaves the polygon drop both endpoints so that every kept lattice
/// edge lies inside.
fn discretize_sites(spec: &DomainSpec) -> Result<Vec<AxialCoord>> {
    validate_polygon(spec)?;
    let d = spec.delta;
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for z in &spec.polygon {
        xmin = xmin.min(z.re);
        xmax = xmax.max(z.re);
        ymin = ymin.min(z.im);
        ymax = ymax.max(z.im);
    }
    let lmin = (ymin / (d * 0.5 * SQRT3)).floor() as i64 - 1;
    let lmax = (ymax / (d * 0.5 * SQRT3)).ceil() as i64 + 1;
    let span = ((lmax - lmin + 3) as f64) * (((xmax - xmin) / d).ceil() + 3.0);
    if span > 5.0e7 {
        return Err(Error::Capacity(format!("discretization would scan {span:.0} lattice points")));
    }
    let mut inside = std::collections::HashSet::new();
    for l in lmin..=lmax {
        let kmin = ((xmin / d) - 0.5 * l as f64).floor() as i64 - 1;
        let kmax = ((xmax / d) - 0.5 * l as f64).ceil() as i64 + 1;
        for k in kmin..=kmax {
            let c = AxialCoord::new(k as i32, l as i32);
            if point_in_polygon(&spec.polygon, c.embed() * d) {
                inside.insert(c);
            }
        }
    }
    let mut drop = std::collections::HashSet::new();
    for &c in &inside {
        for dir in 0..3 {
            let nb = c.neighbor(dir);
            if inside.contains(&nb) && !segment_inside(&spec.polygon, c.embed() * d, nb.embed() * d) {
                drop.insert(c);
                drop.insert(nb);
            }
        }
    }
    let mut sites: Vec<AxialCoord> = inside.into_iter().filter(|c| !drop.contains(c)).collect();
    sites.sort_by_key(|c| (c.l, c.k));
    Ok(sites)
}

/// Builds the marked discrete domain `Ω ∩ δ𝕋` for a counterclockwise simple
/// polygon.
pub fn discretize_domain(polygon: Vec<Complex64>, delta: f64, marks: Vec<Complex64>) -> Result<Region> {
    Region::new(Shape::Domain(DomainSpec { polygon, delta, marks }))
}

/// The reference equilateral triangle with vertices `0`, `1`, `e^{iπ/3}`.
pub fn unit_triangle() -> Vec<Complex64> {
    vec![
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(0.5, 0.5 * SQRT3),
    ]
}
