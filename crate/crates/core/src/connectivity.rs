//! Per-configuration connectivity: clusters, crossings, circuits around
//! the origin and winding clusters on the torus.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::lattice::{ring, AxialCoord, Region, Shape, DIRECTIONS, NONE};
use crate::sampler::{Configuration, SiteColors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Color {
    Open,
    Closed,
}

impl Color {
    #[inline]
    pub fn matches(self, open: bool) -> bool {
        open == (self == Color::Open)
    }

    pub fn swap(self) -> Color {
        match self {
            Color::Open => Color::Closed,
            Color::Closed => Color::Open,
        }
    }

    pub fn from_bit(open: bool) -> Color {
        if open {
            Color::Open
        } else {
            Color::Closed
        }
    }
}

/// Disjoint-set forest with path halving and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), rank: vec![0; n] }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if self.rank[ra as usize] < self.rank[rb as usize] { (ra, rb) } else { (rb, ra) };
        self.parent[lo as usize] = hi;
        if self.rank[lo as usize] == self.rank[hi as usize] {
            self.rank[hi as usize] += 1;
        }
        true
    }
}

/// Clusters of one color: sites of that color share a root iff a path of
/// that color joins them.
#[derive(Debug, Clone)]
pub struct ClusterLabeling {
    uf: UnionFind,
    member: Vec<bool>,
    color: Color,
}

impl ClusterLabeling {
    pub fn new(c: &Configuration, color: Color) -> Self {
        Self::with_mask(c.region(), (0..c.len()).map(|i| color.matches(c.is_open(i))).collect(), color)
    }

    /// Clusters of the sites flagged in `member`.
    pub fn with_mask(region: &Region, member: Vec<bool>, color: Color) -> Self {
        let mut uf = UnionFind::new(region.len());
        for (i, row) in region.adjacency().iter().enumerate() {
            if !member[i] {
                continue;
            }
            // Every edge is {x, x + d} for exactly one forward direction d,
            // torus wraps included.
            for &j in &row[..3] {
                if j != NONE && member[j as usize] {
                    uf.union(i as u32, j);
                }
            }
        }
        ClusterLabeling { uf, member, color }
    }

    pub fn color(&self) -> Color {
        self.color
    }

    pub fn root(&mut self, ordinal: usize) -> Option<u32> {
        self.member[ordinal].then(|| self.uf.find(ordinal as u32))
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        match (self.root(a), self.root(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }
}

fn ordinals(region: &Region, sites: &[AxialCoord]) -> Result<Vec<usize>> {
    sites
        .iter()
        .map(|&s| region.ordinal(s).ok_or_else(|| Error::domain(format!("site {s} is not in the region"))))
        .collect()
}

/// Whether a path of `color` inside the region joins `a` to `b`. Empty
/// sets are never connected.
pub fn connected(c: &Configuration, a: &[AxialCoord], b: &[AxialCoord], color: Color) -> Result<bool> {
    let region = c.region();
    let (a, b) = (ordinals(region, a)?, ordinals(region, b)?);
    Ok(crossing(c, &a, &b, color, |_| true))
}

/// Breadth-first search over sites of `color` admitted by `allowed`, from
/// `sources` until any of `targets` is hit.
pub fn crossing(
    c: &Configuration,
    sources: &[usize],
    targets: &[usize],
    color: Color,
    allowed: impl Fn(usize) -> bool,
) -> bool {
    let region = c.region();
    let mut is_target = vec![false; region.len()];
    for &t in targets {
        is_target[t] = true;
    }
    let mut seen = vec![false; region.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if !seen[s] && allowed(s) && color.matches(c.is_open(s)) {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    let adj = region.adjacency();
    while let Some(u) = queue.pop_front() {
        if is_target[u] {
            return true;
        }
        for &v in &adj[u] {
            let v = v as usize;
            if v != NONE as usize && !seen[v] && allowed(v) && color.matches(c.is_open(v)) {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    false
}

fn covers_annulus(region: &Region, n: u32, big_n: u32) -> bool {
    if region.is_torus() {
        return false;
    }
    [ring(n + 1), ring(big_n)].iter().flatten().all(|&s| region.contains(s))
        && matches!(region.shape(), Shape::Ball { .. } | Shape::Annulus { .. })
}

/// Whether a circuit of `color` in `{x : n < d(x, 0) ≤ N}` surrounds the
/// origin, decided by the absence of a crossing of the other color.
pub fn has_circuit_in_annulus(c: &Configuration, n: u32, big_n: u32, color: Color) -> Result<bool> {
    if n == 0 || n >= big_n {
        return Err(Error::domain(format!("circuit annulus needs 1 <= n < N, got n = {n}, N = {big_n}")));
    }
    let region = c.region();
    if !covers_annulus(region, n, big_n) {
        return Err(Error::domain(format!("configuration does not cover the annulus ({n}, {big_n}]")));
    }
    let inner = ordinals(region, &ring(n + 1))?;
    let outer = ordinals(region, &ring(big_n))?;
    let blocked = crossing(c, &inner, &outer, color.swap(), |i| {
        let d = region.site(i).norm();
        d > n && d <= big_n
    });
    Ok(!blocked)
}

/// Size of the open cluster of the origin (0 when the origin is closed).
pub fn cluster_size_at_origin(c: &Configuration) -> usize {
    let Some(o) = c.region().ordinal(AxialCoord::ORIGIN) else {
        return 0;
    };
    if !c.is_open(o) {
        return 0;
    }
    let mut seen = vec![false; c.len()];
    seen[o] = true;
    let mut stack = vec![o];
    let mut size = 0;
    let adj = c.region().adjacency();
    while let Some(u) = stack.pop() {
        size += 1;
        for &v in &adj[u] {
            if v != NONE && !seen[v as usize] && c.is_open(v as usize) {
                seen[v as usize] = true;
                stack.push(v as usize);
            }
        }
    }
    size
}

/// Largest distance from the origin reached by its open cluster, stopping
/// early once `limit` is reached; `None` when the origin is closed.
///
/// Works on any [`SiteColors`], so a lazily generated configuration only
/// pays for the sites next to the cluster.
pub fn origin_reach<C: SiteColors>(colors: &mut C, limit: u32, scratch: &mut Vec<u32>) -> Option<u32> {
    let o = colors.region().ordinal(AxialCoord::ORIGIN)?;
    if !colors.open(o) {
        return None;
    }
    // `scratch` holds visited ordinals; the caller's buffer avoids an
    // allocation proportional to the region per sample.
    scratch.clear();
    let mut seen = std::collections::HashSet::new();
    seen.insert(o as u32);
    scratch.push(o as u32);
    let mut best = 0;
    let mut head = 0;
    while head < scratch.len() {
        let u = scratch[head] as usize;
        head += 1;
        let s = colors.region().site(u);
        best = best.max(s.norm());
        if best >= limit {
            return Some(best);
        }
        for d in 0..6 {
            let v = colors.region().adjacency()[u][d];
            if v != NONE && !seen.contains(&v) && colors.open(v as usize) {
                seen.insert(v);
                scratch.push(v);
            }
        }
    }
    Some(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Homology {
    /// Winding along the `k` axis.
    First,
    /// Winding along the `l` axis.
    Second,
}

/// Whether a cluster of `color` on the torus contains a cycle whose
/// homology class has a nonzero `direction` coordinate.
pub fn torus_winding(c: &Configuration, color: Color, direction: Homology) -> Result<bool> {
    let region = c.region();
    let Shape::Torus { n } = *region.shape() else {
        return Err(Error::domain("torus winding needs a torus region"));
    };
    let wraps = winding_vectors(c, color);
    let n = n as i32;
    Ok(wraps.iter().any(|w| match direction {
        Homology::First => w.k / n != 0,
        Homology::Second => w.l / n != 0,
    }))
}

/// Displacements of the non-tree edges closing cycles in an
/// offset-carrying union-find over the torus; each is a multiple of `n`
/// in both coordinates and nonzero ones generate the homology of the
/// clusters.
pub fn winding_vectors(c: &Configuration, color: Color) -> Vec<AxialCoord> {
    let region = c.region();
    let m = region.len();
    let mut parent: Vec<u32> = (0..m as u32).collect();
    // Lifted position of a node minus that of its parent.
    let mut offset = vec![AxialCoord::ORIGIN; m];
    let mut rank = vec![0u8; m];
    fn find(parent: &mut [u32], offset: &mut [AxialCoord], mut x: u32) -> (u32, AxialCoord) {
        let mut path = Vec::new();
        while parent[x as usize] != x {
            path.push(x);
            x = parent[x as usize];
        }
        let root = x;
        // Compress, accumulating offsets from the top of the path down.
        let mut acc = AxialCoord::ORIGIN;
        for &y in path.iter().rev() {
            acc = acc + offset[y as usize];
            offset[y as usize] = acc;
            parent[y as usize] = root;
        }
        (root, path.first().map_or(AxialCoord::ORIGIN, |&y| offset[y as usize]))
    }
    let mut wraps = Vec::new();
    for i in 0..m {
        if !color.matches(c.is_open(i)) {
            continue;
        }
        for (d, &dir) in DIRECTIONS.iter().enumerate().take(3) {
            let j = region.adjacency()[i][d];
            if j == NONE || !color.matches(c.is_open(j as usize)) {
                continue;
            }
            let (ri, oi) = find(&mut parent, &mut offset, i as u32);
            let (rj, oj) = find(&mut parent, &mut offset, j);
            // Lift j to i's copy plus the step: pos_j = pos_i + dir.
            if ri == rj {
                let w = oi + dir - oj;
                if w != AxialCoord::ORIGIN {
                    wraps.push(w);
                }
                continue;
            }
            // pos(rj) = pos_j - oj = pos_i + dir - oj = pos(ri) + oi + dir - oj.
            let delta = oi + dir - oj;
            if rank[ri as usize] >= rank[rj as usize] {
                parent[rj as usize] = ri;
                offset[rj as usize] = delta;
                if rank[ri as usize] == rank[rj as usize] {
                    rank[ri as usize] += 1;
                }
            } else {
                parent[ri as usize] = rj;
                offset[ri as usize] = AxialCoord::ORIGIN - delta;
            }
        }
    }
    wraps
}
