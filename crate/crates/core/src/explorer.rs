//! Interfaces on the hexagonal dual: the chordal exploration path and the
//! decomposition of all open/closed interfaces into curves.
//!
//! Every walk here uses one turn rule. The walker sits on a triangle `T`
//! having crossed the edge between an open site `o` and a closed site `c`;
//! the third site `w` of `T` replaces `o` if open and `c` otherwise, and
//! the walker crosses the new `{o, c}` edge. Open faces stay on the
//! walker's right.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{AxialCoord, BoundaryCycle, DualEdge, DualVertex, Region};
use crate::sampler::{Configuration, SiteColors};

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationPath {
    pub vertices: Vec<DualVertex>,
    /// `(open, closed)` faces of the edge crossed into `vertices[i + 1]`.
    pub edges: Vec<(AxialCoord, AxialCoord)>,
    pub start: DualVertex,
    pub end: DualVertex,
}

impl ExplorationPath {
    /// Vertex positions in region units.
    pub fn points(&self, region: &Region) -> Vec<Complex64> {
        self.vertices.iter().map(|&v| region.embed_vertex(v)).collect()
    }
}

/// Boundary colors for a chordal exploration from `a` to `b`: exterior
/// faces along the counterclockwise arc `a → b` are open, the rest closed.
/// A face bordering both arcs is open.
#[derive(Debug, Clone)]
pub struct Dobrushin {
    pub a: DualVertex,
    pub b: DualVertex,
    ghosts: HashMap<AxialCoord, bool>,
}

impl Dobrushin {
    pub fn new(region: &Region, a: DualVertex, b: DualVertex) -> Result<Self> {
        let cycle = region
            .boundary()
            .ok_or_else(|| Error::domain("region has no single boundary cycle"))?;
        let ia = boundary_index(cycle, a, "a")?;
        let ib = boundary_index(cycle, b, "b")?;
        if ia == ib {
            return Err(Error::domain("exploration endpoints coincide"));
        }
        if !cycle.is_transition(ia, region) || !cycle.is_transition(ib, region) {
            return Err(Error::domain("exploration endpoints must touch two exterior faces"));
        }
        let mut ghosts = HashMap::new();
        for e in cycle.arc_edges(ia, ib) {
            ghosts.insert(cycle.edges[e].1, true);
        }
        for e in cycle.arc_edges(ib, ia) {
            ghosts.entry(cycle.edges[e].1).or_insert(false);
        }
        Ok(Dobrushin { a, b, ghosts })
    }

    /// Endpoints given as indices of marked points of a domain.
    pub fn between_marks(region: &Region, from: usize, to: usize) -> Result<Self> {
        let cycle = region.boundary().ok_or_else(|| Error::domain("region has no boundary"))?;
        let get = |i: usize| {
            cycle
                .marks
                .get(i)
                .map(|&m| cycle.vertices[m])
                .ok_or_else(|| Error::domain(format!("no marked point {i}")))
        };
        Self::new(region, get(from)?, get(to)?)
    }

    /// Color of an exterior face; `None` for faces not on the boundary.
    pub fn ghost(&self, s: AxialCoord) -> Option<bool> {
        self.ghosts.get(&s).copied()
    }
}

fn boundary_index(cycle: &BoundaryCycle, v: DualVertex, name: &str) -> Result<usize> {
    cycle
        .index_of(v)
        .ok_or_else(|| Error::domain(format!("{name} = {v:?} is not a boundary vertex")))
}

/// Colors seen by the walker: configuration colors inside, boundary colors
/// outside, and the faces fixed by a replayed prefix.
struct Faces<'a, C> {
    colors: C,
    bc: &'a Dobrushin,
    fixed: HashMap<AxialCoord, bool>,
}

impl<C: SiteColors> Faces<'_, C> {
    fn color(&mut self, s: AxialCoord) -> Option<bool> {
        if let Some(&f) = self.fixed.get(&s) {
            return Some(f);
        }
        match self.colors.region().ordinal(s) {
            Some(i) => Some(self.colors.open(i)),
            None => self.bc.ghost(s),
        }
    }
}

/// The chordal exploration path from `a` to `b`.
///
/// With a prefix (which must start at `a`), the walk first replays it; each
/// replayed step fixes the color of the face it turns around, and the walk
/// then continues from the prefix tip with those faces fixed.
pub fn explore_chordal(
    c: &Configuration,
    a: DualVertex,
    b: DualVertex,
    prefix: Option<&[DualVertex]>,
) -> Result<ExplorationPath> {
    let bc = Dobrushin::new(c.region(), a, b)?;
    explore_with(c, &bc, prefix)
}

/// [`explore_chordal`] with precomputed boundary colors, for any color
/// source.
pub fn explore_with<C: SiteColors>(colors: C, bc: &Dobrushin, prefix: Option<&[DualVertex]>) -> Result<ExplorationPath> {
    let budget = 10 * colors.region().len() + 16;
    let a = bc.a;
    let (open0, closed0) = start_faces(bc, a)?;
    let mut faces = Faces { colors, bc, fixed: HashMap::new() };
    let (mut t, mut o, mut c) = (a, open0, closed0);
    let mut vertices = vec![a];
    let mut edges = Vec::new();

    if let Some(prefix) = prefix {
        if prefix.first() != Some(&a) {
            return Err(Error::Contract("prefix must start at the exploration start".into()));
        }
        for &next in &prefix[1..] {
            if t == bc.b {
                return Err(Error::Contract("prefix continues past the exploration target".into()));
            }
            let w = t.third(o, c);
            let w_open = if next == t.across(w, c) {
                true
            } else if next == t.across(o, w) {
                false
            } else {
                return Err(Error::Contract(format!("prefix step {t:?} -> {next:?} is not a move of the exploration")));
            };
            match faces.color(w) {
                Some(known) if faces.fixed.contains_key(&w) || faces.colors.region().ordinal(w).is_none() => {
                    if known != w_open {
                        return Err(Error::Contract(format!("prefix contradicts the color of face {w}")));
                    }
                }
                None => return Err(Error::Contract(format!("prefix leaves the domain at face {w}"))),
                Some(_) => {
                    faces.fixed.insert(w, w_open);
                }
            }
            if w_open {
                o = w;
            } else {
                c = w;
            }
            t = next;
            vertices.push(t);
            edges.push((o, c));
        }
    }

    while t != bc.b {
        if edges.len() > budget {
            return Err(Error::Contract(format!("exploration exceeded its step budget of {budget}")));
        }
        let w = t.third(o, c);
        match faces.color(w) {
            Some(true) => o = w,
            Some(false) => c = w,
            None => return Err(Error::Contract(format!("exploration left the domain near {t:?}"))),
        }
        t = t.across(o, c);
        vertices.push(t);
        edges.push((o, c));
    }
    Ok(ExplorationPath { vertices, edges, start: a, end: bc.b })
}

fn start_faces(bc: &Dobrushin, a: DualVertex) -> Result<(AxialCoord, AxialCoord)> {
    let mut open = None;
    let mut closed = None;
    for s in a.sites() {
        match bc.ghost(s) {
            Some(true) => open = Some(s),
            Some(false) => closed = Some(s),
            None => {}
        }
    }
    match (open, closed) {
        (Some(o), Some(c)) => Ok((o, c)),
        _ => Err(Error::domain("start vertex does not separate the two boundary arcs")),
    }
}

/// Exports one vertex per line as `x y` with 12 decimals.
pub fn export_points(points: &[Complex64]) -> String {
    let mut out = String::new();
    for z in points {
        let _ = writeln!(out, "{:.12} {:.12}", z.re, z.im);
    }
    out
}

pub fn parse_points(text: &str) -> Result<Vec<Complex64>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut it = line.split_whitespace();
            let (Some(x), Some(y), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::parse(format!("expected `x y`, got `{line}`")));
            };
            let x: f64 = x.parse().map_err(|_| Error::parse(format!("bad number `{x}`")))?;
            let y: f64 = y.parse().map_err(|_| Error::parse(format!("bad number `{y}`")))?;
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::parse("non-finite coordinate"));
            }
            Ok(Complex64::new(x, y))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Interface curves

#[derive(Debug, Clone, PartialEq)]
pub struct DualCurve {
    pub vertices: Vec<DualVertex>,
    /// Loops repeat no vertex; `vertices[0]` follows the last one.
    pub closed: bool,
}

impl DualCurve {
    pub fn edge_count(&self) -> usize {
        if self.closed {
            self.vertices.len()
        } else {
            self.vertices.len() - 1
        }
    }
}

/// All open/closed interfaces between region sites, split into loops and
/// strands. Strands end at triangles with an exterior face. Every fully
/// interior triangle meets 0 or 2 interface edges, so the split is forced.
pub fn interface_curves(c: &Configuration) -> Vec<DualCurve> {
    let region = c.region();
    let mut incident: HashMap<DualVertex, Vec<DualEdge>> = HashMap::new();
    for (i, &s) in region.sites().iter().enumerate() {
        for d in 0..3 {
            let j = region.adjacency()[i][d];
            if j == crate::lattice::NONE || c.is_open(i) == c.is_open(j as usize) {
                continue;
            }
            let e = DualEdge::new(s, region.site(j as usize));
            let (x, y) = e.endpoints();
            incident.entry(x).or_default().push(e);
            incident.entry(y).or_default().push(e);
        }
    }
    let mut used: HashSet<DualEdge> = HashSet::new();
    let mut curves = Vec::new();
    let mut ends: Vec<DualVertex> = incident.iter().filter(|(_, es)| es.len() == 1).map(|(&v, _)| v).collect();
    ends.sort();
    for v in ends {
        if used.contains(&incident[&v][0]) {
            continue;
        }
        curves.push(DualCurve { vertices: follow(v, &incident, &mut used), closed: false });
    }
    let mut rest: Vec<DualVertex> = incident.keys().copied().collect();
    rest.sort();
    for v in rest {
        if incident[&v].iter().all(|e| used.contains(e)) {
            continue;
        }
        let mut vs = follow(v, &incident, &mut used);
        vs.pop();
        curves.push(DualCurve { vertices: vs, closed: true });
    }
    curves
}

fn follow(start: DualVertex, incident: &HashMap<DualVertex, Vec<DualEdge>>, used: &mut HashSet<DualEdge>) -> Vec<DualVertex> {
    let mut vs = vec![start];
    let mut v = start;
    while let Some(&e) = incident[&v].iter().find(|e| !used.contains(e)) {
        used.insert(e);
        let (x, y) = e.endpoints();
        v = if x == v { y } else { x };
        vs.push(v);
    }
    vs
}

/// An interface strand traced from a boundary triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Strand {
    pub vertices: Vec<DualVertex>,
    /// The exterior face at the far end.
    pub end_face: AxialCoord,
    /// The open and closed band faces of the starting triangle.
    pub first_open: AxialCoord,
    pub first_closed: AxialCoord,
}

/// Follows the interface entering the band through the boundary triangle
/// `t` from the exterior face `ghost`, over sites admitted by `inside`.
/// Returns `None` when the two band sites of `t` have the same color.
pub fn trace_strand<C: SiteColors>(
    colors: &mut C,
    inside: &impl Fn(AxialCoord) -> bool,
    t: DualVertex,
    ghost: AxialCoord,
    budget: usize,
) -> Result<Option<Strand>> {
    let others: Vec<AxialCoord> = t.sites().into_iter().filter(|&s| s != ghost).collect();
    let color = |colors: &mut C, s: AxialCoord| -> bool {
        let i = colors.region().ordinal(s).expect("band sites lie in the region");
        colors.open(i)
    };
    let (x, y) = (others[0], others[1]);
    if !inside(x) || !inside(y) {
        return Ok(None);
    }
    let (cx, cy) = (color(colors, x), color(colors, y));
    if cx == cy {
        return Ok(None);
    }
    let (mut o, mut c) = if cx { (x, y) } else { (y, x) };
    let (first_open, first_closed) = (o, c);
    // Step off the boundary triangle across the {o, c} edge.
    let mut cur = t.across(o, c);
    let mut vertices = vec![t, cur];
    loop {
        if vertices.len() > budget {
            return Err(Error::Contract("interface strand exceeded its step budget".into()));
        }
        let w = cur.third(o, c);
        if !inside(w) {
            return Ok(Some(Strand { vertices, end_face: w, first_open, first_closed }));
        }
        if color(colors, w) {
            o = w;
        } else {
            c = w;
        }
        cur = cur.across(o, c);
        vertices.push(cur);
    }
}

/// Boundary triangles of the band `inside` that touch the exterior face
/// `ghost`, each paired with it.
pub fn boundary_triangles(ghost: AxialCoord, inside: &impl Fn(AxialCoord) -> bool) -> Vec<DualVertex> {
    (0..6)
        .map(|j| DualVertex::corner(ghost, j))
        .filter(|t| t.sites().iter().filter(|&&s| s != ghost).all(|&s| inside(s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::lattice::{discretize_domain, unit_triangle, Face};

    fn triangle(m: usize) -> Arc<Region> {
        Arc::new(discretize_domain(unit_triangle(), 1.0 / m as f64, unit_triangle()).unwrap())
    }

    fn marks(r: &Region) -> Vec<DualVertex> {
        let b = r.boundary().unwrap();
        b.marks.iter().map(|&m| b.vertices[m]).collect()
    }

    #[test]
    fn monochromatic_paths_hug_the_opposite_arc() {
        let r = triangle(6);
        let m = marks(&r);
        let b = r.boundary().unwrap();
        for open in [true, false] {
            let c = Configuration::all(&r, open);
            let path = explore_chordal(&c, m[0], m[1], None).unwrap();
            assert_eq!(*path.vertices.last().unwrap(), m[1]);
            // All-open: every crossed edge has a closed ghost face, which
            // lies on the arc from b back to a.
            let (ia, ib) = (b.marks[0], b.marks[1]);
            let arc = if open { b.arc_edges(ib, ia) } else { b.arc_edges(ia, ib) };
            let arc_ghosts: HashSet<_> = arc.iter().map(|&e| b.edges[e].1).collect();
            for &(o, cl) in &path.edges[..path.edges.len() - 1] {
                let ghost = if open { cl } else { o };
                assert!(!r.contains(ghost));
                assert!(arc_ghosts.contains(&ghost), "{ghost}");
            }
        }
    }

    #[test]
    fn path_edges_separate_open_right_from_closed() {
        let r = triangle(10);
        let m = marks(&r);
        for j in 0..50 {
            let c = crate::sampler::sample(&r, 0.5, 11, j);
            let bc = Dobrushin::new(&r, m[0], m[1]).unwrap();
            let path = explore_with(&c, &bc, None).unwrap();
            let mut seen = HashSet::new();
            for (i, &(o, cl)) in path.edges.iter().enumerate() {
                assert!(seen.insert(DualEdge::new(o, cl)), "edge reused");
                let col = |s: AxialCoord| c.color_at(s).or_else(|| bc.ghost(s)).unwrap();
                assert!(col(o) && !col(cl));
                let (u, v) = (path.vertices[i], path.vertices[i + 1]);
                assert!(u.contains(o) && u.contains(cl) && v.contains(o) && v.contains(cl));
                // Open face on the right of the step u -> v.
                let step = v.embed() - u.embed();
                let side = o.embed() - u.embed();
                assert!(step.re * side.im - step.im * side.re < 0.0);
            }
        }
    }

    #[test]
    fn single_closed_site_loop() {
        let r = Arc::new(Region::ball(3).unwrap());
        let c = Configuration::from_fn(&r, |_, s| s != AxialCoord::ORIGIN);
        let curves = interface_curves(&c);
        assert_eq!(curves.len(), 1);
        assert!(curves[0].closed);
        assert_eq!(curves[0].edge_count(), 6);
        assert!(interface_curves(&Configuration::all(&r, true)).is_empty());
    }

    #[test]
    fn prefix_replay_reproduces_path() {
        let r = triangle(8);
        let m = marks(&r);
        for j in 0..20 {
            let c = crate::sampler::sample(&r, 0.5, 5, j);
            let full = explore_chordal(&c, m[0], m[2], None).unwrap();
            for cut in [1, 3, full.vertices.len() / 2, full.vertices.len()] {
                let again = explore_chordal(&c, m[0], m[2], Some(&full.vertices[..cut])).unwrap();
                assert_eq!(again.vertices, full.vertices);
            }
        }
    }

    #[test]
    fn malformed_prefix_rejected() {
        let r = triangle(8);
        let m = marks(&r);
        let c = Configuration::all(&r, true);
        let bogus = [m[0], DualVertex::new(AxialCoord::new(40, 40), Face::Up)];
        assert!(matches!(explore_chordal(&c, m[0], m[1], Some(&bogus)), Err(Error::Contract(_))));
        assert!(matches!(explore_chordal(&c, m[0], m[1], Some(&[m[1]])), Err(Error::Contract(_))));
    }

    #[test]
    fn export_round_trip() {
        let pts = vec![Complex64::new(0.5, 0.25), Complex64::new(-1.0, 3.0)];
        let text = export_points(&pts);
        assert_eq!(text, "0.500000000000 0.250000000000\n-1.000000000000 3.000000000000\n");
        assert_eq!(parse_points(&text).unwrap(), pts);
        assert!(parse_points("1 2 3").is_err());
        assert!(parse_points("1 inf").is_err());
    }
}
