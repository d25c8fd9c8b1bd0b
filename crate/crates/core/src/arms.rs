//! Arm events: disjoint colored crossings of an annulus in a prescribed
//! counterclockwise order, plus pivotal and five-arm sites of rhombi.
//!
//! Arms of a query `(n, N)` use the sites with `n ≤ d(x, 0) ≤ N`, and for
//! half-plane queries only those with `l ≥ 1`. Whole-plane queries with
//! two or more arms (or with landing intervals) cut the annulus along the
//! ray `{y = -√3/4, x ≥ 0}` just below the positive real axis: arms may
//! not use a lattice edge crossing it, and counterclockwise order is read
//! as a linear order starting at the cut. Cyclic queries accept any
//! rotation of `σ`.
//!
//! Detection peels arms one at a time. The clockwise-most arm of color
//! `σ₁` is found by a right-hand depth-first search from the inner
//! boundary, sources taken counterclockwise; the next search runs in the
//! part of the band counterclockwise of it.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::connectivity::{crossing, ClusterLabeling, Color};
use crate::error::{Error, Result};
use crate::explorer::trace_strand;
use crate::lattice::{ring, turn_angle, AxialCoord, DualVertex, Region, Shape, DIRECTIONS, NONE, SQRT3};
use crate::sampler::{Configuration, SiteColors};

/// Largest band accepted by the backtracking oracle.
pub const ORACLE_LIMIT: usize = 60;

/// An angular interval in turns (fractions of a full turn),
/// counterclockwise from the positive real axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, turns: f64) -> bool {
        turns >= self.lo && turns <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landing {
    /// Where arm `i` starts on `∂Λ_n`.
    pub inner: Vec<Interval>,
    /// Where arm `i` ends on `∂Λ_N`.
    pub outer: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmQuery {
    /// Colors counterclockwise, `true` = open.
    pub sigma: Vec<bool>,
    pub n: u32,
    pub big_n: u32,
    pub halfplane: bool,
    pub landing: Option<Landing>,
}

impl ArmQuery {
    pub fn new(sigma: &[bool], n: u32, big_n: u32, halfplane: bool) -> Result<Self> {
        let q = ArmQuery { sigma: sigma.to_vec(), n, big_n, halfplane, landing: None };
        q.validate()?;
        Ok(q)
    }

    /// Parses a color word such as `"10100"`.
    pub fn colors(word: &str) -> Result<Vec<bool>> {
        word.chars()
            .map(|ch| match ch {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(Error::parse(format!("color `{ch}` is not 0 or 1"))),
            })
            .collect()
    }

    pub fn with_landing(mut self, landing: Landing) -> Result<Self> {
        self.landing = Some(landing);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_empty() {
            return Err(Error::domain("arm query needs at least one color"));
        }
        if self.n >= self.big_n {
            return Err(Error::domain(format!("arm query needs n < N, got {} >= {}", self.n, self.big_n)));
        }
        if self.halfplane && self.n == 0 {
            return Err(Error::domain("half-plane arm query needs n >= 1"));
        }
        if let Some(l) = &self.landing {
            let max = if self.halfplane { 0.5 } else { 1.0 };
            for list in [&l.inner, &l.outer] {
                if list.len() != self.sigma.len() {
                    return Err(Error::domain("need one landing interval per arm"));
                }
                for (i, iv) in list.iter().enumerate() {
                    if !(iv.lo.is_finite() && iv.hi.is_finite() && 0.0 <= iv.lo && iv.lo <= iv.hi && iv.hi <= max) {
                        return Err(Error::domain(format!("landing interval {i} is not inside [0, {max}]")));
                    }
                    if i > 0 && list[i - 1].hi >= iv.lo {
                        return Err(Error::domain("landing intervals must be disjoint and counterclockwise"));
                    }
                }
            }
        }
        Ok(())
    }

    fn sliced(&self) -> bool {
        !self.halfplane && (self.sigma.len() > 1 || self.landing.is_some())
    }

    fn cyclic(&self) -> bool {
        !self.halfplane && self.landing.is_none()
    }

    fn in_band(&self, s: AxialCoord) -> bool {
        let d = s.norm();
        d >= self.n && d <= self.big_n && (!self.halfplane || s.l >= 1)
    }
}

fn intervals_text(list: &[Interval]) -> String {
    list.iter().map(|iv| format!("{}:{}", iv.lo, iv.hi)).collect::<Vec<_>>().join(",")
}

fn parse_intervals(s: &str) -> Result<Vec<Interval>> {
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| Error::parse(format!("interval `{part}` is not lo:hi")))?;
            let lo: f64 = a.parse().map_err(|_| Error::parse(format!("bad interval bound `{a}`")))?;
            let hi: f64 = b.parse().map_err(|_| Error::parse(format!("bad interval bound `{b}`")))?;
            Ok(Interval { lo, hi })
        })
        .collect()
}

/// `sigma=10100;n=8;N=64;halfplane=0`, optionally followed by
/// `;I=lo:hi,...;J=lo:hi,...` with bounds in turns.
impl fmt::Display for ArmQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word: String = self.sigma.iter().map(|&b| if b { '1' } else { '0' }).collect();
        write!(f, "sigma={word};n={};N={};halfplane={}", self.n, self.big_n, self.halfplane as u8)?;
        if let Some(l) = &self.landing {
            write!(f, ";I={};J={}", intervals_text(&l.inner), intervals_text(&l.outer))?;
        }
        Ok(())
    }
}

impl FromStr for ArmQuery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(';').collect();
        let keys: &[&str] = match parts.len() {
            4 => &["sigma", "n", "N", "halfplane"],
            6 => &["sigma", "n", "N", "halfplane", "I", "J"],
            _ => return Err(Error::parse("arm query needs 4 or 6 fields")),
        };
        let v = crate::record::fields(&parts, keys)?;
        let sigma = Self::colors(v[0])?;
        if sigma.len() > 64 {
            return Err(Error::parse("at most 64 arms"));
        }
        let n = crate::record::parse_u32(v[1])?;
        let big_n = crate::record::parse_u32(v[2])?;
        if big_n > crate::record::MAX_EXTENT {
            return Err(Error::Capacity("radius too large".into()));
        }
        let halfplane = match v[3] {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(format!("halfplane must be 0 or 1, got `{other}`"))),
        };
        let landing = if v.len() == 6 {
            Some(Landing { inner: parse_intervals(v[4])?, outer: parse_intervals(v[5])? })
        } else {
            None
        };
        let q = ArmQuery { sigma, n, big_n, halfplane, landing };
        q.validate().map_err(|e| Error::parse(e.to_string()))?;
        Ok(q)
    }
}

// ---------------------------------------------------------------------------
// Peeling engine

/// A topological rectangle for peeling: arms run from per-arm sources to
/// per-arm targets inside `band`, never using a `blocked` edge. `far`
/// marks the side opposite the cut where the search starts.
struct Rect<'a> {
    c: &'a Configuration,
    band: Vec<bool>,
    /// Bit `d` set when the edge in direction `d` is cut.
    blocked: Vec<u8>,
    far: Vec<bool>,
}

struct ArmSpec {
    open: bool,
    /// `(ordinal, direction pointing back into the hole)`, in
    /// counterclockwise order.
    sources: Vec<(usize, usize)>,
    target: Vec<bool>,
}

impl Rect<'_> {
    fn peel(&self, arms: &[ArmSpec]) -> bool {
        let mut live = self.band.clone();
        let mut visited = vec![false; live.len()];
        for (i, arm) in arms.iter().enumerate() {
            visited.iter_mut().for_each(|v| *v = false);
            let Some(path) = self.extremal(&live, &mut visited, arm) else {
                return false;
            };
            if i + 1 < arms.len() {
                live = self.beyond(&live, &path);
            }
        }
        true
    }

    /// Right-hand depth-first search; the returned path is the clockwise-most
    /// crossing of the arm's color.
    fn extremal(&self, live: &[bool], visited: &mut [bool], arm: &ArmSpec) -> Option<Vec<usize>> {
        let adj = self.c.region().adjacency();
        let ok = |v: usize, visited: &[bool]| live[v] && !visited[v] && self.c.is_open(v) == arm.open;
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        for &(s, back) in &arm.sources {
            if !ok(s, visited) {
                continue;
            }
            visited[s] = true;
            if arm.target[s] {
                return Some(vec![s]);
            }
            stack.clear();
            stack.push((s, back, 1));
            while let Some(top) = stack.last_mut() {
                if top.2 > 5 {
                    stack.pop();
                    continue;
                }
                let (u, d) = (top.0, (top.1 + top.2) % 6);
                top.2 += 1;
                if self.blocked[u] >> d & 1 == 1 {
                    continue;
                }
                let v = adj[u][d];
                if v == NONE || !ok(v as usize, visited) {
                    continue;
                }
                let v = v as usize;
                visited[v] = true;
                if arm.target[v] {
                    let mut path: Vec<usize> = stack.iter().map(|e| e.0).collect();
                    path.push(v);
                    return Some(path);
                }
                stack.push((v, (d + 3) % 6, 1));
            }
        }
        None
    }

    /// The components of `live` minus `path` that reach the far side.
    fn beyond(&self, live: &[bool], path: &[usize]) -> Vec<bool> {
        let adj = self.c.region().adjacency();
        let mut alive = live.to_vec();
        for &p in path {
            alive[p] = false;
        }
        let mut out = vec![false; live.len()];
        let mut stack: Vec<usize> = (0..live.len()).filter(|&i| alive[i] && self.far[i]).collect();
        for &s in &stack {
            out[s] = true;
        }
        while let Some(u) = stack.pop() {
            for d in 0..6 {
                if self.blocked[u] >> d & 1 == 1 {
                    continue;
                }
                let v = adj[u][d];
                if v != NONE && alive[v as usize] && !out[v as usize] {
                    out[v as usize] = true;
                    stack.push(v as usize);
                }
            }
        }
        out
    }
}

/// Whether the lattice edge `u → u + DIRECTIONS[d]` crosses the cut ray.
fn crosses_ray(u: AxialCoord, d: usize) -> bool {
    let v = u.neighbor(d);
    let (lo, hi) = if u.l <= v.l { (u, v) } else { (v, u) };
    // Edges from row -1 to row 0; the ray sits halfway at y = -√3/4.
    if !(lo.l == -1 && hi.l == 0) {
        return false;
    }
    let mid = (lo.embed() + hi.embed()) * 0.5;
    mid.re >= 0.0
}

fn inward_direction(s: AxialCoord, center: Complex64) -> usize {
    let to_center = center - s.embed();
    (0..6)
        .max_by(|&a, &b| {
            let da = DIRECTIONS[a].embed();
            let db = DIRECTIONS[b].embed();
            let ca = (da.re * to_center.re + da.im * to_center.im) / to_center.norm().max(1e-12);
            let cb = (db.re * to_center.re + db.im * to_center.im) / to_center.norm().max(1e-12);
            ca.partial_cmp(&cb).unwrap().then(b.cmp(&a))
        })
        .unwrap()
}

fn check_cover(region: &Region, q: &ArmQuery) -> Result<()> {
    if region.is_torus() {
        return Err(Error::domain("arm events need a planar region"));
    }
    for d in [q.n, q.big_n] {
        for s in ring(d) {
            if q.in_band(s) && !region.contains(s) {
                return Err(Error::domain(format!("configuration does not cover the arm band at {s}")));
            }
        }
    }
    Ok(())
}

fn turns(s: AxialCoord) -> f64 {
    turn_angle(s.embed()) / TAU
}

/// Band, cut and far side of an annulus query.
fn annulus_rect<'a>(c: &'a Configuration, q: &ArmQuery) -> Rect<'a> {
    let region = c.region();
    let band: Vec<bool> = region.sites().iter().map(|&s| q.in_band(s)).collect();
    let sliced = q.sliced();
    let blocked: Vec<u8> = region
        .sites()
        .iter()
        .map(|&s| {
            if !sliced {
                return 0;
            }
            (0..6).filter(|&d| crosses_ray(s, d)).fold(0u8, |m, d| m | 1 << d)
        })
        .collect();
    let far: Vec<bool> = region
        .sites()
        .iter()
        .zip(&band)
        .map(|(&s, &b)| {
            b && if q.halfplane {
                s.l == 1 && s.embed().re < 0.0
            } else {
                s.l == -1 && s.k >= 1
            }
        })
        .collect();
    Rect { c, band, blocked, far }
}

fn annulus_arms(c: &Configuration, q: &ArmQuery, sigma: &[bool]) -> Vec<ArmSpec> {
    let region = c.region();
    let mut inner: Vec<AxialCoord> = ring(q.n).into_iter().filter(|&s| q.in_band(s)).collect();
    inner.sort_by(|a, b| turns(*a).partial_cmp(&turns(*b)).unwrap());
    let outer: Vec<AxialCoord> = ring(q.big_n).into_iter().filter(|&s| q.in_band(s)).collect();
    let origin = Complex64::new(0.0, 0.0);
    sigma
        .iter()
        .enumerate()
        .map(|(i, &open)| {
            let (iv, jv) = match &q.landing {
                Some(l) => (Some(l.inner[i]), Some(l.outer[i])),
                None => (None, None),
            };
            let sources = inner
                .iter()
                .filter(|&&s| iv.map_or(true, |iv| iv.contains(turns(s))))
                .map(|&s| (region.ordinal(s).unwrap(), inward_direction(s, origin)))
                .collect();
            let mut target = vec![false; region.len()];
            for &s in &outer {
                if jv.map_or(true, |jv| jv.contains(turns(s))) {
                    target[region.ordinal(s).unwrap()] = true;
                }
            }
            ArmSpec { open, sources, target }
        })
        .collect()
}

fn rotations(sigma: &[bool], cyclic: bool) -> Vec<Vec<bool>> {
    if !cyclic {
        return vec![sigma.to_vec()];
    }
    let mut out: Vec<Vec<bool>> = Vec::new();
    for r in 0..sigma.len() {
        let rot: Vec<bool> = sigma[r..].iter().chain(&sigma[..r]).copied().collect();
        if !out.contains(&rot) {
            out.push(rot);
        }
    }
    out
}

/// Whether the arm event `q` occurs in `c`.
pub fn arm_event(c: &Configuration, q: &ArmQuery) -> Result<bool> {
    q.validate()?;
    check_cover(c.region(), q)?;
    let rect = annulus_rect(c, q);
    for sigma in rotations(&q.sigma, q.cyclic()) {
        let arms = annulus_arms(c, q, &sigma);
        if rect.peel(&arms) {
            return Ok(true);
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Backtracking oracle

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleOrder {
    /// The conventions of [`arm_event`]: the cut is respected and order is
    /// read from it.
    Cut,
    /// No cut; whole-plane arms in the true cyclic order of their inner
    /// endpoints.
    Free,
}

struct Oracle<'a> {
    c: &'a Configuration,
    band: Vec<bool>,
    inner: Vec<bool>,
    outer: Vec<bool>,
    blocked: Vec<u8>,
    used: Vec<bool>,
    q: &'a ArmQuery,
}

impl Oracle<'_> {
    /// Tries to place arms `t..` with colors `sigma[t..]`, each starting
    /// at a larger angle than `after`.
    fn place(&mut self, sigma: &[bool], t: usize, after: f64) -> bool {
        if t == sigma.len() {
            return true;
        }
        let region = self.c.region();
        for s in 0..region.len() {
            if !self.inner[s] || self.used[s] || self.c.is_open(s) != sigma[t] {
                continue;
            }
            let a = turns(region.site(s));
            if let Some(l) = &self.q.landing {
                if !l.inner[t].contains(a) {
                    continue;
                }
            } else if t > 0 && a <= after {
                continue;
            }
            self.used[s] = true;
            let found = self.extend(s, sigma, t, a);
            self.used[s] = false;
            if found {
                return true;
            }
        }
        false
    }

    fn ends_here(&self, v: usize, t: usize) -> bool {
        if !self.outer[v] {
            return false;
        }
        match &self.q.landing {
            Some(l) => l.outer[t].contains(turns(self.c.region().site(v))),
            None => true,
        }
    }

    fn extend(&mut self, u: usize, sigma: &[bool], t: usize, start: f64) -> bool {
        if self.ends_here(u, t) {
            return self.place(sigma, t + 1, start);
        }
        if self.q.landing.is_none() && self.outer[u] {
            return false;
        }
        let adj = self.c.region().adjacency();
        for d in 0..6 {
            if self.blocked[u] >> d & 1 == 1 {
                continue;
            }
            let v = adj[u][d];
            if v == NONE {
                continue;
            }
            let v = v as usize;
            if !self.band[v] || self.used[v] || self.c.is_open(v) != sigma[t] {
                continue;
            }
            // Trimmed arms touch the inner boundary only at their start.
            if self.q.landing.is_none() && self.inner[v] {
                continue;
            }
            self.used[v] = true;
            let found = self.extend(v, sigma, t, start);
            self.used[v] = false;
            if found {
                return true;
            }
        }
        false
    }
}

/// Exhaustive search over tuples of vertex-disjoint colored paths.
///
/// Without landing intervals every arm is trimmed to run from its last
/// inner-boundary site to its first outer-boundary site, which preserves
/// disjointness and order; arms are then matched to `σ` by the angles of
/// their starting sites.
pub fn arms_bruteforce_oracle(c: &Configuration, q: &ArmQuery) -> Result<bool> {
    arms_bruteforce_oracle_with(c, q, OracleOrder::Cut)
}

pub fn arms_bruteforce_oracle_with(c: &Configuration, q: &ArmQuery, order: OracleOrder) -> Result<bool> {
    q.validate()?;
    check_cover(c.region(), q)?;
    let region = c.region();
    let band: Vec<bool> = region.sites().iter().map(|&s| q.in_band(s)).collect();
    let size = band.iter().filter(|&&b| b).count();
    if size > ORACLE_LIMIT {
        return Err(Error::Capacity(format!("oracle band has {size} sites, limit {ORACLE_LIMIT}")));
    }
    let cut = order == OracleOrder::Cut && q.sliced();
    let blocked = region
        .sites()
        .iter()
        .map(|&s| if cut { (0..6).filter(|&d| crosses_ray(s, d)).fold(0u8, |m, d| m | 1 << d) } else { 0 })
        .collect();
    let mut o = Oracle {
        c,
        inner: region.sites().iter().map(|&s| q.in_band(s) && s.norm() == q.n).collect(),
        outer: region.sites().iter().map(|&s| q.in_band(s) && s.norm() == q.big_n).collect(),
        band,
        blocked,
        used: vec![false; region.len()],
        q,
    };
    for sigma in rotations(&q.sigma, q.cyclic()) {
        if o.place(&sigma, 0, -1.0) {
            return Ok(true);
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Interface strands

/// Interface strands of an arm band that cross from the inner to the
/// outer boundary, listed counterclockwise by starting angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossings {
    /// For each strand, whether its clockwise side is open.
    pub clockwise_open: Vec<bool>,
    /// With no strands, the color crossing the band, if any.
    pub lone: Option<bool>,
}

impl Crossings {
    pub fn count(&self) -> usize {
        self.clockwise_open.len()
    }

    /// Largest `j` such that `j` alternating arms exist, in the half-plane
    /// starting (clockwise-most) with color `first`.
    pub fn halfplane_alternating(&self, first: bool) -> usize {
        match self.clockwise_open.first() {
            None => (self.lone == Some(first)) as usize,
            Some(&c0) if c0 == first => self.count() + 1,
            Some(_) => self.count(),
        }
    }
}

/// Traces the interfaces of the band
/// `n ≤ d ≤ N` (half-plane: also `l ≥ 1`) that join its inner and outer
/// boundaries. Uses any color source, so lazily sampled
/// configurations pay only for the sites next to the traced strands.
pub fn crossing_strands<C: SiteColors>(colors: &mut C, n: u32, big_n: u32, halfplane: bool) -> Result<Crossings> {
    if n == 0 || n >= big_n {
        return Err(Error::domain(format!("strand band needs 1 <= n < N, got {n}, {big_n}")));
    }
    let q = ArmQuery { sigma: vec![true], n, big_n, halfplane, landing: None };
    check_cover(colors.region(), &q)?;
    let inside = |s: AxialCoord| q.in_band(s);
    let budget = 4 * colors.region().len() + 16;
    let mut found: Vec<(f64, bool)> = Vec::new();
    let mut seen_start = std::collections::HashSet::new();
    for g in ring(n - 1) {
        for j in 0..6 {
            let t = DualVertex::corner(g, j);
            if !seen_start.insert((t, g)) {
                continue;
            }
            let Some(strand) = trace_strand(colors, &inside, t, g, budget)? else {
                continue;
            };
            let end = strand.end_face;
            if end.norm() <= big_n || (halfplane && end.l < 1) {
                continue;
            }
            // Heading outward, the clockwise side is on the walker's right.
            let step = strand.vertices[1].embed() - t.embed();
            let side = strand.first_open.embed() - t.embed();
            found.push((turn_angle(t.embed()), step.re * side.im - step.im * side.re < 0.0));
        }
    }
    found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let lone = if found.is_empty() { lone_color(colors, &q)? } else { None };
    Ok(Crossings { clockwise_open: found.into_iter().map(|f| f.1).collect(), lone })
}

/// Without crossing strands at most one color crosses the band.
fn lone_color<C: SiteColors>(colors: &mut C, q: &ArmQuery) -> Result<Option<bool>> {
    let starts: Vec<AxialCoord> = ring(q.n).into_iter().filter(|&s| q.in_band(s)).collect();
    for open in [true, false] {
        let mut seen = std::collections::HashSet::new();
        let mut stack = Vec::new();
        for &s in &starts {
            let i = colors.region().ordinal(s).unwrap();
            if colors.open(i) == open && seen.insert(s) {
                stack.push(s);
            }
        }
        while let Some(u) = stack.pop() {
            if u.norm() == q.big_n {
                return Ok(Some(open));
            }
            for d in 0..6 {
                let v = u.neighbor(d);
                if !q.in_band(v) || seen.contains(&v) {
                    continue;
                }
                let i = colors.region().ordinal(v).unwrap();
                if colors.open(i) == open {
                    seen.insert(v);
                    stack.push(v);
                }
            }
        }
    }
    Ok(None)
}

/// The number of interface strands crossing the annulus `n ≤ d ≤ N`, i.e.
/// the largest `j` for which `j` disjoint alternating arms exist.
pub fn alternating_arm_count(c: &Configuration, n: u32, big_n: u32) -> Result<usize> {
    let mut c = c;
    Ok(crossing_strands(&mut c, n, big_n, false)?.count())
}

// ---------------------------------------------------------------------------
// Rhombus events

fn rhombus_dims(c: &Configuration) -> Result<(i32, i32)> {
    match *c.region().shape() {
        Shape::Rhombus { w, h } => Ok((w as i32, h as i32)),
        _ => Err(Error::domain("rhombus events need a rhombus configuration")),
    }
}

fn sides(w: i32, h: i32) -> [Vec<AxialCoord>; 4] {
    [
        (0..=h).map(|l| AxialCoord::new(0, l)).collect(),
        (0..=h).map(|l| AxialCoord::new(w, l)).collect(),
        (0..=w).map(|k| AxialCoord::new(k, h)).collect(),
        (0..=w).map(|k| AxialCoord::new(k, 0)).collect(),
    ]
}

/// Open crossing between the left side `k = 0` and the right side `k = w`.
pub fn horizontal_crossing(c: &Configuration) -> Result<bool> {
    let (w, h) = rhombus_dims(c)?;
    let region = c.region();
    let [left, right, _, _] = sides(w, h);
    let l: Vec<usize> = left.iter().map(|&s| region.ordinal(s).unwrap()).collect();
    let r: Vec<usize> = right.iter().map(|&s| region.ordinal(s).unwrap()).collect();
    Ok(crossing(c, &l, &r, Color::Open, |_| true))
}

/// Sites whose flip changes the horizontal open crossing of the rhombus,
/// computed by flipping; checked against the four-arm characterization.
pub fn pivotal_sites(c: &Configuration) -> Result<Vec<AxialCoord>> {
    let by_flip = pivotal_sites_by_flip(c)?;
    let by_arms = pivotal_sites_by_arms(c)?;
    assert_eq!(by_flip, by_arms, "pivotal characterizations disagree");
    Ok(by_flip)
}

pub fn pivotal_sites_by_flip(c: &Configuration) -> Result<Vec<AxialCoord>> {
    let base = horizontal_crossing(c)?;
    let mut work = c.clone();
    let mut out = Vec::new();
    for i in 0..c.len() {
        work.set(i, !c.is_open(i));
        if horizontal_crossing(&work)? != base {
            out.push(c.region().site(i));
        }
        work.set(i, c.is_open(i));
    }
    Ok(out)
}

/// Site `v` is pivotal iff, with `v` removed, its neighbors reach the left
/// and right sides by open paths and the top and bottom by closed paths;
/// `v` lying on a side counts as reaching it.
pub fn pivotal_sites_by_arms(c: &Configuration) -> Result<Vec<AxialCoord>> {
    let (w, h) = rhombus_dims(c)?;
    let region = c.region();
    let side_sets = sides(w, h);
    let on_side: Vec<[bool; 4]> = region
        .sites()
        .iter()
        .map(|&s| [s.k == 0, s.k == w, s.l == h, s.l == 0])
        .collect();
    let mut out = Vec::new();
    for v in 0..c.len() {
        let arms = |color: Color| {
            let mask: Vec<bool> = (0..c.len()).map(|i| i != v && color.matches(c.is_open(i))).collect();
            let mut lab = ClusterLabeling::with_mask(region, mask, color);
            let mut touch = [false; 4];
            for (k, side) in side_sets.iter().enumerate() {
                let roots: std::collections::HashSet<u32> =
                    side.iter().filter_map(|&s| lab.root(region.ordinal(s).unwrap())).collect();
                touch[k] = on_side[v][k]
                    || region.adjacency()[v]
                        .iter()
                        .any(|&u| u != NONE && lab.root(u as usize).is_some_and(|r| roots.contains(&r)));
            }
            touch
        };
        let open = arms(Color::Open);
        if !(open[0] && open[1]) {
            continue;
        }
        let closed = arms(Color::Closed);
        if closed[2] && closed[3] {
            out.push(region.site(v));
        }
    }
    Ok(out)
}

/// Number of pivotal sites from one labeling per color.
///
/// An open `v` is pivotal iff its closed neighbors reach the top and the
/// bottom but no closed top-bottom crossing exists; symmetrically for a
/// closed `v` with open clusters and the left and right sides.
pub fn pivotal_count(c: &Configuration) -> Result<usize> {
    let (w, h) = rhombus_dims(c)?;
    let region = c.region();
    let side_sets = sides(w, h);
    let mut count = 0;
    for color in [Color::Open, Color::Closed] {
        let mut lab = ClusterLabeling::new(c, color);
        // Open clusters decide closed sites (left/right), and vice versa.
        let (a, b) = if color == Color::Open { (0, 1) } else { (2, 3) };
        let mut mask_a = std::collections::HashSet::new();
        let mut mask_b = std::collections::HashSet::new();
        for &s in &side_sets[a] {
            if let Some(r) = lab.root(region.ordinal(s).unwrap()) {
                mask_a.insert(r);
            }
        }
        for &s in &side_sets[b] {
            if let Some(r) = lab.root(region.ordinal(s).unwrap()) {
                mask_b.insert(r);
            }
        }
        if mask_a.intersection(&mask_b).next().is_some() {
            // A crossing of this color survives any single flip of the
            // other color.
            continue;
        }
        for v in 0..c.len() {
            if color.matches(c.is_open(v)) {
                continue;
            }
            let s = region.site(v);
            let sides_hit = [s.k == 0, s.k == w, s.l == h, s.l == 0];
            let mut ta = sides_hit[a];
            let mut tb = sides_hit[b];
            for &u in &region.adjacency()[v] {
                if u == NONE {
                    continue;
                }
                if let Some(r) = lab.root(u as usize) {
                    ta |= mask_a.contains(&r);
                    tb |= mask_b.contains(&r);
                }
            }
            if ta && tb {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Five boundary intervals of a rhombus, counterclockwise, with arm
/// colors forming a rotation of `1, 0, 1, 0, 0`, and a boundary point
/// `gap` between the last and the first interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FiveArmLayout {
    pub intervals: Vec<(bool, Vec<AxialCoord>)>,
    pub gap: AxialCoord,
}

impl FiveArmLayout {
    /// Lower right side (open), upper right side (closed), top (open),
    /// left (closed), bottom (closed); corners and the midpoint of the
    /// right side belong to no interval.
    pub fn standard(w: u32, h: u32) -> Result<Self> {
        if w < 2 || h < 4 {
            return Err(Error::domain("five-arm layout needs w >= 2 and h >= 4"));
        }
        let (w, h) = (w as i32, h as i32);
        let mid = h / 2;
        Ok(FiveArmLayout {
            intervals: vec![
                (true, (1..mid).map(|l| AxialCoord::new(w, l)).collect()),
                (false, (mid + 1..h).map(|l| AxialCoord::new(w, l)).collect()),
                (true, (1..w).rev().map(|k| AxialCoord::new(k, h)).collect()),
                (false, (1..h).rev().map(|l| AxialCoord::new(0, l)).collect()),
                (false, (1..w).map(|k| AxialCoord::new(k, 0)).collect()),
            ],
            gap: AxialCoord::new(w, 0),
        })
    }

    /// The color carried by three of the five arms; a five-arm site must
    /// have it too.
    pub fn site_color(&self) -> bool {
        self.intervals.iter().filter(|i| i.0).count() >= 3
    }

    fn validate(&self, region: &Region) -> Result<()> {
        let (w, h) = match *region.shape() {
            Shape::Rhombus { w, h } => (w as i32, h as i32),
            _ => return Err(Error::domain("five-arm sites need a rhombus configuration")),
        };
        let on_boundary = |s: AxialCoord| region.contains(s) && (s.k == 0 || s.k == w || s.l == 0 || s.l == h);
        if self.intervals.len() != 5 {
            return Err(Error::domain("five-arm layout needs five intervals"));
        }
        let colors: Vec<bool> = self.intervals.iter().map(|i| i.0).collect();
        let pattern = [true, false, true, false, false];
        if !(0..5).any(|r| (0..5).all(|i| colors[(i + r) % 5] == pattern[i])) {
            return Err(Error::domain("five-arm colors must rotate 1,0,1,0,0"));
        }
        let mut seen = std::collections::HashSet::new();
        for (_, sites) in &self.intervals {
            if sites.is_empty() {
                return Err(Error::domain("five-arm interval is empty"));
            }
            for &s in sites {
                if !on_boundary(s) || !seen.insert(s) {
                    return Err(Error::domain(format!("five-arm interval site {s} is off the boundary or repeated")));
                }
            }
        }
        if !on_boundary(self.gap) || seen.contains(&self.gap) {
            return Err(Error::domain("five-arm gap must be a free boundary site"));
        }
        let center = Complex64::new(w as f64 + h as f64 * 0.5, h as f64 * SQRT3 * 0.5) * 0.5;
        let turns_about = |s: AxialCoord| turn_angle(s.embed() - center);
        let start = turns_about(self.gap);
        let rel = |s: AxialCoord| (turns_about(s) - start).rem_euclid(TAU);
        let mut last = 0.0;
        for (_, sites) in &self.intervals {
            let (lo, hi) = sites.iter().map(|&s| rel(s)).fold((f64::MAX, f64::MIN), |(a, b), t| (a.min(t), b.max(t)));
            if lo < last {
                return Err(Error::domain("five-arm intervals must be disjoint and counterclockwise from the gap"));
            }
            last = hi;
        }
        Ok(())
    }
}

/// Sites `x` of the layout's site color from which five disjoint arms of
/// the layout colors reach the five intervals in counterclockwise order.
/// Arms start at neighbors of `x` and avoid `x`; the order is read from a
/// cut running from `x` to the gap.
pub fn five_arm_sites(c: &Configuration, layout: &FiveArmLayout) -> Result<Vec<AxialCoord>> {
    let region = c.region();
    layout.validate(region)?;
    let intervals = &layout.intervals;
    let mut interval_of = vec![usize::MAX; region.len()];
    for (k, (_, sites)) in intervals.iter().enumerate() {
        for &s in sites {
            interval_of[region.ordinal(s).unwrap()] = k;
        }
    }
    // Which intervals each cluster touches, per color.
    let mut touch: Vec<Vec<u8>> = Vec::new();
    let mut labs = Vec::new();
    for color in [Color::Closed, Color::Open] {
        let mut lab = ClusterLabeling::new(c, color);
        let mut t = vec![0u8; region.len()];
        for i in 0..region.len() {
            if interval_of[i] != usize::MAX && color.matches(c.is_open(i)) && color.matches(intervals[interval_of[i]].0) {
                let r = lab.root(i).unwrap();
                t[r as usize] |= 1 << interval_of[i];
            }
        }
        touch.push(t);
        labs.push(lab);
    }
    let mut need = [0u8; 2];
    for (k, (open, _)) in intervals.iter().enumerate() {
        need[*open as usize] |= 1 << k;
    }
    let gap = layout.gap.embed();
    let mut out = Vec::new();
    for x in 0..region.len() {
        if c.is_open(x) != layout.site_color() {
            continue;
        }
        let mut got = [0u8; 2];
        for &u in &region.adjacency()[x] {
            if u == NONE {
                continue;
            }
            let col = c.is_open(u as usize) as usize;
            let r = labs[col].root(u as usize).unwrap();
            got[col] |= touch[col][r as usize];
        }
        if got[1] & need[1] != need[1] || got[0] & need[0] != need[0] {
            continue;
        }
        if five_arms_at(c, x, intervals, gap) {
            out.push(region.site(x));
        }
    }
    Ok(out)
}

/// The cut runs along a slightly perturbed segment so that it meets no
/// site; sources are ordered by their angle around its start.
fn cut_segment(c: &Configuration, x: usize, gap: Complex64) -> (Complex64, Complex64) {
    (c.region().site(x).embed() + Complex64::new(1.3e-4, 0.7e-4), gap + Complex64::new(2.1e-4, -1.9e-4))
}

fn five_arm_rect(c: &Configuration, x: usize, gap: Complex64) -> Rect<'_> {
    let region = c.region();
    let (origin, end) = cut_segment(c, x, gap);
    let dir = end - origin;
    let cross = |a: Complex64, b: Complex64| a.re * b.im - a.im * b.re;
    let band: Vec<bool> = (0..region.len()).map(|i| i != x).collect();
    let mut blocked = vec![0u8; region.len()];
    let mut far = vec![false; region.len()];
    for (i, &s) in region.sites().iter().enumerate() {
        if i == x {
            continue;
        }
        for d in 0..6 {
            let t = s.neighbor(d);
            let Some(j) = region.ordinal(t) else { continue };
            if j == x {
                continue;
            }
            let (p, q) = (s.embed(), t.embed());
            let s1 = cross(dir, p - origin);
            let s2 = cross(dir, q - origin);
            let t1 = cross(q - p, origin - p);
            let t2 = cross(q - p, end - p);
            if s1 * s2 < 0.0 && t1 * t2 < 0.0 {
                blocked[i] |= 1 << d;
                // The clockwise side of the cut.
                if s1 < 0.0 {
                    far[i] = true;
                }
            }
        }
    }
    Rect { c, band, blocked, far }
}

fn five_arms_at(c: &Configuration, x: usize, layout: &[(bool, Vec<AxialCoord>)], gap: Complex64) -> bool {
    let region = c.region();
    let rect = five_arm_rect(c, x, gap);
    let (origin, end) = cut_segment(c, x, gap);
    let dir = end - origin;
    let mut nbrs: Vec<(f64, usize, usize)> = (0..6)
        .filter_map(|d| {
            let u = region.adjacency()[x][d];
            (u != NONE).then(|| {
                let v = region.site(u as usize).embed() - origin;
                let mut a = v.im.atan2(v.re) - dir.im.atan2(dir.re);
                while a < 0.0 {
                    a += TAU;
                }
                (a, u as usize, (d + 3) % 6)
            })
        })
        .collect();
    nbrs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let sources: Vec<(usize, usize)> = nbrs.iter().map(|&(_, u, back)| (u, back)).collect();
    let arms: Vec<ArmSpec> = layout
        .iter()
        .map(|(open, sites)| {
            let mut target = vec![false; region.len()];
            for &s in sites {
                target[region.ordinal(s).unwrap()] = true;
            }
            ArmSpec { open: *open, sources: sources.clone(), target }
        })
        .collect();
    rect.peel(&arms)
}

/// Backtracking check of the five-arm event at `x`: disjoint paths from
/// distinct neighbors of `x` to the layout intervals. With `cut` the paths
/// may not cross the segment used by [`five_arm_sites`]; without it they
/// are unrestricted and their order is forced by planarity.
pub fn five_arm_oracle(c: &Configuration, layout: &FiveArmLayout, x: AxialCoord, cut: bool) -> Result<bool> {
    let region = c.region();
    layout.validate(region)?;
    if region.len() > ORACLE_LIMIT {
        return Err(Error::Capacity(format!("oracle region has {} sites, limit {ORACLE_LIMIT}", region.len())));
    }
    let xi = region.ordinal(x).ok_or_else(|| Error::domain(format!("{x} is not in the rhombus")))?;
    if c.is_open(xi) != layout.site_color() {
        return Ok(false);
    }
    let rect = five_arm_rect(c, xi, layout.gap.embed());
    let blocked = if cut { rect.blocked } else { vec![0; region.len()] };
    let targets: Vec<Vec<bool>> = layout
        .intervals
        .iter()
        .map(|(_, sites)| {
            let mut t = vec![false; region.len()];
            for &s in sites {
                t[region.ordinal(s).unwrap()] = true;
            }
            t
        })
        .collect();
    let mut used = vec![0u8; region.len()];
    used[xi] = u8::MAX;
    let mut search = FreeSearch {
        c,
        x: xi,
        colors: layout.intervals.iter().map(|l| l.0).collect(),
        targets,
        blocked,
        used,
    };
    Ok(search.place(0))
}

/// Whether `u` reaches a target through unused sites of one color.
fn reaches(c: &Configuration, u: usize, open: bool, target: &[bool], blocked: &[u8], used: &[u8]) -> bool {
    let adj = c.region().adjacency();
    let mut seen = vec![false; used.len()];
    let mut stack = vec![u];
    seen[u] = true;
    while let Some(a) = stack.pop() {
        if target[a] {
            return true;
        }
        for d in 0..6 {
            let b = adj[a][d];
            if b == NONE || blocked[a] >> d & 1 == 1 {
                continue;
            }
            let b = b as usize;
            if !seen[b] && used[b] == 0 && c.is_open(b) == open {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    false
}

/// Backtracking over induced paths: any family of disjoint arms can be
/// shortcut to one in which no arm touches itself off its own edges.
struct FreeSearch<'a> {
    c: &'a Configuration,
    x: usize,
    colors: Vec<bool>,
    targets: Vec<Vec<bool>>,
    blocked: Vec<u8>,
    /// 0 free, `t + 1` on arm `t`, `u8::MAX` for `x`.
    used: Vec<u8>,
}

impl FreeSearch<'_> {
    fn feasible(&self, t: usize) -> bool {
        (t..self.colors.len()).all(|j| {
            self.c.region().adjacency()[self.x].iter().any(|&u| {
                u != NONE
                    && self.used[u as usize] == 0
                    && self.c.is_open(u as usize) == self.colors[j]
                    && reaches(self.c, u as usize, self.colors[j], &self.targets[j], &self.blocked, &self.used)
            })
        })
    }

    fn place(&mut self, t: usize) -> bool {
        if t == self.colors.len() {
            return true;
        }
        if !self.feasible(t) {
            return false;
        }
        let nbrs = self.c.region().adjacency()[self.x];
        for &u in &nbrs {
            if u == NONE || self.used[u as usize] != 0 || self.c.is_open(u as usize) != self.colors[t] {
                continue;
            }
            let u = u as usize;
            self.used[u] = t as u8 + 1;
            if self.grow(u, t) {
                return true;
            }
            self.used[u] = 0;
        }
        false
    }

    fn grow(&mut self, u: usize, t: usize) -> bool {
        if self.targets[t][u] {
            return self.place(t + 1);
        }
        if !reaches(self.c, u, self.colors[t], &self.targets[t], &self.blocked, &self.used) {
            return false;
        }
        let adj = self.c.region().adjacency();
        let mark = t as u8 + 1;
        for d in 0..6 {
            let v = adj[u][d];
            if v == NONE || self.blocked[u] >> d & 1 == 1 {
                continue;
            }
            let v = v as usize;
            if self.used[v] != 0 || self.c.is_open(v) != self.colors[t] {
                continue;
            }
            if adj[v].iter().any(|&w| w != NONE && w as usize != u && self.used[w as usize] == mark) {
                continue;
            }
            self.used[v] = mark;
            let found = self.grow(v, t);
            self.used[v] = 0;
            if found {
                return true;
            }
        }
        false
    }
}
