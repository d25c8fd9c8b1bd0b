//! Reproducible percolation configurations and exhaustive enumeration.
//!
//! Site `i` of sample `j` under seed `s` reads the `i`-th 64-bit output of
//! ChaCha8 keyed by `s` on stream `j`, and is open iff that word is below
//! `p · 2^64`. The word never depends on `p`, so configurations sharing
//! `(seed, sample_index)` are monotonically coupled in `p`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{AxialCoord, Region, Shape};

/// Largest region accepted by [`enumerate_configs`].
pub const ENUMERATION_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub p: f64,
    pub seed: u64,
    pub sample_index: u64,
}

/// One bit per site in region ordinal order, 1 = open.
#[derive(Debug, Clone)]
pub struct Configuration {
    region: Arc<Region>,
    words: Vec<u64>,
    provenance: Option<Provenance>,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.region.shape() == other.region.shape() && self.words == other.words
    }
}

impl Eq for Configuration {}

fn threshold(p: f64) -> Option<u64> {
    // None means every site is open.
    if p >= 1.0 {
        None
    } else if p <= 0.0 {
        Some(0)
    } else {
        Some((p * 18_446_744_073_709_551_616.0) as u64)
    }
}

fn stream(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng
}

/// The uniform word driving site `ordinal`, without generating the others.
pub fn site_word(seed: u64, sample_index: u64, ordinal: usize) -> u64 {
    let mut rng = stream(seed, sample_index);
    rng.set_word_pos(2 * ordinal as u128);
    rng.next_u64()
}

pub fn sample(region: &Arc<Region>, p: f64, seed: u64, sample_index: u64) -> Configuration {
    assert!((0.0..=1.0).contains(&p), "p = {p} outside [0, 1]");
    let n = region.len();
    let mut words = vec![0u64; n.div_ceil(64)];
    match threshold(p) {
        None => {
            for i in 0..n {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Some(0) => {}
        Some(t) => {
            let mut rng = stream(seed, sample_index);
            for (w, chunk) in words.iter_mut().enumerate() {
                let len = (n - w * 64).min(64);
                let mut bits = 0u64;
                for b in 0..len {
                    bits |= ((rng.next_u64() < t) as u64) << b;
                }
                *chunk = bits;
            }
        }
    }
    Configuration { region: Arc::clone(region), words, provenance: Some(Provenance { p, seed, sample_index }) }
}

impl Configuration {
    /// A configuration with colors chosen by `open(ordinal)`.
    pub fn from_fn(region: &Arc<Region>, mut open: impl FnMut(usize, AxialCoord) -> bool) -> Self {
        let mut words = vec![0u64; region.len().div_ceil(64)];
        for (i, &s) in region.sites().iter().enumerate() {
            if open(i, s) {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Configuration { region: Arc::clone(region), words, provenance: None }
    }

    pub fn all(region: &Arc<Region>, open: bool) -> Self {
        Self::from_fn(region, |_, _| open)
    }

    /// Bits of the low `region.len()` positions of `pattern`.
    pub fn from_pattern(region: &Arc<Region>, pattern: u64) -> Self {
        Self::from_fn(region, |i, _| (pattern >> i) & 1 == 1)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn region_arc(&self) -> &Arc<Region> {
        &self.region
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.region.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region.is_empty()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn is_open(&self, ordinal: usize) -> bool {
        (self.words[ordinal / 64] >> (ordinal % 64)) & 1 == 1
    }

    /// Color of a lattice site; `None` outside the region.
    #[inline]
    pub fn color_at(&self, c: AxialCoord) -> Option<bool> {
        self.region.ordinal(c).map(|i| self.is_open(i))
    }

    pub fn set(&mut self, ordinal: usize, open: bool) {
        let mask = 1u64 << (ordinal % 64);
        if open {
            self.words[ordinal / 64] |= mask;
        } else {
            self.words[ordinal / 64] &= !mask;
        }
        self.provenance = None;
    }

    pub fn open_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Open/closed swapped.
    pub fn complement(&self) -> Self {
        let mut c = Self::from_fn(&self.region, |i, _| !self.is_open(i));
        c.provenance = None;
        c
    }

    /// Run-length encoding over ordinals, e.g. `3o2c5o`.
    pub fn to_rle(&self) -> String {
        let mut out = String::new();
        let mut i = 0;
        while i < self.len() {
            let color = self.is_open(i);
            let mut j = i;
            while j < self.len() && self.is_open(j) == color {
                j += 1;
            }
            let _ = write!(out, "{}{}", j - i, if color { 'o' } else { 'c' });
            i = j;
        }
        out
    }

    pub fn from_rle(region: &Arc<Region>, rle: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(region.len());
        let mut digits = String::new();
        for ch in rle.chars() {
            match ch {
                '0'..='9' => digits.push(ch),
                'o' | 'c' => {
                    let run: usize = digits
                        .parse()
                        .map_err(|_| Error::parse(format!("run length missing before `{ch}`")))?;
                    digits.clear();
                    if run == 0 || bits.len() + run > region.len() {
                        return Err(Error::parse("run lengths do not match the region size"));
                    }
                    bits.extend(std::iter::repeat(ch == 'o').take(run));
                }
                _ => return Err(Error::parse(format!("unexpected character `{ch}` in run-length string"))),
            }
        }
        if !digits.is_empty() || bits.len() != region.len() {
            return Err(Error::parse("run lengths do not match the region size"));
        }
        Ok(Self::from_fn(region, |i, _| bits[i]))
    }

    /// Debugging dump: a format line, the region record, the provenance
    /// line and the run-length bit string.
    pub fn dump(&self) -> String {
        let prov = match self.provenance {
            Some(p) => format!("p={} seed={} sample_index={}", p.p, p.seed, p.sample_index),
            None => "constructed".to_string(),
        };
        format!("percolab-config 1\n{}\n{}\n{}\n", self.region.shape(), prov, self.to_rle())
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| Error::parse("truncated configuration dump"));
        if next()? != "percolab-config 1" {
            return Err(Error::parse("missing `percolab-config 1` header"));
        }
        let shape: Shape = next()?.parse()?;
        let prov_line = next()?;
        let rle = next()?;
        let provenance = if prov_line == "constructed" {
            None
        } else {
            let parts: Vec<&str> = prov_line.split(' ').collect();
            let v = crate::record::fields(&parts, &["p", "seed", "sample_index"])?;
            let p: f64 = v[0].parse().map_err(|_| Error::parse("bad p"))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::parse("p outside [0, 1]"));
            }
            let seed = v[1].parse().map_err(|_| Error::parse("bad seed"))?;
            let sample_index = v[2].parse().map_err(|_| Error::parse("bad sample_index"))?;
            Some(Provenance { p, seed, sample_index })
        };
        let region = Arc::new(Region::new(shape)?);
        if region.len() > 1 << 22 {
            return Err(Error::Capacity("dumped region too large".into()));
        }
        let mut c = Self::from_rle(&region, rle)?;
        c.provenance = provenance;
        Ok(c)
    }
}

/// Read access to site colors, possibly generated on demand.
pub trait SiteColors {
    fn region(&self) -> &Region;
    fn open(&mut self, ordinal: usize) -> bool;
}

impl SiteColors for Configuration {
    fn region(&self) -> &Region {
        &self.region
    }

    #[inline]
    fn open(&mut self, ordinal: usize) -> bool {
        self.is_open(ordinal)
    }
}

impl SiteColors for &Configuration {
    fn region(&self) -> &Region {
        &self.region
    }

    #[inline]
    fn open(&mut self, ordinal: usize) -> bool {
        self.is_open(ordinal)
    }
}

const CHUNK: usize = 32;

/// The same colors as [`sample`], generated 32 sites at a time on first
/// access; queries that touch few sites of a large region stay cheap.
/// Buffers are reused across [`LazyConfig::reset`] calls.
#[derive(Debug, Clone)]
pub struct LazyConfig {
    region: Arc<Region>,
    seed: u64,
    sample_index: u64,
    threshold: Option<u64>,
    bits: Vec<u32>,
    ready: Vec<bool>,
    touched: Vec<u32>,
    rng: ChaCha8Rng,
}

impl LazyConfig {
    pub fn new(region: &Arc<Region>, p: f64, seed: u64, sample_index: u64) -> Self {
        assert!((0.0..=1.0).contains(&p), "p = {p} outside [0, 1]");
        let chunks = region.len().div_ceil(CHUNK);
        LazyConfig {
            region: Arc::clone(region),
            seed,
            sample_index,
            threshold: threshold(p),
            bits: vec![0; chunks],
            ready: vec![false; chunks],
            touched: Vec::new(),
            rng: stream(seed, sample_index),
        }
    }

    pub fn reset(&mut self, sample_index: u64) {
        for &c in &self.touched {
            self.ready[c as usize] = false;
        }
        self.touched.clear();
        self.sample_index = sample_index;
        self.rng = stream(self.seed, sample_index);
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn chunks_generated(&self) -> usize {
        self.touched.len()
    }

    /// The eager configuration with identical colors.
    pub fn materialize(&self, p: f64) -> Configuration {
        sample(&self.region, p, self.seed, self.sample_index)
    }

    #[cold]
    fn fill(&mut self, chunk: usize) {
        let mut word = 0u32;
        if let Some(t) = self.threshold {
            self.rng.set_word_pos((2 * CHUNK * chunk) as u128);
            for b in 0..CHUNK {
                word |= ((self.rng.next_u64() < t) as u32) << b;
            }
        } else {
            word = u32::MAX;
        }
        self.bits[chunk] = word;
        self.ready[chunk] = true;
        self.touched.push(chunk as u32);
    }
}

impl SiteColors for LazyConfig {
    fn region(&self) -> &Region {
        &self.region
    }

    #[inline]
    fn open(&mut self, ordinal: usize) -> bool {
        let chunk = ordinal / CHUNK;
        if !self.ready[chunk] {
            self.fill(chunk);
        }
        (self.bits[chunk] >> (ordinal % CHUNK)) & 1 == 1
    }
}

/// A copy of `c` with the site `s` flipped.
pub fn flip_site(c: &Configuration, s: AxialCoord) -> Result<Configuration> {
    let i = c
        .region
        .ordinal(s)
        .ok_or_else(|| Error::domain(format!("site {s} is not in the region")))?;
    let mut out = c.clone();
    out.set(i, !c.is_open(i));
    Ok(out)
}

/// A configuration of a small region together with its open-site count,
/// so that `weight(p) = p^open (1 - p)^closed`.
#[derive(Debug, Clone)]
pub struct Weighted {
    pub config: Configuration,
    pub open: usize,
    pub closed: usize,
}

impl Weighted {
    pub fn weight(&self, p: f64) -> f64 {
        p.powi(self.open as i32) * (1.0 - p).powi(self.closed as i32)
    }
}

/// All `2^|region|` configurations, pattern `m` opening site `i` iff bit
/// `i` of `m` is set, in ascending `m`.
pub fn enumerate_configs(region: &Arc<Region>) -> Result<impl Iterator<Item = Weighted>> {
    let n = region.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::Capacity(format!("{n} sites exceeds the enumeration limit {ENUMERATION_LIMIT}")));
    }
    let region = Arc::clone(region);
    Ok((0..1u64 << n).map(move |m| {
        let open = m.count_ones() as usize;
        Weighted { config: Configuration::from_pattern(&region, m), open, closed: n - open }
    }))
}

/// `Σ weight(p)` over configurations satisfying `event`, as an exact
/// polynomial: entry `k` counts satisfying configurations with `k` open sites.
pub fn count_by_open_sites(
    region: &Arc<Region>,
    mut event: impl FnMut(&Configuration) -> bool,
) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; region.len() + 1];
    for w in enumerate_configs(region)? {
        if event(&w.config) {
            counts[w.open] += 1;
        }
    }
    Ok(counts)
}

/// Evaluates a polynomial returned by [`count_by_open_sites`] at `p`.
pub fn probability_from_counts(counts: &[u64], p: f64) -> f64 {
    let n = counts.len() - 1;
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(n: u32) -> Arc<Region> {
        Arc::new(Region::ball(n).unwrap())
    }

    #[test]
    fn extremes() {
        let r = ball(5);
        assert_eq!(sample(&r, 1.0, 7, 0).open_count(), r.len());
        assert_eq!(sample(&r, 0.0, 7, 0).open_count(), 0);
    }

    #[test]
    fn reproducible_and_random_access() {
        let r = ball(6);
        let a = sample(&r, 0.5, 42, 3);
        assert_eq!(a, sample(&r, 0.5, 42, 3));
        assert_ne!(a, sample(&r, 0.5, 42, 4));
        let t = threshold(0.5).unwrap();
        for i in 0..r.len() {
            assert_eq!(a.is_open(i), site_word(42, 3, i) < t);
        }
    }

    #[test]
    fn open_fraction_at_half() {
        let r = ball(40);
        let samples = 10_000u64;
        let mut open = 0usize;
        for j in 0..samples {
            open += sample(&r, 0.5, 1, j).open_count();
        }
        let total = (samples as usize * r.len()) as f64;
        let mean = open as f64 / total;
        let se = (0.25 / total).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(enumerate_configs(&ball(0)).unwrap().count(), 2);
        assert_eq!(enumerate_configs(&ball(1)).unwrap().count(), 128);
        let rh = Arc::new(Region::rhombus(1, 1).unwrap());
        assert_eq!(enumerate_configs(&rh).unwrap().count(), 16);
        assert!(matches!(enumerate_configs(&ball(3)), Err(Error::Capacity(_))));
        let total: f64 = enumerate_configs(&ball(1)).unwrap().map(|w| w.weight(0.3)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flips() {
        let r = ball(2);
        let c = sample(&r, 0.5, 9, 0);
        let s = AxialCoord::new(1, -1);
        let f = flip_site(&c, s).unwrap();
        assert_ne!(f, c);
        assert_eq!(flip_site(&f, s).unwrap(), c);
        let open = Configuration::all(&r, true);
        assert_eq!(flip_site(&open, s).unwrap().open_count(), r.len() - 1);
        assert!(flip_site(&c, AxialCoord::new(9, 9)).is_err());
    }

    #[test]
    fn lazy_matches_eager() {
        let r = ball(9);
        for p in [0.0, 0.3, 0.5, 1.0] {
            let mut lazy = LazyConfig::new(&r, p, 77, 0);
            for j in 0..5 {
                lazy.reset(j);
                let eager = sample(&r, p, 77, j);
                for i in (0..r.len()).rev() {
                    assert_eq!(lazy.open(i), eager.is_open(i));
                }
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let r = ball(3);
        let c = sample(&r, 0.37, 5, 11);
        let back = Configuration::parse_dump(&c.dump()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.provenance(), c.provenance());
        let k = Configuration::from_fn(&r, |i, _| i % 3 == 0);
        assert_eq!(Configuration::parse_dump(&k.dump()).unwrap(), k);
        assert_eq!(Configuration::from_fn(&ball(1), |i, _| i < 3).to_rle(), "3o4c");
    }
}
