//! Experiment configs, Monte Carlo orchestration and report files.
//!
//! A config is TOML with run-wide keys at the top and the recipe under
//! `[experiment]`, selected by `kind`:
//!
//! ```toml
//! seed = 7
//! samples = 100000
//! out = "runs/crossing16"
//!
//! [experiment]
//! kind = "crossing"
//! n = 16
//! p = 0.5
//! ```
//!
//! A run writes `<out>.csv` and `<out>.manifest.json`. The CSV depends only
//! on the config; the manifest adds wall time and a timestamp.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::arms::{arm_event, horizontal_crossing, ArmQuery};
use crate::cardy::{arc_crossing, carleson_triangle};
use crate::connectivity::{torus_winding, Color, Homology};
use crate::error::{Error, Result};
use crate::lattice::Region;
use crate::loewner::{exploration_driving, exploration_region, DrivingMoments, DrivingSample};
use crate::nearcrit::{
    chi_estimate, correlation_length, correlation_length_rect, fit_exponent, russo_check, scaling_table, theta_estimate, ScalingParams,
};
use crate::sampler::{sample, Configuration};
use crate::stats::{count_true, derive_seed, with_workers, Estimate};

/// Indicator average of `event` over samples `0..n_samples` of `region`
/// at `p`.
pub fn mc_estimate(
    event: impl Fn(&Configuration) -> bool + Sync + Send,
    region: &Arc<Region>,
    p: f64,
    n_samples: u64,
    seed: u64,
) -> Estimate {
    let hits = count_true(n_samples, |i| event(&sample(region, p, seed, i)));
    Estimate::from_successes(hits, n_samples, seed)
}

/// A scalar or a list in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossingParams {
    pub n: OneOrMany<u32>,
    pub p: OneOrMany<f64>,
}

impl Default for CrossingParams {
    fn default() -> Self {
        CrossingParams { n: OneOrMany::One(16), p: OneOrMany::One(0.5) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CardyParams {
    pub delta: OneOrMany<f64>,
    /// Relative position of the fourth mark on `[C, A]`.
    pub t: f64,
}

impl Default for CardyParams {
    fn default() -> Self {
        CardyParams { delta: OneOrMany::Many(vec![1.0 / 16.0, 1.0 / 32.0]), t: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmsParams {
    /// Colors counterclockwise, `1` open.
    pub sigma: String,
    pub n: u32,
    pub big_n: OneOrMany<u32>,
    pub halfplane: bool,
    pub p: f64,
}

impl Default for ArmsParams {
    fn default() -> Self {
        ArmsParams { sigma: "1".into(), n: 1, big_n: OneOrMany::Many(vec![4, 8, 16]), halfplane: false, p: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub p: OneOrMany<f64>,
    pub n: OneOrMany<u32>,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams { p: OneOrMany::One(0.5), n: OneOrMany::Many(vec![3, 9, 27]) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrLenParams {
    pub p: OneOrMany<f64>,
    pub eps: f64,
    pub n_max: u32,
}

impl Default for CorrLenParams {
    fn default() -> Self {
        CorrLenParams { p: OneOrMany::Many(vec![0.4, 0.45]), eps: 0.02, n_max: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrivingParams {
    pub r: u32,
    /// Truncation radius as a fraction of `r`.
    pub rho: f64,
    pub times: OneOrMany<f64>,
}

impl Default for DrivingParams {
    fn default() -> Self {
        DrivingParams { r: 128, rho: 0.5, times: OneOrMany::Many(vec![0.005, 0.01]) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorusWindowParams {
    pub sizes: OneOrMany<u32>,
    pub p_min: f64,
    pub p_max: f64,
    pub steps: u32,
}

impl Default for TorusWindowParams {
    fn default() -> Self {
        TorusWindowParams { sizes: OneOrMany::Many(vec![32, 64, 128]), p_min: 0.35, p_max: 0.65, steps: 31 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingTableParams {
    pub p: OneOrMany<f64>,
    pub eps: f64,
    pub n_max: u32,
    /// Samples per correlation-length probe.
    pub corr_samples: u64,
    pub theta_factor: u32,
}

impl Default for ScalingTableParams {
    fn default() -> Self {
        ScalingTableParams {
            p: OneOrMany::Many(vec![0.55, 0.6, 0.65, 0.7]),
            eps: 0.02,
            n_max: 1024,
            corr_samples: 2000,
            theta_factor: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RussoParams {
    pub w: u32,
    pub h: u32,
    pub p: f64,
    pub step: f64,
}

impl Default for RussoParams {
    fn default() -> Self {
        RussoParams { w: 8, h: 8, p: 0.5, step: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpDecayParams {
    pub p: f64,
    pub eps: f64,
    pub n_max: u32,
    pub corr_samples: u64,
    /// Radii as multiples of the measured correlation length.
    pub multiples: Vec<u32>,
}

impl Default for ExpDecayParams {
    fn default() -> Self {
        ExpDecayParams {
            p: 0.35,
            eps: 1.0 / (36.0 * std::f64::consts::E),
            n_max: 1024,
            corr_samples: 20_000,
            multiples: vec![1, 2, 4, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Crossing(CrossingParams),
    Cardy(CardyParams),
    Arms(ArmsParams),
    Theta(GridParams),
    Chi(GridParams),
    Corrlen(CorrLenParams),
    ExploreDriving(DrivingParams),
    TorusWindow(TorusWindowParams),
    ScalingTable(ScalingTableParams),
    Russo(RussoParams),
    ExpDecay(ExpDecayParams),
}

pub const KINDS: [&str; 11] = [
    "crossing",
    "cardy",
    "arms",
    "theta",
    "chi",
    "corrlen",
    "explore-driving",
    "torus-window",
    "scaling-table",
    "russo",
    "exp-decay",
];

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Crossing(_) => "crossing",
            Experiment::Cardy(_) => "cardy",
            Experiment::Arms(_) => "arms",
            Experiment::Theta(_) => "theta",
            Experiment::Chi(_) => "chi",
            Experiment::Corrlen(_) => "corrlen",
            Experiment::ExploreDriving(_) => "explore-driving",
            Experiment::TorusWindow(_) => "torus-window",
            Experiment::ScalingTable(_) => "scaling-table",
            Experiment::Russo(_) => "russo",
            Experiment::ExpDecay(_) => "exp-decay",
        }
    }
}

fn default_samples() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: u64,
    /// Output prefix; defaults to the experiment kind.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Worker threads; does not affect any output byte.
    #[serde(default)]
    pub workers: Option<usize>,
    pub experiment: Experiment,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {msg}"))
}

fn check_prob(key: &str, ps: &[f64], open: bool) -> Result<()> {
    if ps.is_empty() {
        return Err(bad(key, "list is empty"));
    }
    for &p in ps {
        let ok = if open { p > 0.0 && p < 1.0 } else { (0.0..=1.0).contains(&p) };
        if !ok {
            return Err(bad(key, format!("{p} is not a valid probability")));
        }
    }
    Ok(())
}

fn check_sizes(key: &str, ns: &[u32], min: u32, max: u32) -> Result<()> {
    if ns.is_empty() {
        return Err(bad(key, "list is empty"));
    }
    for &n in ns {
        if n < min || n > max {
            return Err(bad(key, format!("{n} outside [{min}, {max}]")));
        }
    }
    Ok(())
}

const MAX_RADIUS: u32 = 1 << 14;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The recipe `kind` with default parameters.
    pub fn default_for(kind: &str) -> Result<Self> {
        if !KINDS.contains(&kind) {
            return Err(bad("experiment.kind", format!("unknown experiment kind `{kind}`")));
        }
        Self::from_toml(&format!("[experiment]\nkind = \"{kind}\"\n"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn out_prefix(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(self.experiment.kind()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(bad("samples", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(bad("workers", "must be at least 1"));
        }
        if let Some(out) = &self.out {
            if out.as_os_str().is_empty() {
                return Err(bad("out", "empty output prefix"));
            }
        }
        match &self.experiment {
            Experiment::Crossing(c) => {
                check_prob("experiment.p", &c.p.to_vec(), false)?;
                check_sizes("experiment.n", &c.n.to_vec(), 1, MAX_RADIUS)?;
            }
            Experiment::Cardy(c) => {
                let ds = c.delta.to_vec();
                if ds.is_empty() || ds.iter().any(|&d| !(d > 0.0 && d <= 0.25)) {
                    return Err(bad("experiment.delta", "mesh sizes must lie in (0, 1/4]"));
                }
                if !(c.t > 0.0 && c.t < 1.0) {
                    return Err(bad("experiment.t", format!("{} outside (0, 1)", c.t)));
                }
            }
            Experiment::Arms(a) => {
                let sigma = ArmQuery::colors(&a.sigma).map_err(|e| bad("experiment.sigma", e))?;
                if sigma.is_empty() {
                    return Err(bad("experiment.sigma", "needs at least one color"));
                }
                check_prob("experiment.p", &[a.p], false)?;
                check_sizes("experiment.big_n", &a.big_n.to_vec(), a.n + 1, MAX_RADIUS)?;
                for big_n in a.big_n.to_vec() {
                    ArmQuery::new(&sigma, a.n, big_n, a.halfplane).map_err(|e| bad("experiment.n", e))?;
                }
            }
            Experiment::Theta(g) | Experiment::Chi(g) => {
                check_prob("experiment.p", &g.p.to_vec(), false)?;
                check_sizes("experiment.n", &g.n.to_vec(), 1, MAX_RADIUS)?;
            }
            Experiment::Corrlen(c) => {
                check_prob("experiment.p", &c.p.to_vec(), false)?;
                check_prob("experiment.eps", &[c.eps], true)?;
                check_sizes("experiment.n_max", &[c.n_max], 1, MAX_RADIUS)?;
            }
            Experiment::ExploreDriving(d) => {
                check_sizes("experiment.r", &[d.r], 32, MAX_RADIUS)?;
                check_prob("experiment.rho", &[d.rho], true)?;
                let ts = d.times.to_vec();
                if ts.is_empty() || ts.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                    return Err(bad("experiment.times", "times must be positive"));
                }
            }
            Experiment::TorusWindow(t) => {
                check_sizes("experiment.sizes", &t.sizes.to_vec(), 2, 4096)?;
                check_prob("experiment.p_min", &[t.p_min], false)?;
                check_prob("experiment.p_max", &[t.p_max], false)?;
                if t.p_min >= t.p_max {
                    return Err(bad("experiment.p_max", "must exceed p_min"));
                }
                if t.steps < 2 {
                    return Err(bad("experiment.steps", "need at least two p values"));
                }
            }
            Experiment::ScalingTable(s) => {
                let ps = s.p.to_vec();
                if ps.is_empty() || ps.iter().any(|&p| !(p > 0.5 && p < 1.0)) {
                    return Err(bad("experiment.p", "every p must lie in (1/2, 1)"));
                }
                check_prob("experiment.eps", &[s.eps], true)?;
                check_sizes("experiment.n_max", &[s.n_max], 2, MAX_RADIUS)?;
                if s.corr_samples == 0 {
                    return Err(bad("experiment.corr_samples", "must be at least 1"));
                }
                if s.theta_factor == 0 {
                    return Err(bad("experiment.theta_factor", "must be at least 1"));
                }
            }
            Experiment::Russo(r) => {
                check_sizes("experiment.w", &[r.w], 1, 4096)?;
                check_sizes("experiment.h", &[r.h], 1, 4096)?;
                if !(r.step > 0.0 && r.p - r.step > 0.0 && r.p + r.step < 1.0) {
                    return Err(bad("experiment.step", "need 0 < p - step < p + step < 1"));
                }
            }
            Experiment::ExpDecay(e) => {
                check_prob("experiment.p", &[e.p], true)?;
                check_prob("experiment.eps", &[e.eps], true)?;
                check_sizes("experiment.n_max", &[e.n_max], 1, MAX_RADIUS)?;
                check_sizes("experiment.multiples", &e.multiples, 1, 64)?;
                if e.corr_samples == 0 {
                    return Err(bad("experiment.corr_samples", "must be at least 1"));
                }
            }
        }
        Ok(())
    }
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Bool(bool),
    Text(String),
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

/// Decimal with 12 significant digits; scientific outside `[1e-5, 1e15)`.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..15).contains(&e) {
        let prec = (11 - e).max(0) as usize;
        let s = format!("{x:.prec$}");
        // rounding can carry into a new digit, which then shows 13
        if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() > 12 && prec > 0 {
            let prec = prec - 1;
            return format!("{x:.prec$}");
        }
        s
    } else {
        format!("{x:.11e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(x) => x.to_string(),
            Cell::Real(x) => format_real(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Output of a recipe: CSV rows and a JSON summary for the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: serde_json::Value,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new(), summary: json!({}) }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn estimate_cells(e: &Estimate) -> [Cell; 4] {
    [e.mean.into(), e.stderr.into(), e.n_samples.into(), e.seed.into()]
}

/// Runs the recipe and returns its table without touching the file system.
pub fn compute(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let seed = cfg.seed;
    let samples = cfg.samples;
    with_workers(cfg.workers, || match &cfg.experiment {
        Experiment::Crossing(c) => crossing_table(c, samples, seed),
        Experiment::Cardy(c) => cardy_table(c, samples, seed),
        Experiment::Arms(a) => arms_table(a, samples, seed),
        Experiment::Theta(g) => grid_table(g, samples, seed, theta_estimate),
        Experiment::Chi(g) => grid_table(g, samples, seed, chi_estimate),
        Experiment::Corrlen(c) => corrlen_table(c, samples, seed),
        Experiment::ExploreDriving(d) => driving_table(d, samples, seed),
        Experiment::TorusWindow(t) => torus_window_table(t, samples, seed),
        Experiment::ScalingTable(s) => scaling_table_rows(s, samples, seed),
        Experiment::Russo(r) => russo_table(r, samples, seed),
        Experiment::ExpDecay(e) => exp_decay_table(e, samples, seed),
    })?
}

fn crossing_table(c: &CrossingParams, samples: u64, seed: u64) -> Result<Table> {
    let mut t = Table::new(&["p", "n", "mean", "stderr", "samples", "seed"]);
    let mut k = 0;
    for &p in &c.p.to_vec() {
        for &n in &c.n.to_vec() {
            let r = Arc::new(Region::rhombus(n, n)?);
            let e = mc_estimate(|c| horizontal_crossing(c).unwrap(), &r, p, samples, derive_seed(seed, k));
            k += 1;
            let mut row = vec![p.into(), n.into()];
            row.extend(estimate_cells(&e));
            t.push(row);
        }
    }
    Ok(t)
}

fn cardy_table(c: &CardyParams, samples: u64, seed: u64) -> Result<Table> {
    let mut t = Table::new(&["delta", "t", "sites", "mean", "stderr", "samples", "seed", "bias"]);
    for (k, &delta) in c.delta.to_vec().iter().enumerate() {
        let r = Arc::new(carleson_triangle(delta, c.t)?);
        let e = mc_estimate(|x| arc_crossing(x, 0, 2).unwrap(), &r, 0.5, samples, derive_seed(seed, k as u64));
        let mut row = vec![delta.into(), c.t.into(), (r.len() as u64).into()];
        row.extend(estimate_cells(&e));
        row.push((e.mean - c.t).into());
        t.push(row);
    }
    Ok(t)
}

fn arms_table(a: &ArmsParams, samples: u64, seed: u64) -> Result<Table> {
    let sigma = ArmQuery::colors(&a.sigma)?;
    let mut t = Table::new(&["sigma", "halfplane", "p", "n", "N", "mean", "stderr", "samples", "seed"]);
    let mut points = Vec::new();
    for (k, &big_n) in a.big_n.to_vec().iter().enumerate() {
        let q = ArmQuery::new(&sigma, a.n, big_n, a.halfplane)?;
        let r = Arc::new(if a.halfplane { Region::half_plane_annulus(0, big_n)? } else { Region::ball(big_n)? });
        let e = mc_estimate(|c| arm_event(c, &q).unwrap(), &r, a.p, samples, derive_seed(seed, k as u64));
        let mut row = vec![a.sigma.as_str().into(), a.halfplane.into(), a.p.into(), a.n.into(), big_n.into()];
        row.extend(estimate_cells(&e));
        t.push(row);
        points.push((big_n as f64 / a.n.max(1) as f64, e));
    }
    if let Ok(f) = fit_exponent(&points) {
        t.summary = json!({ "slope": f.slope, "slope_stderr": f.slope_stderr });
    }
    Ok(t)
}

fn grid_table(
    g: &GridParams,
    samples: u64,
    seed: u64,
    est: fn(f64, u32, u64, u64) -> Result<Estimate>,
) -> Result<Table> {
    let mut t = Table::new(&["p", "n", "mean", "stderr", "samples", "seed"]);
    let mut reported = Vec::new();
    let mut k = 0;
    for &p in &g.p.to_vec() {
        // the reported proxy is the largest n whose relative error is below 10%
        let mut best: Option<(u32, Estimate)> = None;
        for &n in &g.n.to_vec() {
            let e = est(p, n, samples, derive_seed(seed, k))?;
            k += 1;
            if e.mean > 0.0 && e.stderr / e.mean < 0.1 && best.map_or(true, |b| n > b.0) {
                best = Some((n, e));
            }
            let mut row = vec![p.into(), n.into()];
            row.extend(estimate_cells(&e));
            t.push(row);
        }
        reported.push(json!({ "p": p, "n": best.map(|b| b.0), "mean": best.map(|b| b.1.mean) }));
    }
    t.summary = json!({ "reported": reported });
    Ok(t)
}

fn corrlen_table(c: &CorrLenParams, samples: u64, seed: u64) -> Result<Table> {
    let mut t = Table::new(&["p", "eps", "l_p", "capped", "probes", "samples", "seed"]);
    for (k, &p) in c.p.to_vec().iter().enumerate() {
        let s = derive_seed(seed, k as u64);
        let scan = correlation_length(p, c.eps, c.n_max, samples, s)?;
        t.push(vec![
            p.into(),
            c.eps.into(),
            scan.length.value().into(),
            scan.length.is_capped().into(),
            (scan.probes.len() as u64).into(),
            samples.into(),
            s.into(),
        ]);
    }
    Ok(t)
}

/// Driving functions of `samples` explorations in the half-hexagon of
/// radius `r`, in sample order.
pub fn driving_samples(r: u32, rho: f64, samples: u64, seed: u64) -> Result<Vec<DrivingSample>> {
    let region = exploration_region(r)?;
    (0..samples)
        .into_par_iter()
        .map(|i| exploration_driving(&sample(&region, 0.5, seed, i), rho))
        .collect()
}

fn driving_table(d: &DrivingParams, samples: u64, seed: u64) -> Result<Table> {
    let drivings = driving_samples(d.r, d.rho, samples, seed)?;
    let mut t = Table::new(&["t", "count", "short", "mean", "variance", "var_over_t", "z_mean", "seed"]);
    for &time in &d.times.to_vec() {
        // sequential accumulation keeps the sums independent of scheduling
        let mut m = DrivingMoments::new(vec![time]);
        for s in &drivings {
            m.push(s);
        }
        let (mean, var) = if m.count > 1 { (m.mean(0), m.variance(0)) } else { (f64::NAN, f64::NAN) };
        let z = mean / (var / m.count as f64).sqrt();
        t.push(vec![
            time.into(),
            m.count.into(),
            m.short.into(),
            mean.into(),
            var.into(),
            (var / time).into(),
            z.into(),
            seed.into(),
        ]);
    }
    Ok(t)
}

/// Closed winding along the first homology direction on the `n`-torus.
pub fn torus_closed_winding(c: &Configuration) -> bool {
    torus_winding(c, Color::Closed, Homology::First).unwrap()
}

/// Width of the `p` interval over which a decreasing curve falls from
/// `hi` to `lo`, by linear interpolation.
pub fn window_width(ps: &[f64], ys: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let cross = |level: f64| -> Option<f64> {
        ps.windows(2).zip(ys.windows(2)).find_map(|(p, y)| {
            (y[0] >= level && y[1] <= level && y[0] > y[1])
                .then(|| p[0] + (y[0] - level) / (y[0] - y[1]) * (p[1] - p[0]))
        })
    };
    Some(cross(lo)? - cross(hi)?)
}

fn torus_window_table(tw: &TorusWindowParams, samples: u64, seed: u64) -> Result<Table> {
    let mut t = Table::new(&["n", "p", "mean", "stderr", "samples", "seed"]);
    let ps: Vec<f64> =
        (0..tw.steps).map(|j| tw.p_min + (tw.p_max - tw.p_min) * j as f64 / (tw.steps - 1) as f64).collect();
    let mut widths = Vec::new();
    for (k, &n) in tw.sizes.to_vec().iter().enumerate() {
        let r = Arc::new(Region::torus(n)?);
        // one seed per size keeps the curve monotone in p
        let s = derive_seed(seed, k as u64);
        let mut ys = Vec::new();
        for &p in &ps {
            let e = mc_estimate(torus_closed_winding, &r, p, samples, s);
            ys.push(e.mean);
            let mut row = vec![n.into(), p.into()];
            row.extend(estimate_cells(&e));
            t.push(row);
        }
        widths.push(json!({ "n": n, "width": window_width(&ps, &ys, 0.25, 0.75) }));
    }
    let w: Vec<Option<f64>> = widths.iter().map(|x| x["width"].as_f64()).collect();
    let shrinking = w.windows(2).all(|p| matches!(p, [Some(a), Some(b)] if b < a));
    t.summary = json!({ "windows": widths, "shrinking": shrinking });
    Ok(t)
}

fn scaling_table_rows(s: &ScalingTableParams, samples: u64, seed: u64) -> Result<Table> {
    let params = ScalingParams {
        eps: s.eps,
        n_max: s.n_max,
        corr_samples: s.corr_samples,
        samples,
        theta_factor: s.theta_factor,
        seed,
    };
    let rows = scaling_table(&s.p.to_vec(), &params)?;
    let mut t = Table::new(&[
        "p",
        "l_p",
        "capped",
        "theta",
        "theta_stderr",
        "one_arm",
        "one_arm_stderr",
        "four_arm",
        "four_arm_stderr",
        "product",
        "ratio",
    ]);
    for r in &rows {
        t.push(vec![
            r.p.into(),
            r.l_p.value().into(),
            r.l_p.is_capped().into(),
            r.theta.mean.into(),
            r.theta.stderr.into(),
            r.one_arm.mean.into(),
            r.one_arm.stderr.into(),
            r.four_arm.mean.into(),
            r.four_arm.stderr.into(),
            r.product.into(),
            r.ratio.into(),
        ]);
    }
    let spread = |v: Vec<f64>| {
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        let min = v.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    };
    let theta_fit = fit_exponent(&rows.iter().map(|r| (r.p - 0.5, r.theta)).collect::<Vec<_>>()).ok();
    t.summary = json!({
        "product_spread": spread(rows.iter().map(|r| r.product).collect()),
        "ratio_spread": spread(rows.iter().map(|r| r.ratio).collect()),
        "theta_slope": theta_fit.map(|f| f.slope),
    });
    Ok(t)
}

fn russo_table(r: &RussoParams, samples: u64, seed: u64) -> Result<Table> {
    let rep = russo_check(r.w, r.h, r.p, r.step, samples, seed)?;
    let mut t = Table::new(&[
        "w",
        "h",
        "p",
        "step",
        "derivative",
        "derivative_stderr",
        "pivotal_sum",
        "pivotal_stderr",
        "combined_stderr",
        "agrees",
        "samples",
        "seed",
    ]);
    t.push(vec![
        r.w.into(),
        r.h.into(),
        r.p.into(),
        r.step.into(),
        rep.derivative.into(),
        rep.derivative_stderr.into(),
        rep.pivotal_sum.into(),
        rep.pivotal_stderr.into(),
        rep.combined_stderr().into(),
        rep.agrees(3.0).into(),
        samples.into(),
        seed.into(),
    ]);
    Ok(t)
}

/// The exponential decay bound `6 exp(−n / (2L))`.
pub fn decay_bound(n: u32, l: u32) -> f64 {
    6.0 * (-(n as f64) / (2.0 * l as f64)).exp()
}

fn exp_decay_table(e: &ExpDecayParams, samples: u64, seed: u64) -> Result<Table> {
    // the bound is stated for crossings of [0, L] × [0, 2L]
    let scan = correlation_length_rect(e.p, e.eps, 2, e.n_max, e.corr_samples, derive_seed(seed, 0))?;
    if scan.length.is_capped() {
        return Err(Error::Capacity(format!("correlation length exceeds n_max = {}", e.n_max)));
    }
    let l = scan.length.value();
    let mut t = Table::new(&["l", "n", "mean", "stderr", "samples", "seed", "bound", "holds"]);
    let mut all = true;
    for (k, &m) in e.multiples.iter().enumerate() {
        let n = m * l;
        let est = theta_estimate(e.p, n, samples, derive_seed(seed, 1 + k as u64))?;
        let bound = decay_bound(n, l);
        let holds = est.mean <= bound + 3.0 * est.stderr;
        all &= holds;
        let mut row = vec![l.into(), n.into()];
        row.extend(estimate_cells(&est));
        row.push(bound.into());
        row.push(holds.into());
        t.push(row);
    }
    t.summary = json!({ "l": l, "holds": all });
    Ok(t)
}

/// Paths written by a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub table: Table,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Runs the recipe and writes `<out>.csv` and `<out>.manifest.json`. On
/// any error no output file is left behind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let table = compute(cfg)?;
    let prefix = cfg.out_prefix();
    let csv_path = with_suffix(&prefix, ".csv");
    let manifest_path = with_suffix(&prefix, ".manifest.json");
    let manifest = json!({
        "kind": cfg.experiment.kind(),
        "config": cfg,
        "seed": cfg.seed,
        "samples": cfg.samples,
        "workers": cfg.workers.unwrap_or_else(rayon::current_num_threads),
        "version": env!("CARGO_PKG_VERSION"),
        "csv": csv_path.file_name().map(|s| s.to_string_lossy().into_owned()),
        "rows": table.rows.len(),
        "summary": table.summary,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "timestamp": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    });
    let write = || -> Result<()> {
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&csv_path, table.to_csv()?)?;
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let _ = writeln!(text);
        std::fs::write(&manifest_path, text)?;
        Ok(())
    };
    if let Err(e) = write() {
        let _ = std::fs::remove_file(&csv_path);
        let _ = std::fs::remove_file(&manifest_path);
        return Err(e);
    }
    Ok(RunReport { csv: csv_path, manifest: manifest_path, table })
}
