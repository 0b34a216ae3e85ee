//! The three coupled processes driven by one clock field: constrained-degree
//! percolation, the intermediate block model, and plain Bernoulli percolation.
//!
//! All three are monotone in `t`, so each is summarised by an
//! [`OpeningTimes`] table (the time each edge becomes open, `+inf` if never);
//! the configuration at time `t` is the set of edges whose opening time is at
//! most `t`.

pub mod exact;

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{
    sample_clocks, sample_environment, ClockField, ConstraintDist, Environment, SeedSpec, StreamLabel,
};
use crate::error::{Error, Result};
use crate::lattice::{BlockIndex, Edge, EdgeId, Vertex, Window};
use crate::stats::try_tally_replicates;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Cdpre,
    Intermediate,
    Bernoulli,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Cdpre => "cdpre",
            Model::Intermediate => "intermediate",
            Model::Bernoulli => "bernoulli",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cdpre" => Ok(Model::Cdpre),
            "intermediate" => Ok(Model::Intermediate),
            "bernoulli" => Ok(Model::Bernoulli),
            other => Err(Error::InvalidParameter(format!("unknown model {other:?}"))),
        }
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidTime(t))
    }
}

/// Open/closed state of every edge of a window at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    model: Model,
    t: f64,
    window: Window,
    open: Vec<bool>,
}

impl Configuration {
    pub fn new(model: Model, t: f64, window: Window, open: Vec<bool>) -> Self {
        assert_eq!(open.len(), window.num_edge_slots());
        Configuration { model, t, window, open }
    }

    /// Every edge of `window` open (`open == true`) or closed.
    pub fn constant(model: Model, t: f64, window: Window, open: bool) -> Self {
        let mut bits = vec![false; window.num_edge_slots()];
        for id in window.edges() {
            bits[id.0] = open;
        }
        Configuration { model, t, window, open: bits }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn is_open(&self, e: &Edge) -> bool {
        self.window.edge_id(e).is_some_and(|id| self.open[id.0])
    }

    pub fn is_open_id(&self, id: EdgeId) -> bool {
        self.open[id.0]
    }

    pub(crate) fn bits(&self) -> &[bool] {
        &self.open
    }

    pub fn open_degree(&self, v: Vertex) -> usize {
        match self.window.vertex_index(v) {
            Some(i) => self.window.neighbors(i).filter(|(id, _)| self.open[id.0]).count(),
            None => 0,
        }
    }

    pub fn open_edges(&self) -> Vec<Edge> {
        self.window
            .edges()
            .filter(|id| self.open[id.0])
            .map(|id| self.window.edge(id))
            .collect()
    }

    /// `self <= other` edgewise.
    pub fn is_below(&self, other: &Configuration) -> bool {
        self.window == other.window && self.open.iter().zip(&other.open).all(|(a, b)| !a || *b)
    }

    /// CSV dump, one row per window edge in canonical order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "edge_a_x1,edge_a_x2,edge_b_x1,edge_b_x2,open_bit")?;
        for id in self.window.edges() {
            let e = self.window.edge(id);
            writeln!(
                out,
                "{},{},{},{},{}",
                e.a().x1,
                e.a().x2,
                e.b().x1,
                e.b().x2,
                u8::from(self.open[id.0])
            )?;
        }
        Ok(())
    }
}

/// Time at which every edge of a window opens under one model.
#[derive(Clone, Debug, PartialEq)]
pub struct OpeningTimes {
    model: Model,
    window: Window,
    times: Vec<f64>,
}

impl OpeningTimes {
    pub fn model(&self) -> Model {
        self.model
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn time(&self, id: EdgeId) -> f64 {
        self.times[id.0]
    }

    /// Opening times on a sub-window; edges leaving it are dropped.
    pub fn restrict(&self, target: Window) -> Result<OpeningTimes> {
        if !self.window.contains_window(&target) {
            return Err(Error::RegionTooSmall(format!("{target:?} is not inside {:?}", self.window)));
        }
        let times = (0..target.num_edge_slots())
            .map(|i| {
                let id = EdgeId(i);
                if target.is_valid(id) {
                    self.times[self.window.edge_id(&target.edge(id)).expect("inside").0]
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Ok(OpeningTimes { model: self.model, window: target, times })
    }

    pub fn at(&self, t: f64) -> Configuration {
        Configuration {
            model: self.model,
            t,
            window: self.window,
            open: self.times.iter().map(|&x| x <= t).collect(),
        }
    }
}

/// Opens `a`-`b` if both endpoints are below their constraints.
#[inline]
pub(crate) fn try_open(deg: &mut [u8], kappa: &[u8], a: usize, b: usize) -> bool {
    if deg[a] < kappa[a] && deg[b] < kappa[b] {
        deg[a] += 1;
        deg[b] += 1;
        true
    } else {
        false
    }
}

/// Constraints of the clock window's vertices, `u8::MAX` where unknown.
fn local_constraints(env: &Environment, clocks: &ClockField) -> Result<Vec<u8>> {
    let w = clocks.window();
    let kappa: Vec<u8> = if env.window() == w {
        (0..w.num_vertices()).map(|i| env.kappa_at(i)).collect()
    } else {
        w.vertices().map(|v| env.kappa(v).unwrap_or(u8::MAX)).collect()
    };
    for id in w.edges().filter(|id| clocks.in_region(*id)) {
        let (a, b) = w.endpoints(id);
        for i in [a, b] {
            if kappa[i] == u8::MAX {
                return Err(Error::MissingConstraint(w.vertex(i)));
            }
        }
    }
    Ok(kappa)
}

/// Processes the edges with `U_e <= t` in increasing clock order (ties by
/// canonical edge order) and records when each one opens.
fn sweep(kappa: &[u8], clocks: &ClockField, t: f64) -> Vec<f64> {
    let w = clocks.window();
    let mut order: Vec<(f64, usize)> = w
        .edges()
        .map(|id| (clocks.at(id), id.0))
        .filter(|(u, _)| *u <= t)
        .collect();
    order.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut deg = vec![0u8; w.num_vertices()];
    let mut times = vec![f64::INFINITY; w.num_edge_slots()];
    for (u, slot) in order {
        let (a, b) = w.endpoints(EdgeId(slot));
        if try_open(&mut deg, kappa, a, b) {
            times[slot] = u;
        }
    }
    times
}

/// CDPRE configuration at time `t` by a sorted sweep over the attempts made
/// up to `t`. Edges outside the clocked region never open and vertices outside
/// the window contribute no degree.
pub fn evolve_cdpre(env: &Environment, clocks: &ClockField, t: f64) -> Result<Configuration> {
    check_time(t)?;
    let kappa = local_constraints(env, clocks)?;
    let times = sweep(&kappa, clocks, t);
    Ok(Configuration {
        model: Model::Cdpre,
        t,
        window: clocks.window(),
        open: times.iter().map(|x| x.is_finite()).collect(),
    })
}

/// Opening times for CDPRE from a single sweep up to `t = 1`. Since the sweep
/// up to `t` is a prefix of the full sweep, `at(t)` agrees with
/// [`evolve_cdpre`] at every `t`.
pub fn cdpre_opening_times(env: &Environment, clocks: &ClockField) -> Result<OpeningTimes> {
    let kappa = local_constraints(env, clocks)?;
    Ok(OpeningTimes { model: Model::Cdpre, window: clocks.window(), times: sweep(&kappa, clocks, 1.0) })
}

pub fn bernoulli_opening_times(clocks: &ClockField) -> OpeningTimes {
    let w = clocks.window();
    let mut times = vec![f64::INFINITY; w.num_edge_slots()];
    for id in w.edges() {
        times[id.0] = clocks.at(id);
    }
    OpeningTimes { model: Model::Bernoulli, window: w, times }
}

pub fn evolve_bernoulli(clocks: &ClockField, t: f64) -> Result<Configuration> {
    check_time(t)?;
    let mut c = bernoulli_opening_times(clocks).at(t);
    c.model = Model::Bernoulli;
    Ok(c)
}

/// `true` iff every value flagged in `subset` is strictly below every value
/// outside it. With one fixed subset of i.i.d. continuous values this has
/// probability `1 / C(len, |subset|)`.
pub fn bottom_subset_event(values: &[f64], subset: &[bool]) -> bool {
    let (inside, outside) = subset_extremes(values, subset);
    inside < outside
}

fn subset_extremes(values: &[f64], subset: &[bool]) -> (f64, f64) {
    let mut max_inside = f64::NEG_INFINITY;
    let mut min_outside = f64::INFINITY;
    for (&x, &flag) in values.iter().zip(subset) {
        if flag {
            max_inside = max_inside.max(x);
        } else {
            min_outside = min_outside.min(x);
        }
    }
    (max_inside, min_outside)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockEvent {
    pub index: BlockIndex,
    pub c_occurred: bool,
    /// Minimum clock over the block edges outside `A`.
    pub min_outside: f64,
    /// Maximum clock over `A`.
    pub max_inside: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BlockEventReport {
    pub blocks: Vec<BlockEvent>,
}

impl BlockEventReport {
    pub fn occurred(&self) -> impl Iterator<Item = BlockIndex> + '_ {
        self.blocks.iter().filter(|b| b.c_occurred).map(|b| b.index)
    }
}

/// Evaluates the block event for one complete block of `clocks`.
pub(crate) fn block_event(clocks: &ClockField, b: BlockIndex) -> Option<(EdgeId, BlockEvent)> {
    let w = clocks.window();
    let edges = w.block_edges(b)?;
    if !edges.all.iter().all(|id| clocks.in_region(*id)) {
        return None;
    }
    let mut max_inside = f64::NEG_INFINITY;
    let mut min_outside = f64::INFINITY;
    for id in &edges.all {
        let u = clocks.at(*id);
        if edges.a.contains(id) {
            max_inside = max_inside.max(u);
        } else {
            min_outside = min_outside.min(u);
        }
    }
    Some((
        edges.g,
        BlockEvent { index: b, c_occurred: max_inside < min_outside, min_outside, max_inside },
    ))
}

/// Opening times of the intermediate model: every edge opens at `U_e`, except
/// that `g` of a block where the block event occurs never opens.
///
/// Every block whose `g` lies in `window` must be fully clocked. Blocks whose
/// `g` is clocked but lies outside `window` and whose block is incomplete are
/// left unevaluated; their `g` behaves as a Bernoulli edge.
pub fn intermediate_opening_times(
    clocks: &ClockField,
    window: &Window,
) -> Result<(OpeningTimes, BlockEventReport)> {
    let w = clocks.window();
    let mut times = bernoulli_opening_times(clocks).times;
    let mut report = BlockEventReport::default();
    for b in w.blocks_with_g() {
        let g = b.g();
        let gid = w.edge_id(&g).expect("g inside window");
        if !clocks.in_region(gid) {
            continue;
        }
        match block_event(clocks, b) {
            Some((gid, ev)) => {
                if ev.c_occurred {
                    times[gid.0] = f64::INFINITY;
                }
                report.blocks.push(ev);
            }
            None if window.contains(g.a()) && window.contains(g.b()) => {
                return Err(Error::IncompleteBlock(b));
            }
            None => {}
        }
    }
    Ok((OpeningTimes { model: Model::Intermediate, window: w, times }, report))
}

pub fn evolve_intermediate(
    clocks: &ClockField,
    t: f64,
    window: &Window,
) -> Result<(Configuration, BlockEventReport)> {
    check_time(t)?;
    let (times, report) = intermediate_opening_times(clocks, window)?;
    Ok((times.at(t), report))
}

/// Samples one replicate of `model` covering `target`.
///
/// Constraints and clocks come from the `Constraints` and `Clocks` streams of
/// `(master_seed, replicate)`. The intermediate model is clocked on the
/// block-aligned cover of `target`, so its opening times span that larger
/// window.
pub fn sample_opening_times(
    model: Model,
    dist: Option<&ConstraintDist>,
    target: Window,
    master_seed: u64,
    replicate: u64,
) -> Result<OpeningTimes> {
    let seed = SeedSpec::new(master_seed, replicate, StreamLabel::Clocks);
    match model {
        Model::Cdpre => {
            let dist = dist.ok_or_else(|| {
                Error::InvalidParameter("the cdpre model needs a constraint distribution".into())
            })?;
            let env = sample_environment(dist, target, seed);
            cdpre_opening_times(&env, &sample_clocks(target, seed))
        }
        Model::Bernoulli => Ok(bernoulli_opening_times(&sample_clocks(target, seed))),
        Model::Intermediate => {
            let clocks = sample_clocks(target.block_aligned(0), seed);
            Ok(intermediate_opening_times(&clocks, &target)?.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledTriple {
    pub cdpre: Configuration,
    pub intermediate: Configuration,
    pub bernoulli: Configuration,
}

/// Edgewise violations of `ω <= ω̃` and of `ω̃ <= ω̂`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DominanceViolations {
    pub cdpre_above_intermediate: u64,
    pub intermediate_above_bernoulli: u64,
}

impl DominanceViolations {
    pub fn total(&self) -> u64 {
        self.cdpre_above_intermediate + self.intermediate_above_bernoulli
    }
}

impl std::ops::Add for DominanceViolations {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        DominanceViolations {
            cdpre_above_intermediate: self.cdpre_above_intermediate + o.cdpre_above_intermediate,
            intermediate_above_bernoulli: self.intermediate_above_bernoulli
                + o.intermediate_above_bernoulli,
        }
    }
}

pub(crate) fn count_violations(
    low: &[bool],
    mid: &[bool],
    high: &[bool],
) -> DominanceViolations {
    let mut v = DominanceViolations::default();
    for ((l, m), h) in low.iter().zip(mid).zip(high) {
        v.cdpre_above_intermediate += u64::from(*l && !*m);
        v.intermediate_above_bernoulli += u64::from(*m && !*h);
    }
    v
}

impl CoupledTriple {
    pub fn violations(&self) -> DominanceViolations {
        count_violations(self.cdpre.bits(), self.intermediate.bits(), self.bernoulli.bits())
    }
}

/// All three processes from the same clocks and constraints.
pub fn evolve_coupled(
    env: &Environment,
    clocks: &ClockField,
    t: f64,
    window: &Window,
) -> Result<CoupledTriple> {
    check_time(t)?;
    let (intermediate, _) = evolve_intermediate(clocks, t, window)?;
    Ok(CoupledTriple {
        cdpre: evolve_cdpre(env, clocks, t)?,
        intermediate,
        bernoulli: evolve_bernoulli(clocks, t)?,
    })
}

/// Opening times of all three processes, for evaluating many `t` at once.
pub struct CoupledTimes {
    pub cdpre: OpeningTimes,
    pub intermediate: OpeningTimes,
    pub bernoulli: OpeningTimes,
}

impl CoupledTimes {
    pub fn new(env: &Environment, clocks: &ClockField, window: &Window) -> Result<Self> {
        Ok(CoupledTimes {
            cdpre: cdpre_opening_times(env, clocks)?,
            intermediate: intermediate_opening_times(clocks, window)?.0,
            bernoulli: bernoulli_opening_times(clocks),
        })
    }

    pub fn violations_at(&self, t: f64) -> DominanceViolations {
        let mut v = DominanceViolations::default();
        for ((l, m), h) in self
            .cdpre
            .times
            .iter()
            .zip(&self.intermediate.times)
            .zip(&self.bernoulli.times)
        {
            let (l, m, h) = (*l <= t, *m <= t, *h <= t);
            v.cdpre_above_intermediate += u64::from(l && !m);
            v.intermediate_above_bernoulli += u64::from(m && !h);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceRow {
    pub t: f64,
    pub replicates: u64,
    pub edges_per_replicate: u64,
    pub violations: DominanceViolations,
}

/// Counts edgewise violations of `ω <= ω̃ <= ω̂` over `replicates` coupled
/// samples on the block-aligned cover of `B(n)`, at every time in `times`.
pub fn dominance_check(
    dist: &ConstraintDist,
    n: u64,
    times: &[f64],
    replicates: u64,
    master_seed: u64,
) -> Result<Vec<DominanceRow>> {
    for &t in times {
        check_time(t)?;
    }
    let window = Window::centered(n).block_aligned(0);
    let counts: Vec<u64> = try_tally_replicates(replicates, |rep, acc: &mut Vec<u64>| {
        if acc.is_empty() {
            *acc = vec![0; 2 * times.len()];
        }
        let seed = SeedSpec::new(master_seed, rep, StreamLabel::Constraints);
        let env = sample_environment(dist, window, seed);
        let clocks = sample_clocks(window, seed.with_stream(StreamLabel::Clocks));
        let coupled = CoupledTimes::new(&env, &clocks, &window)?;
        for (j, &t) in times.iter().enumerate() {
            let v = coupled.violations_at(t);
            acc[2 * j] += v.cdpre_above_intermediate;
            acc[2 * j + 1] += v.intermediate_above_bernoulli;
        }
        Ok::<(), Error>(())
    })?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, &t)| DominanceRow {
            t,
            replicates,
            edges_per_replicate: window.num_edges() as u64,
            violations: DominanceViolations {
                cdpre_above_intermediate: counts.get(2 * j).copied().unwrap_or(0),
                intermediate_above_bernoulli: counts.get(2 * j + 1).copied().unwrap_or(0),
            },
        })
        .collect())
}
