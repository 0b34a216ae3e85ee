//! The block exploration `T_k` for the intermediate model, empirical
//! revealments and influences, and the OSSS variance inequality.
//!
//! `T_k` decides `{0 ↔ ∂B(n)}` in the intermediate configuration at time `t`.
//! It starts from `Z = ∂B(k)` and repeatedly processes the lexicographically
//! first unprocessed block of `I_n` (blocks meeting `B(n)`) that meets `Z`.
//! Processing a block reveals the clocks of `E(Λ) ∪ ∂^eΛ`, after which `Z` is
//! closed under revealed open edges. All clock reads go through a guarded
//! view that fails on unrevealed edges.

use std::collections::{BTreeSet, VecDeque};
use std::io::{self, Write};

use serde::Serialize;

use crate::dynamics::{check_time, intermediate_opening_times};
use crate::env::{resampled_value, sample_clocks, ClockField, SeedSpec, StreamLabel};
use crate::error::{Error, Result};
use crate::lattice::{boundary, BlockIndex, Edge, EdgeId, LatticeBox, Vertex, Window};
use crate::stats::{try_tally_replicates, Proportion, Tally};

/// Clock window used for explorations at scale `n`: the blocks meeting
/// `B(n)` plus one further ring, which holds every external edge boundary.
pub fn exploration_window(n: u64) -> Window {
    Window::centered(n).block_aligned(1)
}

#[derive(Clone, Debug)]
struct PlanBlock {
    index: BlockIndex,
    g: EdgeId,
    all: Vec<EdgeId>,
    a: Vec<EdgeId>,
    reveal: Vec<EdgeId>,
}

/// Geometry shared by every run at scale `n` on a given clock window.
#[derive(Clone, Debug)]
struct Plan {
    window: Window,
    n: u64,
    blocks: Vec<PlanBlock>,
    /// Position in `blocks` of the `I_n` block holding each vertex.
    block_at: Vec<Option<usize>>,
}

impl Plan {
    fn new(window: Window, n: u64) -> Result<Plan> {
        let need = exploration_window(n);
        if !window.contains_window(&need) {
            return Err(Error::RegionTooSmall(format!(
                "exploration at scale {n} needs {need:?}, clocks cover {window:?}"
            )));
        }
        let ball = Window::centered(n);
        let mut blocks = Vec::new();
        let mut block_at = vec![None; window.num_vertices()];
        for b in ball.block_aligned(0).blocks_within() {
            let edges = window.block_edges(b).expect("inside exploration window");
            let mut reveal = edges.all.clone();
            for v in b.window().vertices() {
                let i = window.vertex_index(v).expect("inside");
                block_at[i] = Some(blocks.len());
                for (id, j) in window.neighbors(i) {
                    if !b.contains(window.vertex(j)) {
                        reveal.push(id);
                    }
                }
            }
            blocks.push(PlanBlock { index: b, g: edges.g, all: edges.all, a: edges.a, reveal });
        }
        Ok(Plan { window, n, blocks, block_at })
    }

    fn check_coverage(&self, clocks: &ClockField) -> Result<()> {
        if clocks.window() != self.window {
            return Err(Error::RegionTooSmall("clock window does not match the plan".into()));
        }
        for b in &self.blocks {
            if let Some(id) = b.reveal.iter().find(|id| !clocks.in_region(**id)) {
                return Err(Error::EdgeOutsideRegion(self.window.edge(*id)));
            }
        }
        Ok(())
    }

    fn in_ball(&self, i: usize) -> bool {
        self.window.vertex(i).norm() <= self.n
    }
}

/// Clock view that refuses to read edges that have not been revealed.
struct Guarded<'a> {
    clocks: &'a ClockField,
    revealed: Vec<bool>,
    open: Vec<bool>,
}

impl Guarded<'_> {
    fn read(&self, id: EdgeId) -> Result<f64> {
        if self.revealed[id.0] {
            Ok(self.clocks.at(id))
        } else {
            Err(Error::UnrevealedRead(self.clocks.window().edge(id)))
        }
    }

    fn is_open(&self, id: EdgeId) -> Result<bool> {
        if self.revealed[id.0] {
            Ok(self.open[id.0])
        } else {
            Err(Error::UnrevealedRead(self.clocks.window().edge(id)))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationState {
    window: Window,
    processed: Vec<BlockIndex>,
    z: Vec<bool>,
    revealed: Vec<bool>,
}

impl ExplorationState {
    /// Number of blocks processed.
    pub fn step(&self) -> usize {
        self.processed.len()
    }

    pub fn processed_blocks(&self) -> &[BlockIndex] {
        &self.processed
    }

    /// `D_m`: distinguished edges of the processed blocks, in processing order.
    pub fn d_set(&self) -> Vec<Edge> {
        self.processed.iter().map(|b| b.g()).collect()
    }

    pub fn z_set(&self) -> BTreeSet<Vertex> {
        self.vertices_where(&self.z)
    }

    pub fn revealed_edges(&self) -> BTreeSet<Edge> {
        self.window
            .edges()
            .filter(|id| self.revealed[id.0])
            .map(|id| self.window.edge(id))
            .collect()
    }

    pub fn is_revealed(&self, e: &Edge) -> bool {
        self.window.edge_id(e).is_some_and(|id| self.revealed[id.0])
    }

    pub fn num_revealed(&self) -> usize {
        self.revealed.iter().filter(|r| **r).count()
    }

    fn vertices_where(&self, mask: &[bool]) -> BTreeSet<Vertex> {
        (0..mask.len()).filter(|i| mask[*i]).map(|i| self.window.vertex(i)).collect()
    }
}

/// Runs `T_k` on `clocks` and returns the decided value of `{0 ↔ ∂B(n)}`.
pub fn run_tk(clocks: &ClockField, t: f64, k: u64, n: u64) -> Result<(bool, ExplorationState)> {
    check_time(t)?;
    check_scales(k, n)?;
    let plan = Plan::new(clocks.window(), n)?;
    plan.check_coverage(clocks)?;
    explore(&plan, clocks, t, k)
}

fn check_scales(k: u64, n: u64) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    Ok(())
}

fn explore(plan: &Plan, clocks: &ClockField, t: f64, k: u64) -> Result<(bool, ExplorationState)> {
    let w = plan.window;
    let mut view = Guarded {
        clocks,
        revealed: vec![false; w.num_edge_slots()],
        open: vec![false; w.num_edge_slots()],
    };
    let mut z = vec![false; w.num_vertices()];
    let mut done = vec![false; plan.blocks.len()];
    let mut eligible = BTreeSet::new();
    let mut processed = Vec::new();
    let mut queue = VecDeque::new();

    let join = |i: usize, z: &mut Vec<bool>, eligible: &mut BTreeSet<usize>, done: &[bool]| {
        z[i] = true;
        if let Some(b) = plan.block_at[i] {
            if !done[b] {
                eligible.insert(b);
            }
        }
    };
    for v in boundary(&LatticeBox::new(k)) {
        join(w.vertex_index(v).expect("inside"), &mut z, &mut eligible, &done);
    }

    while let Some(bi) = eligible.pop_first() {
        let block = &plan.blocks[bi];
        done[bi] = true;
        processed.push(block.index);
        let fresh: Vec<EdgeId> = block.reveal.iter().copied().filter(|id| !view.revealed[id.0]).collect();
        for id in &fresh {
            view.revealed[id.0] = true;
        }
        let mut max_a = f64::NEG_INFINITY;
        let mut min_rest = f64::INFINITY;
        for id in &block.all {
            let u = view.read(*id)?;
            if block.a.contains(id) {
                max_a = max_a.max(u);
            } else {
                min_rest = min_rest.min(u);
            }
        }
        let closed_g = max_a < min_rest;
        for id in &fresh {
            view.open[id.0] = view.read(*id)? <= t && !(*id == block.g && closed_g);
        }
        for id in &fresh {
            if !view.open[id.0] {
                continue;
            }
            let (a, b) = w.endpoints(*id);
            let start = match (z[a], z[b]) {
                (true, false) => b,
                (false, true) => a,
                _ => continue,
            };
            join(start, &mut z, &mut eligible, &done);
            queue.push_back(start);
            while let Some(x) = queue.pop_front() {
                for (e, y) in w.neighbors(x) {
                    if !z[y] && view.revealed[e.0] && view.open[e.0] {
                        join(y, &mut z, &mut eligible, &done);
                        queue.push_back(y);
                    }
                }
            }
        }
    }

    let decided = decide(plan, &view, k)?;
    Ok((decided, ExplorationState { window: w, processed, z, revealed: view.revealed }))
}

/// Reads the answer off revealed edges only. Vertices joined to `∂B(k)` inside
/// `B(n)` have all incident edges revealed, and an open path from the origin
/// to `∂B(n)` must cross `∂B(k)`.
fn decide(plan: &Plan, view: &Guarded<'_>, k: u64) -> Result<bool> {
    let w = plan.window;
    let mut seen = vec![false; w.num_vertices()];
    let mut queue: VecDeque<usize> = boundary(&LatticeBox::new(k))
        .into_iter()
        .map(|v| w.vertex_index(v).expect("inside"))
        .collect();
    for &i in &queue {
        seen[i] = true;
    }
    while let Some(x) = queue.pop_front() {
        for (e, y) in w.neighbors(x) {
            if !seen[y] && plan.in_ball(y) && view.is_open(e)? {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    let origin = w.vertex_index(Vertex::ORIGIN).expect("inside");
    if !seen[origin] {
        return Ok(false);
    }
    let mut reach = vec![false; w.num_vertices()];
    reach[origin] = true;
    queue.push_back(origin);
    while let Some(x) = queue.pop_front() {
        if w.vertex(x).norm() == plan.n {
            return Ok(true);
        }
        for (e, y) in w.neighbors(x) {
            if !reach[y] && plan.in_ball(y) && view.is_open(e)? {
                reach[y] = true;
                queue.push_back(y);
            }
        }
    }
    Ok(false)
}

/// Largest norm reached by the origin's open cluster inside `B(n)`.
fn origin_reach(w: &Window, open: &[bool], n: u64) -> (u64, Vec<bool>) {
    let mut seen = vec![false; w.num_vertices()];
    let origin = w.vertex_index(Vertex::ORIGIN).expect("inside");
    let mut best = 0;
    seen[origin] = true;
    let mut queue = VecDeque::from([origin]);
    while let Some(x) = queue.pop_front() {
        best = best.max(w.vertex(x).norm());
        for (e, y) in w.neighbors(x) {
            if !seen[y] && open[e.0] && w.vertex(y).norm() <= n {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    (best, seen)
}

/// Vertices joined to `∂B(k)` by open edges anywhere in the window.
fn boundary_cluster(w: &Window, open: &[bool], k: u64) -> Vec<bool> {
    let mut seen = vec![false; w.num_vertices()];
    let mut queue = VecDeque::new();
    for v in boundary(&LatticeBox::new(k)) {
        let i = w.vertex_index(v).expect("inside");
        seen[i] = true;
        queue.push_back(i);
    }
    while let Some(x) = queue.pop_front() {
        for (e, y) in w.neighbors(x) {
            if !seen[y] && open[e.0] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    seen
}

fn replicate_clocks(window: Window, seed: u64, rep: u64) -> ClockField {
    sample_clocks(window, SeedSpec::new(seed, rep, StreamLabel::Clocks))
}

fn open_bits(clocks: &ClockField, t: f64) -> Result<Vec<bool>> {
    let w = clocks.window();
    let (times, _) = intermediate_opening_times(clocks, &w)?;
    Ok((0..w.num_edge_slots()).map(|i| times.time(EdgeId(i)) <= t).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RevealmentReport {
    pub t: f64,
    pub n: u64,
    pub replicates: u64,
    pub seed: u64,
    pub window: Window,
    pub ks: Vec<u64>,
    /// `reveal_counts[j][slot]`: replicates in which `T_{ks[j]}` revealed the edge.
    #[serde(skip)]
    pub reveal_counts: Vec<Vec<u64>>,
    /// Replicates with `0 ↔ ∂B(k)` for `k = 1..=n`, full information.
    pub theta_counts: Vec<u64>,
    /// `Σ_{k=1}^n θ̃_k` estimated from `theta_counts`.
    pub s_n: f64,
    /// Largest `Σ_k δ̂_e(T_k) / (4 Ŝ_n)` over edges.
    pub beta_hat: f64,
    /// Runs whose decided value differed from full information.
    pub determination_mismatches: u64,
    /// Runs revealing an edge none of whose blocks meets the cluster of `∂B(k)`.
    pub chain_violations: u64,
    /// Edges with `δ̂_e(T_k)` above twice the best block connection frequency.
    pub chain_excess: u64,
}

impl RevealmentReport {
    fn position(&self, k: u64) -> Option<usize> {
        self.ks.iter().position(|x| *x == k)
    }

    pub fn delta(&self, k: u64, e: &Edge) -> Option<f64> {
        let j = self.position(k)?;
        let id = self.window.edge_id(e)?;
        Some(self.reveal_counts[j][id.0] as f64 / self.replicates as f64)
    }

    pub fn delta_sum(&self, e: &Edge) -> Option<f64> {
        let id = self.window.edge_id(e)?;
        let total: u64 = self.reveal_counts.iter().map(|c| c[id.0]).sum();
        Some(total as f64 / self.replicates as f64)
    }

    pub fn theta(&self, k: u64) -> Proportion {
        Proportion::new(self.theta_counts[(k - 1) as usize], self.replicates)
    }

    /// Rows `(k, edge, delta_hat, stderr)` over all edges of the window.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,edge_a_x1,edge_a_x2,edge_b_x1,edge_b_x2,delta_hat,stderr")?;
        for (j, k) in self.ks.iter().enumerate() {
            for id in self.window.edges() {
                let p = Proportion::new(self.reveal_counts[j][id.0], self.replicates);
                let e = self.window.edge(id);
                writeln!(
                    out,
                    "{k},{},{},{},{},{},{}",
                    e.a().x1,
                    e.a().x2,
                    e.b().x1,
                    e.b().x2,
                    p.estimate(),
                    p.stderr()
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct RevealTally {
    reveals: Vec<u64>,
    theta: Vec<u64>,
    block_touch: Vec<u64>,
    mismatches: u64,
    chain_violations: u64,
}

impl Tally for RevealTally {
    fn merge(&mut self, other: Self) {
        self.reveals.merge(other.reveals);
        self.theta.merge(other.theta);
        self.block_touch.merge(other.block_touch);
        self.mismatches += other.mismatches;
        self.chain_violations += other.chain_violations;
    }
}

fn reveal_tally(plan: &Plan, t: f64, ks: &[u64], replicates: u64, seed: u64) -> Result<RevealTally> {
    let w = plan.window;
    let slots = w.num_edge_slots();
    let nb = plan.blocks.len();
    // blocks whose reveal set holds each slot
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); slots];
    for (bi, b) in plan.blocks.iter().enumerate() {
        for id in &b.reveal {
            owners[id.0].push(bi);
        }
    }
    try_tally_replicates(replicates, |rep, acc: &mut RevealTally| {
        if acc.reveals.is_empty() {
            acc.reveals = vec![0; ks.len() * slots];
            acc.theta = vec![0; plan.n as usize];
            acc.block_touch = vec![0; ks.len() * nb];
        }
        let clocks = replicate_clocks(w, seed, rep);
        let open = open_bits(&clocks, t)?;
        let (reach, _) = origin_reach(&w, &open, plan.n);
        for k in 1..=reach.min(plan.n) {
            acc.theta[(k - 1) as usize] += 1;
        }
        let truth = reach >= plan.n;
        for (j, &k) in ks.iter().enumerate() {
            let (decided, state) = explore(plan, &clocks, t, k)?;
            if decided != truth {
                acc.mismatches += 1;
            }
            let cluster = boundary_cluster(&w, &open, k);
            let touched: Vec<bool> = plan
                .blocks
                .iter()
                .map(|b| b.index.window().vertices().any(|v| cluster[w.vertex_index(v).expect("inside")]))
                .collect();
            for (bi, hit) in touched.iter().enumerate() {
                if *hit {
                    acc.block_touch[j * nb + bi] += 1;
                }
            }
            for (slot, r) in state.revealed.iter().enumerate() {
                if *r {
                    acc.reveals[j * slots + slot] += 1;
                    if !owners[slot].iter().any(|bi| touched[*bi]) {
                        acc.chain_violations += 1;
                    }
                }
            }
        }
        Ok(())
    })
}

/// Runs `T_k` for every `k` in `1..=n` on each replicate's clocks.
pub fn revealment_table(t: f64, n: u64, replicates: u64, seed: u64) -> Result<RevealmentReport> {
    let ks: Vec<u64> = (1..=n).collect();
    revealment_for(t, n, &ks, replicates, seed)
}

pub fn revealment_for(t: f64, n: u64, ks: &[u64], replicates: u64, seed: u64) -> Result<RevealmentReport> {
    check_time(t)?;
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be positive".into()));
    }
    for &k in ks {
        check_scales(k, n)?;
    }
    let plan = Plan::new(exploration_window(n), n)?;
    let w = plan.window;
    let tally = reveal_tally(&plan, t, ks, replicates, seed)?;
    let slots = w.num_edge_slots();
    let nb = plan.blocks.len();
    let reps = replicates as f64;
    let reveal_counts: Vec<Vec<u64>> = tally.reveals.chunks(slots).map(<[u64]>::to_vec).collect();
    let s_n = tally.theta.iter().map(|c| *c as f64 / reps).sum::<f64>();

    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); slots];
    for (bi, b) in plan.blocks.iter().enumerate() {
        for id in &b.reveal {
            owners[id.0].push(bi);
        }
    }
    let mut chain_excess = 0;
    for (j, counts) in reveal_counts.iter().enumerate() {
        for id in w.edges() {
            let delta = Proportion::new(counts[id.0], replicates);
            let best = owners[id.0]
                .iter()
                .map(|bi| Proportion::new(tally.block_touch[j * nb + bi], replicates))
                .max_by(|a, b| a.successes.cmp(&b.successes));
            let (bound, sigma_b) = best.map_or((0.0, 0.0), |p| (2.0 * p.estimate(), 2.0 * p.stderr()));
            let sigma = (delta.stderr().powi(2) + sigma_b.powi(2)).sqrt();
            if delta.estimate() > bound + 3.0 * sigma {
                chain_excess += 1;
            }
        }
    }
    let beta_hat = if s_n > 0.0 {
        w.edges()
            .map(|id| reveal_counts.iter().map(|c| c[id.0]).sum::<u64>() as f64 / reps)
            .fold(0.0, f64::max)
            / (4.0 * s_n)
    } else {
        f64::INFINITY
    };
    Ok(RevealmentReport {
        t,
        n,
        replicates,
        seed,
        window: w,
        ks: ks.to_vec(),
        reveal_counts,
        theta_counts: tally.theta,
        s_n,
        beta_hat,
        determination_mismatches: tally.mismatches,
        chain_violations: tally.chain_violations,
        chain_excess,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfluenceReport {
    pub t: f64,
    pub n: u64,
    pub replicates: u64,
    pub seed: u64,
    pub window: Window,
    /// Replicates whose indicator flipped when the edge was resampled.
    #[serde(skip)]
    pub flips: Vec<u64>,
    pub resamples_per_replicate: u64,
}

impl InfluenceReport {
    pub fn influence(&self, e: &Edge) -> Proportion {
        let count = self.window.edge_id(e).map_or(0, |id| self.flips[id.0]);
        Proportion::new(count, self.replicates)
    }

    /// Rows `(edge, inf_hat, stderr)` over all edges of the window.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "edge_a_x1,edge_a_x2,edge_b_x1,edge_b_x2,inf_hat,stderr")?;
        for id in self.window.edges() {
            let p = Proportion::new(self.flips[id.0], self.replicates);
            let e = self.window.edge(id);
            writeln!(out, "{},{},{},{},{},{}", e.a().x1, e.a().x2, e.b().x1, e.b().x2, p.estimate(), p.stderr())?;
        }
        Ok(())
    }
}

/// Block clocks summarised so that replacing a single clock updates the block
/// event in constant time.
#[derive(Clone, Copy)]
struct BlockSummary {
    a_top: [f64; 2],
    rest_bottom: [f64; 2],
}

impl BlockSummary {
    fn new(clocks: &ClockField, b: &PlanBlock) -> BlockSummary {
        let mut a_top = [f64::NEG_INFINITY; 2];
        let mut rest_bottom = [f64::INFINITY; 2];
        for id in &b.all {
            let u = clocks.at(*id);
            if b.a.contains(id) {
                if u > a_top[0] {
                    a_top = [u, a_top[0]];
                } else if u > a_top[1] {
                    a_top[1] = u;
                }
            } else if u < rest_bottom[0] {
                rest_bottom = [u, rest_bottom[0]];
            } else if u < rest_bottom[1] {
                rest_bottom[1] = u;
            }
        }
        BlockSummary { a_top, rest_bottom }
    }

    /// Block event after the clock `old` of one edge becomes `new`.
    fn event_with(&self, in_a: bool, old: f64, new: f64) -> bool {
        if in_a {
            let others = if old == self.a_top[0] { self.a_top[1] } else { self.a_top[0] };
            others.max(new) < self.rest_bottom[0]
        } else {
            let others = if old == self.rest_bottom[0] { self.rest_bottom[1] } else { self.rest_bottom[0] };
            self.a_top[0] < others.min(new)
        }
    }
}

/// Estimates `Inf_e` of `1{0 ↔ ∂B(n)}` in the intermediate model at time
/// `t`, resampling every edge that can affect it once per replicate. Clocks
/// are shared with [`revealment_table`] under the same seed; the resampled
/// values come from the `Resample` stream.
pub fn influence_table(t: f64, n: u64, replicates: u64, seed: u64) -> Result<InfluenceReport> {
    check_time(t)?;
    if n == 0 || replicates == 0 {
        return Err(Error::InvalidParameter("need n >= 1 and replicates >= 1".into()));
    }
    let plan = Plan::new(exploration_window(n), n)?;
    let w = plan.window;
    let slots = w.num_edge_slots();
    // only edges of blocks meeting B(n) can change a state inside B(n)
    let mut sweep: Vec<EdgeId> = Vec::new();
    let mut slot_block: Vec<Option<usize>> = vec![None; slots];
    for (bi, b) in plan.blocks.iter().enumerate() {
        for id in &b.all {
            slot_block[id.0] = Some(bi);
        }
    }
    let inner = Window::centered(n);
    for id in w.edges() {
        let e = w.edge(id);
        if slot_block[id.0].is_some() || (inner.contains(e.a()) && inner.contains(e.b())) {
            sweep.push(id);
        }
    }
    let in_ball = |id: EdgeId| {
        let e = w.edge(id);
        e.a().norm() <= n && e.b().norm() <= n
    };

    let flips: Vec<u64> = try_tally_replicates(replicates, |rep, acc: &mut Vec<u64>| {
        if acc.is_empty() {
            *acc = vec![0; slots];
        }
        let clocks = replicate_clocks(w, seed, rep);
        let open = open_bits(&clocks, t)?;
        let (reach, cluster) = origin_reach(&w, &open, n);
        let base = reach >= n;
        let summaries: Vec<BlockSummary> = plan.blocks.iter().map(|b| BlockSummary::new(&clocks, b)).collect();
        let resample = SeedSpec::new(seed, rep, StreamLabel::Resample);
        let mut changed: Vec<(EdgeId, bool)> = Vec::with_capacity(2);
        let mut state = open.clone();
        for &id in &sweep {
            let e = w.edge(id);
            let old = clocks.at(id);
            let new = resampled_value(&e, resample);
            changed.clear();
            match slot_block[id.0] {
                Some(bi) => {
                    let b = &plan.blocks[bi];
                    let c = summaries[bi].event_with(b.a.contains(&id), old, new);
                    let g_clock = if id == b.g { new } else { clocks.at(b.g) };
                    changed.push((b.g, g_clock <= t && !c));
                    if id != b.g {
                        changed.push((id, new <= t));
                    }
                }
                None => changed.push((id, new <= t)),
            }
            changed.retain(|(e, s)| open[e.0] != *s && in_ball(*e));
            let touches = changed.iter().any(|(e, _)| {
                let (a, b) = w.endpoints(*e);
                cluster[a] || cluster[b]
            });
            if !touches {
                continue;
            }
            for (e, s) in &changed {
                state[e.0] = *s;
            }
            let (after, _) = origin_reach(&w, &state, n);
            for (e, _) in &changed {
                state[e.0] = open[e.0];
            }
            if (after >= n) != base {
                acc[id.0] += 1;
            }
        }
        Ok(())
    })?;
    Ok(InfluenceReport { t, n, replicates, seed, window: w, flips, resamples_per_replicate: sweep.len() as u64 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OsssCheck {
    pub t: f64,
    pub n: u64,
    pub k: u64,
    pub replicates: u64,
    pub seed: u64,
    pub theta_hat: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    /// `Σ_e δ̂_e(T_k) Inf̂_e`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// `rhs - variance`.
    pub margin: f64,
    pub sigma: f64,
    /// `variance <= rhs + 3 sigma`.
    pub holds: bool,
    pub determination_mismatches: u64,
}

/// Compares `Var̂(f) = θ̂(1-θ̂)` for `f = 1{0 ↔ ∂B(n)}` with
/// `Σ_e δ̂_e(T_k) Inf̂_e`. Standard errors are propagated treating the
/// estimates as independent.
pub fn osss_check(t: f64, n: u64, k: u64, replicates: u64, seed: u64) -> Result<OsssCheck> {
    let reveal = revealment_for(t, n, &[k], replicates, seed)?;
    let infl = influence_table(t, n, replicates, seed)?;
    osss_from_reports(&reveal, &infl, k)
}

/// The OSSS comparison for `T_k` from reports on the same `t`, `n` and
/// replicate count.
pub fn osss_from_reports(reveal: &RevealmentReport, infl: &InfluenceReport, k: u64) -> Result<OsssCheck> {
    if reveal.t != infl.t || reveal.n != infl.n || reveal.replicates != infl.replicates || reveal.window != infl.window {
        return Err(Error::InvalidParameter("revealment and influence reports do not match".into()));
    }
    let j = reveal
        .position(k)
        .ok_or_else(|| Error::InvalidParameter(format!("no revealment recorded for k={k}")))?;
    let replicates = reveal.replicates;
    let theta = reveal.theta(reveal.n);
    let th = theta.estimate();
    let variance = th * (1.0 - th);
    let variance_stderr = (1.0 - 2.0 * th).abs() * theta.stderr();
    let mut rhs = 0.0;
    let mut rhs_var = 0.0;
    for id in reveal.window.edges() {
        let d = Proportion::new(reveal.reveal_counts[j][id.0], replicates);
        let i = Proportion::new(infl.flips[id.0], replicates);
        rhs += d.estimate() * i.estimate();
        rhs_var += (d.estimate() * i.stderr()).powi(2) + (i.estimate() * d.stderr()).powi(2);
    }
    let rhs_stderr = rhs_var.sqrt();
    let sigma = (variance_stderr.powi(2) + rhs_var).sqrt();
    Ok(OsssCheck {
        t: reveal.t,
        n: reveal.n,
        k,
        replicates,
        seed: reveal.seed,
        theta_hat: th,
        variance,
        variance_stderr,
        rhs,
        rhs_stderr,
        margin: rhs - variance,
        sigma,
        holds: variance <= rhs + 3.0 * sigma,
        determination_mismatches: reveal.determination_mismatches,
    })
}
