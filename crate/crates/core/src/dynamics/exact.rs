//! Exact law of CDPRE on graphs with at most [`MAX_EXACT_EDGES`] edges.
//!
//! At time `t` the configuration depends only on the set `S = {e : U_e <= t}`
//! and on the relative order of the clocks inside `S`. Each ordered sequence
//! of distinct edges of length `k` therefore carries weight
//! `t^k (1-t)^(m-k) / k!`, and summing the event indicator over all such
//! sequences gives its probability exactly.

use serde::Serialize;

use crate::dynamics::{check_time, try_open};
use crate::env::{SeedSpec, StreamLabel};
use crate::error::{Error, Result};
use crate::stats::tally_replicates;

pub const MAX_EXACT_EDGES: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmallGraph {
    num_vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl SmallGraph {
    pub fn new(num_vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(a, b) in &edges {
            if a == b || a >= num_vertices || b >= num_vertices {
                return Err(Error::InvalidParameter(format!("bad edge ({a},{b})")));
            }
        }
        Ok(SmallGraph { num_vertices, edges })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn open_degree(&self, open: &[bool], v: usize) -> usize {
        self.edges
            .iter()
            .zip(open)
            .filter(|((a, b), o)| **o && (*a == v || *b == v))
            .count()
    }

    pub fn connected(&self, open: &[bool], s: usize, t: usize) -> bool {
        let mut seen = vec![false; self.num_vertices];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(x) = stack.pop() {
            if x == t {
                return true;
            }
            for (&(a, b), &o) in self.edges.iter().zip(open) {
                let y = if a == x { b } else if b == x { a } else { continue };
                if o && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        false
    }

    fn check_kappa(&self, kappa: &[u8]) -> Result<()> {
        if kappa.len() != self.num_vertices {
            return Err(Error::InvalidParameter(format!(
                "{} constraints for {} vertices",
                kappa.len(),
                self.num_vertices
            )));
        }
        Ok(())
    }
}

/// Exact probability of `event` under CDPRE at time `t`.
pub fn exact_distribution(
    graph: &SmallGraph,
    kappa: &[u8],
    t: f64,
    event: impl Fn(&[bool]) -> bool,
) -> Result<f64> {
    check_time(t)?;
    graph.check_kappa(kappa)?;
    let m = graph.edges.len();
    if m > MAX_EXACT_EDGES {
        return Err(Error::GraphTooLarge(m, MAX_EXACT_EDGES));
    }
    // weight[k] = t^k (1-t)^(m-k) / k!
    let mut weight = vec![0.0; m + 1];
    let mut fact = 1.0;
    for (k, w) in weight.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        *w = t.powi(k as i32) * (1.0 - t).powi((m - k) as i32) / fact;
    }

    struct Walk<'a, F> {
        graph: &'a SmallGraph,
        kappa: &'a [u8],
        weight: &'a [f64],
        event: F,
        used: Vec<bool>,
        open: Vec<bool>,
        deg: Vec<u8>,
        total: f64,
    }

    impl<F: Fn(&[bool]) -> bool> Walk<'_, F> {
        fn visit(&mut self, depth: usize) {
            if self.weight[depth] > 0.0 && (self.event)(&self.open) {
                self.total += self.weight[depth];
            }
            for i in 0..self.graph.edges.len() {
                if self.used[i] {
                    continue;
                }
                let (a, b) = self.graph.edges[i];
                self.used[i] = true;
                let opened = try_open(&mut self.deg, self.kappa, a, b);
                self.open[i] = opened;
                self.visit(depth + 1);
                if opened {
                    self.deg[a] -= 1;
                    self.deg[b] -= 1;
                    self.open[i] = false;
                }
                self.used[i] = false;
            }
        }
    }

    let mut walk = Walk {
        graph,
        kappa,
        weight: &weight,
        event,
        used: vec![false; m],
        open: vec![false; m],
        deg: vec![0; graph.num_vertices],
        total: 0.0,
    };
    walk.visit(0);
    Ok(walk.total)
}

/// One CDPRE realisation on a small graph from explicit clocks.
pub fn simulate(graph: &SmallGraph, kappa: &[u8], clocks: &[f64], t: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..graph.edges.len()).filter(|&i| clocks[i] <= t).collect();
    order.sort_by(|&x, &y| clocks[x].total_cmp(&clocks[y]).then(x.cmp(&y)));
    let mut deg = vec![0u8; graph.num_vertices];
    let mut open = vec![false; graph.edges.len()];
    for i in order {
        let (a, b) = graph.edges[i];
        open[i] = try_open(&mut deg, kappa, a, b);
    }
    open
}

/// Clocks of replicate `replicate` for a small graph, keyed by edge position.
pub fn small_graph_clocks(graph: &SmallGraph, master_seed: u64, replicate: u64) -> Vec<f64> {
    let key = SeedSpec::new(master_seed, replicate, StreamLabel::Clocks).key();
    (0..graph.edges.len() as u64).map(|i| key.unit(i)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleRow {
    pub fixture: &'static str,
    pub event: &'static str,
    pub t: f64,
    pub exact: f64,
    pub estimate: f64,
    /// `sqrt(p(1-p)/N)` at the exact `p`.
    pub sigma: f64,
    pub replicates: u64,
    /// `|estimate - exact| <= 4 sigma`.
    pub pass: bool,
}

/// Monte Carlo frequencies of every fixture event against the exact law.
/// The same replicate clocks are reused for every `t`.
pub fn oracle_check(times: &[f64], replicates: u64, master_seed: u64) -> Result<Vec<OracleRow>> {
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be positive".into()));
    }
    let mut rows = Vec::new();
    for fx in fixtures() {
        for &t in times {
            check_time(t)?;
            let hits: Vec<u64> = tally_replicates(replicates, |rep, acc: &mut Vec<u64>| {
                if acc.is_empty() {
                    *acc = vec![0; fx.events.len()];
                }
                let clocks = small_graph_clocks(&fx.graph, master_seed, rep);
                let open = simulate(&fx.graph, &fx.kappa, &clocks, t);
                for (c, ev) in acc.iter_mut().zip(&fx.events) {
                    *c += u64::from((ev.check)(&fx.graph, &open));
                }
            });
            for (ev, c) in fx.events.iter().zip(hits) {
                let exact = exact_distribution(&fx.graph, &fx.kappa, t, |open| (ev.check)(&fx.graph, open))?;
                let estimate = c as f64 / replicates as f64;
                let sigma = (exact * (1.0 - exact) / replicates as f64).max(0.0).sqrt();
                rows.push(OracleRow {
                    fixture: fx.name,
                    event: ev.name,
                    t,
                    exact,
                    estimate,
                    sigma,
                    replicates,
                    pass: (estimate - exact).abs() <= 4.0 * sigma + 1e-12,
                });
            }
        }
    }
    Ok(rows)
}

pub type EventFn = fn(&SmallGraph, &[bool]) -> bool;

#[derive(Clone, Debug)]
pub struct FixtureEvent {
    pub name: &'static str,
    pub check: EventFn,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub graph: SmallGraph,
    pub kappa: Vec<u8>,
    pub events: Vec<FixtureEvent>,
}

fn fixture(
    name: &'static str,
    n: usize,
    edges: &[(usize, usize)],
    kappa: Vec<u8>,
    events: Vec<FixtureEvent>,
) -> Fixture {
    Fixture { name, graph: SmallGraph::new(n, edges.to_vec()).expect("fixture"), kappa, events }
}

fn ev(name: &'static str, check: EventFn) -> FixtureEvent {
    FixtureEvent { name, check }
}

/// The bundled small graphs used by the oracle check.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        fixture("single_edge", 2, &[(0, 1)], vec![3, 3], vec![ev("edge_open", |_, o| o[0])]),
        fixture(
            "path3_mid_kappa1",
            3,
            &[(0, 1), (1, 2)],
            vec![3, 1, 3],
            vec![ev("both_open", |_, o| o[0] && o[1]), ev("left_open", |_, o| o[0])],
        ),
        fixture(
            "star4",
            5,
            &[(0, 1), (0, 2), (0, 3), (0, 4)],
            vec![3; 5],
            vec![
                ev("center_degree_ge1", |g, o| g.open_degree(o, 0) >= 1),
                ev("center_degree_3", |g, o| g.open_degree(o, 0) == 3),
                ev("all_spokes_open", |_, o| o.iter().all(|x| *x)),
            ],
        ),
        fixture(
            "unit_square",
            4,
            &[(0, 1), (1, 2), (2, 3), (0, 3)],
            vec![1, 2, 3, 2],
            vec![
                ev("opposite_corners_connected", |g, o| g.connected(o, 0, 2)),
                ev("corner0_degree_1", |g, o| g.open_degree(o, 0) == 1),
            ],
        ),
        // vertex (row, col) -> 3*row + col
        fixture(
            "grid2x3",
            6,
            &[(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)],
            vec![3; 6],
            vec![ev("corner_to_opposite_corner", |g, o| g.connected(o, 0, 5))],
        ),
        // bars 0-1-2-3 and 4-5-6-7 joined by 1-5
        fixture(
            "h_graph",
            8,
            &[(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7), (1, 5)],
            vec![3, 2, 3, 3, 3, 2, 3, 3],
            vec![
                ev("top_left_to_bottom_right", |g, o| g.connected(o, 0, 7)),
                ev("crossbar_open", |_, o| o[6]),
            ],
        ),
    ]
}
