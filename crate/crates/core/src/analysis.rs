//! Cluster and connectivity queries, decreasing-clock influence zones, and the
//! covariance estimate behind the decoupling of near and far connection
//! events.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::Serialize;

use crate::dynamics::{check_time, sample_opening_times, Configuration, Model};
use crate::env::{sample_clocks, ClockField, ConstraintDist, SeedSpec, StreamLabel};
use crate::error::{Error, Result};
use crate::lattice::{EdgeId, LatticeBox, Vertex, Window};
use crate::stats::{tally_replicates, try_tally_replicates, Proportion};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterReport {
    pub root: Vertex,
    pub size: usize,
    /// Largest graph distance from the root to a cluster vertex.
    pub radius: u64,
    /// For each queried `n`: does the cluster meet `∂B(n)`?
    pub reached: BTreeMap<u64, bool>,
}

/// Breadth-first search from vertex index `start` through open edges,
/// restricted to vertices accepted by `allowed`. `visit` is called on every
/// vertex reached; returning `true` stops the search, and the function then
/// returns `true`.
pub(crate) fn explore(
    window: &Window,
    start: usize,
    is_open: impl Fn(EdgeId) -> bool,
    allowed: impl Fn(usize) -> bool,
    mut visit: impl FnMut(usize) -> bool,
) -> bool {
    let mut seen = vec![false; window.num_vertices()];
    let mut queue = std::collections::VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    while let Some(x) = queue.pop_front() {
        if visit(x) {
            return true;
        }
        for (id, y) in window.neighbors(x) {
            if !seen[y] && is_open(id) && allowed(y) {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    false
}

/// Does an open path from `start` reach `∂B(n)` (centred at the origin)?
pub(crate) fn reaches_box_boundary(
    window: &Window,
    start: usize,
    n: u64,
    is_open: impl Fn(EdgeId) -> bool,
    allowed: impl Fn(usize) -> bool,
) -> bool {
    explore(window, start, is_open, allowed, |x| window.vertex(x).norm() == n)
}

fn require_box(window: &Window, n: u64) -> Result<()> {
    if window.contains_box(&LatticeBox::new(n)) {
        Ok(())
    } else {
        Err(Error::RegionTooSmall(format!("B({n}) does not fit in {window:?}")))
    }
}

/// Open cluster of `v`, with boundary hits for every radius in `radii`.
pub fn cluster_of(config: &Configuration, v: Vertex, radii: &[u64]) -> Result<ClusterReport> {
    let w = config.window();
    let start = w.vertex_index(v).ok_or(Error::VertexOutsideRegion(v))?;
    let mut size = 0;
    let mut radius = 0;
    let mut min_norm = u64::MAX;
    let mut max_norm = 0;
    explore(&w, start, |id| config.is_open_id(id), |_| true, |x| {
        let p = w.vertex(x);
        size += 1;
        radius = radius.max(p.distance(v));
        min_norm = min_norm.min(p.norm());
        max_norm = max_norm.max(p.norm());
        false
    });
    // norms move by at most one along an edge, so the cluster meets every
    // sphere between its extreme norms
    let reached = radii.iter().map(|&n| (n, min_norm <= n && n <= max_norm)).collect();
    Ok(ClusterReport { root: v, size, radius, reached })
}

/// `1{v ↔ ∂B(n)}` with `B(n)` centred at the origin.
pub fn connects(config: &Configuration, v: Vertex, n: u64) -> Result<bool> {
    let w = config.window();
    require_box(&w, n)?;
    let start = w.vertex_index(v).ok_or(Error::VertexOutsideRegion(v))?;
    Ok(reaches_box_boundary(&w, start, n, |id| config.is_open_id(id), |_| true))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfluenceZone {
    pub sources: Vec<Vertex>,
    pub t: f64,
    pub members: BTreeSet<Vertex>,
}

/// Vertices reachable from `sources` along paths whose clocks are strictly
/// decreasing and all below `t`.
///
/// Each vertex keeps the largest clock by which it has been entered so far;
/// continuing from it is possible over any edge with a smaller clock. Sources
/// are entered at `t`. Entries are processed largest first.
pub fn influence_zone(clocks: &ClockField, t: f64, sources: &[Vertex]) -> Result<InfluenceZone> {
    check_time(t)?;
    let w = clocks.window();
    let entry = zone_entries(clocks, t, sources)?;
    let members = (0..w.num_vertices())
        .filter(|&i| entry[i] >= 0.0)
        .map(|i| w.vertex(i))
        .collect();
    Ok(InfluenceZone { sources: sources.to_vec(), t, members })
}

/// Best entry clock of every vertex, `-1` where unreached.
fn zone_entries(clocks: &ClockField, t: f64, sources: &[Vertex]) -> Result<Vec<f64>> {
    let w = clocks.window();
    let mut entry = vec![-1.0f64; w.num_vertices()];
    // clocks are non-negative, so the bit pattern orders them
    let mut heap = BinaryHeap::new();
    for v in sources {
        let i = w.vertex_index(*v).ok_or(Error::VertexOutsideRegion(*v))?;
        entry[i] = t;
        heap.push((t.to_bits(), Reverse(i)));
    }
    while let Some((bits, Reverse(x))) = heap.pop() {
        let c = f64::from_bits(bits);
        if c < entry[x] {
            continue;
        }
        for (id, y) in w.neighbors(x) {
            let u = clocks.at(id);
            if u < c && u > entry[y] {
                entry[y] = u;
                heap.push((u.to_bits(), Reverse(y)));
            }
        }
    }
    Ok(entry)
}

/// `4 * 3^(m-1) / m!`, capped at 1.
pub fn mzone_bound(m: u64) -> f64 {
    let mut b = 4.0 / 3.0;
    for j in 1..=m {
        b *= 3.0 / j as f64;
    }
    b.min(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZoneEstimate {
    pub m: u64,
    pub n: u64,
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub replicates: u64,
    pub bound: f64,
    pub seed: u64,
}

/// Frequency of `M_t(0) ∩ ∂B(m) ≠ ∅`. A decreasing path reaching `∂B(m)`
/// first does so inside `B(m)`, so clocks on `B(m)` suffice.
pub fn mzone_escape_frequency(m: u64, t: f64, replicates: u64, seed: u64) -> Result<ZoneEstimate> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    check_time(t)?;
    let w = Window::centered(m);
    let hits: u64 = tally_replicates(replicates, |rep, acc: &mut u64| {
        let clocks = sample_clocks(w, SeedSpec::new(seed, rep, StreamLabel::Clocks));
        let entry = zone_entries(&clocks, t, &[Vertex::ORIGIN]).expect("origin in window");
        if (0..w.num_vertices()).any(|i| entry[i] >= 0.0 && w.vertex(i).norm() == m) {
            *acc += 1;
        }
    });
    let p = Proportion::new(hits, replicates);
    Ok(ZoneEstimate {
        m,
        n: m,
        t,
        estimate: p.estimate(),
        stderr: p.stderr(),
        replicates,
        bound: mzone_bound(m),
        seed,
    })
}

/// Both sides of the zone-overlap step: the frequency of
/// `M_t(∂B(m)) ∩ M_t(w) ≠ ∅` and twice the frequency of
/// `M_t(∂B(m)) ∩ ∂B(⌊3m/2⌋) ≠ ∅`, on the truncated window `B(4m)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZoneOverlap {
    pub m: u64,
    pub w: Vertex,
    pub t: f64,
    pub overlap: Proportion,
    pub escape: Proportion,
}

pub fn zone_overlap(m: u64, w: Vertex, t: f64, replicates: u64, seed: u64) -> Result<ZoneOverlap> {
    if m == 0 || w.norm() != 2 * m {
        return Err(Error::InvalidParameter(format!("need m >= 1 and w on ∂B(2m), got m={m}, w={w}")));
    }
    check_time(t)?;
    let window = Window::centered(4 * m);
    let ring: Vec<Vertex> = crate::lattice::boundary(&LatticeBox::new(m));
    let far = 3 * m / 2;
    let (overlap, escape): (u64, u64) = tally_replicates(replicates, |rep, acc: &mut (u64, u64)| {
        let clocks = sample_clocks(window, SeedSpec::new(seed, rep, StreamLabel::Clocks));
        let near = zone_entries(&clocks, t, &ring).expect("inside window");
        let from_w = zone_entries(&clocks, t, &[w]).expect("inside window");
        if near.iter().zip(&from_w).any(|(a, b)| *a >= 0.0 && *b >= 0.0) {
            acc.0 += 1;
        }
        if (0..window.num_vertices()).any(|i| near[i] >= 0.0 && window.vertex(i).norm() == far) {
            acc.1 += 1;
        }
    });
    Ok(ZoneOverlap {
        m,
        w,
        t,
        overlap: Proportion::new(overlap, replicates),
        escape: Proportion::new(escape, replicates),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceParams {
    pub model: Model,
    pub dist: Option<ConstraintDist>,
    pub m: u64,
    pub n: u64,
    pub w: Vertex,
    pub t: f64,
    pub replicates: u64,
    pub pad: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceEstimate {
    pub model: Model,
    pub m: u64,
    pub n: u64,
    pub w: Vertex,
    pub t: f64,
    pub cov_hat: f64,
    pub stderr: f64,
    pub replicates: u64,
    /// `m exp(-m log(m) / 2)`, the decay rate with unit constant.
    pub bound: f64,
    /// `|cov_hat| - 3 stderr <= bound`.
    pub within_bound: bool,
    pub seed: u64,
}

/// Plug-in covariance of `1{0 ↔ ∂B(m)}` and `1{w ↔ ∂B(n)}`, where the second
/// path may only use vertices outside `B(2m)` apart from `w` itself.
pub fn covariance_pair(p: &CovarianceParams) -> Result<CovarianceEstimate> {
    if p.m == 0 || 2 * p.m >= p.n {
        return Err(Error::InvalidParameter(format!("need 1 <= m and 2m < n, got m={}, n={}", p.m, p.n)));
    }
    if p.w.norm() != 2 * p.m {
        return Err(Error::InvalidParameter(format!("{} is not on ∂B({})", p.w, 2 * p.m)));
    }
    if p.replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be positive".into()));
    }
    check_time(p.t)?;
    let target = Window::centered(p.n + p.pad);
    // counts of (x, y) = (1,1), (1,0), (0,1)
    let counts: (u64, u64, u64) = try_tally_replicates(p.replicates, |rep, acc: &mut (u64, u64, u64)| {
        let times = sample_opening_times(p.model, p.dist.as_ref(), target, p.seed, rep)?;
        let w = times.window();
        let open = |id: EdgeId| times.time(id) <= p.t;
        let origin = w.vertex_index(Vertex::ORIGIN).expect("origin inside");
        let x = reaches_box_boundary(&w, origin, p.m, open, |_| true);
        let start = w.vertex_index(p.w).expect("w inside");
        let inner = 2 * p.m;
        let y = reaches_box_boundary(&w, start, p.n, open, |i| i == start || w.vertex(i).norm() > inner);
        match (x, y) {
            (true, true) => acc.0 += 1,
            (true, false) => acc.1 += 1,
            (false, true) => acc.2 += 1,
            _ => {}
        }
        Ok::<(), Error>(())
    })?;
    let n = p.replicates as f64;
    let (n11, n10, n01) = (counts.0 as f64, counts.1 as f64, counts.2 as f64);
    let n00 = n - n11 - n10 - n01;
    let px = (n11 + n10) / n;
    let py = (n11 + n01) / n;
    let cov_hat = n11 / n - px * py;
    // standard error of the mean of z = (x - px)(y - py)
    let cells = [(n11, 1.0, 1.0), (n10, 1.0, 0.0), (n01, 0.0, 1.0), (n00, 0.0, 0.0)];
    let mean_z: f64 = cells.iter().map(|(c, x, y)| c * (x - px) * (y - py)).sum::<f64>() / n;
    let var_z: f64 = cells
        .iter()
        .map(|(c, x, y)| c * ((x - px) * (y - py) - mean_z).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let stderr = (var_z / n).sqrt();
    let m = p.m as f64;
    let bound = m * (-0.5 * m * m.ln()).exp();
    Ok(CovarianceEstimate {
        model: p.model,
        m: p.m,
        n: p.n,
        w: p.w,
        t: p.t,
        cov_hat,
        stderr,
        replicates: p.replicates,
        bound,
        within_bound: cov_hat.abs() - 3.0 * stderr <= bound,
        seed: p.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve_bernoulli;
    use crate::lattice::Edge;

    fn v(x1: i64, x2: i64) -> Vertex {
        Vertex::new(x1, x2)
    }

    #[test]
    fn closed_and_open_clusters() {
        let w = Window::centered(2);
        let closed = Configuration::constant(Model::Bernoulli, 0.0, w, false);
        let r = cluster_of(&closed, Vertex::ORIGIN, &[0, 1]).unwrap();
        assert_eq!((r.size, r.radius), (1, 0));
        assert!(r.reached[&0]);
        assert!(!r.reached[&1]);
        let open = Configuration::constant(Model::Bernoulli, 1.0, w, true);
        let r = cluster_of(&open, Vertex::ORIGIN, &[1, 2]).unwrap();
        assert_eq!(r.size, 25);
        assert_eq!(r.radius, 4);
        assert!(r.reached[&2]);
        assert!(cluster_of(&open, v(9, 9), &[]).is_err());
    }

    #[test]
    fn connection_queries() {
        let w = Window::centered(3);
        let closed = Configuration::constant(Model::Bernoulli, 0.0, w, false);
        let open = Configuration::constant(Model::Bernoulli, 1.0, w, true);
        assert!(connects(&closed, Vertex::ORIGIN, 0).unwrap());
        assert!(!connects(&closed, Vertex::ORIGIN, 1).unwrap());
        for n in 0..=3 {
            assert!(connects(&open, Vertex::ORIGIN, n).unwrap());
        }
        assert!(matches!(connects(&open, Vertex::ORIGIN, 4), Err(Error::RegionTooSmall(_))));
    }

    #[test]
    fn star_reaches_unit_sphere_iff_a_spoke_is_open() {
        let w = Window::centered(1);
        let spoke = Edge::new(Vertex::ORIGIN, v(0, 1)).unwrap();
        let clocks = ClockField::from_fn(w, |e| (e == spoke).then_some(0.5)).unwrap();
        assert!(!connects(&evolve_bernoulli(&clocks, 0.4).unwrap(), Vertex::ORIGIN, 1).unwrap());
        assert!(connects(&evolve_bernoulli(&clocks, 0.6).unwrap(), Vertex::ORIGIN, 1).unwrap());
    }

    fn path_clocks(values: &[f64]) -> ClockField {
        let w = Window::new(0, values.len() as i64, 0, 0);
        ClockField::from_fn(w, |e| Some(values[e.a().x1 as usize])).unwrap()
    }

    #[test]
    fn zone_follows_strictly_decreasing_clocks() {
        let clocks = path_clocks(&[0.9, 0.5, 0.2]);
        let z = influence_zone(&clocks, 1.0, &[Vertex::ORIGIN]).unwrap();
        assert_eq!(z.members.len(), 4);

        let clocks = path_clocks(&[0.2, 0.5]);
        let z = influence_zone(&clocks, 1.0, &[Vertex::ORIGIN]).unwrap();
        assert_eq!(z.members, [v(0, 0), v(1, 0)].into_iter().collect());

        let clocks = path_clocks(&[0.3, 0.2]);
        let z = influence_zone(&clocks, 0.1, &[Vertex::ORIGIN]).unwrap();
        assert_eq!(z.members, [Vertex::ORIGIN].into_iter().collect());
    }

    #[test]
    fn zone_reentry_with_larger_clock_extends_reach() {
        // (0,0) -0.9- (1,0) -0.8- (2,0)   and a detour (0,0) -0.3- (0,1) -0.2- (1,1) -0.1- (1,0)
        // (2,0) is reachable only through the direct entry of (1,0) at 0.9.
        let w = Window::new(0, 2, 0, 1);
        let clocks = ClockField::from_fn(w, |e| {
            let key = (e.a().x1, e.a().x2, e.b().x1, e.b().x2);
            Some(match key {
                (0, 0, 1, 0) => 0.9,
                (1, 0, 2, 0) => 0.8,
                (0, 0, 0, 1) => 0.3,
                (0, 1, 1, 1) => 0.2,
                (1, 0, 1, 1) => 0.1,
                _ => 0.95,
            })
        })
        .unwrap();
        let z = influence_zone(&clocks, 1.0, &[Vertex::ORIGIN]).unwrap();
        assert!(z.members.contains(&v(2, 0)));
        assert!(z.members.contains(&v(1, 1)));
    }

    /// Exhaustive oracle: depth-first over all decreasing paths.
    fn brute_zone(clocks: &ClockField, t: f64, source: Vertex) -> BTreeSet<Vertex> {
        fn go(clocks: &ClockField, at: Vertex, limit: f64, out: &mut BTreeSet<Vertex>) {
            out.insert(at);
            for u in at.neighbors() {
                let Ok(e) = Edge::new(at, u) else { continue };
                if let Some(c) = clocks.get(&e) {
                    if c < limit {
                        go(clocks, u, c, out);
                    }
                }
            }
        }
        let mut out = BTreeSet::new();
        go(clocks, source, t, &mut out);
        out
    }

    #[test]
    fn zone_matches_exhaustive_search() {
        let w = Window::centered(3);
        for rep in 0..50 {
            let clocks = sample_clocks(w, SeedSpec::new(8, rep, StreamLabel::Clocks));
            for t in [0.3, 0.7, 1.0] {
                let z = influence_zone(&clocks, t, &[Vertex::ORIGIN]).unwrap();
                assert_eq!(z.members, brute_zone(&clocks, t, Vertex::ORIGIN));
            }
        }
    }

    #[test]
    fn zone_is_monotone_in_t() {
        let w = Window::centered(6);
        for rep in 0..30 {
            let clocks = sample_clocks(w, SeedSpec::new(2, rep, StreamLabel::Clocks));
            let small = influence_zone(&clocks, 0.4, &[Vertex::ORIGIN]).unwrap();
            let large = influence_zone(&clocks, 0.8, &[Vertex::ORIGIN]).unwrap();
            assert!(small.members.is_subset(&large.members));
        }
    }

    #[test]
    fn zone_bound_values() {
        assert!((mzone_bound(7) - 2916.0 / 5040.0).abs() < 1e-15);
        assert_eq!(mzone_bound(5), 1.0);
        assert!((mzone_bound(10) - 4.0 * 19683.0 / 3628800.0).abs() < 1e-15);
    }

    #[test]
    fn escape_is_rare_for_small_t() {
        // union bound: 4 * 3^2 * t^3 / 3! with t = 0.01
        let est = mzone_escape_frequency(3, 0.01, 20_000, 1).unwrap();
        let bound: f64 = 4.0 * 9.0 * 1e-6 / 6.0;
        assert!(est.estimate <= bound + 3.0 * (bound / 20_000.0).sqrt());
        let est = mzone_escape_frequency(5, 1.0, 2_000, 1).unwrap();
        assert!(est.estimate <= 1.0);
        assert_eq!(est.bound, 1.0);
    }

    #[test]
    fn covariance_at_time_zero_is_exactly_zero() {
        let p = CovarianceParams {
            model: Model::Bernoulli,
            dist: None,
            m: 2,
            n: 6,
            w: v(4, 1),
            t: 0.0,
            replicates: 200,
            pad: 0,
            seed: 3,
        };
        let c = covariance_pair(&p).unwrap();
        assert_eq!(c.cov_hat, 0.0);
        assert_eq!(c.stderr, 0.0);
    }

    #[test]
    fn bernoulli_events_on_disjoint_edges_are_uncorrelated() {
        let p = CovarianceParams {
            model: Model::Bernoulli,
            dist: None,
            m: 2,
            n: 7,
            w: v(4, 0),
            t: 0.55,
            replicates: 20_000,
            pad: 0,
            seed: 9,
        };
        let c = covariance_pair(&p).unwrap();
        assert!(c.cov_hat.abs() <= 3.0 * c.stderr + 1e-12, "{c:?}");
    }

    #[test]
    fn covariance_preconditions() {
        let base = CovarianceParams {
            model: Model::Bernoulli,
            dist: None,
            m: 2,
            n: 6,
            w: v(4, 1),
            t: 0.5,
            replicates: 10,
            pad: 0,
            seed: 0,
        };
        assert!(covariance_pair(&CovarianceParams { n: 4, ..base.clone() }).is_err());
        assert!(covariance_pair(&CovarianceParams { w: v(3, 1), ..base.clone() }).is_err());
        assert!(covariance_pair(&CovarianceParams { model: Model::Cdpre, ..base.clone() }).is_err());
        assert!(covariance_pair(&base).is_ok());
    }

    #[test]
    fn overlap_sides_are_frequencies() {
        let o = zone_overlap(2, v(4, 0), 1.0, 500, 4).unwrap();
        assert!(o.overlap.estimate() <= 1.0 && o.escape.estimate() <= 1.0);
        assert!(zone_overlap(2, v(3, 0), 1.0, 10, 4).is_err());
    }
}
