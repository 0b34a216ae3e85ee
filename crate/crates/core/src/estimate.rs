//! Monte Carlo experiments: connection-probability tables, truncated
//! susceptibility, the leading Simon-Lieb term, decay fits, threshold scans
//! and the block combinatorics.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::explore;
use crate::dynamics::{bottom_subset_event, check_time, sample_opening_times, Model, OpeningTimes};
use crate::env::{ConstraintDist, SeedSpec, StreamLabel};
use crate::error::{Error, Result};
use crate::lattice::{block_geometry, EdgeId, Vertex, Window};
use crate::stats::{binomial, mean_and_stderr, tally_replicates, try_tally_replicates, Proportion};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaRow {
    pub n: u64,
    pub theta_hat: f64,
    pub stderr: f64,
    pub successes: u64,
    pub replicates: u64,
    /// Distance from `∂B(n)` to the edge of the simulated window.
    pub pad: u64,
    /// One-sided 95% bound `3 / replicates` for rows with no successes.
    pub zero_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaTable {
    pub model: Model,
    pub t: f64,
    pub seed: u64,
    pub rows: Vec<ThetaRow>,
}

impl ThetaTable {
    pub fn row(&self, n: u64) -> Option<&ThetaRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    /// `Σ θ̂_k` over the rows with `1 <= k <= n`.
    pub fn prefix_sum(&self, n: u64) -> f64 {
        self.rows.iter().filter(|r| r.n >= 1 && r.n <= n).map(|r| r.theta_hat).sum()
    }

    /// Builds a table from exact values, for checks on synthetic input.
    pub fn synthetic(model: Model, t: f64, rows: impl IntoIterator<Item = (u64, f64)>) -> ThetaTable {
        let rows = rows
            .into_iter()
            .map(|(n, theta_hat)| ThetaRow {
                n,
                theta_hat,
                stderr: 0.0,
                successes: 0,
                replicates: 0,
                pad: 0,
                zero_bound: None,
            })
            .collect();
        ThetaTable { model, t, seed: 0, rows }
    }

    /// Rows `(model, t, n, theta_hat, stderr, replicates, pad, seed)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "model,t,n,theta_hat,stderr,replicates,pad,seed,zero_bound")?;
        for r in &self.rows {
            let zb = r.zero_bound.map(|b| b.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.model, self.t, r.n, r.theta_hat, r.stderr, r.replicates, r.pad, self.seed, zb
            )?;
        }
        Ok(())
    }
}

fn check_replicates(replicates: u64) -> Result<()> {
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be positive".into()));
    }
    Ok(())
}

/// Graph-distance extremes of the origin's open cluster: the largest norm
/// reached, and the cluster size.
fn origin_cluster(times: &OpeningTimes, t: f64) -> (u64, u64) {
    let w = times.window();
    let origin = w.vertex_index(Vertex::ORIGIN).expect("origin inside window");
    let mut reach = 0;
    let mut size = 0;
    explore(&w, origin, |id| times.time(id) <= t, |_| true, |x| {
        reach = reach.max(w.vertex(x).norm());
        size += 1;
        false
    });
    (reach, size)
}

/// Estimates `θ_n(t)` for every `n` in `n_list`.
///
/// Each replicate samples one configuration on `B(n_max + pad)` (block
/// aligned for the intermediate model) and evaluates every `n` on it, so the
/// rows are monotone in `n` replicate by replicate. The reported pad of a row
/// is `n_max + pad - n`.
pub fn theta_table(
    model: Model,
    dist: Option<&ConstraintDist>,
    t: f64,
    n_list: &[u64],
    replicates: u64,
    pad: u64,
    seed: u64,
) -> Result<ThetaTable> {
    check_time(t)?;
    check_replicates(replicates)?;
    if n_list.is_empty() || n_list.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidParameter("n list must be non-empty and strictly increasing".into()));
    }
    let n_max = *n_list.last().expect("non-empty");
    let target = Window::centered(n_max + pad);
    let counts: Vec<u64> = try_tally_replicates(replicates, |rep, acc: &mut Vec<u64>| {
        if acc.is_empty() {
            *acc = vec![0; n_list.len()];
        }
        let times = sample_opening_times(model, dist, target, seed, rep)?;
        let (reach, _) = origin_cluster(&times, t);
        for (c, n) in acc.iter_mut().zip(n_list) {
            if reach >= *n {
                *c += 1;
            }
        }
        Ok::<(), Error>(())
    })?;
    let rows = n_list
        .iter()
        .zip(counts)
        .map(|(&n, c)| {
            let p = Proportion::new(c, replicates);
            ThetaRow {
                n,
                theta_hat: p.estimate(),
                stderr: p.stderr(),
                successes: c,
                replicates,
                pad: n_max + pad - n,
                zero_bound: (c == 0).then(|| 3.0 / replicates as f64),
            }
        })
        .collect();
    Ok(ThetaTable { model, t, seed, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Susceptibility {
    pub model: Model,
    pub t: f64,
    pub box_n: u64,
    /// Mean size of the origin's cluster within `B(box_n)`. Truncated: a
    /// finite window caps every cluster.
    pub truncated_mean: f64,
    pub stderr: f64,
    pub replicates: u64,
    pub seed: u64,
}

pub fn susceptibility(
    model: Model,
    dist: Option<&ConstraintDist>,
    t: f64,
    box_n: u64,
    replicates: u64,
    seed: u64,
) -> Result<Susceptibility> {
    check_time(t)?;
    check_replicates(replicates)?;
    if box_n == 0 {
        return Err(Error::InvalidParameter("box size must be at least 1".into()));
    }
    let target = Window::centered(box_n);
    let (sum, sum_sq): (u128, u128) = try_tally_replicates(replicates, |rep, acc: &mut (u128, u128)| {
        let times = sample_opening_times(model, dist, target, seed, rep)?;
        let times = times.restrict(target)?;
        let (_, size) = origin_cluster(&times, t);
        acc.0 += u128::from(size);
        acc.1 += u128::from(size) * u128::from(size);
        Ok::<(), Error>(())
    })?;
    let (truncated_mean, stderr) = mean_and_stderr(replicates, sum, sum_sq);
    Ok(Susceptibility { model, t, box_n, truncated_mean, stderr, replicates, seed })
}

/// `⌊n^{k/(k+1)}⌋` in exact integer arithmetic.
pub fn scale(n: u64, stage_k: u32) -> u64 {
    let target = u128::from(n).pow(stage_k);
    let mut l: u64 = (n as f64).powf(stage_k as f64 / (stage_k + 1) as f64) as u64;
    while l > 0 && u128::from(l).pow(stage_k + 1) > target {
        l -= 1;
    }
    while u128::from(l + 1).pow(stage_k + 1) <= target {
        l += 1;
    }
    l
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimonLiebCheck {
    pub n: u64,
    pub stage_k: u32,
    pub scale: u64,
    /// `8 L θ̂_L θ̂_{n-L}`.
    pub product_term: f64,
    pub product_stderr: f64,
    pub theta_n_hat: f64,
    /// `θ̂_n - product_term`.
    pub margin: f64,
    /// Standard error of the margin, treating rows as independent.
    pub sigma: f64,
    /// `L exp(-L log(L) / 2)`, the decoupling term with unit constant.
    pub decoupling_term: f64,
    /// `margin <= 3 sigma`.
    pub holds: bool,
}

pub fn simon_lieb_check(table: &ThetaTable, n: u64, stage_k: u32) -> Result<SimonLiebCheck> {
    if stage_k == 0 {
        return Err(Error::InvalidParameter("stage must be at least 1".into()));
    }
    let l = scale(n, stage_k);
    let get = |m: u64| table.row(m).ok_or(Error::MissingScale(m as usize));
    let (rl, rrest, rn) = (get(l)?, get(n - l)?, get(n)?);
    let lf = l as f64;
    let product_term = 8.0 * lf * rl.theta_hat * rrest.theta_hat;
    let product_stderr =
        8.0 * lf * ((rrest.theta_hat * rl.stderr).powi(2) + (rl.theta_hat * rrest.stderr).powi(2)).sqrt();
    let margin = rn.theta_hat - product_term;
    let sigma = (rn.stderr.powi(2) + product_stderr.powi(2)).sqrt();
    let decoupling_term = if l <= 1 { lf } else { lf * (-0.5 * lf * lf.ln()).exp() };
    Ok(SimonLiebCheck {
        n,
        stage_k,
        scale: l,
        product_term,
        product_stderr,
        theta_n_hat: rn.theta_hat,
        margin,
        sigma,
        decoupling_term,
        holds: margin <= 3.0 * sigma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayFamily {
    /// `exp(-α n)`.
    PureExponential,
    /// `exp(-α n^{1-ε})`.
    Stretched,
}

impl fmt::Display for DecayFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecayFamily::PureExponential => "pure_exponential",
            DecayFamily::Stretched => "stretched",
        })
    }
}

impl FromStr for DecayFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure_exponential" | "pure" | "exp" => Ok(DecayFamily::PureExponential),
            "stretched" => Ok(DecayFamily::Stretched),
            _ => Err(Error::InvalidParameter(format!("unknown decay family {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub family: DecayFamily,
    pub epsilon: f64,
    pub alpha_hat: f64,
    /// Standard error of the fitted slope.
    pub alpha_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub fit_range: (u64, u64),
    pub used: Vec<u64>,
    /// Rows left out because no replicate connected.
    pub excluded: Vec<u64>,
}

/// Ordinary least squares of `log θ̂_n` on `n` (pure) or `n^{1-ε}`
/// (stretched), with intercept.
pub fn decay_fit(
    table: &ThetaTable,
    family: DecayFamily,
    epsilon: f64,
    fit_range: Option<(u64, u64)>,
) -> Result<DecayFit> {
    let (lo, hi) = fit_range.unwrap_or((0, u64::MAX));
    let eps = match family {
        DecayFamily::PureExponential => 0.0,
        DecayFamily::Stretched => epsilon,
    };
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in [0, 1), got {eps}")));
    }
    let rows: Vec<&ThetaRow> = table.rows.iter().filter(|r| r.n >= lo && r.n <= hi).collect();
    let excluded: Vec<u64> = rows.iter().filter(|r| r.theta_hat <= 0.0).map(|r| r.n).collect();
    let usable: Vec<&ThetaRow> = rows.into_iter().filter(|r| r.theta_hat > 0.0).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientRows(usable.len()));
    }
    let xs: Vec<f64> = usable.iter().map(|r| (r.n as f64).powf(1.0 - eps)).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.theta_hat.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientRows(1));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let alpha_stderr = (sse / (m - 2.0) / sxx).sqrt();
    Ok(DecayFit {
        family,
        epsilon: eps,
        alpha_hat: -slope,
        alpha_stderr,
        intercept,
        r_squared,
        fit_range: (lo, hi.min(usable.last().map_or(0, |r| r.n))),
        used: usable.iter().map(|r| r.n).collect(),
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub t: f64,
    pub theta_hat: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdScan {
    pub model: Model,
    pub n: u64,
    pub pad: u64,
    pub replicates: u64,
    pub seed: u64,
    pub curve: Vec<ScanPoint>,
    /// Where the curve first reaches 1/2, by linear interpolation. A
    /// finite-size pseudo-critical point, not an estimate of the critical time.
    pub crossing: Option<f64>,
}

impl ThresholdScan {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "model,n,t,theta_hat,stderr,replicates,pad,seed")?;
        for p in &self.curve {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.model, self.n, p.t, p.theta_hat, p.stderr, self.replicates, self.pad, self.seed
            )?;
        }
        Ok(())
    }
}

/// Earliest time at which the origin connects to `∂B(n)`: the minimum over
/// paths of the latest opening time along the path. Edges are added in order
/// of opening time to a union-find in which `∂B(n)` is merged into one sink.
fn connection_time(times: &OpeningTimes, n: u64) -> f64 {
    let w = times.window();
    let nv = w.num_vertices();
    let sink = nv;
    let mut parent: Vec<usize> = (0..=nv).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let origin = w.vertex_index(Vertex::ORIGIN).expect("origin inside window");
    let id_of = |v: Vertex| w.vertex_index(v).expect("inside");
    for v in crate::lattice::boundary(&crate::lattice::LatticeBox::new(n)) {
        let i = id_of(v);
        parent[i] = sink;
    }
    if find(&mut parent, origin) == sink {
        return 0.0;
    }
    let mut edges: Vec<(f64, EdgeId)> = w
        .edges()
        .filter(|id| {
            let e = w.edge(*id);
            e.a().norm() <= n && e.b().norm() <= n
        })
        .map(|id| (times.time(id), id))
        .filter(|(s, _)| s.is_finite())
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (s, id) in edges {
        let (a, b) = w.endpoints(id);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            continue;
        }
        // keep the sink as a root
        if rb == sink {
            parent[ra] = rb;
        } else {
            parent[rb] = ra;
        }
        if find(&mut parent, origin) == sink {
            return s;
        }
    }
    f64::INFINITY
}

/// `θ̂_n(t)` along `t_grid` from the per-replicate connection times, so the
/// curve is exactly monotone.
pub fn threshold_scan(
    model: Model,
    dist: Option<&ConstraintDist>,
    n: u64,
    t_grid: &[f64],
    replicates: u64,
    pad: u64,
    seed: u64,
) -> Result<ThresholdScan> {
    check_replicates(replicates)?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidParameter("time grid must be non-empty and strictly increasing".into()));
    }
    for &t in t_grid {
        check_time(t)?;
    }
    let target = Window::centered(n + pad);
    let counts: Vec<u64> = try_tally_replicates(replicates, |rep, acc: &mut Vec<u64>| {
        if acc.is_empty() {
            *acc = vec![0; t_grid.len()];
        }
        let times = sample_opening_times(model, dist, target, seed, rep)?;
        let tau = connection_time(&times, n);
        for (c, t) in acc.iter_mut().zip(t_grid) {
            if tau <= *t {
                *c += 1;
            }
        }
        Ok::<(), Error>(())
    })?;
    let curve: Vec<ScanPoint> = t_grid
        .iter()
        .zip(&counts)
        .map(|(&t, &c)| {
            let p = Proportion::new(c, replicates);
            ScanPoint { t, theta_hat: p.estimate(), stderr: p.stderr() }
        })
        .collect();
    let crossing = crossing_at(&curve, 0.5);
    Ok(ThresholdScan { model, n, pad, replicates, seed, curve, crossing })
}

fn crossing_at(curve: &[ScanPoint], level: f64) -> Option<f64> {
    let i = curve.iter().position(|p| p.theta_hat >= level)?;
    if i == 0 {
        return Some(curve[0].t);
    }
    let (a, b) = (&curve[i - 1], &curve[i]);
    Some(a.t + (level - a.theta_hat) * (b.t - a.t) / (b.theta_hat - a.theta_hat))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CombinatoricReport {
    pub block_edge_count: usize,
    pub a_count: usize,
    pub b_count: usize,
    /// `P(C) = 1 / p_c_denominator`.
    pub p_c_denominator: u128,
    pub p_c_exact: f64,
    /// Frequency with which a fixed 2-subset of 5 uniforms holds the two
    /// smallest values.
    pub reduced_analog: Proportion,
    pub reduced_analog_exact: f64,
    /// Same detector with the subset equal to the whole set.
    pub degenerate_analog: Proportion,
    pub seed: u64,
}

pub fn verify_block_combinatorics(replicates: u64, seed: u64) -> Result<CombinatoricReport> {
    check_replicates(replicates)?;
    let block = block_geometry(0, 0);
    let block_edge_count = block.edges().len();
    let a_count = block.a_set.len();
    let p_c_denominator = binomial(block_edge_count as u64, a_count as u64);
    let subset = [true, true, false, false, false];
    let whole = [true; 5];
    let (hits, all): (u64, u64) = tally_replicates(replicates, |rep, acc: &mut (u64, u64)| {
        let key = SeedSpec::new(seed, rep, StreamLabel::Clocks).key();
        let values: Vec<f64> = (0..5).map(|i| key.unit(i)).collect();
        acc.0 += u64::from(bottom_subset_event(&values, &subset));
        acc.1 += u64::from(bottom_subset_event(&values, &whole));
    });
    Ok(CombinatoricReport {
        block_edge_count,
        a_count,
        b_count: block.b_set.len(),
        p_c_denominator,
        p_c_exact: 1.0 / p_c_denominator as f64,
        reduced_analog: Proportion::new(hits, replicates),
        reduced_analog_exact: 1.0 / binomial(5, 2) as f64,
        degenerate_analog: Proportion::new(all, replicates),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ns(list: &[u64]) -> Vec<u64> {
        list.to_vec()
    }

    #[test]
    fn bernoulli_extremes() {
        let zero = theta_table(Model::Bernoulli, None, 0.0, &ns(&[1, 2, 4]), 50, 0, 1).unwrap();
        assert!(zero.rows.iter().all(|r| r.theta_hat == 0.0 && r.zero_bound == Some(3.0 / 50.0)));
        let one = theta_table(Model::Bernoulli, None, 1.0, &ns(&[1, 2, 4]), 50, 0, 1).unwrap();
        assert!(one.rows.iter().all(|r| r.theta_hat == 1.0));
        assert_eq!(one.rows.iter().map(|r| r.pad).collect::<Vec<_>>(), vec![3, 2, 0]);
    }

    #[test]
    fn star_reduction_matches_exact_law() {
        // with pad 0 the window B(1) is the origin with its four spokes plus the
        // four corner vertices, which cannot affect reaching ∂B(1)
        let dist = ConstraintDist::point_mass(3);
        let t = 0.5;
        let reps = 20_000;
        let table = theta_table(Model::Cdpre, Some(&dist), t, &[1], reps, 0, 7).unwrap();
        let exact = 1.0 - (1.0f64 - t).powi(4);
        let se = (exact * (1.0 - exact) / reps as f64).sqrt();
        assert!((table.rows[0].theta_hat - exact).abs() <= 4.0 * se, "{:?}", table.rows[0]);
    }

    #[test]
    fn rows_monotone_and_models_ordered() {
        let dist = ConstraintDist::new([0.0, 0.0, 0.5, 0.5]).unwrap();
        let n_list = ns(&[1, 2, 3, 5, 8]);
        let t = 0.6;
        let reps = 400;
        let c = theta_table(Model::Cdpre, Some(&dist), t, &n_list, reps, 3, 2).unwrap();
        let i = theta_table(Model::Intermediate, None, t, &n_list, reps, 3, 2).unwrap();
        let b = theta_table(Model::Bernoulli, None, t, &n_list, reps, 3, 2).unwrap();
        for table in [&c, &i, &b] {
            assert!(table.rows.windows(2).all(|p| p[0].successes >= p[1].successes));
        }
        for j in 0..n_list.len() {
            assert!(c.rows[j].successes <= i.rows[j].successes);
            assert!(i.rows[j].successes <= b.rows[j].successes);
        }
    }

    #[test]
    fn theta_errors() {
        assert!(theta_table(Model::Bernoulli, None, 0.5, &[1], 0, 0, 1).is_err());
        assert!(theta_table(Model::Bernoulli, None, 0.5, &[2, 1], 5, 0, 1).is_err());
        assert!(theta_table(Model::Cdpre, None, 0.5, &[1], 5, 0, 1).is_err());
    }

    #[test]
    fn susceptibility_extremes() {
        let s = susceptibility(Model::Bernoulli, None, 0.0, 3, 20, 1).unwrap();
        assert_eq!((s.truncated_mean, s.stderr), (1.0, 0.0));
        let s = susceptibility(Model::Bernoulli, None, 1.0, 3, 20, 1).unwrap();
        assert_eq!(s.truncated_mean, 49.0);
        let s = susceptibility(Model::Intermediate, None, 1.0, 3, 20, 1).unwrap();
        assert!(s.truncated_mean <= 49.0);
        let d = ConstraintDist::point_mass(3);
        let mut last = 0.0;
        for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let s = susceptibility(Model::Cdpre, Some(&d), t, 6, 200, 4).unwrap();
            assert!(s.truncated_mean >= last);
            last = s.truncated_mean;
        }
    }

    #[test]
    fn scales() {
        assert_eq!(scale(16, 1), 4);
        assert_eq!(scale(15, 1), 3);
        assert_eq!(scale(1_000_000, 1), 1000);
        assert_eq!(scale(27, 2), 9);
        assert_eq!(scale(26, 2), 8);
        for n in 1..2000u64 {
            let l = scale(n, 3);
            assert!(u128::from(l).pow(4) <= u128::from(n).pow(3));
            assert!(u128::from(l + 1).pow(4) > u128::from(n).pow(3));
        }
    }

    #[test]
    fn simon_lieb_arithmetic() {
        let table = ThetaTable::synthetic(Model::Bernoulli, 0.3, [(4, 0.2), (12, 0.01), (16, 0.001)]);
        let c = simon_lieb_check(&table, 16, 1).unwrap();
        assert_eq!(c.scale, 4);
        assert!((c.product_term - 32.0 * 0.2 * 0.01).abs() < 1e-15);
        assert!((c.margin - (0.001 - 0.064)).abs() < 1e-15);
        assert!(c.holds);
        let ones = ThetaTable::synthetic(Model::Bernoulli, 1.0, [(4, 1.0), (12, 1.0), (16, 1.0)]);
        assert!(simon_lieb_check(&ones, 16, 1).unwrap().holds);
        assert!(matches!(simon_lieb_check(&table, 25, 1), Err(Error::MissingScale(5))));
    }

    #[test]
    fn decay_fit_round_trips() {
        let pure = ThetaTable::synthetic(Model::Bernoulli, 0.3, (1..=10).map(|n| (n, (-0.2 * n as f64).exp())));
        let f = decay_fit(&pure, DecayFamily::PureExponential, 0.0, None).unwrap();
        assert!((f.alpha_hat - 0.2).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let stretched = ThetaTable::synthetic(
            Model::Bernoulli,
            0.3,
            (1..=10).map(|n| (n, (-0.5 * (n as f64).powf(0.8)).exp())),
        );
        let f = decay_fit(&stretched, DecayFamily::Stretched, 0.2, None).unwrap();
        assert!((f.alpha_hat - 0.5).abs() < 1e-9);
        let sparse = ThetaTable::synthetic(Model::Bernoulli, 0.3, [(1, 0.5), (2, 0.0), (3, 0.1), (4, 0.0)]);
        assert!(matches!(decay_fit(&sparse, DecayFamily::PureExponential, 0.0, None), Err(Error::InsufficientRows(2))));
        let with_zero = ThetaTable::synthetic(Model::Bernoulli, 0.3, [(1, 0.5), (2, 0.2), (3, 0.1), (4, 0.0)]);
        let f = decay_fit(&with_zero, DecayFamily::PureExponential, 0.0, None).unwrap();
        assert_eq!(f.excluded, vec![4]);
        let f = decay_fit(&pure, DecayFamily::PureExponential, 0.0, Some((3, 6))).unwrap();
        assert_eq!(f.used, vec![3, 4, 5, 6]);
    }

    #[test]
    fn connection_time_agrees_with_direct_evaluation() {
        let n = 5;
        let target = Window::centered(n + 2);
        let dist = ConstraintDist::new([0.0, 0.1, 0.4, 0.5]).unwrap();
        for model in [Model::Bernoulli, Model::Cdpre, Model::Intermediate] {
            for rep in 0..40 {
                let times = sample_opening_times(model, Some(&dist), target, 3, rep).unwrap();
                let tau = connection_time(&times, n);
                for t in [0.2, 0.4, 0.5, 0.6, 0.8, 1.0] {
                    let (reach, _) = origin_cluster(&times, t);
                    assert_eq!(tau <= t, reach >= n, "{model} rep {rep} t {t}");
                }
            }
        }
    }

    #[test]
    fn scan_is_monotone_and_consistent_with_table() {
        let grid: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        let s = threshold_scan(Model::Bernoulli, None, 4, &grid, 300, 0, 5).unwrap();
        assert!(s.curve.windows(2).all(|p| p[0].theta_hat <= p[1].theta_hat));
        let table = theta_table(Model::Bernoulli, None, 0.6, &[4], 300, 0, 5).unwrap();
        assert_eq!(s.curve[5].theta_hat, table.rows[0].theta_hat);
        assert!(s.crossing.is_some());
        assert!(threshold_scan(Model::Bernoulli, None, 4, &[0.5, 0.4], 10, 0, 5).is_err());
    }

    #[test]
    fn crossing_interpolation() {
        let pts = |v: &[(f64, f64)]| -> Vec<ScanPoint> {
            v.iter().map(|&(t, theta_hat)| ScanPoint { t, theta_hat, stderr: 0.0 }).collect()
        };
        assert_eq!(crossing_at(&pts(&[(0.4, 0.2), (0.6, 0.8)]), 0.5), Some(0.5));
        assert_eq!(crossing_at(&pts(&[(0.4, 0.2), (0.6, 0.3)]), 0.5), None);
        assert_eq!(crossing_at(&pts(&[(0.4, 0.7)]), 0.5), Some(0.4));
    }

    #[test]
    fn block_counts() {
        let r = verify_block_combinatorics(100_000, 1).unwrap();
        assert_eq!((r.block_edge_count, r.a_count, r.b_count), (49, 6, 42));
        assert_eq!(r.p_c_denominator, 13_983_816);
        assert_eq!(r.degenerate_analog.estimate(), 1.0);
        assert!((r.reduced_analog.estimate() - 0.1).abs() < 4.0 * (0.09f64 / 1e5).sqrt());
    }
}
