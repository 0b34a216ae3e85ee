//! Random environment (vertex constraints) and clock fields.
//!
//! Randomness is counter-based: a [`SeedSpec`] is hashed into a 64-bit stream
//! key, and the value attached to a vertex or edge is a SplitMix64 output at a
//! position derived from its lattice coordinates. A clock therefore depends
//! only on `(seed, edge)`, never on the window it was sampled in, so windows
//! of different sizes drawn from the same seed agree on their overlap.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{Edge, EdgeId, Vertex, Window};

const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Law `ρ = (ρ_0, ρ_1, ρ_2, ρ_3)` of a vertex constraint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct ConstraintDist {
    rho: [f64; 4],
}

impl ConstraintDist {
    pub fn new(rho: [f64; 4]) -> Result<Self> {
        if rho.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution(format!("negative or non-finite entry in {rho:?}")));
        }
        let sum: f64 = rho.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries of {rho:?} sum to {sum}")));
        }
        Ok(ConstraintDist { rho: rho.map(|p| p / sum) })
    }

    /// Every vertex carries constraint `k`.
    pub fn point_mass(k: u8) -> Self {
        assert!(k <= 3, "constraints live in {{0,1,2,3}}");
        let mut rho = [0.0; 4];
        rho[k as usize] = 1.0;
        ConstraintDist { rho }
    }

    pub fn rho(&self) -> [f64; 4] {
        self.rho
    }

    pub fn rho0_is_zero(&self) -> bool {
        self.rho[0] == 0.0
    }

    /// Inverse-CDF draw from a uniform in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> u8 {
        let mut acc = 0.0;
        for (j, p) in self.rho.iter().enumerate() {
            acc += p;
            if u < acc {
                return j as u8;
            }
        }
        // rounding can leave acc a hair below 1
        self.rho.iter().rposition(|p| *p > 0.0).unwrap_or(3) as u8
    }
}

impl TryFrom<[f64; 4]> for ConstraintDist {
    type Error = Error;

    fn try_from(rho: [f64; 4]) -> Result<Self> {
        ConstraintDist::new(rho)
    }
}

impl From<ConstraintDist> for [f64; 4] {
    fn from(d: ConstraintDist) -> Self {
        d.rho
    }
}

impl FromStr for ConstraintDist {
    type Err = Error;

    /// Parses `"r0,r1,r2,r3"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidDistribution(format!("{s:?}: {e}")))?;
        let rho: [f64; 4] = parts
            .try_into()
            .map_err(|_| Error::InvalidDistribution(format!("{s:?}: expected four entries")))?;
        ConstraintDist::new(rho)
    }
}

impl fmt::Display for ConstraintDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.rho;
        write!(f, "{a},{b},{c},{d}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamLabel {
    Constraints,
    Clocks,
    Resample,
}

impl StreamLabel {
    fn tag(self) -> u8 {
        match self {
            StreamLabel::Constraints => 1,
            StreamLabel::Clocks => 2,
            StreamLabel::Resample => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replicate_index: u64,
    pub stream: StreamLabel,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replicate_index: u64, stream: StreamLabel) -> Self {
        SeedSpec { master_seed, replicate_index, stream }
    }

    pub fn with_stream(self, stream: StreamLabel) -> Self {
        SeedSpec { stream, ..self }
    }

    pub fn key(&self) -> StreamKey {
        let mut h = Sha256::new();
        h.update(b"cdpre-stream-v1");
        h.update(self.master_seed.to_le_bytes());
        h.update(self.replicate_index.to_le_bytes());
        h.update([self.stream.tag()]);
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        StreamKey(u64::from_le_bytes(bytes))
    }
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random-access stream: position `code` maps to the SplitMix64 output of a
/// generator seeded with the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(pub u64);

impl StreamKey {
    pub fn bits(self, code: u64) -> u64 {
        mix64(self.0.wrapping_add(code.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on `(0, 1)`; a zero draw is rejected and redrawn.
    pub fn unit(self, code: u64) -> f64 {
        let mut h = self.bits(code);
        loop {
            let u = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
            h = mix64(h.wrapping_add(GOLDEN_GAMMA));
        }
    }
}

fn zigzag(x: i64) -> u64 {
    ((x << 1) ^ (x >> 63)) as u64
}

pub(crate) fn vertex_code(v: Vertex) -> u64 {
    (zigzag(v.x1) << 32) ^ zigzag(v.x2)
}

pub(crate) fn edge_code(e: &Edge) -> u64 {
    (vertex_code(e.a()) << 1) | u64::from(e.is_horizontal())
}

/// Constraints `κ_v` on every vertex of a window.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    window: Window,
    kappa: Vec<u8>,
}

#[derive(Serialize)]
struct VertexRecord {
    x1: i64,
    x2: i64,
    kappa: u8,
}

impl Environment {
    pub fn uniform(window: Window, k: u8) -> Self {
        assert!(k <= 3);
        Environment { window, kappa: vec![k; window.num_vertices()] }
    }

    pub fn from_fn(window: Window, mut f: impl FnMut(Vertex) -> u8) -> Self {
        let kappa = window
            .vertices()
            .map(|v| {
                let k = f(v);
                assert!(k <= 3, "constraint {k} out of range at {v}");
                k
            })
            .collect();
        Environment { window, kappa }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn kappa(&self, v: Vertex) -> Option<u8> {
        self.window.vertex_index(v).map(|i| self.kappa[i])
    }

    pub(crate) fn kappa_at(&self, i: usize) -> u8 {
        self.kappa[i]
    }

    pub fn write_json<W: Write>(&self, out: W) -> serde_json::Result<()> {
        let records: Vec<VertexRecord> = self
            .window
            .vertices()
            .zip(&self.kappa)
            .map(|(v, &kappa)| VertexRecord { x1: v.x1, x2: v.x2, kappa })
            .collect();
        serde_json::to_writer(out, &records)
    }
}

pub fn sample_environment(dist: &ConstraintDist, window: Window, seed: SeedSpec) -> Environment {
    let key = seed.with_stream(StreamLabel::Constraints).key();
    Environment::from_fn(window, |v| dist.quantile(key.unit(vertex_code(v))))
}

/// Clocks `U_e` on the edges of a window. Slots outside the clocked region
/// hold `+inf`: such edges never attempt to open.
#[derive(Clone, Debug, PartialEq)]
pub struct ClockField {
    window: Window,
    u: Vec<f64>,
}

#[derive(Serialize)]
struct EdgeRecord {
    a: [i64; 2],
    b: [i64; 2],
    u: f64,
}

impl ClockField {
    pub fn from_fn(window: Window, mut f: impl FnMut(Edge) -> Option<f64>) -> Result<Self> {
        let mut u = vec![f64::INFINITY; window.num_edge_slots()];
        for id in window.edges() {
            if let Some(x) = f(window.edge(id)) {
                if !(x > 0.0 && x <= 1.0) {
                    return Err(Error::InvalidClock(x));
                }
                u[id.0] = x;
            }
        }
        Ok(ClockField { window, u })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn get(&self, e: &Edge) -> Option<f64> {
        let id = self.window.edge_id(e)?;
        self.in_region(id).then(|| self.u[id.0])
    }

    /// Raw slot value; `+inf` outside the clocked region.
    pub fn at(&self, id: EdgeId) -> f64 {
        self.u[id.0]
    }

    pub fn in_region(&self, id: EdgeId) -> bool {
        self.u[id.0].is_finite()
    }

    pub fn region_edges(&self) -> Vec<Edge> {
        self.window
            .edges()
            .filter(|id| self.in_region(*id))
            .map(|id| self.window.edge(id))
            .collect()
    }

    /// Drops every edge for which `keep` is false from the clocked region.
    pub fn restrict(&self, mut keep: impl FnMut(&Edge) -> bool) -> ClockField {
        let mut out = self.clone();
        for id in self.window.edges() {
            if !keep(&self.window.edge(id)) {
                out.u[id.0] = f64::INFINITY;
            }
        }
        out
    }

    /// Copy of `self` with `U_e` redrawn from the stream of `seed`.
    pub fn resample_edge(&self, e: &Edge, seed: SeedSpec) -> Result<ClockField> {
        let id = self
            .window
            .edge_id(e)
            .filter(|id| self.in_region(*id))
            .ok_or(Error::EdgeOutsideRegion(*e))?;
        let mut out = self.clone();
        out.u[id.0] = resampled_value(e, seed);
        Ok(out)
    }

    pub fn write_json<W: Write>(&self, out: W) -> serde_json::Result<()> {
        let records: Vec<EdgeRecord> = self
            .window
            .edges()
            .filter(|id| self.in_region(*id))
            .map(|id| {
                let e = self.window.edge(id);
                EdgeRecord {
                    a: [e.a().x1, e.a().x2],
                    b: [e.b().x1, e.b().x2],
                    u: self.u[id.0],
                }
            })
            .collect();
        serde_json::to_writer(out, &records)
    }
}

pub(crate) fn resampled_value(e: &Edge, seed: SeedSpec) -> f64 {
    seed.with_stream(StreamLabel::Resample).key().unit(edge_code(e))
}

pub fn sample_clocks(window: Window, seed: SeedSpec) -> ClockField {
    let key = seed.with_stream(StreamLabel::Clocks).key();
    ClockField::from_fn(window, |e| Some(key.unit(edge_code(&e)))).expect("draws lie in (0,1)")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;

    fn seed(rep: u64) -> SeedSpec {
        SeedSpec::new(7, rep, StreamLabel::Clocks)
    }

    #[test]
    fn distribution_validation() {
        assert!(ConstraintDist::new([0.0, 0.0, 0.5, 0.5]).is_ok());
        assert!(ConstraintDist::new([-0.1, 0.1, 0.5, 0.5]).is_err());
        assert!(ConstraintDist::new([0.0, 0.0, 0.5, 0.6]).is_err());
        assert!(ConstraintDist::new([0.0; 4]).is_err());
        assert!(ConstraintDist::new([f64::NAN, 0.0, 0.0, 1.0]).is_err());
        let d: ConstraintDist = "0.1, 0.2, 0.3, 0.4".parse().unwrap();
        assert!((d.rho().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!("0,1".parse::<ConstraintDist>().is_err());
        assert!("a,b,c,d".parse::<ConstraintDist>().is_err());
    }

    #[test]
    fn quantile_respects_support() {
        let d = ConstraintDist::new([0.0, 0.0, 0.5, 0.5]).unwrap();
        assert_eq!(d.quantile(1e-9), 2);
        assert_eq!(d.quantile(0.49), 2);
        assert_eq!(d.quantile(0.51), 3);
        assert_eq!(d.quantile(1.0), 3);
        let one = ConstraintDist::point_mass(1);
        assert_eq!(one.quantile(0.999_999), 1);
    }

    #[test]
    fn point_mass_environments() {
        let w = Window::centered(5);
        let three = sample_environment(&ConstraintDist::point_mass(3), w, seed(0));
        assert!(w.vertices().all(|v| three.kappa(v) == Some(3)));
        let zero = sample_environment(&ConstraintDist::new([1.0, 0.0, 0.0, 0.0]).unwrap(), w, seed(0));
        assert!(w.vertices().all(|v| zero.kappa(v) == Some(0)));
    }

    #[test]
    fn constraint_frequency_matches_law() {
        let w = LatticeBox::new(64).window();
        let d = ConstraintDist::new([0.0, 0.0, 0.5, 0.5]).unwrap();
        let env = sample_environment(&d, w, seed(3));
        let n = w.num_vertices() as f64;
        let twos = w.vertices().filter(|v| env.kappa(*v) == Some(2)).count() as f64;
        assert!((twos / n - 0.5).abs() <= 3.0 * (0.25 / n).sqrt());
    }

    #[test]
    fn clocks_are_reproducible_and_window_independent() {
        let small = sample_clocks(Window::centered(3), seed(1));
        let again = sample_clocks(Window::centered(3), seed(1));
        assert_eq!(small, again);
        let big = sample_clocks(Window::centered(9), seed(1));
        for e in small.region_edges() {
            assert_eq!(small.get(&e), big.get(&e));
        }
        let other = sample_clocks(Window::centered(3), seed(2));
        assert!(small.region_edges().iter().any(|e| small.get(e) != other.get(e)));
    }

    #[test]
    fn clock_mean_is_one_half() {
        let w = Window::new(0, 999, 0, 499);
        let clocks = sample_clocks(w, seed(11));
        let edges = clocks.region_edges();
        let n = edges.len() as f64;
        let mean: f64 = edges.iter().map(|e| clocks.get(e).unwrap()).sum::<f64>() / n;
        assert!(n >= 9.9e5);
        assert!((mean - 0.5).abs() <= 3.0 / (12.0 * n).sqrt());
        assert!(edges.iter().all(|e| {
            let u = clocks.get(e).unwrap();
            u > 0.0 && u <= 1.0
        }));
    }

    #[test]
    fn resample_changes_only_one_edge() {
        let clocks = sample_clocks(Window::centered(4), seed(0));
        let target = Edge::new(Vertex::new(0, 0), Vertex::new(1, 0)).unwrap();
        let a = clocks.resample_edge(&target, SeedSpec::new(1, 0, StreamLabel::Resample)).unwrap();
        let b = clocks.resample_edge(&target, SeedSpec::new(2, 0, StreamLabel::Resample)).unwrap();
        for e in clocks.region_edges() {
            if e == target {
                assert_ne!(a.get(&e), clocks.get(&e));
                assert_ne!(a.get(&e), b.get(&e));
            } else {
                assert_eq!(a.get(&e), clocks.get(&e));
            }
        }
        let outside = Edge::new(Vertex::new(10, 0), Vertex::new(11, 0)).unwrap();
        assert_eq!(
            clocks.resample_edge(&outside, seed(0)),
            Err(Error::EdgeOutsideRegion(outside))
        );
    }

    #[test]
    fn resampled_values_are_uniform() {
        // Kolmogorov-Smirnov against U(0,1] over 10^5 independent resamples.
        let e = Edge::new(Vertex::ORIGIN, Vertex::new(0, 1)).unwrap();
        let n = 100_000u64;
        let mut xs: Vec<f64> = (0..n)
            .map(|r| resampled_value(&e, SeedSpec::new(99, r, StreamLabel::Resample)))
            .collect();
        xs.sort_by(f64::total_cmp);
        let nf = n as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| ((i as f64 + 1.0) / nf - x).max(x - i as f64 / nf))
            .fold(0.0, f64::max);
        assert!(d < 1.628 / nf.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn constraint_and_clock_streams_are_independent() {
        // 2x2 contingency chi-square on (κ == 2, U <= 1/2), 10^5 pairs, 1% level.
        let d = ConstraintDist::new([0.0, 0.0, 0.5, 0.5]).unwrap();
        let w = Window::new(0, 320, 0, 320);
        let env = sample_environment(&d, w, SeedSpec::new(5, 0, StreamLabel::Constraints));
        let clocks = sample_clocks(w, SeedSpec::new(5, 0, StreamLabel::Clocks));
        let mut table = [[0f64; 2]; 2];
        let mut n = 0.0;
        for id in w.edges().filter(|id| id.0 % 2 == 1).take(100_000) {
            let (a, _) = w.endpoints(id);
            let k = usize::from(env.kappa_at(a) == 2);
            let c = usize::from(clocks.at(id) <= 0.5);
            table[k][c] += 1.0;
            n += 1.0;
        }
        assert_eq!(n, 100_000.0);
        let mut chi2 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let row: f64 = table[i].iter().sum();
                let col: f64 = table[0][j] + table[1][j];
                let expected = row * col / n;
                chi2 += (table[i][j] - expected).powi(2) / expected;
            }
        }
        assert!(chi2 < 6.635, "chi-square {chi2}");
    }

    #[test]
    fn json_dumps_are_canonical() {
        let w = Window::new(0, 1, 0, 0);
        let clocks = ClockField::from_fn(w, |_| Some(0.25)).unwrap();
        let mut buf = Vec::new();
        clocks.write_json(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), r#"[{"a":[0,0],"b":[1,0],"u":0.25}]"#);
        let env = Environment::uniform(w, 2);
        let mut buf = Vec::new();
        env.write_json(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            r#"[{"x1":0,"x2":0,"kappa":2},{"x1":1,"x2":0,"kappa":2}]"#
        );
        assert!(ClockField::from_fn(w, |_| Some(0.0)).is_err());
        assert!(ClockField::from_fn(w, |_| Some(1.5)).is_err());
    }
}
