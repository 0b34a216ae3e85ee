//! Square-lattice geometry: vertices, canonical edges, boxes and their
//! boundaries, rectangular simulation windows with dense edge indexing, and
//! the 6x5 block tiling that carries the intermediate model.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub x1: i64,
    pub x2: i64,
}

impl Vertex {
    pub const ORIGIN: Vertex = Vertex { x1: 0, x2: 0 };

    pub const fn new(x1: i64, x2: i64) -> Self {
        Vertex { x1, x2 }
    }

    pub fn neighbors(self) -> [Vertex; 4] {
        [
            Vertex::new(self.x1 - 1, self.x2),
            Vertex::new(self.x1, self.x2 - 1),
            Vertex::new(self.x1, self.x2 + 1),
            Vertex::new(self.x1 + 1, self.x2),
        ]
    }

    pub fn translate(self, dx1: i64, dx2: i64) -> Vertex {
        Vertex::new(self.x1 + dx1, self.x2 + dx2)
    }

    /// Graph distance on the lattice.
    pub fn distance(self, other: Vertex) -> u64 {
        self.x1.abs_diff(other.x1) + self.x2.abs_diff(other.x2)
    }

    /// Sup-norm; `v` lies on the boundary of `B(n)` iff `v.norm() == n`.
    pub fn norm(self) -> u64 {
        self.x1.unsigned_abs().max(self.x2.unsigned_abs())
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x1, self.x2)
    }
}

/// A nearest-neighbour edge, stored with its lexicographically smaller
/// endpoint first so that every edge has exactly one representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    a: Vertex,
    b: Vertex,
}

impl Edge {
    pub fn new(u: Vertex, v: Vertex) -> Result<Edge> {
        if u.distance(v) != 1 {
            return Err(Error::NotAnEdge(u, v));
        }
        Ok(if u < v { Edge { a: u, b: v } } else { Edge { a: v, b: u } })
    }

    pub(crate) fn unchecked(a: Vertex, b: Vertex) -> Edge {
        debug_assert!(a < b && a.distance(b) == 1);
        Edge { a, b }
    }

    pub fn a(&self) -> Vertex {
        self.a
    }

    pub fn b(&self) -> Vertex {
        self.b
    }

    pub fn is_horizontal(&self) -> bool {
        self.a.x2 == self.b.x2
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.a == v || self.b == v
    }

    pub fn translate(&self, dx1: i64, dx2: i64) -> Edge {
        Edge {
            a: self.a.translate(dx1, dx2),
            b: self.b.translate(dx1, dx2),
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.a, self.b)
    }
}

/// The box `B(x, n) = x + [-n, n]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub n: u64,
    pub center: Vertex,
}

impl LatticeBox {
    pub fn new(n: u64) -> Self {
        LatticeBox { n, center: Vertex::ORIGIN }
    }

    pub fn centered(center: Vertex, n: u64) -> Self {
        LatticeBox { n, center }
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.center.x1.abs_diff(v.x1) <= self.n && self.center.x2.abs_diff(v.x2) <= self.n
    }

    pub fn on_boundary(&self, v: Vertex) -> bool {
        let d = self.center.x1.abs_diff(v.x1).max(self.center.x2.abs_diff(v.x2));
        d == self.n
    }

    pub fn vertices(&self) -> Vec<Vertex> {
        self.window().vertices().collect()
    }

    pub fn window(&self) -> Window {
        let n = self.n as i64;
        Window::new(
            self.center.x1 - n,
            self.center.x1 + n,
            self.center.x2 - n,
            self.center.x2 + n,
        )
    }
}

/// Vertex boundary of a box. `B(0)` has the single centre vertex as its
/// boundary, which makes `θ_0 = 1`.
pub fn boundary(b: &LatticeBox) -> Vec<Vertex> {
    b.vertices().into_iter().filter(|v| b.on_boundary(*v)).collect()
}

/// Vertices of `region` adjacent to some vertex outside it.
pub fn vertex_boundary(region: &BTreeSet<Vertex>) -> BTreeSet<Vertex> {
    region
        .iter()
        .filter(|v| v.neighbors().iter().any(|u| !region.contains(u)))
        .copied()
        .collect()
}

/// All lattice edges with both endpoints in `region`.
pub fn edges_in(region: &BTreeSet<Vertex>) -> BTreeSet<Edge> {
    let mut out = BTreeSet::new();
    for &v in region {
        for u in v.neighbors() {
            if u > v && region.contains(&u) {
                out.insert(Edge::unchecked(v, u));
            }
        }
    }
    out
}

/// Edges with exactly one endpoint in `region`.
pub fn external_edge_boundary(region: &BTreeSet<Vertex>) -> BTreeSet<Edge> {
    let mut out = BTreeSet::new();
    for &v in region {
        for u in v.neighbors() {
            if !region.contains(&u) {
                out.insert(Edge::new(v, u).expect("neighbours"));
            }
        }
    }
    out
}

pub const BLOCK_WIDTH: i64 = 6;
pub const BLOCK_HEIGHT: i64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockIndex {
    pub r: i64,
    pub s: i64,
}

impl BlockIndex {
    pub const fn new(r: i64, s: i64) -> Self {
        BlockIndex { r, s }
    }

    pub fn of_vertex(v: Vertex) -> BlockIndex {
        BlockIndex::new(v.x1.div_euclid(BLOCK_WIDTH), v.x2.div_euclid(BLOCK_HEIGHT))
    }

    /// Lower-left corner of the block.
    pub fn corner(self) -> Vertex {
        Vertex::new(BLOCK_WIDTH * self.r, BLOCK_HEIGHT * self.s)
    }

    pub fn contains(self, v: Vertex) -> bool {
        BlockIndex::of_vertex(v) == self
    }

    /// The distinguished edge `<(6r+2, 5s+2), (6r+3, 5s+2)>`.
    pub fn g(self) -> Edge {
        let c = self.corner();
        Edge::unchecked(c.translate(2, 2), c.translate(3, 2))
    }

    pub fn window(self) -> Window {
        let c = self.corner();
        Window::new(c.x1, c.x1 + BLOCK_WIDTH - 1, c.x2, c.x2 + BLOCK_HEIGHT - 1)
    }
}

impl fmt::Display for BlockIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.r, self.s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockGeometry {
    pub index: BlockIndex,
    pub lambda: BTreeSet<Vertex>,
    pub lambda_bar: BTreeSet<Vertex>,
    pub g: Edge,
    pub a_set: BTreeSet<Edge>,
    pub b_set: BTreeSet<Edge>,
}

impl BlockGeometry {
    pub fn edges(&self) -> BTreeSet<Edge> {
        edges_in(&self.lambda)
    }
}

/// Builds the block `(r, s)`. The set `A` is derived from its defining
/// predicate: edges of `E(Λ̄)` with exactly one endpoint on `∂Λ̄`.
pub fn block_geometry(r: i64, s: i64) -> BlockGeometry {
    let index = BlockIndex::new(r, s);
    let c = index.corner();
    let lambda: BTreeSet<Vertex> = index.window().vertices().collect();
    let lambda_bar: BTreeSet<Vertex> = Window::new(c.x1 + 1, c.x1 + 4, c.x2 + 1, c.x2 + 3)
        .vertices()
        .collect();
    let bar_boundary = vertex_boundary(&lambda_bar);
    let a_set: BTreeSet<Edge> = edges_in(&lambda_bar)
        .into_iter()
        .filter(|e| bar_boundary.contains(&e.a()) != bar_boundary.contains(&e.b()))
        .collect();
    let g = index.g();
    let b_set = edges_in(&lambda)
        .into_iter()
        .filter(|e| *e != g && !a_set.contains(e))
        .collect();
    BlockGeometry { index, lambda, lambda_bar, g, a_set, b_set }
}

/// Blocks touched by `e`: one if both endpoints share a block, else the two
/// blocks holding one endpoint each.
pub fn block_of_edge(e: &Edge) -> Vec<BlockIndex> {
    let ba = BlockIndex::of_vertex(e.a());
    let bb = BlockIndex::of_vertex(e.b());
    if ba == bb {
        vec![ba]
    } else {
        vec![ba, bb]
    }
}

/// Dense index of an edge slot inside a [`Window`]. Slot order equals the
/// canonical (lexicographic) edge order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

/// A rectangular region `[x1_min, x1_max] x [x2_min, x2_max]` with dense
/// vertex and edge indexing.
///
/// Vertices are indexed `x1`-major, which is lexicographic order. Each vertex
/// owns two edge slots: `2i` for the edge to `(x1, x2+1)` and `2i+1` for the
/// edge to `(x1+1, x2)`. Slots leaving the window are invalid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub x1_min: i64,
    pub x1_max: i64,
    pub x2_min: i64,
    pub x2_max: i64,
}

impl Window {
    pub fn new(x1_min: i64, x1_max: i64, x2_min: i64, x2_max: i64) -> Self {
        assert!(x1_min <= x1_max && x2_min <= x2_max, "empty window");
        Window { x1_min, x1_max, x2_min, x2_max }
    }

    pub fn centered(n: u64) -> Self {
        LatticeBox::new(n).window()
    }

    /// Smallest union of whole blocks covering `self`, grown by `extra_rings`
    /// further rings of blocks.
    pub fn block_aligned(&self, extra_rings: i64) -> Window {
        let lo = BlockIndex::of_vertex(Vertex::new(self.x1_min, self.x2_min));
        let hi = BlockIndex::of_vertex(Vertex::new(self.x1_max, self.x2_max));
        let lo = BlockIndex::new(lo.r - extra_rings, lo.s - extra_rings);
        let hi = BlockIndex::new(hi.r + extra_rings, hi.s + extra_rings);
        Window::new(
            lo.r * BLOCK_WIDTH,
            (hi.r + 1) * BLOCK_WIDTH - 1,
            lo.s * BLOCK_HEIGHT,
            (hi.s + 1) * BLOCK_HEIGHT - 1,
        )
    }

    pub fn width(&self) -> usize {
        (self.x1_max - self.x1_min + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.x2_max - self.x2_min + 1) as usize
    }

    pub fn num_vertices(&self) -> usize {
        self.width() * self.height()
    }

    pub fn num_edge_slots(&self) -> usize {
        2 * self.num_vertices()
    }

    pub fn num_edges(&self) -> usize {
        let (w, h) = (self.width(), self.height());
        (w - 1) * h + w * (h - 1)
    }

    pub fn contains(&self, v: Vertex) -> bool {
        (self.x1_min..=self.x1_max).contains(&v.x1) && (self.x2_min..=self.x2_max).contains(&v.x2)
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.x1_min <= other.x1_min
            && other.x1_max <= self.x1_max
            && self.x2_min <= other.x2_min
            && other.x2_max <= self.x2_max
    }

    pub fn contains_box(&self, b: &LatticeBox) -> bool {
        self.contains_window(&b.window())
    }

    pub fn vertex_index(&self, v: Vertex) -> Option<usize> {
        if !self.contains(v) {
            return None;
        }
        Some((v.x1 - self.x1_min) as usize * self.height() + (v.x2 - self.x2_min) as usize)
    }

    pub fn vertex(&self, i: usize) -> Vertex {
        let h = self.height();
        Vertex::new(self.x1_min + (i / h) as i64, self.x2_min + (i % h) as i64)
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.num_vertices()).map(move |i| self.vertex(i))
    }

    pub fn is_valid(&self, id: EdgeId) -> bool {
        if id.0 >= self.num_edge_slots() {
            return false;
        }
        let v = self.vertex(id.0 / 2);
        if id.0.is_multiple_of(2) {
            v.x2 < self.x2_max
        } else {
            v.x1 < self.x1_max
        }
    }

    pub fn edge_id(&self, e: &Edge) -> Option<EdgeId> {
        let vi = self.vertex_index(e.a())?;
        if !self.contains(e.b()) {
            return None;
        }
        Some(EdgeId(2 * vi + usize::from(e.is_horizontal())))
    }

    pub fn edge(&self, id: EdgeId) -> Edge {
        let a = self.vertex(id.0 / 2);
        let b = if id.0.is_multiple_of(2) { a.translate(0, 1) } else { a.translate(1, 0) };
        Edge::unchecked(a, b)
    }

    /// Vertex indices of both endpoints, smaller endpoint first.
    pub fn endpoints(&self, id: EdgeId) -> (usize, usize) {
        let a = id.0 / 2;
        let b = if id.0.is_multiple_of(2) { a + 1 } else { a + self.height() };
        (a, b)
    }

    /// Valid edge slots in canonical order.
    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.num_edge_slots()).map(EdgeId).filter(move |id| self.is_valid(*id))
    }

    /// Incident edges of vertex `i` paired with the opposite endpoint.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (EdgeId, usize)> {
        let h = self.height();
        let v = self.vertex(i);
        let up = (v.x2 < self.x2_max).then(|| (EdgeId(2 * i), i + 1));
        let down = (v.x2 > self.x2_min).then(|| (EdgeId(2 * (i - 1)), i - 1));
        let right = (v.x1 < self.x1_max).then(|| (EdgeId(2 * i + 1), i + h));
        let left = (v.x1 > self.x1_min).then(|| (EdgeId(2 * (i - h) + 1), i - h));
        [down, up, left, right].into_iter().flatten()
    }

    pub fn contains_block(&self, b: BlockIndex) -> bool {
        self.contains_window(&b.window())
    }

    /// Blocks lying entirely inside the window, in lexicographic order.
    pub fn blocks_within(&self) -> Vec<BlockIndex> {
        let lo = BlockIndex::of_vertex(Vertex::new(self.x1_min, self.x2_min));
        let hi = BlockIndex::of_vertex(Vertex::new(self.x1_max, self.x2_max));
        let mut out = Vec::new();
        for r in lo.r..=hi.r {
            for s in lo.s..=hi.s {
                let b = BlockIndex::new(r, s);
                if self.contains_block(b) {
                    out.push(b);
                }
            }
        }
        out
    }

    /// Blocks whose distinguished edge has both endpoints in the window.
    pub fn blocks_with_g(&self) -> Vec<BlockIndex> {
        let lo = BlockIndex::of_vertex(Vertex::new(self.x1_min, self.x2_min));
        let hi = BlockIndex::of_vertex(Vertex::new(self.x1_max, self.x2_max));
        let mut out = Vec::new();
        for r in lo.r..=hi.r {
            for s in lo.s..=hi.s {
                let b = BlockIndex::new(r, s);
                let g = b.g();
                if self.contains(g.a()) && self.contains(g.b()) {
                    out.push(b);
                }
            }
        }
        out
    }

    /// Edge ids of a block fully contained in the window.
    pub fn block_edges(&self, b: BlockIndex) -> Option<BlockEdges> {
        if !self.contains_block(b) {
            return None;
        }
        let t = template();
        let c = b.corner();
        let id = |e: &Edge| self.edge_id(&e.translate(c.x1, c.x2)).expect("block inside window");
        Some(BlockEdges {
            index: b,
            g: id(&t.g),
            a: t.a_set.iter().map(id).collect(),
            all: t.edges().iter().map(id).collect(),
        })
    }
}

/// Dense ids of the edges of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockEdges {
    pub index: BlockIndex,
    pub g: EdgeId,
    pub a: Vec<EdgeId>,
    pub all: Vec<EdgeId>,
}

fn template() -> &'static BlockGeometry {
    static TEMPLATE: OnceLock<BlockGeometry> = OnceLock::new();
    TEMPLATE.get_or_init(|| block_geometry(0, 0))
}
