//! Rooted trees and the region combinatorics used throughout the crate:
//! levels, external boundaries, closures, successors, distances, shifts.
//!
//! Vertices are identified by their coordinate path from the root: the root
//! is the empty path, the i-th child of `x` is `x` extended by `i`. The
//! total order (level, then lexicographic on the path) is the canonical
//! site order that fixes tensor-leg ordering in [`crate::algebra`].
//!
//! Trees are stored as finite truncations. Operations that would touch
//! vertices beyond the stored depth fail with [`Error::Truncation`] rather
//! than silently extending the tree. A general-graph mode (arbitrary edge
//! lists, cycles allowed) exists so that the tree-only identities can be
//! falsified on non-trees in tests.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vertex, identified by its coordinate path from the root.
///
/// The root is the empty path. Entries are 1-based child indices.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vertex {
    path: Vec<u32>,
}

impl Vertex {
    /// The root vertex (empty coordinate path).
    pub fn root() -> Self {
        Vertex { path: Vec::new() }
    }

    /// Build a vertex from its coordinate path. Entries must be >= 1.
    pub fn new(path: impl Into<Vec<u32>>) -> Result<Self> {
        let path = path.into();
        if path.contains(&0) {
            return Err(Error::InvalidParameter(
                "vertex path entries are 1-based; found 0".into(),
            ));
        }
        Ok(Vertex { path })
    }

    /// Coordinate path from the root.
    pub fn path(&self) -> &[u32] {
        &self.path
    }

    /// Level = distance from the root = length of the coordinate path.
    pub fn level(&self) -> usize {
        self.path.len()
    }

    pub fn is_root(&self) -> bool {
        self.path.is_empty()
    }

    /// Parent vertex, or `None` for the root.
    pub fn parent(&self) -> Option<Vertex> {
        if self.path.is_empty() {
            None
        } else {
            Some(Vertex {
                path: self.path[..self.path.len() - 1].to_vec(),
            })
        }
    }

    /// The i-th child (i is 1-based).
    pub fn child(&self, i: u32) -> Vertex {
        let mut path = self.path.clone();
        path.push(i);
        Vertex { path }
    }

    /// The shift γ_i: prepends `i` to the coordinate path, mapping the whole
    /// tree into the i-th subtree below the root.
    pub fn shifted(&self, i: u32) -> Vertex {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.push(i);
        path.extend_from_slice(&self.path);
        Vertex { path }
    }

    /// True if `self` is a prefix of `other` (ancestor-or-equal).
    pub fn is_ancestor_of(&self, other: &Vertex) -> bool {
        other.path.len() >= self.path.len() && other.path[..self.path.len()] == self.path[..]
    }
}

impl Ord for Vertex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.path
            .len()
            .cmp(&other.path.len())
            .then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialOrd for Vertex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (n, i) in self.path.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "]")
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A finite set of vertices, iterated in canonical order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Region(BTreeSet<Vertex>);

impl Region {
    pub fn new() -> Self {
        Region(BTreeSet::new())
    }

    pub fn singleton(v: Vertex) -> Self {
        let mut s = BTreeSet::new();
        s.insert(v);
        Region(s)
    }

    pub fn insert(&mut self, v: Vertex) -> bool {
        self.0.insert(v)
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.0.contains(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Vertices in canonical (level, lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = &Vertex> {
        self.0.iter()
    }

    /// Vertices in canonical order, as an owned list.
    pub fn sites(&self) -> Vec<Vertex> {
        self.0.iter().cloned().collect()
    }

    pub fn union(&self, other: &Region) -> Region {
        Region(self.0.union(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &Region) -> Region {
        Region(self.0.difference(&other.0).cloned().collect())
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl FromIterator<Vertex> for Region {
    fn from_iter<T: IntoIterator<Item = Vertex>>(iter: T) -> Self {
        Region(iter.into_iter().collect())
    }
}

impl IntoIterator for Region {
    type Item = Vertex;
    type IntoIter = std::collections::btree_set::IntoIter<Vertex>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<'a> IntoIterator for &'a Region {
    type Item = &'a Vertex;
    type IntoIter = std::collections::btree_set::Iter<'a, Vertex>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Layout {
    /// Semi-infinite Cayley tree of order k, stored up to `depth`.
    Cayley { k: usize },
    /// Explicit edge list. Complete (never truncated); vertex labels are
    /// canonical coordinates when built through [`Tree::from_edges`].
    Explicit,
}

/// A rooted tree (or, in general-graph mode, an arbitrary connected graph)
/// stored as a finite adjacency structure.
///
/// Immutable after construction; cheap to clone and safe to share.
#[derive(Clone, Debug)]
pub struct Tree {
    layout: Layout,
    depth: usize,
    truncated: bool,
    adj: BTreeMap<Vertex, Vec<Vertex>>,
    /// Stored edge orientation: (parent, child) for tree layouts, the input
    /// orientation for general-graph mode.
    edges: Vec<(Vertex, Vertex)>,
}

impl Tree {
    /// The rooted Cayley tree of order `k`, containing all vertices of level
    /// <= `depth`. Every non-leaf vertex has exactly the successors
    /// (x,1), ..., (x,k).
    pub fn cayley(k: usize, depth: usize) -> Result<Tree> {
        if k == 0 {
            return Err(Error::InvalidParameter("Cayley order k must be >= 1".into()));
        }
        // Dense storage: keep the stored vertex count at desk scale.
        let count = cayley_ball_size(k, depth);
        if count > 100_000 {
            return Err(Error::InvalidParameter(format!(
                "Cayley({k},{depth}) would store {count} vertices"
            )));
        }
        let mut adj: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut level: Vec<Vertex> = vec![Vertex::root()];
        adj.insert(Vertex::root(), Vec::new());
        for _ in 0..depth {
            let mut next = Vec::new();
            for v in &level {
                for i in 1..=k as u32 {
                    let c = v.child(i);
                    adj.get_mut(v).expect("parent present").push(c.clone());
                    adj.insert(c.clone(), vec![v.clone()]);
                    edges.push((v.clone(), c.clone()));
                    next.push(c);
                }
            }
            level = next;
        }
        for nbrs in adj.values_mut() {
            nbrs.sort();
        }
        edges.sort();
        Ok(Tree {
            layout: Layout::Cayley { k },
            depth,
            truncated: true,
            adj,
            edges,
        })
    }

    /// A complete path graph on `n` vertices with canonical labels
    /// `[]`, `[1]`, `[1,1]`, ... Unlike `cayley(1, n-1)` this is not a
    /// truncation: the graph ends at its leaves.
    pub fn path_graph(n: usize) -> Result<Tree> {
        if n == 0 {
            return Err(Error::InvalidParameter("path graph needs >= 1 vertex".into()));
        }
        let mut prev = Vertex::root();
        let mut edges = Vec::new();
        for _ in 1..n {
            let next = prev.child(1);
            edges.push((prev, next.clone()));
            prev = next;
        }
        if n == 1 {
            return Ok(Tree {
                layout: Layout::Explicit,
                depth: 0,
                truncated: false,
                adj: BTreeMap::from([(Vertex::root(), Vec::new())]),
                edges: Vec::new(),
            });
        }
        Tree::from_edges(&edges, &Vertex::root()).map(|(t, _)| t)
    }

    /// Build a rooted tree from an explicit edge list. The graph is rooted
    /// at `root` and every vertex is relabelled to its canonical coordinate
    /// path by breadth-first traversal (children numbered in the sorted
    /// order of their original labels, so already-canonical input keeps its
    /// labels). Returns the tree and the old-label -> new-label map.
    ///
    /// Fails on disconnected input or on cycles.
    pub fn from_edges(
        edges: &[(Vertex, Vertex)],
        root: &Vertex,
    ) -> Result<(Tree, BTreeMap<Vertex, Vertex>)> {
        let raw = raw_adjacency(edges)?;
        if !raw.contains_key(root) {
            return Err(Error::UnknownVertex(root.to_string()));
        }
        let mut relabel: BTreeMap<Vertex, Vertex> = BTreeMap::new();
        let mut bfs_parent: BTreeMap<Vertex, Vertex> = BTreeMap::new();
        relabel.insert(root.clone(), Vertex::root());
        let mut queue = VecDeque::from([root.clone()]);
        let mut new_edges = Vec::new();
        while let Some(u) = queue.pop_front() {
            let nu = relabel[&u].clone();
            let mut child_idx = 0u32;
            for v in &raw[&u] {
                if bfs_parent.get(&u) == Some(v) {
                    continue;
                }
                if relabel.contains_key(v) {
                    return Err(Error::NotATree(format!(
                        "edge {u}~{v} closes a cycle during rooting"
                    )));
                }
                child_idx += 1;
                let nv = nu.child(child_idx);
                relabel.insert(v.clone(), nv.clone());
                bfs_parent.insert(v.clone(), u.clone());
                new_edges.push((nu.clone(), nv));
                queue.push_back(v.clone());
            }
        }
        if relabel.len() != raw.len() {
            return Err(Error::Disconnected(format!(
                "{} of {} vertices reachable from the root",
                relabel.len(),
                raw.len()
            )));
        }
        let mut adj: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
        for v in relabel.values() {
            adj.insert(v.clone(), Vec::new());
        }
        for (a, b) in &new_edges {
            adj.get_mut(a).expect("present").push(b.clone());
            adj.get_mut(b).expect("present").push(a.clone());
        }
        for nbrs in adj.values_mut() {
            nbrs.sort();
        }
        new_edges.sort();
        let depth = adj.keys().map(Vertex::level).max().unwrap_or(0);
        Ok((
            Tree {
                layout: Layout::Explicit,
                depth,
                truncated: false,
                adj,
                edges: new_edges,
            },
            relabel,
        ))
    }

    /// General-graph mode: keep the given labels and edge orientation, allow
    /// cycles. Connectivity is still required. The tree-only operations and
    /// identities are expected to fail on such inputs; this constructor exists
    /// so those failures can be demonstrated.
    pub fn general(edges: &[(Vertex, Vertex)]) -> Result<Tree> {
        let raw = raw_adjacency(edges)?;
        let start = raw.keys().next().expect("nonempty").clone();
        let mut seen: BTreeSet<Vertex> = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in &raw[&u] {
                if seen.insert(v.clone()) {
                    queue.push_back(v.clone());
                }
            }
        }
        if seen.len() != raw.len() {
            return Err(Error::Disconnected(format!(
                "{} of {} vertices reachable",
                seen.len(),
                raw.len()
            )));
        }
        let depth = raw.keys().map(Vertex::level).max().unwrap_or(0);
        let mut edges: Vec<(Vertex, Vertex)> = edges.to_vec();
        edges.sort();
        edges.dedup();
        Ok(Tree {
            layout: Layout::Explicit,
            depth,
            truncated: false,
            adj: raw,
            edges,
        })
    }

    /// Cayley order k, when the tree was built in Cayley mode.
    pub fn order(&self) -> Option<usize> {
        match self.layout {
            Layout::Cayley { k } => Some(k),
            Layout::Explicit => None,
        }
    }

    /// Maximum stored level.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// True when the stored graph is a truncation of an infinite tree.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.adj.keys()
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.adj.contains_key(v)
    }

    /// Stored edges in canonical orientation (parent, child) for tree
    /// layouts; input orientation in general-graph mode.
    pub fn edges(&self) -> &[(Vertex, Vertex)] {
        &self.edges
    }

    /// Edges with both endpoints inside `region`.
    pub fn edges_within(&self, region: &Region) -> Vec<(Vertex, Vertex)> {
        self.edges
            .iter()
            .filter(|(a, b)| region.contains(a) && region.contains(b))
            .cloned()
            .collect()
    }

    pub fn neighbors(&self, v: &Vertex) -> Result<&[Vertex]> {
        self.adj
            .get(v)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownVertex(v.to_string()))
    }

    fn check_region(&self, region: &Region) -> Result<()> {
        for v in region {
            if !self.contains(v) {
                return Err(Error::UnknownVertex(v.to_string()));
            }
        }
        Ok(())
    }

    /// External boundary: vertices outside `region` adjacent to it.
    ///
    /// Fails with [`Error::Truncation`] when a boundary vertex would lie
    /// beyond the stored depth of a truncated tree.
    pub fn boundary(&self, region: &Region) -> Result<Region> {
        self.check_region(region)?;
        if self.truncated {
            if let Some(v) = region.iter().find(|v| v.level() == self.depth) {
                return Err(Error::Truncation(format!(
                    "successors of {v} lie beyond stored depth {}",
                    self.depth
                )));
            }
        }
        let mut out = Region::new();
        for v in region {
            for n in self.neighbors(v)? {
                if !region.contains(n) {
                    out.insert(n.clone());
                }
            }
        }
        Ok(out)
    }

    /// Closure: the region together with its external boundary.
    pub fn closure(&self, region: &Region) -> Result<Region> {
        Ok(region.union(&self.boundary(region)?))
    }

    /// The level set W_n and the ball Λ_n of all vertices with level <= n.
    pub fn levels(&self, n: usize) -> Result<(Region, Region)> {
        if self.truncated && n > self.depth {
            return Err(Error::Truncation(format!(
                "level {n} beyond stored depth {}",
                self.depth
            )));
        }
        let mut w = Region::new();
        let mut ball = Region::new();
        for v in self.adj.keys() {
            if v.level() == n {
                w.insert(v.clone());
            }
            if v.level() <= n {
                ball.insert(v.clone());
            }
        }
        Ok((w, ball))
    }

    /// Direct successors S(x) = children of x.
    pub fn successors(&self, x: &Vertex) -> Result<Vec<Vertex>> {
        if self.truncated && x.level() == self.depth {
            return Err(Error::Truncation(format!(
                "successors of {x} lie beyond stored depth {}",
                self.depth
            )));
        }
        Ok(self
            .neighbors(x)?
            .iter()
            .filter(|n| n.level() == x.level() + 1 && x.is_ancestor_of(n))
            .cloned()
            .collect())
    }

    /// Shortest-walk distance between two stored vertices.
    pub fn dist(&self, x: &Vertex, y: &Vertex) -> Result<usize> {
        if !self.contains(x) {
            return Err(Error::UnknownVertex(x.to_string()));
        }
        if !self.contains(y) {
            return Err(Error::UnknownVertex(y.to_string()));
        }
        match self.layout {
            // Canonical labels: distance through the least common ancestor.
            Layout::Cayley { .. } => Ok(path_dist(x, y)),
            Layout::Explicit => {
                // May contain cycles; breadth-first search.
                let mut dist: BTreeMap<&Vertex, usize> = BTreeMap::from([(x, 0)]);
                let mut queue = VecDeque::from([x]);
                while let Some(u) = queue.pop_front() {
                    if u == y {
                        return Ok(dist[u]);
                    }
                    let du = dist[u];
                    for v in &self.adj[u] {
                        if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                            e.insert(du + 1);
                            queue.push_back(v);
                        }
                    }
                }
                unreachable!("graph is connected by construction")
            }
        }
    }

    /// The shift γ_i applied to a vertex: (i, x). Only meaningful on Cayley
    /// trees, where the subtree below (i) is isomorphic to the whole tree.
    pub fn shift_vertex(&self, i: usize, x: &Vertex) -> Result<Vertex> {
        let k = self.order().ok_or_else(|| {
            Error::InvalidParameter("shifts are defined on Cayley trees only".into())
        })?;
        if i == 0 || i > k {
            return Err(Error::InvalidParameter(format!(
                "shift index {i} outside 1..={k}"
            )));
        }
        let shifted = x.shifted(i as u32);
        if shifted.level() > self.depth {
            return Err(Error::Truncation(format!(
                "shifted vertex {shifted} beyond stored depth {}",
                self.depth
            )));
        }
        Ok(shifted)
    }

    /// True when `region` is connected inside the stored graph.
    pub fn is_connected_region(&self, region: &Region) -> Result<bool> {
        self.check_region(region)?;
        if region.is_empty() {
            return Ok(true);
        }
        let start = region.iter().next().expect("nonempty").clone();
        let mut seen = Region::singleton(start.clone());
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(&u)? {
                if region.contains(v) && seen.insert(v.clone()) {
                    queue.push_back(v.clone());
                }
            }
        }
        Ok(seen.len() == region.len())
    }

    /// For each boundary vertex of a finite connected region, the unique
    /// neighbour inside the region. A boundary vertex with two or more
    /// inside neighbours certifies that the graph is not a tree.
    pub fn check_tree_property(&self, region: &Region) -> Result<BTreeMap<Vertex, Vertex>> {
        if !self.is_connected_region(region)? {
            return Err(Error::Disconnected(format!(
                "tree property requires a connected region ({} vertices given)",
                region.len()
            )));
        }
        let boundary = self.boundary(region)?;
        let mut map = BTreeMap::new();
        for b in &boundary {
            let inside: Vec<&Vertex> = self
                .neighbors(b)?
                .iter()
                .filter(|n| region.contains(n))
                .collect();
            match inside.as_slice() {
                [unique] => {
                    map.insert(b.clone(), (*unique).clone());
                }
                many => {
                    return Err(Error::NotATree(format!(
                        "boundary vertex {b} has {} neighbours inside the region",
                        many.len()
                    )));
                }
            }
        }
        Ok(map)
    }

    /// Smallest connected region containing `region` (union of the pairwise
    /// tree paths). Requires canonical vertex labels; the computed path
    /// vertices are validated against the stored graph, so non-canonical
    /// inputs fail loudly instead of returning a wrong hull.
    pub fn connected_hull(&self, region: &Region) -> Result<Region> {
        self.check_region(region)?;
        let mut hull = Region::new();
        let sites = region.sites();
        if sites.is_empty() {
            return Ok(hull);
        }
        for v in &sites {
            hull.insert(v.clone());
        }
        let first = &sites[0];
        for v in &sites[1..] {
            for w in tree_path(first, v) {
                if !self.contains(&w) {
                    return Err(Error::NotATree(format!(
                        "hull vertex {w} is not stored; the graph does not carry                          canonical tree labels"
                    )));
                }
                hull.insert(w);
            }
        }
        if !self.is_connected_region(&hull)? {
            return Err(Error::NotATree(
                "hull is not connected; the graph does not carry canonical tree labels".into(),
            ));
        }
        Ok(hull)
    }
}

/// Vertices-by-path distance through the least common ancestor.
fn path_dist(x: &Vertex, y: &Vertex) -> usize {
    let common = x
        .path()
        .iter()
        .zip(y.path())
        .take_while(|(a, b)| a == b)
        .count();
    (x.level() - common) + (y.level() - common)
}

/// All vertices on the tree path from `x` to `y` (inclusive), using
/// canonical coordinates.
fn tree_path(x: &Vertex, y: &Vertex) -> Vec<Vertex> {
    let common = x
        .path()
        .iter()
        .zip(y.path())
        .take_while(|(a, b)| a == b)
        .count();
    let mut out = Vec::new();
    let mut up = x.clone();
    while up.level() > common {
        out.push(up.clone());
        up = up.parent().expect("level > 0");
    }
    out.push(up);
    for l in common + 1..=y.level() {
        out.push(Vertex {
            path: y.path()[..l].to_vec(),
        });
    }
    out
}

fn raw_adjacency(edges: &[(Vertex, Vertex)]) -> Result<BTreeMap<Vertex, Vec<Vertex>>> {
    if edges.is_empty() {
        return Err(Error::InvalidParameter("empty edge list".into()));
    }
    let mut adj: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
    for (a, b) in edges {
        if a == b {
            return Err(Error::InvalidParameter(format!("self-loop at {a}")));
        }
        adj.entry(a.clone()).or_default().push(b.clone());
        adj.entry(b.clone()).or_default().push(a.clone());
    }
    for nbrs in adj.values_mut() {
        nbrs.sort();
        nbrs.dedup();
    }
    Ok(adj)
}

/// |Λ_depth| for the order-k Cayley tree.
pub fn cayley_ball_size(k: usize, depth: usize) -> usize {
    if k == 1 {
        depth + 1
    } else {
        // (k^(depth+1) - 1) / (k - 1)
        let mut total = 1usize;
        let mut layer = 1usize;
        for _ in 0..depth {
            layer *= k;
            total += layer;
        }
        total
    }
}

/// A uniformly grown random tree on `n` vertices with canonical labels:
/// vertex t attaches to a uniformly chosen earlier vertex. Complete
/// (not truncated).
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Tree> {
    if n == 0 {
        return Err(Error::InvalidParameter("random tree needs >= 1 vertex".into()));
    }
    if n == 1 {
        return Tree::path_graph(1);
    }
    let mut vertices = vec![Vertex::root()];
    let mut child_count: BTreeMap<Vertex, u32> = BTreeMap::new();
    let mut edges = Vec::new();
    for _ in 1..n {
        let parent = vertices[rng.gen_range(0..vertices.len())].clone();
        let idx = child_count.entry(parent.clone()).or_insert(0);
        *idx += 1;
        let child = parent.child(*idx);
        edges.push((parent, child.clone()));
        vertices.push(child);
    }
    Tree::from_edges(&edges, &Vertex::root()).map(|(t, _)| t)
}

/// Every connected region of the stored graph with 1..=max_size vertices.
/// Intended for exhaustive desk-scale checks; the vertex count must be
/// small enough to enumerate all subsets.
pub fn connected_regions_up_to(tree: &Tree, max_size: usize) -> Result<Vec<Region>> {
    let all: Region = tree.vertices().cloned().collect();
    connected_regions_within(tree, &all, max_size)
}

/// Every connected region with 1..=max_size vertices drawn from `ambient`.
pub fn connected_regions_within(
    tree: &Tree,
    ambient: &Region,
    max_size: usize,
) -> Result<Vec<Region>> {
    let n = ambient.len();
    if n > 20 {
        return Err(Error::InvalidParameter(format!(
            "subset enumeration over {n} vertices is not desk scale"
        )));
    }
    let verts = ambient.sites();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        if (mask.count_ones() as usize) > max_size {
            continue;
        }
        let region: Region = verts
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, v)| v.clone())
            .collect();
        if tree.is_connected_region(&region)? {
            out.push(region);
        }
    }
    Ok(out)
}
