//! Undirected simple graphs and the road-network construction.
//!
//! A road network is turned into a graph by assigning one vertex per road and
//! drawing an edge between two roads wherever they meet at an intersection, so
//! an intersection joining k roads contributes the full k-clique. Lattice and
//! fully-connected generators are provided for experiments.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// An immutable undirected simple graph on vertices `0..n`.
///
/// Edges are stored canonically (`i < j`, sorted, no duplicates) together with
/// a compressed neighbor-list representation. Construction validates that
/// there are no self-loops, no duplicate edges and no out-of-range endpoints;
/// after that the structure is read-only and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(u32, u32)>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Graph {
    /// Builds a graph from an edge list. Edges may be given in any order and
    /// orientation; duplicates and self-loops are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut canon: Vec<(u32, u32)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has an endpoint >= n = {n}"
                )));
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            canon.push((lo as u32, hi as u32));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_canonical(n, canon))
    }

    /// `edges` must already be sorted, deduplicated, in-range and self-loop free.
    fn from_canonical(n: usize, edges: Vec<(u32, u32)>) -> Self {
        let mut degree = vec![0usize; n];
        for &(i, j) in &edges {
            degree[i as usize] += 1;
            degree[j as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut neighbors = vec![0u32; offsets[n]];
        let mut cursor = offsets.clone();
        for &(i, j) in &edges {
            neighbors[cursor[i as usize]] = j;
            cursor[i as usize] += 1;
            neighbors[cursor[j as usize]] = i;
            cursor[j as usize] += 1;
        }
        // Neighbor lists come out sorted because the edge list is sorted on
        // (min, max); sort anyway to keep the invariant independent of that.
        for i in 0..n {
            neighbors[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Self {
            n,
            edges,
            offsets,
            neighbors,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list: sorted pairs with `i < j`.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Sorted neighbor list of vertex `i` (the set ∂(i)).
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// True when every pair of distinct vertices is adjacent.
    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * self.n.saturating_sub(1) / 2
    }
}

/// A road network given as a list of roads and the sets of roads meeting at
/// each intersection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoadNetworkDescription {
    pub roads: Vec<String>,
    pub intersections: Vec<Vec<String>>,
}

impl RoadNetworkDescription {
    pub fn new(roads: Vec<String>, intersections: Vec<Vec<String>>) -> Result<Self> {
        let desc = Self {
            roads,
            intersections,
        };
        desc.validate()?;
        Ok(desc)
    }

    /// Checks that every intersection names at least two known roads.
    pub fn validate(&self) -> Result<()> {
        for x in &self.intersections {
            if x.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "intersection {x:?} joins fewer than two roads"
                )));
            }
            for name in x {
                if !self.roads.iter().any(|r| r == name) {
                    return Err(Error::UnknownRoad(name.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Builds the road-connectivity graph: one vertex per road (indexed by first
/// appearance in the roads list), one edge for every pair of roads that share
/// at least one intersection. Roads meeting at several intersections still
/// produce a single edge.
pub fn build_road_graph(desc: &RoadNetworkDescription) -> Result<Graph> {
    desc.validate()?;
    let index_of = |name: &str| -> usize {
        desc.roads
            .iter()
            .position(|r| r == name)
            .expect("validated above")
    };
    let mut edges = BTreeSet::new();
    for x in &desc.intersections {
        let ids: Vec<usize> = x.iter().map(|name| index_of(name)).collect();
        for (k, &a) in ids.iter().enumerate() {
            for &b in &ids[k + 1..] {
                if a != b {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    edges.insert((lo, hi));
                }
            }
        }
    }
    Graph::new(desc.roads.len(), edges)
}

/// A `w` by `h` grid with 4-neighbor connectivity; vertex `(x, y)` has index
/// `y * w + x`. Edge count is `w (h - 1) + h (w - 1)`.
pub fn make_lattice(w: usize, h: usize) -> Graph {
    assert!(w >= 1 && h >= 1, "lattice dimensions must be positive");
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = y * w + x;
            if x + 1 < w {
                edges.push((v, v + 1));
            }
            if y + 1 < h {
                edges.push((v, v + w));
            }
        }
    }
    Graph::new(w * h, edges).expect("lattice edges are canonical by construction")
}

/// The complete graph on `n` vertices: all `n (n - 1) / 2` edges.
pub fn make_complete(n: usize) -> Graph {
    assert!(n >= 1, "complete graph needs at least one vertex");
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j));
        }
    }
    Graph::new(n, edges).expect("complete edges are canonical by construction")
}
