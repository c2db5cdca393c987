//! Feasible interaction graphs and the time-varying active-edge partition.
//!
//! A [`FeasibleGraph`] fixes the vertex set and the pairs that are ever
//! allowed to link. An [`EdgeState`] marks which feasible edges are active
//! right now; the inactive set is always the complement, so the partition is
//! exact by construction.

use crate::rng::unit_f64;
use crate::{Error, Result};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::path::Path;

/// Attempts before [`generate_feasible_graph`] gives up on connectivity.
pub const DEFAULT_CONNECTIVITY_RETRIES: u32 = 1000;

/// A fixed vertex set together with the set of feasible (potential) edges.
///
/// Edges are stored canonically as `(i, j)` with `i < j`, sorted
/// lexicographically, and mirrored into per-vertex sorted neighbor lists.
/// Graph dumps depend on this ordering, so it is a contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibleGraph {
    n: usize,
    edges: Vec<(u32, u32)>,
    neighbors: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<(u32, u32)>,
}

impl FeasibleGraph {
    /// Builds a graph from unordered vertex pairs.
    ///
    /// Pairs may arrive in any orientation; they are canonicalized to
    /// `i < j` and sorted. Self-loops, duplicates and out-of-range vertices
    /// are rejected. Connectivity is *not* required here — it is the
    /// generator's job (Assumption 1 of the model holds for generated
    /// graphs, while dumps of arbitrary edge sets remain loadable, e.g. to
    /// inspect a disconnected spectrum).
    pub fn from_edges(n: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("vertex count must be positive".into()));
        }
        let mut edges: Vec<(u32, u32)> = Vec::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            if a as usize >= n || b as usize >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a},{b}) out of range for n={n}"
                )));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph("duplicate edge".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i as usize].push(j);
            neighbors[j as usize].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n, edges, neighbors })
    }

    /// The complete graph on `n` vertices.
    pub fn complete(n: usize) -> Result<Self> {
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n as u32 {
            for j in (i + 1)..n as u32 {
                pairs.push((i, j));
            }
        }
        Self::from_edges(n, pairs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonically ordered feasible edges.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Sorted feasible neighbors of vertex `i`.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Serializes as `{"n": …, "edges": [[i,j],…]}` with `i<j` and edges
    /// sorted lexicographically. Byte-deterministic.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&GraphJson {
            n: self.n,
            edges: self.edges.clone(),
        })
        .expect("graph serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: GraphJson = serde_json::from_str(s)
            .map_err(|e| Error::InvalidGraph(format!("bad graph JSON: {e}")))?;
        Self::from_edges(raw.n, raw.edges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = self.to_json_string();
        body.push('\n');
        std::fs::write(path, body).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&body)
    }
}

/// Which feasible edges are currently active, indexed like
/// [`FeasibleGraph::edges`]. The inactive set is the complement, never
/// stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeState {
    active: Vec<bool>,
}

impl EdgeState {
    pub fn from_flags(active: Vec<bool>) -> Self {
        Self { active }
    }

    pub fn all_inactive(edge_count: usize) -> Self {
        Self {
            active: vec![false; edge_count],
        }
    }

    pub fn is_active(&self, edge_index: usize) -> bool {
        self.active[edge_index]
    }

    pub fn flags(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

fn check_probability(name: &str, p: f64, allow_zero: bool) -> Result<()> {
    let ok = p.is_finite() && p <= 1.0 && (p > 0.0 || (allow_zero && p == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must lie in {}0, 1], got {p}",
            if allow_zero { "[" } else { "(" }
        )))
    }
}

/// One Bernoulli pass over all vertex pairs: each unordered pair becomes a
/// feasible edge independently with probability `p1`. No connectivity retry;
/// see [`generate_feasible_graph`] for the retrying variant.
///
/// Pairs are visited in canonical order (`i` outer, `j > i` inner), one
/// uniform draw per pair.
pub fn sample_graph<R: RngCore + ?Sized>(n: usize, p1: f64, rng: &mut R) -> Result<FeasibleGraph> {
    if n == 0 {
        return Err(Error::InvalidGraph("vertex count must be positive".into()));
    }
    check_probability("p1", p1, false)?;
    let mut pairs = Vec::new();
    for i in 0..n as u32 {
        for j in (i + 1)..n as u32 {
            if unit_f64(rng) < p1 {
                pairs.push((i, j));
            }
        }
    }
    FeasibleGraph::from_edges(n, pairs)
}

/// Samples Bernoulli graphs until one is connected, failing after
/// [`DEFAULT_CONNECTIVITY_RETRIES`] attempts.
pub fn generate_feasible_graph<R: RngCore + ?Sized>(
    n: usize,
    p1: f64,
    rng: &mut R,
) -> Result<FeasibleGraph> {
    generate_feasible_graph_with_retries(n, p1, rng, DEFAULT_CONNECTIVITY_RETRIES)
}

/// As [`generate_feasible_graph`] with an explicit retry cap.
pub fn generate_feasible_graph_with_retries<R: RngCore + ?Sized>(
    n: usize,
    p1: f64,
    rng: &mut R,
    max_attempts: u32,
) -> Result<FeasibleGraph> {
    if max_attempts == 0 {
        return Err(Error::InvalidConfig("retry cap must be positive".into()));
    }
    for _ in 0..max_attempts {
        let g = sample_graph(n, p1, rng)?;
        if is_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::ConnectivityRetriesExhausted {
        attempts: max_attempts,
        n,
        p1,
    })
}

/// True iff a traversal from vertex 0 reaches all `n` vertices.
pub fn is_connected(g: &FeasibleGraph) -> bool {
    if g.n <= 1 {
        return true;
    }
    let mut seen = vec![false; g.n];
    let mut queue = VecDeque::with_capacity(g.n);
    seen[0] = true;
    queue.push_back(0u32);
    let mut reached = 1usize;
    while let Some(v) = queue.pop_front() {
        for &w in g.neighbors(v as usize) {
            if !seen[w as usize] {
                seen[w as usize] = true;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    reached == g.n
}

/// Marks each feasible edge active independently with probability `p2`,
/// visiting edges in canonical order (one draw per edge).
pub fn init_active_sets<R: RngCore + ?Sized>(
    g: &FeasibleGraph,
    p2: f64,
    rng: &mut R,
) -> Result<EdgeState> {
    check_probability("p2", p2, true)?;
    let active = g.edges.iter().map(|_| unit_f64(rng) < p2).collect();
    Ok(EdgeState { active })
}
