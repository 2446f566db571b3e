//! Hierarchical navigable small-world graph over row-major f32 vectors.
//! The graph stores only links; vectors are owned by the dense index.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HnswParams {
    pub m: usize,
    pub m0: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams { m: 16, m0: 32, ef_construction: 200, ef_search: 100, seed: 42 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cand {
    sim: f32,
    id: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cand {
    /// Greater = better: higher similarity, then lower id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.id.cmp(&self.id))
    }
}

struct Visited(Vec<u64>);

impl Visited {
    fn new(n: usize) -> Self {
        Visited(vec![0; n.div_ceil(64)])
    }

    /// Returns true when `id` was not yet visited.
    fn insert(&mut self, id: u32) -> bool {
        let (w, b) = (id as usize / 64, id as usize % 64);
        let fresh = self.0[w] & (1 << b) == 0;
        self.0[w] |= 1 << b;
        fresh
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hnsw {
    pub params: HnswParams,
    entry: Option<u32>,
    max_level: usize,
    /// `links[node][layer]`
    links: Vec<Vec<Vec<u32>>>,
}

struct View<'a> {
    data: &'a [f32],
    dim: usize,
}

impl View<'_> {
    fn row(&self, i: u32) -> &[f32] {
        let s = i as usize * self.dim;
        &self.data[s..s + self.dim]
    }

    fn sim(&self, i: u32, q: &[f32]) -> f32 {
        self.row(i).iter().zip(q).map(|(a, b)| a * b).sum()
    }
}

impl Hnsw {
    /// Inserts rows `0..data.len()/dim` in order.
    pub fn build(data: &[f32], dim: usize, params: HnswParams) -> Self {
        let n = data.len().checked_div(dim).unwrap_or(0);
        let mut g = Hnsw { params, entry: None, max_level: 0, links: Vec::with_capacity(n) };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = 1.0 / (params.m.max(2) as f64).ln();
        let view = View { data, dim };
        for i in 0..n {
            let u: f64 = rng.random();
            let level = ((-(1.0 - u).ln() * ml).floor() as usize).min(MAX_LEVEL);
            g.insert(&view, i as u32, level);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Structural sanity after deserialization.
    pub fn is_consistent(&self, n: usize) -> bool {
        self.links.len() == n
            && self.entry.is_none_or(|e| (e as usize) < n && self.links[e as usize].len() == self.max_level + 1)
            && self.links.iter().all(|layers| {
                !layers.is_empty() && layers.iter().flatten().all(|&nb| (nb as usize) < n)
            })
    }

    fn insert(&mut self, view: &View<'_>, id: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(mut ep) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return;
        };
        let q = view.row(id);
        let mut visited = Visited::new(self.links.len());
        for layer in (level + 1..=self.max_level).rev() {
            ep = self.greedy(view, q, ep, layer);
        }
        let mut eps = vec![Cand { sim: view.sim(ep, q), id: ep }];
        for layer in (0..=level.min(self.max_level)).rev() {
            visited.0.fill(0);
            let w = self.search_layer(view, q, &eps, self.params.ef_construction, layer, &mut visited);
            let cap = if layer == 0 { self.params.m0 } else { self.params.m };
            let chosen = select_neighbors(view, &w, cap);
            self.links[id as usize][layer] = chosen.iter().map(|c| c.id).collect();
            for c in &chosen {
                let nb = c.id;
                self.links[nb as usize][layer].push(id);
                if self.links[nb as usize][layer].len() > cap {
                    let base = view.row(nb);
                    let mut cands: Vec<Cand> = self.links[nb as usize][layer]
                        .iter()
                        .map(|&x| Cand { sim: view.sim(x, base), id: x })
                        .collect();
                    cands.sort_by(|a, b| b.cmp(a));
                    self.links[nb as usize][layer] =
                        select_neighbors(view, &cands, cap).iter().map(|c| c.id).collect();
                }
            }
            eps = w;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
    }

    fn greedy(&self, view: &View<'_>, q: &[f32], mut ep: u32, layer: usize) -> u32 {
        let mut best = view.sim(ep, q);
        loop {
            let mut moved = false;
            for &nb in &self.links[ep as usize][layer] {
                let s = view.sim(nb, q);
                if s > best || (s == best && nb < ep) {
                    best = s;
                    ep = nb;
                    moved = true;
                }
            }
            if !moved {
                return ep;
            }
        }
    }

    /// Best-first beam search on one layer; result sorted best first.
    fn search_layer(
        &self,
        view: &View<'_>,
        q: &[f32],
        eps: &[Cand],
        ef: usize,
        layer: usize,
        visited: &mut Visited,
    ) -> Vec<Cand> {
        let mut candidates: BinaryHeap<Cand> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        for &c in eps {
            if visited.insert(c.id) {
                candidates.push(c);
                results.push(Reverse(c));
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(c) = candidates.pop() {
            let worst = results.peek().map(|r| r.0).expect("results seeded");
            if c < worst && results.len() >= ef {
                break;
            }
            for &nb in &self.links[c.id as usize][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                let cand = Cand { sim: view.sim(nb, q), id: nb };
                let worst = results.peek().map(|r| r.0).expect("results seeded");
                if results.len() < ef || cand > worst {
                    candidates.push(cand);
                    results.push(Reverse(cand));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Cand> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Approximate nearest rows for `q`, best first, at most `max(ef, k)` ids.
    pub fn search(&self, data: &[f32], dim: usize, q: &[f32], k: usize, ef: usize) -> Vec<u32> {
        let Some(mut ep) = self.entry else {
            return Vec::new();
        };
        let view = View { data, dim };
        for layer in (1..=self.max_level).rev() {
            ep = self.greedy(&view, q, ep, layer);
        }
        let mut visited = Visited::new(self.links.len());
        let start = [Cand { sim: view.sim(ep, q), id: ep }];
        self.search_layer(&view, q, &start, ef.max(k), 0, &mut visited)
            .into_iter()
            .map(|c| c.id)
            .collect()
    }
}

/// Diversity heuristic: keep a candidate only if it is closer to the base
/// than to every already kept neighbor; top up with the pruned ones.
fn select_neighbors(view: &View<'_>, sorted: &[Cand], m: usize) -> Vec<Cand> {
    let mut kept: Vec<Cand> = Vec::with_capacity(m);
    let mut pruned = Vec::new();
    for &c in sorted {
        if kept.len() >= m {
            break;
        }
        let row = view.row(c.id);
        if kept.iter().all(|k| view.sim(k.id, row) < c.sim) {
            kept.push(c);
        } else {
            pruned.push(c);
        }
    }
    for c in pruned {
        if kept.len() >= m {
            break;
        }
        kept.push(c);
    }
    kept
}
