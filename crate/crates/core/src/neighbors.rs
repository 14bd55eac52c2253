//! Nearest-neighbor queries over the lifted sites.
//!
//! A static k-d tree is built once per diagram; per-site neighbor lists are
//! then materialized lazily in batches as clipping asks for farther ranks.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NeighborError {
    #[error("every other site has already been returned (requested rank {rank} of {available})")]
    Exhausted { rank: usize, available: usize },
    #[error("neighbor ranks start at 1")]
    ZeroRank,
    #[error("site {0} is not in the index")]
    UnknownSite(usize),
}

/// Batch sizes for materializing neighbor lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborParams {
    pub initial: usize,
    pub increment: usize,
}

impl Default for NeighborParams {
    fn default() -> Self {
        Self {
            initial: 50,
            increment: 10,
        }
    }
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Balanced k-d tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    /// Builds the tree over `points` (flat, stride `dim`).
    pub fn new(points: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let n = points.len() / dim;
        let mut tree = Self {
            dim,
            points,
            order: (0..n as u32).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let dim = self.dim;
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for axis in 0..dim {
            let (lo, hi) = self.order[start..end].iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &i| {
                    let x = self.points[i as usize * dim + axis];
                    (lo.min(x), hi.max(x))
                },
            );
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize * dim + best_axis].total_cmp(&points[b as usize * dim + best_axis])
        });
        let value = self.points[self.order[mid] as usize * dim + best_axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id as usize] = Node::Split {
            axis: best_axis as u8,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` points nearest to `query`, skipping `exclude`, sorted by
    /// distance with ties broken by ascending index.
    pub fn nearest(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let exclude = exclude.map(|e| e as u32);
        self.search(0, query, k, exclude, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        out.into_iter()
            .map(|c| (c.index as usize, c.dist2.sqrt()))
            .collect()
    }

    fn search(
        &self,
        node: u32,
        query: &[f64],
        k: usize,
        exclude: Option<u32>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let p = self.point(i as usize);
                    let dist2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                    let c = Candidate { dist2, index: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, exclude, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.search(far, query, k, exclude, heap);
                }
            }
        }
    }
}

/// Shared index plus worker-local neighbor lists.
///
/// `fork` hands out a cache for another worker; the tree is shared, the
/// lists are not.
#[derive(Debug, Clone)]
pub struct NeighborCache {
    index: Arc<KdTree>,
    params: NeighborParams,
    lists: HashMap<usize, Vec<u32>>,
}

impl NeighborCache {
    /// Indexes `points` (flat, stride `dim`).
    pub fn build(points: Vec<f64>, dim: usize, params: NeighborParams) -> Self {
        Self {
            index: Arc::new(KdTree::new(points, dim)),
            params,
            lists: HashMap::new(),
        }
    }

    pub fn fork(&self) -> Self {
        Self {
            index: Arc::clone(&self.index),
            params: self.params,
            lists: HashMap::new(),
        }
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    pub fn params(&self) -> NeighborParams {
        self.params
    }

    pub fn num_sites(&self) -> usize {
        self.index.len()
    }

    /// Index of the `rank`-th nearest other site to site `i` (`rank >= 1`).
    pub fn next_neighbor(&mut self, i: usize, rank: usize) -> Result<usize, NeighborError> {
        let n = self.index.len();
        if i >= n {
            return Err(NeighborError::UnknownSite(i));
        }
        if rank == 0 {
            return Err(NeighborError::ZeroRank);
        }
        if rank > n - 1 {
            return Err(NeighborError::Exhausted {
                rank,
                available: n - 1,
            });
        }
        let have = self.lists.get(&i).map_or(0, Vec::len);
        if rank > have {
            let mut want = if have == 0 {
                self.params.initial.max(1)
            } else {
                have
            };
            while want < rank {
                want += self.params.increment.max(1);
            }
            let want = want.min(n - 1);
            let found = self.index.nearest(self.index.point(i), want, Some(i));
            self.lists
                .insert(i, found.into_iter().map(|(j, _)| j as u32).collect());
        }
        Ok(self.lists[&i][rank - 1] as usize)
    }

    /// Neighbors materialized so far for site `i`.
    pub fn materialized(&self, i: usize) -> &[u32] {
        self.lists.get(&i).map_or(&[], Vec::as_slice)
    }

    /// Drops the list for site `i`.
    pub fn release(&mut self, i: usize) {
        self.lists.remove(&i);
    }
}
