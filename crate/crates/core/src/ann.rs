//! Approximate nearest-neighbor search over name representations using a
//! random-projection forest with angular (cosine) geometry, plus an exact
//! exhaustive-scan oracle used for validation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use thiserror::Error;

use crate::seed;

pub const INDEX_MAGIC: &[u8; 4] = b"ANMI";
pub const INDEX_VERSION: u32 = 1;

pub const DEFAULT_N_TREES: usize = 16;
pub const DEFAULT_LEAF_CAPACITY: usize = 16;

#[derive(Debug, Error)]
pub enum AnnError {
    #[error("index must contain at least one item")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("index format version {found} is incompatible with supported version {expected}")]
    Version { found: u32, expected: u32 },
}

#[derive(Debug, Clone, PartialEq)]
struct Item {
    id: usize,
    /// unit-normalized vector (zero vectors are stored as-is)
    vector: Vec<f64>,
    payload: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split { normal: Vec<f64>, offset: f64, left: u32, right: u32 },
    Leaf { items: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

/// Immutable random-projection forest over fixed-dimension vectors with a
/// string payload per item.
#[derive(Debug, Clone, PartialEq)]
pub struct RpForestIndex {
    dim: usize,
    items: Vec<Item>,
    trees: Vec<Tree>,
    n_trees: usize,
    leaf_capacity: usize,
}

fn normalize_vec(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine distance between unit vectors: `1 - a . b`.
fn unit_cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - dot(a, b)
}

struct TreeBuilder<'a> {
    items: &'a [Item],
    leaf_capacity: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// Split by the perpendicular bisector hyperplane of two distinct random
    /// items; recurse until at most leaf_capacity items remain. Duplicate
    /// vectors that prevent a valid split terminate recursion into an
    /// oversized leaf.
    fn build(&mut self, ids: Vec<u32>, rng: &mut impl Rng) -> u32 {
        if ids.len() <= self.leaf_capacity {
            self.nodes.push(Node::Leaf { items: ids });
            return (self.nodes.len() - 1) as u32;
        }
        for _attempt in 0..8 {
            let a = &self.items[ids[rng.random_range(0..ids.len())] as usize].vector;
            let b = &self.items[ids[rng.random_range(0..ids.len())] as usize].vector;
            if a == b {
                continue;
            }
            let normal: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let offset = normal
                .iter()
                .zip(a.iter().zip(b))
                .map(|(n, (x, y))| n * (x + y) * 0.5)
                .sum::<f64>();
            let (left, right): (Vec<u32>, Vec<u32>) = ids
                .iter()
                .partition(|&&id| dot(&self.items[id as usize].vector, &normal) - offset < 0.0);
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let left_node = self.build(left, rng);
            let right_node = self.build(right, rng);
            self.nodes.push(Node::Split { normal, offset, left: left_node, right: right_node });
            return (self.nodes.len() - 1) as u32;
        }
        // degenerate node (e.g. all duplicates): oversized leaf
        self.nodes.push(Node::Leaf { items: ids });
        (self.nodes.len() - 1) as u32
    }
}

/// Max-heap entry ordered by margin (NaN-free by construction).
struct QueueEntry {
    margin: f64,
    tree: usize,
    node: u32,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.margin == other.margin
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.margin.total_cmp(&other.margin)
    }
}

impl RpForestIndex {
    /// Build a forest over `(payload, vector)` items. Vectors are
    /// unit-normalized at insertion; trees are built deterministically from
    /// per-tree seeds derived from `seed`.
    pub fn build(
        items: Vec<(String, Vec<f64>)>,
        n_trees: usize,
        leaf_capacity: usize,
        root_seed: u64,
    ) -> Result<RpForestIndex, AnnError> {
        if items.is_empty() {
            return Err(AnnError::Empty);
        }
        let dim = items[0].1.len();
        let items: Vec<Item> = items
            .into_iter()
            .enumerate()
            .map(|(id, (payload, vector))| {
                if vector.len() != dim {
                    return Err(AnnError::Dimension { expected: dim, got: vector.len() });
                }
                Ok(Item { id, vector: normalize_vec(&vector), payload })
            })
            .collect::<Result<_, _>>()?;
        let all_ids: Vec<u32> = (0..items.len() as u32).collect();
        let trees = (0..n_trees)
            .map(|ti| {
                let mut rng = seed::rng(seed::derive_indexed(root_seed, "rp-tree", ti as u64));
                let mut builder =
                    TreeBuilder { items: &items, leaf_capacity: leaf_capacity.max(1), nodes: vec![] };
                let root = builder.build(all_ids.clone(), &mut rng);
                debug_assert_eq!(root as usize, builder.nodes.len() - 1);
                Tree { nodes: builder.nodes }
            })
            .collect();
        Ok(RpForestIndex { dim, items, trees, n_trees, leaf_capacity })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Top-k items by cosine distance, ascending; ties broken by item id.
    /// Traverses all trees with a shared priority queue ordered by
    /// margin-to-hyperplane, collecting at least `search_budget` candidates
    /// before the exact re-rank.
    pub fn query(
        &self,
        q: &[f64],
        k: usize,
        search_budget: usize,
    ) -> Result<Vec<(String, f64)>, AnnError> {
        if self.items.is_empty() {
            return Err(AnnError::Empty);
        }
        if q.len() != self.dim {
            return Err(AnnError::Dimension { expected: self.dim, got: q.len() });
        }
        let q = normalize_vec(q);
        let mut heap = BinaryHeap::new();
        for (ti, tree) in self.trees.iter().enumerate() {
            heap.push(QueueEntry {
                margin: f64::INFINITY,
                tree: ti,
                node: (tree.nodes.len() - 1) as u32,
            });
        }
        let mut candidates: HashSet<u32> = HashSet::new();
        let target = search_budget.max(k);
        while candidates.len() < target {
            let Some(entry) = heap.pop() else { break };
            match &self.trees[entry.tree].nodes[entry.node as usize] {
                Node::Leaf { items } => candidates.extend(items.iter().copied()),
                Node::Split { normal, offset, left, right } => {
                    let d = dot(&q, normal) - offset;
                    let (near, far) = if d < 0.0 { (*left, *right) } else { (*right, *left) };
                    heap.push(QueueEntry {
                        margin: entry.margin.min(d.abs()),
                        tree: entry.tree,
                        node: near,
                    });
                    heap.push(QueueEntry {
                        margin: entry.margin.min(-d.abs()),
                        tree: entry.tree,
                        node: far,
                    });
                }
            }
        }
        let mut ranked: Vec<(usize, f64)> = candidates
            .into_iter()
            .map(|id| {
                let item = &self.items[id as usize];
                (item.id, unit_cosine_distance(&q, &item.vector))
            })
            .collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|(id, d)| (self.items[id].payload.clone(), d))
            .collect())
    }

    /// Serialize to a versioned binary file.
    pub fn save(&self, path: &Path) -> Result<(), AnnError> {
        let io_err = |source| AnnError::Io { path: path.display().to_string(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        w.write_all(INDEX_MAGIC).map_err(io_err)?;
        w.write_u32::<LittleEndian>(INDEX_VERSION).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.dim as u64).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.n_trees as u64).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.leaf_capacity as u64).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.items.len() as u64).map_err(io_err)?;
        for item in &self.items {
            let payload = item.payload.as_bytes();
            w.write_u64::<LittleEndian>(payload.len() as u64).map_err(io_err)?;
            w.write_all(payload).map_err(io_err)?;
            for &v in &item.vector {
                w.write_f64::<LittleEndian>(v).map_err(io_err)?;
            }
        }
        w.write_u64::<LittleEndian>(self.trees.len() as u64).map_err(io_err)?;
        for tree in &self.trees {
            w.write_u64::<LittleEndian>(tree.nodes.len() as u64).map_err(io_err)?;
            for node in &tree.nodes {
                match node {
                    Node::Leaf { items } => {
                        w.write_u8(0).map_err(io_err)?;
                        w.write_u64::<LittleEndian>(items.len() as u64).map_err(io_err)?;
                        for &id in items {
                            w.write_u32::<LittleEndian>(id).map_err(io_err)?;
                        }
                    }
                    Node::Split { normal, offset, left, right } => {
                        w.write_u8(1).map_err(io_err)?;
                        for &v in normal {
                            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
                        }
                        w.write_f64::<LittleEndian>(*offset).map_err(io_err)?;
                        w.write_u32::<LittleEndian>(*left).map_err(io_err)?;
                        w.write_u32::<LittleEndian>(*right).map_err(io_err)?;
                    }
                }
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<RpForestIndex, AnnError> {
        let io_err = |source| AnnError::Io { path: path.display().to_string(), source };
        let mut r = BufReader::new(File::open(path).map_err(io_err)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != INDEX_MAGIC {
            return Err(AnnError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
        if version != INDEX_VERSION {
            return Err(AnnError::Version { found: version, expected: INDEX_VERSION });
        }
        let dim = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let n_trees = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let leaf_capacity = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let n_items = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let mut items = Vec::with_capacity(n_items);
        for id in 0..n_items {
            let plen = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
            let mut pbytes = vec![0u8; plen];
            r.read_exact(&mut pbytes).map_err(io_err)?;
            let payload = String::from_utf8(pbytes)
                .map_err(|e| AnnError::Io {
                    path: path.display().to_string(),
                    source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
                })?;
            let mut vector = vec![0.0f64; dim];
            r.read_f64_into::<LittleEndian>(&mut vector).map_err(io_err)?;
            items.push(Item { id, vector, payload });
        }
        let n_trees_stored = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let mut trees = Vec::with_capacity(n_trees_stored);
        for _ in 0..n_trees_stored {
            let n_nodes = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                match r.read_u8().map_err(io_err)? {
                    0 => {
                        let n = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
                        let mut ids = vec![0u32; n];
                        for id in ids.iter_mut() {
                            *id = r.read_u32::<LittleEndian>().map_err(io_err)?;
                        }
                        nodes.push(Node::Leaf { items: ids });
                    }
                    1 => {
                        let mut normal = vec![0.0f64; dim];
                        r.read_f64_into::<LittleEndian>(&mut normal).map_err(io_err)?;
                        let offset = r.read_f64::<LittleEndian>().map_err(io_err)?;
                        let left = r.read_u32::<LittleEndian>().map_err(io_err)?;
                        let right = r.read_u32::<LittleEndian>().map_err(io_err)?;
                        nodes.push(Node::Split { normal, offset, left, right });
                    }
                    tag => {
                        return Err(AnnError::Io {
                            path: path.display().to_string(),
                            source: std::io::Error::new(
                                std::io::ErrorKind::InvalidData,
                                format!("unknown node tag {tag}"),
                            ),
                        })
                    }
                }
            }
            trees.push(Tree { nodes });
        }
        Ok(RpForestIndex { dim, items, trees, n_trees, leaf_capacity })
    }
}

/// Exhaustive top-k by cosine distance with the same tie-breaking as
/// [`RpForestIndex::query`]. The validation oracle.
pub fn exact_knn(items: &[(String, Vec<f64>)], q: &[f64], k: usize) -> Vec<(String, f64)> {
    let q = normalize_vec(q);
    let mut ranked: Vec<(usize, f64)> = items
        .iter()
        .enumerate()
        .map(|(id, (_, v))| (id, unit_cosine_distance(&q, &normalize_vec(v))))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
        .into_iter()
        .map(|(id, d)| (items[id].0.clone(), d))
        .collect()
}
