//! Single-tree construction: exact greedy splits over a precomputed dataset
//! layout.
//!
//! The layout classifies every column once per training matrix:
//!
//! * **Bucketed** — low-cardinality columns store a per-row rank into their
//!   sorted distinct values; a node scan accumulates gradient/hessian sums
//!   per rank in one pass over the node's rows.
//! * **Keyed** — a column that is an exact function of a bucketed column
//!   (here: the per-category statistics, which are functions of their
//!   category's ordinal code) never rescans rows; it reuses the key column's
//!   buckets through a rank-to-rank map.
//! * **Sorted** — high-cardinality columns keep `(value, row)` pairs sorted
//!   ascending; each node holds its own stably-partitioned sub-run, so a
//!   scan is a single sweep with prefix sums.
//!
//! Layouts depend only on feature values, never on labels or gradients, so
//! one layout serves every boosting round — and every model trained on the
//! same matrix (the ensemble trains 34 members per cross-validation fold on
//! shared layouts).

use std::collections::{BinaryHeap, VecDeque};

use super::{gain_core, leaf_weight, DecisionTree, Growth, Hyperparams, Node};
use crate::enhance::FeatureMatrix;
use crate::Result;

/// Columns with at most this many distinct values use bucket scans; above
/// it they keep sorted runs.
const MAX_BUCKET_CARD: usize = 4096;

pub(crate) enum ColumnScan {
    Bucketed { ranks: Vec<u32> },
    Keyed { key: usize, by_key_rank: Vec<u32> },
    Sorted { run: Vec<(f64, u32)> },
}

pub(crate) struct ColumnLayout {
    /// Sorted distinct values of the column.
    pub distinct: Vec<f64>,
    pub scan: ColumnScan,
}

pub(crate) struct DatasetLayout {
    pub n_rows: usize,
    pub columns: Vec<ColumnLayout>,
    /// Columns that run their own bucket pass per node.
    bucket_cols: Vec<usize>,
    /// Columns with sorted runs; `run_of[col]` is the index of a column's
    /// run inside each node's run list.
    sorted_cols: Vec<usize>,
    run_of: Vec<usize>,
}

/// `col` is a function of `key` iff rows with equal key ranks always carry
/// equal col ranks. Returns the total key-rank -> col-rank map, or None on
/// the first conflicting row (typically within a handful of rows for
/// unrelated columns, so failed probes are cheap).
fn functional_map(key: &ColumnLayout, col: &ColumnLayout, n_rows: usize) -> Option<Vec<u32>> {
    let (ColumnScan::Bucketed { ranks: key_ranks }, ColumnScan::Bucketed { ranks: col_ranks }) =
        (&key.scan, &col.scan)
    else {
        return None;
    };
    const UNSET: u32 = u32::MAX;
    let mut map = vec![UNSET; key.distinct.len()];
    for row in 0..n_rows {
        let slot = &mut map[key_ranks[row] as usize];
        if *slot == UNSET {
            *slot = col_ranks[row];
        } else if *slot != col_ranks[row] {
            return None;
        }
    }
    Some(map)
}

impl DatasetLayout {
    pub fn build(data: &FeatureMatrix) -> DatasetLayout {
        let n = data.n_rows();
        let n_cols = data.n_cols();
        let mut columns = Vec::with_capacity(n_cols);
        for c in 0..n_cols {
            let mut pairs: Vec<(f64, u32)> = (0..n).map(|r| (data.value(r, c), r as u32)).collect();
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut distinct: Vec<f64> = Vec::new();
            for &(v, _) in &pairs {
                if distinct.last().is_none_or(|&last| v > last) {
                    distinct.push(v);
                }
            }
            let scan = if distinct.len() <= MAX_BUCKET_CARD {
                let mut ranks = vec![0u32; n];
                let mut rank = 0u32;
                let mut prev = f64::NEG_INFINITY;
                let mut first = true;
                for &(v, row) in &pairs {
                    if !first && v > prev {
                        rank += 1;
                    }
                    first = false;
                    prev = v;
                    ranks[row as usize] = rank;
                }
                ColumnScan::Bucketed { ranks }
            } else {
                ColumnScan::Sorted { run: pairs }
            };
            columns.push(ColumnLayout { distinct, scan });
        }

        // Rewire bucketed columns that are functions of another bucketed
        // column. A column already serving as a key keeps its own buckets;
        // candidate keys are probed smallest cardinality first so remaps
        // stay cheap.
        let bucketed: Vec<usize> = (0..n_cols)
            .filter(|&c| matches!(columns[c].scan, ColumnScan::Bucketed { .. }))
            .collect();
        let mut is_key = vec![false; n_cols];
        for &c in &bucketed {
            if is_key[c] || columns[c].distinct.len() <= 1 {
                continue;
            }
            let mut candidates: Vec<usize> = bucketed
                .iter()
                .copied()
                .filter(|&k| {
                    k != c
                        && matches!(columns[k].scan, ColumnScan::Bucketed { .. })
                        && columns[k].distinct.len() >= columns[c].distinct.len()
                })
                .collect();
            candidates.sort_by_key(|&k| (columns[k].distinct.len(), k));
            for k in candidates {
                if let Some(map) = functional_map(&columns[k], &columns[c], n) {
                    columns[c].scan = ColumnScan::Keyed {
                        key: k,
                        by_key_rank: map,
                    };
                    is_key[k] = true;
                    break;
                }
            }
        }

        let mut bucket_cols = Vec::new();
        let mut sorted_cols = Vec::new();
        let mut run_of = vec![usize::MAX; n_cols];
        for (c, col) in columns.iter().enumerate() {
            match col.scan {
                ColumnScan::Bucketed { .. } => bucket_cols.push(c),
                ColumnScan::Sorted { .. } => {
                    run_of[c] = sorted_cols.len();
                    sorted_cols.push(c);
                }
                ColumnScan::Keyed { .. } => {}
            }
        }
        DatasetLayout {
            n_rows: n,
            columns,
            bucket_cols,
            sorted_cols,
            run_of,
        }
    }
}

/// Best split found for a node.
#[derive(Clone, Copy)]
struct Cand {
    gain: f64,
    col: u32,
    threshold: f64,
    /// Bucketed/Keyed: last rank going left. Sorted: number of run entries
    /// going left.
    boundary: u32,
    g_left: f64,
    h_left: f64,
}

struct WorkNode {
    /// Index of this node's slot in the final tree's node array.
    slot: usize,
    depth: u32,
    /// Row indices, always ascending (partitions are stable).
    instances: Vec<u32>,
    /// Partitioned sorted runs, parallel to `layout.sorted_cols`.
    runs: Vec<Vec<(f64, u32)>>,
    g_sum: f64,
    h_sum: f64,
    cand: Option<Cand>,
}

/// Max-heap entry for leaf-wise growth: highest gain first, earlier-created
/// node on ties.
struct HeapNode {
    order: usize,
    node: WorkNode,
}

impl HeapNode {
    fn gain(&self) -> f64 {
        self.node.cand.expect("only candidates enter the heap").gain
    }
}

impl PartialEq for HeapNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for HeapNode {}
impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapNode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.gain()
            .total_cmp(&other.gain())
            .then_with(|| other.order.cmp(&self.order))
    }
}

pub(crate) struct TreeOutput {
    pub tree: DecisionTree,
    /// Unscaled leaf weight assigned to every training row.
    pub row_weight: Vec<f64>,
}

pub(crate) struct Grower<'a> {
    layout: &'a DatasetLayout,
    gh: &'a [(f64, f64)],
    hp: &'a Hyperparams,
    nodes: Vec<Node>,
    row_weight: Vec<f64>,
    /// Per-column (G, H, count) accumulators for bucketed columns; zeroed
    /// after every node scan.
    buckets: Vec<Vec<(f64, f64, u32)>>,
    /// Scratch for keyed remaps, sized to the largest bucketed cardinality.
    remap: Vec<(f64, f64, u32)>,
    /// Per-row left/right marker, fully rewritten before each use.
    side: Vec<bool>,
    next_order: usize,
}

impl<'a> Grower<'a> {
    pub fn new(layout: &'a DatasetLayout, gh: &'a [(f64, f64)], hp: &'a Hyperparams) -> Self {
        debug_assert_eq!(layout.n_rows, gh.len());
        let buckets = layout
            .columns
            .iter()
            .map(|col| {
                if matches!(col.scan, ColumnScan::Bucketed { .. }) {
                    vec![(0.0, 0.0, 0u32); col.distinct.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        let max_card = layout
            .columns
            .iter()
            .filter(|c| !matches!(c.scan, ColumnScan::Sorted { .. }))
            .map(|c| c.distinct.len())
            .max()
            .unwrap_or(0);
        Grower {
            layout,
            gh,
            hp,
            nodes: Vec::new(),
            row_weight: vec![0.0; layout.n_rows],
            buckets,
            remap: vec![(0.0, 0.0, 0); max_card],
            side: vec![false; layout.n_rows],
            next_order: 0,
        }
    }

    pub fn grow(mut self) -> Result<TreeOutput> {
        let root = self.make_root();
        match self.hp.growth {
            Growth::LevelWise { max_depth } => self.grow_level_wise(root, max_depth)?,
            Growth::LeafWise { max_leaves } => self.grow_leaf_wise(root, max_leaves)?,
        }
        Ok(TreeOutput {
            tree: DecisionTree { nodes: self.nodes },
            row_weight: self.row_weight,
        })
    }

    fn make_root(&mut self) -> WorkNode {
        self.nodes.push(Node::Leaf { weight: 0.0 });
        let mut g_sum = 0.0;
        let mut h_sum = 0.0;
        for &(g, h) in self.gh {
            g_sum += g;
            h_sum += h;
        }
        let runs = self
            .layout
            .sorted_cols
            .iter()
            .map(|&c| match &self.layout.columns[c].scan {
                ColumnScan::Sorted { run } => run.clone(),
                _ => unreachable!("sorted_cols only lists sorted columns"),
            })
            .collect();
        let mut root = WorkNode {
            slot: 0,
            depth: 0,
            instances: (0..self.layout.n_rows as u32).collect(),
            runs,
            g_sum,
            h_sum,
            cand: None,
        };
        root.cand = self.evaluate(&root);
        root
    }

    fn grow_level_wise(&mut self, root: WorkNode, max_depth: u32) -> Result<()> {
        let mut queue = VecDeque::new();
        queue.push_back(root);
        while let Some(node) = queue.pop_front() {
            match node.cand {
                Some(cand) if node.depth < max_depth => {
                    let (mut left, mut right) = self.apply_split(node, cand);
                    if left.depth < max_depth {
                        left.cand = self.evaluate(&left);
                        right.cand = self.evaluate(&right);
                    }
                    queue.push_back(left);
                    queue.push_back(right);
                }
                _ => self.finalize_leaf(node)?,
            }
        }
        Ok(())
    }

    fn grow_leaf_wise(&mut self, root: WorkNode, max_leaves: u32) -> Result<()> {
        let mut heap = BinaryHeap::new();
        let mut parked: Vec<WorkNode> = Vec::new();
        let push = |heap: &mut BinaryHeap<HeapNode>, parked: &mut Vec<WorkNode>, node: WorkNode, order: usize| {
            if node.cand.is_some() {
                heap.push(HeapNode { order, node });
            } else {
                parked.push(node);
            }
        };
        push(&mut heap, &mut parked, root, self.next_order);
        self.next_order += 1;
        let mut n_leaves = 1u32;
        while n_leaves < max_leaves {
            let Some(HeapNode { node, .. }) = heap.pop() else {
                break;
            };
            let cand = node.cand.expect("only candidates enter the heap");
            let (mut left, mut right) = self.apply_split(node, cand);
            n_leaves += 1;
            if n_leaves < max_leaves {
                left.cand = self.evaluate(&left);
                right.cand = self.evaluate(&right);
            }
            push(&mut heap, &mut parked, left, self.next_order);
            self.next_order += 1;
            push(&mut heap, &mut parked, right, self.next_order);
            self.next_order += 1;
        }
        for entry in heap {
            self.finalize_leaf(entry.node)?;
        }
        for node in parked {
            self.finalize_leaf(node)?;
        }
        Ok(())
    }

    fn finalize_leaf(&mut self, node: WorkNode) -> Result<()> {
        let w = leaf_weight(node.g_sum, node.h_sum, self.hp.lambda)?;
        self.nodes[node.slot] = Node::Leaf { weight: w };
        for &row in &node.instances {
            self.row_weight[row as usize] = w;
        }
        Ok(())
    }

    /// Scan every column for the best valid split of `node`. Returns None
    /// when no split has positive gain (or min_child_weight blocks all).
    fn evaluate(&mut self, node: &WorkNode) -> Option<Cand> {
        let Grower {
            layout,
            gh,
            hp,
            buckets,
            remap,
            ..
        } = self;
        if node.h_sum + hp.lambda <= 0.0 || node.instances.len() < 2 {
            return None;
        }

        // Phase A: one pass per bucketed column.
        for &c in &layout.bucket_cols {
            let ColumnScan::Bucketed { ranks } = &layout.columns[c].scan else {
                unreachable!("bucket_cols only lists bucketed columns");
            };
            let bucket = &mut buckets[c];
            for &row in &node.instances {
                let (g, h) = gh[row as usize];
                let e = &mut bucket[ranks[row as usize] as usize];
                e.0 += g;
                e.1 += h;
                e.2 += 1;
            }
        }

        // Phase B: evaluate candidates per column, in column order; ties
        // keep the earlier candidate (strict improvement only).
        let mut best: Option<Cand> = None;
        for (c, col) in layout.columns.iter().enumerate() {
            let cand = match &col.scan {
                ColumnScan::Bucketed { .. } => {
                    best_over_ranks(&buckets[c], &col.distinct, c as u32, node, hp)
                }
                ColumnScan::Keyed { key, by_key_rank } => {
                    let card = col.distinct.len();
                    remap[..card].fill((0.0, 0.0, 0));
                    for (kr, e) in buckets[*key].iter().enumerate() {
                        if e.2 > 0 {
                            let slot = &mut remap[by_key_rank[kr] as usize];
                            slot.0 += e.0;
                            slot.1 += e.1;
                            slot.2 += e.2;
                        }
                    }
                    best_over_ranks(&remap[..card], &col.distinct, c as u32, node, hp)
                }
                ColumnScan::Sorted { .. } => {
                    best_over_run(&node.runs[layout.run_of[c]], gh, c as u32, node, hp)
                }
            };
            if let Some(cand) = cand {
                if best.is_none_or(|b| cand.gain > b.gain) {
                    best = Some(cand);
                }
            }
        }

        // Phase C: zero the touched buckets for the next node.
        for &c in &layout.bucket_cols {
            buckets[c].fill((0.0, 0.0, 0));
        }
        best
    }

    /// Split `node` in two: rewrite its tree slot as an internal node,
    /// stably partition instances and sorted runs, derive child sums.
    fn apply_split(&mut self, node: WorkNode, cand: Cand) -> (WorkNode, WorkNode) {
        let col = cand.col as usize;
        match &self.layout.columns[col].scan {
            ColumnScan::Bucketed { ranks } => {
                for &row in &node.instances {
                    self.side[row as usize] = ranks[row as usize] <= cand.boundary;
                }
            }
            ColumnScan::Keyed { key, by_key_rank } => {
                let ColumnScan::Bucketed { ranks } = &self.layout.columns[*key].scan else {
                    unreachable!("keys are bucketed columns");
                };
                for &row in &node.instances {
                    self.side[row as usize] =
                        by_key_rank[ranks[row as usize] as usize] <= cand.boundary;
                }
            }
            ColumnScan::Sorted { .. } => {
                let run = &node.runs[self.layout.run_of[col]];
                for &row in &node.instances {
                    self.side[row as usize] = false;
                }
                for &(_, row) in &run[..cand.boundary as usize] {
                    self.side[row as usize] = true;
                }
            }
        }

        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for &row in &node.instances {
            if self.side[row as usize] {
                left_rows.push(row);
            } else {
                right_rows.push(row);
            }
        }
        let mut left_runs = Vec::with_capacity(node.runs.len());
        let mut right_runs = Vec::with_capacity(node.runs.len());
        for run in &node.runs {
            let mut l = Vec::with_capacity(left_rows.len());
            let mut r = Vec::with_capacity(right_rows.len());
            for &(v, row) in run {
                if self.side[row as usize] {
                    l.push((v, row));
                } else {
                    r.push((v, row));
                }
            }
            left_runs.push(l);
            right_runs.push(r);
        }

        let left_slot = self.nodes.len();
        self.nodes.push(Node::Leaf { weight: 0.0 });
        let right_slot = self.nodes.len();
        self.nodes.push(Node::Leaf { weight: 0.0 });
        self.nodes[node.slot] = Node::Internal {
            feature: cand.col,
            threshold: cand.threshold,
            left: left_slot as u32,
            right: right_slot as u32,
        };

        let left = WorkNode {
            slot: left_slot,
            depth: node.depth + 1,
            instances: left_rows,
            runs: left_runs,
            g_sum: cand.g_left,
            h_sum: cand.h_left,
            cand: None,
        };
        let right = WorkNode {
            slot: right_slot,
            depth: node.depth + 1,
            instances: right_rows,
            runs: right_runs,
            g_sum: node.g_sum - cand.g_left,
            h_sum: node.h_sum - cand.h_left,
            cand: None,
        };
        (left, right)
    }
}

/// Midpoint threshold between two adjacent distinct values, or None when
/// floating-point spacing leaves no representable value strictly between.
fn midpoint(lo: f64, hi: f64) -> Option<f64> {
    let mid = 0.5 * (lo + hi);
    (lo < mid && mid < hi).then_some(mid)
}

fn best_over_ranks(
    agg: &[(f64, f64, u32)],
    distinct: &[f64],
    col: u32,
    node: &WorkNode,
    hp: &Hyperparams,
) -> Option<Cand> {
    let mut best: Option<Cand> = None;
    let mut g_left = 0.0;
    let mut h_left = 0.0;
    let mut prev_rank: Option<usize> = None;
    for (rank, &(g, h, count)) in agg.iter().enumerate() {
        if count == 0 {
            continue;
        }
        if let Some(prev) = prev_rank {
            if let Some(threshold) = midpoint(distinct[prev], distinct[rank]) {
                consider(
                    &mut best,
                    Cand {
                        gain: 0.0,
                        col,
                        threshold,
                        boundary: prev as u32,
                        g_left,
                        h_left,
                    },
                    node,
                    hp,
                );
            }
        }
        g_left += g;
        h_left += h;
        prev_rank = Some(rank);
    }
    best
}

fn best_over_run(
    run: &[(f64, u32)],
    gh: &[(f64, f64)],
    col: u32,
    node: &WorkNode,
    hp: &Hyperparams,
) -> Option<Cand> {
    let mut best: Option<Cand> = None;
    let mut g_left = 0.0;
    let mut h_left = 0.0;
    for (i, &(v, row)) in run.iter().enumerate().take(run.len().saturating_sub(1)) {
        let (g, h) = gh[row as usize];
        g_left += g;
        h_left += h;
        let v_next = run[i + 1].0;
        if v_next > v {
            if let Some(threshold) = midpoint(v, v_next) {
                consider(
                    &mut best,
                    Cand {
                        gain: 0.0,
                        col,
                        threshold,
                        boundary: (i + 1) as u32,
                        g_left,
                        h_left,
                    },
                    node,
                    hp,
                );
            }
        }
    }
    best
}

/// Fill in the gain of a structurally valid candidate and keep it if it
/// strictly beats the incumbent. Gain must be positive; both children must
/// meet the hessian floor.
fn consider(best: &mut Option<Cand>, mut cand: Cand, node: &WorkNode, hp: &Hyperparams) {
    let g_right = node.g_sum - cand.g_left;
    let h_right = node.h_sum - cand.h_left;
    if cand.h_left < hp.min_child_weight || h_right < hp.min_child_weight {
        return;
    }
    if cand.h_left + hp.lambda <= 0.0 || h_right + hp.lambda <= 0.0 {
        return;
    }
    cand.gain = gain_core(
        cand.g_left,
        cand.h_left,
        g_right,
        h_right,
        hp.lambda,
        hp.gamma,
    );
    if cand.gain > 0.0 && best.is_none_or(|b| cand.gain > b.gain) {
        *best = Some(cand);
    }
}
