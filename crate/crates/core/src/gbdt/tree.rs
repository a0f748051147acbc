use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainParams;

/// Node of a regression tree over margin (log-odds) space.
///
/// A row goes left when `value < threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Loss reduction of this split, net of `gamma`.
        gain: f64,
        /// Direction for missing values. Inputs are imputed upstream, so
        /// this is carried in the format but never consulted.
        default_left: bool,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
    },
}

impl TreeNode {
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    pub(crate) fn leaf_value_col(&self, columns: &[Vec<f64>], i: usize) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if columns[*feature][i] < *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Visits every split as `(feature, gain)`.
    pub fn for_each_split(&self, f: &mut impl FnMut(usize, f64)) {
        if let TreeNode::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            f(*feature, *gain);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        match self {
            TreeNode::Leaf { weight } => vec![*weight],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Features times active rows per level above which features are scanned in
/// parallel.
const PARALLEL_WORK: usize = 50_000;

const INACTIVE: u32 = u32::MAX;

/// Gradient statistics and open-node slot of one row, packed so a scan step
/// touches a single cache line.
#[derive(Clone, Copy)]
struct RowState {
    g: f64,
    h: f64,
    slot: u32,
}

enum Slot {
    Pending { g: f64, h: f64 },
    Leaf(f64),
    Split { feature: usize, threshold: f64, gain: f64, left: usize, right: usize },
}

/// Exact greedy tree growth, one level at a time.
///
/// Every feature keeps a single global sorted order of rows. At each level
/// one pass per feature over that order accumulates left-hand gradient sums
/// for every open node at once, so nodes never need their own sorted copies.
pub(crate) struct TreeBuilder<'a> {
    pub columns: &'a [Vec<f64>],
    pub sorted: &'a [Vec<u32>],
    /// `sorted_values[f][k] == columns[f][sorted[f][k]]`.
    pub sorted_values: &'a [Vec<f64>],
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub params: &'a TrainParams,
}

impl TreeBuilder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.reg_lambda;
        if denom > 0.0 {
            g * g / denom
        } else {
            0.0
        }
    }

    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.reg_lambda;
        if denom > 0.0 {
            -g / denom
        } else {
            0.0
        }
    }

    /// Grows one tree. Returns the tree and the leaf value reached by each
    /// row.
    pub fn build(&self) -> (TreeNode, Vec<f64>) {
        let n = self.grad.len();
        let (g, h) = (0..n).fold((0.0, 0.0), |(g, h), i| (g + self.grad[i], h + self.hess[i]));
        let mut arena = vec![Slot::Pending { g, h }];
        // open node (arena id) per frontier slot, and each row's frontier slot
        let mut frontier: Vec<usize> = vec![0];
        let mut rows: Vec<RowState> = (0..n)
            .map(|i| RowState { g: self.grad[i], h: self.hess[i], slot: 0 })
            .collect();
        let mut counts: Vec<usize> = vec![n];

        for _ in 0..self.params.max_depth {
            if frontier.is_empty() {
                break;
            }
            let stats: Vec<(f64, f64)> = frontier
                .iter()
                .map(|&a| match arena[a] {
                    Slot::Pending { g, h, .. } => (g, h),
                    _ => unreachable!("frontier holds open nodes"),
                })
                .collect();
            let best = self.best_splits(&rows, &stats, &counts);

            let mut next_frontier = Vec::new();
            let mut remap: Vec<Option<(u32, u32)>> = vec![None; frontier.len()];
            for (s, cand) in best.into_iter().enumerate() {
                let id = frontier[s];
                let (g, h) = stats[s];
                match cand {
                    Some(c) => {
                        let left = arena.len();
                        let right = left + 1;
                        arena.push(Slot::Pending { g: 0.0, h: 0.0 });
                        arena.push(Slot::Pending { g: 0.0, h: 0.0 });
                        arena[id] = Slot::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            gain: c.gain,
                            left,
                            right,
                        };
                        let l_slot = next_frontier.len() as u32;
                        next_frontier.push(left);
                        next_frontier.push(right);
                        remap[s] = Some((l_slot, l_slot + 1));
                    }
                    None => arena[id] = Slot::Leaf(self.leaf_weight(g, h)),
                }
            }

            let mut sums = vec![(0.0, 0.0); next_frontier.len()];
            let mut next_counts = vec![0usize; next_frontier.len()];
            for (i, row) in rows.iter_mut().enumerate() {
                let s = row.slot;
                if s == INACTIVE {
                    continue;
                }
                row.slot = match remap[s as usize] {
                    None => INACTIVE,
                    Some((l, r)) => {
                        let Slot::Split { feature, threshold, .. } = arena[frontier[s as usize]] else {
                            unreachable!()
                        };
                        let child = if self.columns[feature][i] < threshold { l } else { r };
                        let e = &mut sums[child as usize];
                        e.0 += row.g;
                        e.1 += row.h;
                        next_counts[child as usize] += 1;
                        child
                    }
                };
            }
            for (k, &id) in next_frontier.iter().enumerate() {
                arena[id] = Slot::Pending { g: sums[k].0, h: sums[k].1 };
            }
            frontier = next_frontier;
            counts = next_counts;
        }
        for &id in &frontier {
            if let Slot::Pending { g, h, .. } = arena[id] {
                arena[id] = Slot::Leaf(self.leaf_weight(g, h));
            }
        }

        let tree = assemble(&arena, 0);
        let values = (0..n).map(|i| tree.leaf_value_col(self.columns, i)).collect();
        (tree, values)
    }

    /// Best split for every open node. Ties go to the lowest feature index,
    /// then the lowest threshold, regardless of scheduling.
    fn best_splits(&self, rows: &[RowState], stats: &[(f64, f64)], counts: &[usize]) -> Vec<Option<Candidate>> {
        let n_features = self.columns.len();
        let active: usize = counts.iter().sum();
        let scan = |f: usize| self.scan_feature(f, rows, stats, counts);
        let per_feature: Vec<Vec<Option<Candidate>>> = if active * n_features >= PARALLEL_WORK {
            (0..n_features).into_par_iter().map(scan).collect()
        } else {
            (0..n_features).map(scan).collect()
        };
        let mut best: Vec<Option<Candidate>> = vec![None; stats.len()];
        for feature_best in per_feature {
            for (b, c) in best.iter_mut().zip(feature_best) {
                if let Some(c) = c {
                    if b.is_none_or(|b| c.gain > b.gain) {
                        *b = Some(c);
                    }
                }
            }
        }
        best
    }

    fn scan_feature(&self, feature: usize, rows: &[RowState], stats: &[(f64, f64)], counts: &[usize]) -> Vec<Option<Candidate>> {
        let p = self.params;
        let mut acc: Vec<Accum> = stats
            .iter()
            .zip(counts)
            .map(|(&(g, h), &c)| Accum {
                g,
                h,
                parent: self.score(g, h),
                gl: 0.0,
                hl: 0.0,
                last: f64::NAN,
                open: c >= 2,
                best: None,
            })
            .collect();
        for (&i, &v) in self.sorted[feature].iter().zip(&self.sorted_values[feature]) {
            let row = rows[i as usize];
            if row.slot == INACTIVE {
                continue;
            }
            let a = &mut acc[row.slot as usize];
            if !a.open {
                continue;
            }
            if v > a.last && a.hl >= p.min_child_weight {
                let r_h = a.h - a.hl;
                if r_h >= p.min_child_weight {
                    let r_g = a.g - a.gl;
                    let gain = 0.5 * (self.score(a.gl, a.hl) + self.score(r_g, r_h) - a.parent) - p.gamma;
                    if gain > 0.0 && a.best.is_none_or(|b| gain > b.gain) {
                        a.best = Some(Candidate {
                            feature,
                            threshold: midpoint(a.last, v),
                            gain,
                        });
                    }
                }
            }
            a.gl += row.g;
            a.hl += row.h;
            a.last = v;
        }
        acc.into_iter().map(|a| a.best).collect()
    }
}

/// Running left-hand sums of one open node during a feature scan.
struct Accum {
    g: f64,
    h: f64,
    parent: f64,
    gl: f64,
    hl: f64,
    last: f64,
    open: bool,
    best: Option<Candidate>,
}

fn assemble(arena: &[Slot], id: usize) -> TreeNode {
    match arena[id] {
        Slot::Leaf(weight) => TreeNode::Leaf { weight },
        Slot::Split { feature, threshold, gain, left, right } => TreeNode::Split {
            feature,
            threshold,
            gain,
            default_left: true,
            left: Box::new(assemble(arena, left)),
            right: Box::new(assemble(arena, right)),
        },
        Slot::Pending { .. } => unreachable!("all nodes are closed before assembly"),
    }
}

/// A threshold `t` with `lo < t <= hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi && mid.is_finite() {
        mid
    } else {
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_stays_in_half_open_interval() {
        assert_eq!(midpoint(1.0, 3.0), 2.0);
        let a = 1.0_f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(m > a && m <= b);
        let m = midpoint(-f64::MAX, f64::MAX);
        assert!(m.is_finite());
    }

    #[test]
    fn leaf_value_routes_rows() {
        let t = TreeNode::Split {
            feature: 1,
            threshold: 0.5,
            gain: 1.0,
            default_left: true,
            left: Box::new(TreeNode::Leaf { weight: -1.0 }),
            right: Box::new(TreeNode::Leaf { weight: 2.0 }),
        };
        assert_eq!(t.leaf_value(&[9.0, 0.4]), -1.0);
        assert_eq!(t.leaf_value(&[9.0, 0.5]), 2.0);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.leaves(), vec![-1.0, 2.0]);
    }
}
