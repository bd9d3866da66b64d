//! CART on presorted feature orders.
//!
//! Every node owns the same contiguous slot range in each feature's sorted
//! order, so a split is found with one linear scan per candidate feature and
//! the children are produced by a stable partition. Classification trees use
//! weighted Gini impurity; regression trees (for gradient boosting) use
//! squared error with caller-supplied leaf values.

use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary tree; node 0 is the root. `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Column-major copy of the feature matrix for cache-friendly scans.
#[derive(Debug, Clone)]
pub struct Columns {
    cols: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Columns {
    pub fn new(x: &Matrix) -> Self {
        let (n, d) = x.shape();
        let mut cols = vec![Vec::with_capacity(n); d];
        for row in x.row_iter() {
            for (c, &v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
        Self { cols, n_rows: n }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn value(&self, feature: usize, row: usize) -> f64 {
        self.cols[feature][row]
    }
}

/// Sample slots (rows, possibly repeated) with one sorted order per feature.
#[derive(Debug, Clone)]
pub struct Presorted {
    /// Dataset row behind each slot.
    rows: Vec<usize>,
    /// `order[f]` lists slots by ascending value of feature f (ties by slot).
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(cols: &Columns, rows: Vec<usize>) -> Self {
        let order = (0..cols.n_features())
            .map(|f| {
                let mut keyed: Vec<(f64, u32)> = rows
                    .iter()
                    .enumerate()
                    .map(|(s, &r)| (cols.value(f, r), s as u32))
                    .collect();
                keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                keyed.into_iter().map(|(_, s)| s).collect()
            })
            .collect();
        Self { rows, order }
    }

    pub fn all_rows(cols: &Columns) -> Self {
        Self::new(cols, (0..cols.n_rows()).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
}

/// What the tree is fitted to, per slot.
pub enum Target<'a> {
    /// Class of each slot's row and per-slot sample weight.
    Classes {
        labels: &'a [usize],
        weights: &'a [f64],
        n_classes: usize,
    },
    /// Per-row regression target; leaves get `leaf(slots_rows)`.
    Regression {
        targets: &'a [f64],
        leaf: &'a dyn Fn(&[usize]) -> f64,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Candidate features per split; `None` means all, visited in index order.
    pub max_features: Option<usize>,
}

impl TreeParams {
    pub fn with_depth(max_depth: usize) -> Self {
        Self {
            max_depth,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

/// Running sums for one side of a candidate split.
#[derive(Clone)]
struct Acc {
    /// Class weights (classification) or `[Σ target]` (regression).
    sums: Vec<f64>,
    weight: f64,
    count: usize,
}

impl Acc {
    fn new(width: usize) -> Self {
        Self {
            sums: vec![0.0; width],
            weight: 0.0,
            count: 0,
        }
    }

    /// Σ_k w_k² / W for Gini, S² / n for squared error; larger is purer.
    fn score(&self) -> f64 {
        if self.weight <= 0.0 {
            0.0
        } else {
            self.sums.iter().map(|s| s * s).sum::<f64>() / self.weight
        }
    }
}

struct Builder<'a> {
    cols: &'a Columns,
    target: &'a Target<'a>,
    params: TreeParams,
    presorted: Presorted,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node>,
}

pub fn build_tree(
    cols: &Columns,
    presorted: Presorted,
    target: &Target<'_>,
    params: TreeParams,
    rng: &mut Rng,
) -> Tree {
    let m = presorted.len();
    let mut b = Builder {
        cols,
        target,
        params,
        goes_left: vec![false; m],
        scratch: Vec::with_capacity(m),
        presorted,
        nodes: Vec::new(),
    };
    if m == 0 {
        let width = match target {
            Target::Classes { n_classes, .. } => *n_classes,
            Target::Regression { .. } => 1,
        };
        return Tree {
            nodes: vec![Node::Leaf {
                value: vec![0.0; width],
            }],
        };
    }
    b.grow(0, m, 0, rng);
    Tree { nodes: b.nodes }
}

impl Builder<'_> {
    fn width(&self) -> usize {
        match self.target {
            Target::Classes { n_classes, .. } => *n_classes,
            Target::Regression { .. } => 1,
        }
    }

    fn add(&self, acc: &mut Acc, slot: u32) {
        let row = self.presorted.rows[slot as usize];
        match self.target {
            Target::Classes {
                labels, weights, ..
            } => {
                let w = weights[slot as usize];
                acc.sums[labels[row]] += w;
                acc.weight += w;
            }
            Target::Regression { targets, .. } => {
                acc.sums[0] += targets[row];
                acc.weight += 1.0;
            }
        }
        acc.count += 1;
    }

    fn node_acc(&self, lo: usize, hi: usize) -> Acc {
        let mut acc = Acc::new(self.width());
        for &s in &self.presorted.order[0][lo..hi] {
            self.add(&mut acc, s);
        }
        acc
    }

    fn leaf(&self, lo: usize, hi: usize, acc: &Acc) -> Node {
        match self.target {
            Target::Classes { .. } => Node::Leaf {
                value: acc.sums.clone(),
            },
            Target::Regression { leaf, .. } => {
                let rows: Vec<usize> = self.presorted.order[0][lo..hi]
                    .iter()
                    .map(|&s| self.presorted.rows[s as usize])
                    .collect();
                Node::Leaf {
                    value: vec![leaf(&rows)],
                }
            }
        }
    }

    fn is_pure(&self, acc: &Acc) -> bool {
        match self.target {
            Target::Classes { .. } => acc.sums.iter().filter(|&&w| w > 0.0).count() <= 1,
            Target::Regression { .. } => false,
        }
    }

    fn candidate_features(&self, rng: &mut Rng) -> Vec<usize> {
        let d = self.cols.n_features();
        match self.params.max_features {
            Some(k) if k < d => {
                let mut all: Vec<usize> = (0..d).collect();
                for i in 0..k {
                    let j = i + rng.below(d - i);
                    all.swap(i, j);
                }
                let mut chosen = all[..k].to_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..d).collect(),
        }
    }

    /// Best (score, feature, threshold, left_count) over the candidates.
    fn best_split(&self, lo: usize, hi: usize, parent: &Acc, features: &[usize]) -> Option<(f64, usize, f64, usize)> {
        let mut best: Option<(f64, usize, f64, usize)> = None;
        let width = self.width();
        for &f in features {
            let order = &self.presorted.order[f][lo..hi];
            let mut left = Acc::new(width);
            let mut right = parent.clone();
            for i in 0..order.len() - 1 {
                let s = order[i];
                self.add(&mut left, s);
                // move slot s from right to left
                let row = self.presorted.rows[s as usize];
                match self.target {
                    Target::Classes {
                        labels, weights, ..
                    } => {
                        let w = weights[s as usize];
                        right.sums[labels[row]] -= w;
                        right.weight -= w;
                    }
                    Target::Regression { targets, .. } => {
                        right.sums[0] -= targets[row];
                        right.weight -= 1.0;
                    }
                }
                right.count -= 1;

                let v = self.cols.value(f, row);
                let v_next = self.cols.value(f, self.presorted.rows[order[i + 1] as usize]);
                if v_next <= v {
                    continue;
                }
                let score = left.score() + right.score();
                if best.map_or(true, |b| score > b.0) {
                    let mut threshold = 0.5 * (v + v_next);
                    if threshold >= v_next {
                        threshold = v;
                    }
                    best = Some((score, f, threshold, i + 1));
                }
            }
        }
        best
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut Rng) -> usize {
        let id = self.nodes.len();
        let acc = self.node_acc(lo, hi);
        self.nodes.push(Node::Leaf { value: Vec::new() });

        let splittable = depth < self.params.max_depth
            && hi - lo >= self.params.min_samples_split.max(2)
            && !self.is_pure(&acc);
        let features = if splittable {
            self.candidate_features(rng)
        } else {
            Vec::new()
        };
        let parent_score = acc.score();
        let chosen = self
            .best_split(lo, hi, &acc, &features)
            .filter(|(score, ..)| score - parent_score > 1e-12 * parent_score.abs().max(1e-12));

        let Some((_, feature, threshold, n_left)) = chosen else {
            self.nodes[id] = self.leaf(lo, hi, &acc);
            return id;
        };

        for &s in &self.presorted.order[feature][lo..hi] {
            let row = self.presorted.rows[s as usize];
            self.goes_left[s as usize] = self.cols.value(feature, row) <= threshold;
        }
        for f in 0..self.presorted.order.len() {
            let seg = &mut self.presorted.order[f][lo..hi];
            self.scratch.clear();
            self.scratch.extend(seg.iter().copied().filter(|&s| self.goes_left[s as usize]));
            self.scratch.extend(seg.iter().copied().filter(|&s| !self.goes_left[s as usize]));
            seg.copy_from_slice(&self.scratch);
        }
        debug_assert_eq!(
            self.presorted.order[0][lo..hi]
                .iter()
                .filter(|&&s| self.goes_left[s as usize])
                .count(),
            n_left
        );

        let left = self.grow(lo, lo + n_left, depth + 1, rng);
        let right = self.grow(lo + n_left, hi, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gini(counts: &[f64]) -> f64 {
        let n: f64 = counts.iter().sum();
        if n == 0.0 {
            return 0.0;
        }
        1.0 - counts.iter().map(|c| (c / n).powi(2)).sum::<f64>()
    }

    /// Exhaustive midpoint enumeration on one feature, weighted Gini.
    fn brute_force_split(xs: &[f64], ys: &[usize], k: usize) -> (f64, f64) {
        let mut sorted: Vec<f64> = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let mut best = (f64::INFINITY, f64::NAN);
        for w in sorted.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let mut l = vec![0.0; k];
            let mut r = vec![0.0; k];
            for (&x, &y) in xs.iter().zip(ys) {
                if x <= t {
                    l[y] += 1.0
                } else {
                    r[y] += 1.0
                }
            }
            let nl: f64 = l.iter().sum();
            let nr: f64 = r.iter().sum();
            let imp = nl * gini(&l) + nr * gini(&r);
            if imp < best.0 - 1e-12 {
                best = (imp, t);
            }
        }
        best
    }

    fn fit_classes(x: &Matrix, y: &[usize], k: usize, depth: usize) -> Tree {
        let cols = Columns::new(x);
        let w = vec![1.0; y.len()];
        let target = Target::Classes {
            labels: y,
            weights: &w,
            n_classes: k,
        };
        build_tree(
            &cols,
            Presorted::all_rows(&cols),
            &target,
            TreeParams::with_depth(depth),
            &mut Rng::new(0),
        )
    }

    #[test]
    fn six_point_split_matches_enumeration() {
        let xs = [0.9, 0.1, 0.45, 0.3, 0.75, 0.6];
        let ys = [1, 0, 1, 0, 1, 0];
        let x = Matrix::from_vec(6, 1, xs.to_vec()).unwrap();
        let tree = fit_classes(&x, &ys, 2, 1);
        let (_, t) = brute_force_split(&xs, &ys, 2);
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, t);
            }
            n => panic!("expected split, got {n:?}"),
        }
    }

    #[test]
    fn pure_node_is_single_leaf() {
        let x = Matrix::from_vec(4, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        let tree = fit_classes(&x, &[2, 2, 2, 2], 3, 12);
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.leaf_value(&[0.0, 0.0]), &[0.0, 0.0, 4.0]);
    }

    #[test]
    fn depth_limit_is_honoured() {
        let mut rng = Rng::new(3);
        let n = 300;
        let data: Vec<f64> = (0..n * 3).map(|_| rng.uniform()).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(4)).collect();
        let x = Matrix::from_vec(n, 3, data).unwrap();
        for depth in [0, 1, 3, 5] {
            let tree = fit_classes(&x, &labels, 4, depth);
            assert!(tree.depth() <= depth);
        }
        let deep = fit_classes(&x, &labels, 4, 40);
        // Random labels on distinct points: the unlimited tree memorizes.
        for i in 0..n {
            let v = deep.leaf_value(x.row(i));
            assert_eq!(crate::numerics::argmax(v), labels[i]);
        }
    }

    #[test]
    fn regression_tree_separates_means() {
        let x = Matrix::from_vec(6, 1, vec![0.0, 0.1, 0.2, 0.8, 0.9, 1.0]).unwrap();
        let r = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let cols = Columns::new(&x);
        let leaf = |rows: &[usize]| rows.iter().map(|&i| r[i]).sum::<f64>() / rows.len() as f64;
        let target = Target::Regression {
            targets: &r,
            leaf: &leaf,
        };
        let tree = build_tree(
            &cols,
            Presorted::all_rows(&cols),
            &target,
            TreeParams::with_depth(3),
            &mut Rng::new(0),
        );
        assert_eq!(tree.leaf_value(&[0.05]), &[1.0]);
        assert_eq!(tree.leaf_value(&[0.95]), &[-1.0]);
        assert_eq!(tree.depth(), 1);
    }
}
