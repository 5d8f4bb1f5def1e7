//! Regression trees: exhaustive CART splits and extremely randomized trees.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted regression tree; predictions are training-target means of leaves.
#[derive(Debug, Clone)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

enum SplitRule<'a> {
    Best,
    Random {
        rng: &'a mut ChaCha8Rng,
        features: &'a [usize],
    },
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl RegressionTree {
    /// CART with exhaustive threshold search on every feature.
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> Self {
        let rows: Vec<usize> = (0..y.len()).collect();
        let mut builder = Builder::new(x, y, params);
        builder.grow(rows, 0, &mut SplitRule::Best);
        RegressionTree {
            nodes: builder.nodes,
        }
    }

    /// One extremely randomized tree on the given rows and feature subset.
    fn fit_random(
        x: &[Vec<f64>],
        y: &[f64],
        rows: Vec<usize>,
        features: &[usize],
        params: TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut builder = Builder::new(x, y, params);
        builder.grow(rows, 0, &mut SplitRule::Random { rng, features });
        RegressionTree {
            nodes: builder.nodes,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

impl<'a> Builder<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], params: TreeParams) -> Self {
        Self {
            x,
            y,
            params,
            nodes: Vec::new(),
        }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rule: &mut SplitRule<'_>) -> usize {
        let id = self.nodes.len();
        let n = rows.len() as f64;
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n;
        self.nodes.push(Node::Leaf(mean));

        let min_leaf = self.params.min_leaf.max(1);
        let pure = rows.iter().all(|&r| self.y[r] == self.y[rows[0]]);
        if depth >= self.params.max_depth || rows.len() < 2 * min_leaf || pure {
            return id;
        }
        let candidate = match rule {
            SplitRule::Best => self.best_split(&rows, min_leaf),
            SplitRule::Random { rng, features } => self.random_split(&rows, min_leaf, features, rng),
        };
        let Some(split) = candidate else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.x[r][split.feature] <= split.threshold);
        let left = self.grow(left_rows, depth + 1, rule);
        let right = self.grow(right_rows, depth + 1, rule);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[usize], min_leaf: usize) -> Option<Candidate> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<Candidate> = None;
        let mut order = rows.to_vec();
        for feature in 0..self.x[rows[0]].len() {
            order.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.y[order[i]];
                let left_n = i + 1;
                let right_n = n - left_n;
                let here = self.x[order[i]][feature];
                let next = self.x[order[i + 1]][feature];
                if left_n < min_leaf || right_n < min_leaf || here == next {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / left_n as f64
                    + right_sum * right_sum / right_n as f64
                    - parent;
                if gain > gain_floor(parent) && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = here + (next - here) / 2.0;
                    let threshold = if mid < next { mid } else { here };
                    best = Some(Candidate {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn random_split(
        &self,
        rows: &[usize],
        min_leaf: usize,
        features: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Option<Candidate> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<Candidate> = None;
        for &feature in features {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = self.x[r][feature];
                (lo.min(v), hi.max(v))
            });
            if !(lo < hi) {
                continue;
            }
            let draw: f64 = rng.random();
            let mut threshold = lo + draw * (hi - lo);
            if threshold >= hi {
                threshold = lo;
            }
            let (mut left_n, mut left_sum) = (0usize, 0.0);
            for &r in rows {
                if self.x[r][feature] <= threshold {
                    left_n += 1;
                    left_sum += self.y[r];
                }
            }
            let right_n = n - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain =
                left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64 - parent;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }
}

fn gain_floor(parent: f64) -> f64 {
    1e-12 * parent.abs().max(1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct ForestParams {
    pub tree: TreeParams,
    pub n_trees: usize,
    pub feature_fraction: f64,
    pub seed: u64,
}

/// Average of extremely randomized trees, each grown on a bootstrap sample of rows
/// and a random subset of features.
#[derive(Debug, Clone)]
pub struct ExtraTrees {
    trees: Vec<RegressionTree>,
}

impl ExtraTrees {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: ForestParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let n = y.len();
        let p = x[0].len();
        let n_features = ((params.feature_fraction * p as f64).ceil() as usize).clamp(1, p);
        let trees = (0..params.n_trees.max(1))
            .map(|_| {
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut features = sample(&mut rng, p, n_features).into_vec();
                features.sort_unstable();
                RegressionTree::fit_random(x, y, rows, &features, params.tree, &mut rng)
            })
            .collect();
        Self { trees }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARAMS: TreeParams = TreeParams {
        max_depth: 8,
        min_leaf: 2,
    };

    #[test]
    fn single_row_is_one_leaf() {
        let tree = RegressionTree::fit(&[vec![3.0, 4.0]], &[7.5], PARAMS);
        assert_eq!(tree.n_leaves(), 1);
        assert_eq!(tree.predict(&[100.0, -5.0]), 7.5);
    }

    #[test]
    fn step_function_is_recovered() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 1.0 } else { 9.0 }).collect();
        let tree = RegressionTree::fit(&x, &y, PARAMS);
        assert_eq!(tree.predict(&[2.0]), 1.0);
        assert_eq!(tree.predict(&[7.0]), 9.0);
        assert_eq!(tree.n_leaves(), 2);
    }

    #[test]
    fn min_leaf_is_respected() {
        let x: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64]).collect();
        let tree = RegressionTree::fit(&x, &[0.0, 0.0, 10.0], PARAMS);
        // A 2/1 split would leave a single-row leaf.
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn forest_is_seeded_and_bounded() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = (0..12).map(|i| (i as f64).sin() * 10.0).collect();
        let params = ForestParams {
            tree: PARAMS,
            n_trees: 10,
            feature_fraction: 0.5,
            seed: 11,
        };
        let a = ExtraTrees::fit(&x, &y, params);
        let b = ExtraTrees::fit(&x, &y, params);
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        for q in [-3.0, 0.5, 4.0, 20.0] {
            let pa = a.predict(&[q, q * q]);
            assert_eq!(pa.to_bits(), b.predict(&[q, q * q]).to_bits());
            assert!(pa >= lo && pa <= hi);
        }
    }
}
