//! Bagged CART regression forest. Trees grow level by level over feature
//! orders sorted once per fit, so each level costs one pass per feature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Design, ForestConfig};
use crate::error::{Error, Result};

const LEAF: u32 = u32::MAX;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// `LEAF` for terminal nodes.
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0usize;
        loop {
            let node = &self.nodes[k];
            if node.feature == LEAF {
                return node.value;
            }
            k = if row[node.feature as usize] <= node.threshold { node.left } else { node.right } as usize;
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            let n = &nodes[k];
            if n.feature == LEAF {
                0
            } else {
                1 + walk(nodes, n.left as usize).max(walk(nodes, n.right as usize))
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub y_min: f64,
    pub y_max: f64,
}

impl RandomForest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        (sum / self.trees.len() as f64).clamp(self.y_min, self.y_max)
    }

    pub fn predict(&self, x: &Design) -> Vec<f64> {
        (0..x.rows).map(|i| self.predict_row(x.row(i))).collect()
    }
}

pub const MIN_ROWS: usize = 100;

pub fn fit_random_forest(x: &Design, y: &[f64], config: &ForestConfig, seed: u64) -> Result<RandomForest> {
    if x.rows != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} targets", x.rows, y.len())));
    }
    if x.rows < MIN_ROWS {
        return Err(Error::InsufficientHistory(format!("{} rows, forest needs {MIN_ROWS}", x.rows)));
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in forest training data".into()));
    }
    let columns: Vec<Vec<f64>> = (0..x.cols).map(|j| x.column(j)).collect();
    let orders: Vec<Vec<u32>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..x.rows as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect();
    let ctx = GrowContext { columns: &columns, orders: &orders, y, config };
    let trees: Vec<Tree> = (0..config.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            ctx.grow(&mut rng)
        })
        .collect();
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RandomForest { trees, y_min, y_max })
}

struct GrowContext<'a> {
    columns: &'a [Vec<f64>],
    orders: &'a [Vec<u32>],
    y: &'a [f64],
    config: &'a ForestConfig,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    w: f64,
    s: f64,
    s2: f64,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl GrowContext<'_> {
    fn grow(&self, rng: &mut ChaCha8Rng) -> Tree {
        let n = self.y.len();
        let mut weight = vec![0u32; n];
        for _ in 0..n {
            weight[rng.random_range(0..n)] += 1;
        }
        let inbag: Vec<Vec<u32>> =
            self.orders.iter().map(|o| o.iter().copied().filter(|&i| weight[i as usize] > 0).collect()).collect();
        let rows = &inbag[0];
        let min_leaf = self.config.min_samples_leaf.max(1) as f64;

        let mut node_of = vec![0u32; n];
        let mut nodes = vec![Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 }];
        let mut stats = vec![Stats::default()];
        for &i in rows {
            let (w, yi) = (weight[i as usize] as f64, self.y[i as usize]);
            let st = &mut stats[0];
            st.w += w;
            st.s += w * yi;
            st.s2 += w * yi * yi;
        }
        let mut frontier: Vec<u32> = vec![0];

        for _depth in 0..self.config.max_depth {
            // Slot of each node in the frontier, or LEAF if not splittable.
            let mut slot = vec![LEAF; nodes.len()];
            frontier.retain(|&k| {
                let st = stats[k as usize];
                st.w >= 2.0 * min_leaf && st.s2 - st.s * st.s / st.w > MIN_GAIN * st.w
            });
            for (pos, &k) in frontier.iter().enumerate() {
                slot[k as usize] = pos as u32;
            }
            if frontier.is_empty() {
                break;
            }
            let mut best: Vec<Option<Best>> = vec![None; frontier.len()];
            let mut left = vec![Stats::default(); frontier.len()];
            let mut last = vec![f64::NAN; frontier.len()];
            for (f, order) in inbag.iter().enumerate() {
                let col = &self.columns[f];
                left.iter_mut().for_each(|s| *s = Stats::default());
                last.iter_mut().for_each(|v| *v = f64::NAN);
                for &i in order {
                    let pos = slot[node_of[i as usize] as usize];
                    if pos == LEAF {
                        continue;
                    }
                    let pos = pos as usize;
                    let xi = col[i as usize];
                    let l = left[pos];
                    if l.w >= min_leaf && xi != last[pos] {
                        let total = stats[frontier[pos] as usize];
                        let rw = total.w - l.w;
                        if rw >= min_leaf {
                            let rs = total.s - l.s;
                            let gain = l.s * l.s / l.w + rs * rs / rw - total.s * total.s / total.w;
                            if gain > best[pos].map_or(MIN_GAIN, |b| b.gain) {
                                let lo = last[pos];
                                let mut threshold = lo + (xi - lo) / 2.0;
                                if threshold >= xi {
                                    threshold = lo;
                                }
                                best[pos] = Some(Best { gain, feature: f, threshold });
                            }
                        }
                    }
                    let (w, yi) = (weight[i as usize] as f64, self.y[i as usize]);
                    let l = &mut left[pos];
                    l.w += w;
                    l.s += w * yi;
                    last[pos] = xi;
                }
            }

            let mut next = Vec::new();
            for (pos, &k) in frontier.iter().enumerate() {
                if let Some(b) = best[pos] {
                    let l = nodes.len() as u32;
                    nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
                    nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
                    stats.push(Stats::default());
                    stats.push(Stats::default());
                    let node = &mut nodes[k as usize];
                    node.feature = b.feature as u32;
                    node.threshold = b.threshold;
                    node.left = l;
                    node.right = l + 1;
                    next.push(l);
                    next.push(l + 1);
                }
            }
            if next.is_empty() {
                break;
            }
            for &i in rows {
                let node = nodes[node_of[i as usize] as usize];
                if node.feature == LEAF {
                    continue;
                }
                let child = if self.columns[node.feature as usize][i as usize] <= node.threshold {
                    node.left
                } else {
                    node.right
                };
                node_of[i as usize] = child;
                let (w, yi) = (weight[i as usize] as f64, self.y[i as usize]);
                let st = &mut stats[child as usize];
                st.w += w;
                st.s += w * yi;
                st.s2 += w * yi * yi;
            }
            frontier = next;
        }

        for (node, st) in nodes.iter_mut().zip(&stats) {
            if node.feature == LEAF {
                node.value = if st.w > 0.0 { st.s / st.w } else { 0.0 };
            }
        }
        Tree { nodes }
    }
}
