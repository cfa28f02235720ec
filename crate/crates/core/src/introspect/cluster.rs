//! Average-linkage agglomerative clustering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Merge `m` joins clusters `i < j` into cluster `K + m`; leaves are `0..K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub merges: Vec<(usize, usize, f64)>,
    pub leaf_order: Vec<usize>,
}

impl ClusterTree {
    pub fn num_leaves(&self) -> usize {
        self.merges.len() + 1
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.2).collect()
    }

    /// Leaves under cluster `id`, ascending.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let k = self.num_leaves();
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if n < k {
                out.push(n);
            } else {
                let (a, b, _) = self.merges[n - k];
                stack.push(a);
                stack.push(b);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serializes")
    }
}

fn check_matrix(dist: &[Vec<f64>]) -> Result<usize> {
    let k = dist.len();
    if k < 2 {
        return Err(Error::Config(format!(
            "clustering needs at least 2 points, got {k}"
        )));
    }
    for (i, row) in dist.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Shape(format!(
                "distance row {i} has {} entries, expected {k}",
                row.len()
            )));
        }
        for (j, &d) in row.iter().enumerate() {
            if !d.is_finite() || d < 0.0 || d != dist[j][i] || (i == j && d != 0.0) {
                return Err(Error::validation(
                    format!("dist[{i}][{j}]"),
                    format!("invalid distance {d}"),
                ));
            }
        }
    }
    Ok(k)
}

pub fn agglomerate(dist: &[Vec<f64>]) -> Result<ClusterTree> {
    let k = check_matrix(dist)?;
    // active clusters by id, with sizes and summed cross distances
    let mut ids: Vec<usize> = (0..k).collect();
    let mut sizes: Vec<usize> = vec![1; k];
    let mut sums: Vec<Vec<f64>> = dist.to_vec();
    let mut merges = Vec::with_capacity(k - 1);
    while ids.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                let d = sums[a][b] / (sizes[a] * sizes[b]) as f64;
                let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                let better = match best {
                    None => true,
                    Some((bd, ba, bb)) => {
                        let bkey = (ids[ba].min(ids[bb]), ids[ba].max(ids[bb]));
                        d < bd || (d == bd && key < bkey)
                    }
                };
                if better {
                    best = Some((d, a, b));
                }
            }
        }
        let (h, a, b) = best.expect("at least one pair");
        let new_id = k + merges.len();
        merges.push((ids[a].min(ids[b]), ids[a].max(ids[b]), h));
        // fold b into a, then drop b
        let merged: Vec<f64> = sums[a].iter().zip(&sums[b]).map(|(x, y)| x + y).collect();
        for (m, &s) in merged.iter().enumerate() {
            sums[a][m] = s;
            sums[m][a] = s;
        }
        sums[a][a] = 0.0;
        sizes[a] += sizes[b];
        ids[a] = new_id;
        ids.remove(b);
        sizes.remove(b);
        sums.remove(b);
        for row in sums.iter_mut() {
            row.remove(b);
        }
    }
    let mut tree = ClusterTree {
        merges,
        leaf_order: Vec::with_capacity(k),
    };
    tree.leaf_order = leaf_order(&tree);
    Ok(tree)
}

fn leaf_order(tree: &ClusterTree) -> Vec<usize> {
    let k = tree.num_leaves();
    let mut size = vec![1usize; 2 * k - 1];
    for (m, &(a, b, _)) in tree.merges.iter().enumerate() {
        size[k + m] = size[a] + size[b];
    }
    let mut order = Vec::with_capacity(k);
    let mut stack = vec![2 * k - 2];
    while let Some(n) = stack.pop() {
        if n < k {
            order.push(n);
            continue;
        }
        let (a, b, _) = tree.merges[n - k];
        let (first, second) = if size[b] < size[a] { (b, a) } else { (a, b) };
        stack.push(second);
        stack.push(first);
    }
    order
}
