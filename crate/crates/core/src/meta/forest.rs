use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::{require_arm, CateModel, Components, Family};
use crate::data::CausalDataset;
use crate::error::Result;
use crate::learners::forest::{bootstrap_rows, resolve_mtry};
use crate::learners::{ForestParams, LearnerSpec, Node, Tree, TreeBuilder};
use crate::seed::{fork, Stream};

/// CART partitions of `x` whose leaves hold treated-minus-control mean
/// differences.
///
/// Trees are honest: each tree's units are halved at random, one half places
/// the splits and the other half fills the leaves. A root-only tree has no
/// splits to place and uses every unit.
#[derive(Debug, Clone)]
pub struct CausalForest {
    trees: Vec<(Tree, Vec<f64>)>,
}

/// `(rows that grow the tree, rows that fill its leaves)`.
fn honest_halves(rows: &[usize], n: usize, max_depth: usize, rng: &mut Stream) -> (Vec<usize>, Vec<usize>) {
    if max_depth == 0 {
        return (rows.to_vec(), rows.to_vec());
    }
    let mut units: Vec<usize> = (0..n).collect();
    units.shuffle(rng);
    let mut grows = vec![false; n];
    units[..n / 2].iter().for_each(|&u| grows[u] = true);
    rows.iter().partition(|&&r| grows[r])
}

fn effect_per_node(tree: &Tree, x: &DMatrix<f64>, y: &[f64], z: &[u8], rows: &[usize], fallback: f64) -> Vec<f64> {
    let nodes = tree.nodes();
    // (sum, count) per arm per node.
    let mut acc = vec![[(0.0, 0usize); 2]; nodes.len()];
    for &r in rows {
        for node in tree.path(x, r) {
            let slot = &mut acc[node][z[r] as usize];
            slot.0 += y[r];
            slot.1 += 1;
        }
    }
    let mut parent = vec![usize::MAX; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        if let Node::Split { left, right, .. } = *n {
            parent[left] = i;
            parent[right] = i;
        }
    }
    // Children are stored after their parent, so one forward pass suffices.
    let mut effect = vec![0.0; nodes.len()];
    for i in 0..nodes.len() {
        let [(s0, c0), (s1, c1)] = acc[i];
        effect[i] = if c0 > 0 && c1 > 0 {
            s1 / c1 as f64 - s0 / c0 as f64
        } else if i == 0 {
            fallback
        } else {
            effect[parent[i]]
        };
    }
    effect
}

pub fn fit_causal_forest(data: &CausalDataset, params: ForestParams, rng: &mut Stream) -> Result<CateModel> {
    // Depth 0 is allowed here: a root-only forest is the difference in means.
    LearnerSpec::Forest(ForestParams { max_depth: params.max_depth.max(1), ..params }).validate()?;
    require_arm(data, 0, params.min_leaf.max(1))?;
    require_arm(data, 1, params.min_leaf.max(1))?;
    let x = data.covariates();
    let y = data.outcome();
    let z = data.treatment();
    let mean = |arm: u8| {
        let idx = data.arm_indices(arm);
        idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
    };
    let diff_in_means = mean(1) - mean(0);
    let builder = TreeBuilder::new(params.max_depth, params.min_leaf, Some(resolve_mtry(params.mtry, x.ncols())));
    let trees = (0..params.trees)
        .map(|_| {
            let mut tree_rng = fork(rng);
            let rows = bootstrap_rows(data.n(), params.bootstrap, &mut tree_rng);
            let (grow, fill) = honest_halves(&rows, data.n(), params.max_depth, &mut tree_rng);
            let tree = builder.fit_rows(x, y, None, &grow, &mut tree_rng)?;
            let effect = effect_per_node(&tree, x, y, z, &fill, diff_in_means);
            Ok((tree, effect))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CateModel::new(
        Family::Cf,
        data.d(),
        None,
        false,
        Components::Cf(CausalForest { trees }),
    ))
}

impl CausalForest {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let k = self.trees.len() as f64;
        (0..x.nrows())
            .map(|r| self.trees.iter().map(|(t, e)| e[t.leaf_of(x, r)]).sum::<f64>() / k)
            .collect()
    }
}
