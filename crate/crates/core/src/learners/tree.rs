use nalgebra::DMatrix;
use rand::seq::index::sample;

use super::{weighted_mean, LearnerSpec, RegressionModel};
use crate::error::{HteError, Result};
use crate::seed::{SeedTree, Stream};

/// Relative SSE reduction a split must achieve.
const MIN_RELATIVE_GAIN: f64 = 1e-10;
/// Relative margin by which a later candidate must beat the incumbent split.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        value: f64,
        count: usize,
    },
}

impl Node {
    pub fn value(&self) -> f64 {
        match *self {
            Node::Leaf { value, .. } | Node::Split { value, .. } => value,
        }
    }
}

/// Binary regression tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

pub fn fit_tree(x: &DMatrix<f64>, y: &[f64], max_depth: usize, min_leaf: usize) -> Result<RegressionModel> {
    let mut rng = SeedTree::new(0).derive_stream("fit_tree", 0);
    LearnerSpec::tree(max_depth, min_leaf).fit(x, y, None, &mut rng)
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Node path from the root to the leaf containing `row` of `x`.
    pub fn path(&self, x: &DMatrix<f64>, row: usize) -> Vec<usize> {
        let mut out = vec![0];
        let mut i = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = self.nodes[i]
        {
            i = if x[(row, feature)] <= threshold { left } else { right };
            out.push(i);
        }
        out
    }

    pub fn leaf_of(&self, x: &DMatrix<f64>, row: usize) -> usize {
        *self.path(x, row).last().unwrap()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|r| self.nodes[self.leaf_of(x, r)].value())
            .collect()
    }
}

/// Greedy CART grower minimising the summed within-child weighted squared error.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeBuilder {
    max_depth: usize,
    min_leaf: usize,
    mtry: Option<usize>,
}

struct Ctx<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    w: Option<&'a [f64]>,
}

impl Ctx<'_> {
    fn w(&self, i: usize) -> f64 {
        self.w.map_or(1.0, |w| w[i])
    }
}

impl TreeBuilder {
    pub(crate) fn new(max_depth: usize, min_leaf: usize, mtry: Option<usize>) -> Self {
        Self {
            max_depth,
            min_leaf,
            mtry,
        }
    }

    pub(crate) fn fit(&self, x: &DMatrix<f64>, y: &[f64], w: Option<&[f64]>, rng: &mut Stream) -> Result<Tree> {
        let rows: Vec<usize> = (0..y.len()).collect();
        self.fit_rows(x, y, w, &rows, rng)
    }

    /// Grows a tree on `rows` (repeats allowed, e.g. a bootstrap sample).
    pub(crate) fn fit_rows(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        w: Option<&[f64]>,
        rows: &[usize],
        rng: &mut Stream,
    ) -> Result<Tree> {
        if rows.is_empty() {
            return Err(HteError::invalid("cannot grow a tree on zero rows"));
        }
        let ctx = Ctx { x, y, w };
        let mut nodes = Vec::new();
        self.grow(&ctx, rows.to_vec(), 0, &mut nodes, rng);
        Ok(Tree { nodes })
    }

    fn grow(&self, ctx: &Ctx, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>, rng: &mut Stream) -> usize {
        let ys: Vec<f64> = rows.iter().map(|&i| ctx.y[i]).collect();
        let ws: Option<Vec<f64>> = ctx.w.map(|_| rows.iter().map(|&i| ctx.w(i)).collect());
        let value = weighted_mean(&ys, ws.as_deref());
        let count = rows.len();
        let id = nodes.len();
        nodes.push(Node::Leaf { value, count });

        if depth >= self.max_depth || count < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(ctx, &rows, value, rng) else {
            return id;
        };
        let (lrows, rrows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| ctx.x[(i, feature)] <= threshold);
        let left = self.grow(ctx, lrows, depth + 1, nodes, rng);
        let right = self.grow(ctx, rrows, depth + 1, nodes, rng);
        nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
            value,
            count,
        };
        id
    }

    fn best_split(&self, ctx: &Ctx, rows: &[usize], mean: f64, rng: &mut Stream) -> Option<(usize, f64)> {
        let d = ctx.x.ncols();
        let (ymin, ymax) = rows
            .iter()
            .map(|&i| ctx.y[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if ymin == ymax {
            return None;
        }
        let features: Vec<usize> = match self.mtry {
            Some(m) if m < d => {
                let mut f = sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };

        let parent_sse: f64 = rows
            .iter()
            .map(|&i| ctx.w(i) * (ctx.y[i] - mean).powi(2))
            .sum();
        let n = rows.len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &j in &features {
            order.clear();
            order.extend(rows.iter().map(|&i| (ctx.x[(i, j)], i)));
            order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let (mut tw, mut ty, mut tyy) = (0.0, 0.0, 0.0);
            for &(_, i) in &order {
                let (wi, yi) = (ctx.w(i), ctx.y[i] - mean);
                tw += wi;
                ty += wi * yi;
                tyy += wi * yi * yi;
            }
            let (mut lw, mut ly, mut lyy) = (0.0, 0.0, 0.0);
            for p in 0..n - 1 {
                let (xv, i) = order[p];
                let (wi, yi) = (ctx.w(i), ctx.y[i] - mean);
                lw += wi;
                ly += wi * yi;
                lyy += wi * yi * yi;
                let left_n = p + 1;
                if left_n < self.min_leaf {
                    continue;
                }
                if n - left_n < self.min_leaf {
                    break;
                }
                let next = order[p + 1].0;
                if xv == next {
                    continue;
                }
                let (rw, ry, ryy) = (tw - lw, ty - ly, tyy - lyy);
                if lw <= 0.0 || rw <= 0.0 {
                    continue;
                }
                let cost = (lyy - ly * ly / lw) + (ryy - ry * ry / rw);
                let better = match best {
                    None => true,
                    Some((b, _, _)) => cost < b - TIE_TOL * b.abs(),
                };
                if better {
                    let mut threshold = 0.5 * (xv + next);
                    if threshold >= next {
                        threshold = xv;
                    }
                    best = Some((cost, j, threshold));
                }
            }
        }
        let (cost, feature, threshold) = best?;
        if parent_sse - cost > MIN_RELATIVE_GAIN * parent_sse {
            Some((feature, threshold))
        } else {
            None
        }
    }
}
