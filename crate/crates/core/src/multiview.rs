//! Joint refinement of more than two views: absolute rotations initialized
//! along a maximum-inlier spanning tree, then the sum of all pairwise
//! objectives minimized over every absolute rotation and one GBR per view.
//!
//! `rotations[k]` maps object coordinates into view `k`, so the pair
//! `(i, j)` with view `i` as "view 1" has `R21 = R_i R_j^T`. View 0 is the
//! gauge and stays at the identity.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet, Scalar};
use crate::correspondences::{center, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::geometry::{GbrTransform, RotMat3};
use crate::residuals::{Gbr, PairModel, Selector, Weights, M3};
use crate::solvers::{minimize, LeastSquares, LmConfig, PairSolution};

/// One estimated view pair and the correspondences it found consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInput {
    pub i: usize,
    pub j: usize,
    pub solution: PairSolution,
    pub inliers: CorrespondenceSet,
}

impl PairInput {
    pub fn weight(&self) -> usize {
        self.inliers.pixels.len() + self.inliers.normals.len() + self.inliers.reflections.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseGraph {
    pub n_views: usize,
    pub rotations: Vec<RotMat3>,
    pub gbrs: Vec<GbrTransform>,
    /// Rotations after spanning-tree chaining, before refinement.
    pub initial_rotations: Vec<RotMat3>,
    /// Pair indices (into the input) of the spanning tree.
    pub tree: Vec<usize>,
    pub initial_cost: f64,
    pub final_cost: f64,
}

impl PoseGraph {
    /// `R21` of the pair with view `i` as view 1 and `j` as view 2.
    pub fn relative(&self, i: usize, j: usize) -> RotMat3 {
        self.rotations[i].compose(&self.rotations[j].transpose())
    }
}

/// Maximum-weight spanning tree (Prim from view 0) over the pair graph.
fn spanning_tree(n: usize, pairs: &[PairInput]) -> Result<Vec<usize>> {
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    let mut tree = Vec::new();
    for _ in 1..n {
        let next = pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| in_tree[p.i] != in_tree[p.j])
            .max_by(|(ia, a), (ib, b)| a.weight().cmp(&b.weight()).then(ib.cmp(ia)));
        let Some((e, p)) = next else {
            let reached = in_tree.iter().filter(|&&k| k).count();
            return Err(Error::DisconnectedGraph(n - reached));
        };
        in_tree[p.i] = true;
        in_tree[p.j] = true;
        tree.push(e);
    }
    Ok(tree)
}

fn chain(n: usize, pairs: &[PairInput], tree: &[usize]) -> (Vec<RotMat3>, Vec<GbrTransform>) {
    let mut rot: Vec<Option<RotMat3>> = vec![None; n];
    let mut gbr: Vec<Option<GbrTransform>> = vec![None; n];
    rot[0] = Some(RotMat3::identity());
    let mut queue = VecDeque::from([0usize]);
    while let Some(k) = queue.pop_front() {
        for &e in tree {
            let p = &pairs[e];
            let r21 = &p.solution.r21;
            if p.i == k && rot[p.j].is_none() {
                rot[p.j] = Some(r21.transpose().compose(&rot[k].unwrap()));
                queue.push_back(p.j);
            } else if p.j == k && rot[p.i].is_none() {
                rot[p.i] = Some(r21.compose(&rot[k].unwrap()));
                queue.push_back(p.i);
            } else {
                continue;
            }
            gbr[p.i].get_or_insert(p.solution.g1);
            gbr[p.j].get_or_insert(p.solution.g2);
        }
    }
    (
        rot.into_iter().map(|r| r.unwrap_or_else(RotMat3::identity)).collect(),
        gbr.into_iter().map(|g| g.unwrap_or_else(GbrTransform::identity)).collect(),
    )
}

fn mat_mul<T: Scalar>(a: &M3<T>, b: &M3<T>) -> M3<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j]))
}

fn transpose<T: Scalar>(a: &M3<T>) -> M3<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

/// Rotation of the quaternion `(1, d)` (normalized implicitly).
fn quat_rotation<T: Scalar>(d: &[T; 3]) -> M3<T> {
    let one = T::cst(1.0);
    let two = T::cst(2.0);
    let [x, y, z] = *d;
    let s = one / (one + x * x + y * y + z * z);
    [
        [(one + x * x - y * y - z * z) * s, two * (x * y - z) * s, two * (x * z + y) * s],
        [two * (x * y + z) * s, (one - x * x + y * y - z * z) * s, two * (y * z - x) * s],
        [two * (x * z - y) * s, two * (y * z + x) * s, (one - x * x - y * y + z * z) * s],
    ]
}

fn lift_matrix<T: Scalar>(m: &Matrix3<f64>) -> M3<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| T::cst(m[(i, j)])))
}

/// Parameter layout: `3 (n - 1)` rotation increments of views `1..n`, then
/// `(mu, nu, ln lambda)` of views `0..n`.
struct Layout {
    n: usize,
}

impl Layout {
    fn len(&self) -> usize {
        3 * (self.n - 1) + 3 * self.n
    }

    fn rot(&self, k: usize) -> Option<usize> {
        (k > 0).then(|| 3 * (k - 1))
    }

    fn gbr(&self, k: usize) -> usize {
        3 * (self.n - 1) + 3 * k
    }
}

struct Problem<'a> {
    layout: Layout,
    base: &'a [RotMat3],
    /// `(i, j, centered inliers)`.
    pairs: Vec<(usize, usize, CorrespondenceSet)>,
}

impl Problem<'_> {
    fn view_rotation<T: Scalar>(&self, k: usize, d: [T; 3]) -> M3<T> {
        mat_mul(&quat_rotation(&d), &lift_matrix(self.base[k].matrix()))
    }

    fn pair_residuals<T: Scalar>(&self, i: usize, j: usize, set: &CorrespondenceSet, v: &[T; 12], out: &mut Vec<T>) -> Result<()> {
        let ri = self.view_rotation(i, [v[0], v[1], v[2]]);
        let rj = self.view_rotation(j, [v[3], v[4], v[5]]);
        let rot = mat_mul(&ri, &transpose(&rj));
        let g1 = Gbr::from_log(v[6], v[7], v[8]);
        let g2 = Gbr::from_log(v[9], v[10], v[11]);
        PairModel::from_matrix(rot, g1, g2)?.push_residuals(set, Selector::All, &Weights::default(), out)
    }

    /// Global columns of the twelve local variables of pair `(i, j)`.
    fn columns(&self, i: usize, j: usize) -> [Option<usize>; 12] {
        let mut c = [None; 12];
        for (slot, view) in [(0, i), (3, j)] {
            if let Some(r) = self.layout.rot(view) {
                for k in 0..3 {
                    c[slot + k] = Some(r + k);
                }
            }
        }
        for (slot, view) in [(6, i), (9, j)] {
            for k in 0..3 {
                c[slot + k] = Some(self.layout.gbr(view) + k);
            }
        }
        c
    }

    fn local(&self, x: &DVector<f64>, i: usize, j: usize) -> [f64; 12] {
        self.columns(i, j).map(|c| c.map_or(0.0, |c| x[c]))
    }
}

impl LeastSquares for Problem<'_> {
    fn num_params(&self) -> usize {
        self.layout.len()
    }

    fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = Vec::new();
        for (i, j, set) in &self.pairs {
            self.pair_residuals(*i, *j, set, &self.local(x, *i, *j), &mut out)?;
        }
        Ok(DVector::from_vec(out))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut rows: Vec<(Jet<12>, [Option<usize>; 12])> = Vec::new();
        for (i, j, set) in &self.pairs {
            let cols = self.columns(*i, *j);
            let local = self.local(x, *i, *j);
            let vars: [Jet<12>; 12] =
                std::array::from_fn(|k| if cols[k].is_some() { Jet::var(local[k], k) } else { Jet::cst(local[k]) });
            let mut out = Vec::new();
            self.pair_residuals(*i, *j, set, &vars, &mut out)?;
            rows.extend(out.into_iter().map(|r| (r, cols)));
        }
        let r = DVector::from_iterator(rows.len(), rows.iter().map(|(r, _)| r.v));
        let mut jac = DMatrix::zeros(rows.len(), self.layout.len());
        for (row, (res, cols)) in rows.iter().enumerate() {
            for (k, c) in cols.iter().enumerate() {
                if let Some(c) = c {
                    jac[(row, *c)] += res.d[k];
                }
            }
        }
        Ok((r, jac))
    }
}

fn initial_vector(layout: &Layout, gbrs: &[GbrTransform]) -> DVector<f64> {
    let mut x = DVector::zeros(layout.len());
    for (k, g) in gbrs.iter().enumerate() {
        let c = layout.gbr(k);
        x[c] = g.mu();
        x[c + 1] = g.nu();
        x[c + 2] = g.lambda().ln();
    }
    x
}

fn centered_inliers(p: &PairInput) -> Result<CorrespondenceSet> {
    if p.inliers.centered || p.inliers.pixels.is_empty() {
        Ok(p.inliers.clone())
    } else {
        Ok(center(&p.inliers)?.0)
    }
}

/// Sum of all pairwise objectives at the given absolute poses.
pub fn multiview_objective(rotations: &[RotMat3], gbrs: &[GbrTransform], pairs: &[PairInput]) -> Result<f64> {
    let n = rotations.len();
    let problem = Problem {
        layout: Layout { n },
        base: rotations,
        pairs: pairs.iter().map(|p| Ok((p.i, p.j, centered_inliers(p)?))).collect::<Result<_>>()?,
    };
    let r = problem.residuals(&initial_vector(&problem.layout, gbrs))?;
    Ok(r.norm_squared())
}

/// Spanning-tree initialization followed by joint refinement.
pub fn integrate_multiview(pairs: &[PairInput], lm: &LmConfig) -> Result<PoseGraph> {
    let n = pairs.iter().map(|p| p.i.max(p.j) + 1).max().ok_or(Error::DisconnectedGraph(0))?;
    if let Some(p) = pairs.iter().find(|p| p.i == p.j) {
        return Err(Error::InvalidConfig(format!("pair ({}, {}) joins a view to itself", p.i, p.j)));
    }
    let tree = spanning_tree(n, pairs)?;
    let (base, gbrs) = chain(n, pairs, &tree);
    let layout = Layout { n };
    let problem = Problem {
        layout,
        base: &base,
        pairs: pairs.iter().map(|p| Ok((p.i, p.j, centered_inliers(p)?))).collect::<Result<_>>()?,
    };
    let x0 = initial_vector(&problem.layout, &gbrs);
    let report = minimize(&problem, x0, None, lm)?;
    let x = &report.x;
    let rotations = (0..n)
        .map(|k| match problem.layout.rot(k) {
            None => base[k],
            Some(c) => {
                let q = quat_rotation(&[x[c], x[c + 1], x[c + 2]]);
                RotMat3::from_matrix_unchecked(Matrix3::from_fn(|a, b| q[a][b]) * base[k].matrix())
            }
        })
        .collect();
    let gbrs = (0..n)
        .map(|k| {
            let c = problem.layout.gbr(k);
            GbrTransform::new(x[c], x[c + 1], x[c + 2].exp())
        })
        .collect::<Result<_>>()?;
    Ok(PoseGraph {
        n_views: n,
        rotations,
        gbrs,
        initial_rotations: base,
        tree,
        initial_cost: report.initial_cost,
        final_cost: report.cost,
    })
}
