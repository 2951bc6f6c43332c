//! Hierarchically block-separable compression of the self-interaction
//! matrix and its telescoping inverse.

mod id;
mod inverse;

pub use id::{column_id, id_decompose, ColumnId, IdFactorization};
pub use inverse::{build_inverse, CompressedInverse};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::kernels::{proxy_count, EntryOracle, ProxyCircle};
use crate::linalg::{gemm, matmul, vstack, CMat, C64};

const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HbsOptions {
    pub tol: f64,
    pub leaf_size: usize,
    /// Proxy circle radius relative to the node's bounding radius.
    pub proxy_factor: f64,
    pub proxy_count: usize,
}

impl Default for HbsOptions {
    fn default() -> Self {
        HbsOptions {
            tol: 1e-10,
            leaf_size: 64,
            proxy_factor: 1.75,
            proxy_count: 75,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HbsNode {
    pub level: usize,
    /// Contiguous interval of original unknowns covered by the node.
    pub start: usize,
    pub end: usize,
    pub children: Option<[usize; 2]>,
    /// Unknowns seen at this level: the interval for a leaf, the children's
    /// skeletons otherwise.
    pub active: Vec<usize>,
    /// Positions within `active` of the skeleton; every active position for
    /// the root.
    pub skeleton: Vec<usize>,
    /// Interpolation T (rank × active) with T(:, skeleton) = I. Serves as
    /// V* and, transposed, as U.
    pub interp: CMat,
    /// Leaf diagonal block A(active, active); empty for internal nodes.
    pub diag: CMat,
    /// Couplings A(J₁, J₂) and A(J₂, J₁) between the children's skeletons.
    pub coupling: Option<(CMat, CMat)>,
    /// Compression kept every unknown.
    pub dense_fallback: bool,
}

impl HbsNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn rank(&self) -> usize {
        self.skeleton.len()
    }

    pub fn skeleton_indices(&self) -> Vec<usize> {
        self.skeleton.iter().map(|&p| self.active[p]).collect()
    }
}

/// Binary tree of compressed nodes; node 0 is the root and `levels[l]` lists
/// the nodes at depth l.
#[derive(Clone, Debug)]
pub struct HbsTree {
    pub size: usize,
    pub nodes: Vec<HbsNode>,
    pub levels: Vec<Vec<usize>>,
    pub options: HbsOptions,
}

impl HbsTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn max_rank(&self) -> usize {
        self.nodes
            .iter()
            .skip(1)
            .map(|n| n.rank())
            .max()
            .unwrap_or(0)
    }

    pub fn dense_fallbacks(&self) -> usize {
        self.nodes.iter().filter(|n| n.dense_fallback).count()
    }

    /// Number of stored complex entries across leaf blocks, couplings and
    /// interpolation matrices.
    pub fn stored_entries(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| {
                let c = n.coupling.as_ref().map_or(0, |(a, b)| a.len() + b.len());
                n.diag.len() + c + n.interp.len()
            })
            .sum()
    }

    /// y = A_hbs·x through the telescoping factorization.
    pub fn matvec(&self, x: &CMat) -> Result<CMat> {
        if x.nrows() != self.size {
            return Err(Error::Dimension(format!(
                "expected {} rows, got {}",
                self.size,
                x.nrows()
            )));
        }
        let r = x.ncols();
        let mut up: Vec<CMat> = vec![CMat::zeros(0, 0); self.nodes.len()];
        let mut gathered: Vec<CMat> = vec![CMat::zeros(0, 0); self.nodes.len()];
        for level in self.levels.iter().rev() {
            let results: Vec<(usize, CMat, CMat)> = level
                .par_iter()
                .map(|&t| {
                    let node = &self.nodes[t];
                    let local = match node.children {
                        None => x.rows(node.start, node.end - node.start).into_owned(),
                        Some([a, b]) => vstack(&[&up[a], &up[b]]),
                    };
                    let hat = if t == 0 {
                        CMat::zeros(0, r)
                    } else {
                        matmul(&node.interp, &local)
                    };
                    (t, local, hat)
                })
                .collect();
            for (t, local, hat) in results {
                gathered[t] = local;
                up[t] = hat;
            }
        }
        let mut down: Vec<CMat> = vec![CMat::zeros(0, 0); self.nodes.len()];
        let mut y = CMat::zeros(self.size, r);
        for level in &self.levels {
            let results: Vec<(usize, CMat)> = level
                .par_iter()
                .map(|&t| {
                    let node = &self.nodes[t];
                    let xin = &gathered[t];
                    let mut out = CMat::zeros(node.active.len(), r);
                    if t != 0 {
                        gemm(ONE, &node.interp.transpose(), &down[t], ZERO, &mut out);
                    }
                    match (node.children, &node.coupling) {
                        (None, _) => gemm(ONE, &node.diag, xin, ONE, &mut out),
                        (Some(_), Some((c12, c21))) => {
                            let k1 = c12.nrows();
                            let k2 = c21.nrows();
                            gemm(ONE, c12, &xin.rows(k1, k2), ONE, &mut out.rows_mut(0, k1));
                            gemm(ONE, c21, &xin.rows(0, k1), ONE, &mut out.rows_mut(k1, k2));
                        }
                        (Some(_), None) => unreachable!("internal node without coupling"),
                    }
                    (t, out)
                })
                .collect();
            for (t, out) in results {
                let node = &self.nodes[t];
                match node.children {
                    None => y
                        .rows_mut(node.start, node.end - node.start)
                        .copy_from(&out),
                    Some([a, b]) => {
                        let k1 = self.nodes[a].rank();
                        down[a] = out.rows(0, k1).into_owned();
                        down[b] = out.rows(k1, out.nrows() - k1).into_owned();
                    }
                }
            }
        }
        Ok(y)
    }
}

fn centroid_and_radius(points: &[Point]) -> (Point, f64) {
    let n = points.len() as f64;
    let c = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let r = points
        .iter()
        .map(|p| (p[0] - c[0]).hypot(p[1] - c[1]))
        .fold(0.0, f64::max);
    (c, r)
}

struct Skeletonized {
    skeleton: Vec<usize>,
    interp: CMat,
    dense_fallback: bool,
}

/// Compress the matrix behind `oracle` bottom-up, one level at a time.
/// Only near-field blocks and proxy interactions are ever formed.
pub fn compress<O: EntryOracle + ?Sized>(oracle: &O, options: HbsOptions) -> Result<HbsTree> {
    let n = oracle.size();
    if n == 0 {
        return Err(Error::Dimension("empty operator".into()));
    }
    if options.leaf_size == 0
        || options.proxy_count == 0
        || !(options.tol > 0.0)
        || !(options.proxy_factor > 1.0)
    {
        return Err(Error::Config(format!(
            "invalid compression options {options:?}"
        )));
    }
    let (mut nodes, levels) = build_topology(n, options.leaf_size);
    let locations: Vec<Point> = (0..n).map(|i| oracle.location(i)).collect();
    let bounds: Vec<(Point, f64)> = nodes
        .iter()
        .map(|node| centroid_and_radius(&locations[node.start..node.end]))
        .collect();

    for level in levels.iter().skip(1).rev() {
        for &t in level {
            if let Some([a, b]) = nodes[t].children {
                let mut act = nodes[a].skeleton_indices();
                act.extend(nodes[b].skeleton_indices());
                nodes[t].active = act;
            }
        }
        let results: Vec<(usize, Skeletonized)> = level
            .par_iter()
            .map(|&t| {
                let (center, radius) = bounds[t];
                let proxy_radius = options.proxy_factor * radius.max(f64::MIN_POSITIVE);
                let mut near = Vec::new();
                for &s in level {
                    if s == t {
                        continue;
                    }
                    let (cs, rs) = bounds[s];
                    if (cs[0] - center[0]).hypot(cs[1] - center[1]) >= proxy_radius + rs {
                        continue;
                    }
                    near.extend(nodes[s].active.iter().copied().filter(|&i| {
                        let p = locations[i];
                        (p[0] - center[0]).hypot(p[1] - center[1]) < proxy_radius
                    }));
                }
                let count = proxy_count(oracle.max_wavenumber(), proxy_radius, options.proxy_count);
                let proxies = ProxyCircle::new(center, proxy_radius, count);
                (
                    t,
                    skeletonize(oracle, &nodes[t].active, &near, &proxies, options.tol),
                )
            })
            .collect();
        for (t, s) in results {
            nodes[t].skeleton = s.skeleton;
            nodes[t].interp = s.interp;
            nodes[t].dense_fallback = s.dense_fallback;
        }
    }

    let root_active = match nodes[0].children {
        Some([a, b]) => {
            let mut act = nodes[a].skeleton_indices();
            act.extend(nodes[b].skeleton_indices());
            act
        }
        None => (0..n).collect(),
    };
    nodes[0].skeleton = (0..root_active.len()).collect();
    nodes[0].active = root_active;

    let blocks: Vec<(usize, CMat, Option<(CMat, CMat)>)> = (0..nodes.len())
        .into_par_iter()
        .map(|t| {
            let node = &nodes[t];
            match node.children {
                None => (t, oracle.block(&node.active, &node.active), None),
                Some([a, b]) => {
                    let j1 = nodes[a].skeleton_indices();
                    let j2 = nodes[b].skeleton_indices();
                    (
                        t,
                        CMat::zeros(0, 0),
                        Some((oracle.block(&j1, &j2), oracle.block(&j2, &j1))),
                    )
                }
            }
        })
        .collect();
    for (t, diag, coupling) in blocks {
        nodes[t].diag = diag;
        nodes[t].coupling = coupling;
    }
    Ok(HbsTree {
        size: n,
        nodes,
        levels,
        options,
    })
}

/// Joint row/column skeleton of the active set against its near field and
/// the proxy circle.
fn skeletonize<O: EntryOracle + ?Sized>(
    oracle: &O,
    active: &[usize],
    near: &[usize],
    proxies: &ProxyCircle,
    tol: f64,
) -> Skeletonized {
    let outgoing = oracle.block(active, near).transpose();
    let from_proxy = oracle.from_proxies(active, proxies).transpose();
    let incoming = oracle.block(near, active);
    let to_proxy = oracle.to_proxies(proxies, active);
    let stacked = vstack(&[&outgoing, &from_proxy, &incoming, &to_proxy]);
    let id = column_id(&stacked, tol);
    let mut skeleton = id.skeleton().to_vec();
    // Keep skeletons in interval order so parents see arc-ordered unknowns.
    let mut order: Vec<usize> = (0..skeleton.len()).collect();
    order.sort_by_key(|&k| skeleton[k]);
    let interp = CMat::from_fn(order.len(), active.len(), |i, j| id.interp[(order[i], j)]);
    skeleton.sort_unstable();
    let dense_fallback = skeleton.len() == active.len();
    Skeletonized {
        skeleton,
        interp,
        dense_fallback,
    }
}

fn build_topology(n: usize, leaf_size: usize) -> (Vec<HbsNode>, Vec<Vec<usize>>) {
    let mut depth = 0;
    while n.div_ceil(1 << depth) > leaf_size {
        depth += 1;
    }
    let blank = |level, start, end| HbsNode {
        level,
        start,
        end,
        children: None,
        active: (start..end).collect(),
        skeleton: Vec::new(),
        interp: CMat::zeros(0, 0),
        diag: CMat::zeros(0, 0),
        coupling: None,
        dense_fallback: false,
    };
    let mut nodes = vec![blank(0, 0, n)];
    let mut levels = vec![vec![0]];
    for level in 1..=depth {
        let mut current = Vec::new();
        for &p in &levels[level - 1] {
            let (s, e) = (nodes[p].start, nodes[p].end);
            let mid = s + (e - s) / 2;
            let a = nodes.len();
            nodes.push(blank(level, s, mid));
            nodes.push(blank(level, mid, e));
            nodes[p].children = Some([a, a + 1]);
            nodes[p].active = Vec::new();
            current.extend([a, a + 1]);
        }
        levels.push(current);
    }
    (nodes, levels)
}

/// Dense copy of the compressed operator; meant for small test sizes.
pub fn reconstruct(tree: &HbsTree) -> Result<CMat> {
    tree.matvec(&CMat::identity(tree.size, tree.size))
}
