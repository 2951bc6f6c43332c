//! Telescoping inverse of a compressed tree: per-node D̂, E, F, G factors and
//! a dense inverse at the root.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::HbsTree;
use crate::error::{Error, Result};
use crate::linalg::{gemm, inverse, matmul, vstack, CMat, C64};

const ONE: C64 = C64::new(1.0, 0.0);
const MAGIC: &[u8; 8] = b"GRHBSINV";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct InverseNode {
    pub start: usize,
    pub end: usize,
    pub children: Option<[usize; 2]>,
    /// Expansion E, active × rank.
    pub e: CMat,
    /// Restriction F, rank × active.
    pub f: CMat,
    /// Local correction G, active × active. Holds the full inverse at the root.
    pub g: CMat,
}

impl InverseNode {
    pub fn rank(&self) -> usize {
        self.f.nrows()
    }
}

#[derive(Debug)]
pub struct CompressedInverse {
    pub size: usize,
    pub nodes: Vec<InverseNode>,
    pub levels: Vec<Vec<usize>>,
    applications: AtomicUsize,
    columns: AtomicUsize,
}

impl Clone for CompressedInverse {
    fn clone(&self) -> Self {
        CompressedInverse {
            size: self.size,
            nodes: self.nodes.clone(),
            levels: self.levels.clone(),
            applications: AtomicUsize::new(self.applications()),
            columns: AtomicUsize::new(self.columns_applied()),
        }
    }
}

/// Factors of one node: with D the node's diagonal block and T its
/// interpolation, D̂ = (T·D⁻¹·Tᵀ)⁻¹, E = D⁻¹·Tᵀ·D̂, F = D̂·T·D⁻¹ and
/// G = D⁻¹ − E·T·D⁻¹.
fn node_factors(d: &CMat, interp: &CMat, context: &str) -> Result<(CMat, CMat, CMat, CMat)> {
    let dinv = inverse(d, context)?;
    let dinv_u = matmul(&dinv, &interp.transpose());
    let t_dinv = matmul(interp, &dinv);
    let dhat = inverse(&matmul(interp, &dinv_u), context)?;
    let e = matmul(&dinv_u, &dhat);
    let f = matmul(&dhat, &t_dinv);
    let mut g = dinv;
    gemm(-ONE, &e, &t_dinv, ONE, &mut g);
    Ok((dhat, e, f, g))
}

/// Invert the telescoping factorization level by level, leaves first.
pub fn build_inverse(tree: &HbsTree) -> Result<CompressedInverse> {
    let count = tree.nodes.len();
    let mut dhat: Vec<CMat> = vec![CMat::zeros(0, 0); count];
    let mut out: Vec<Option<InverseNode>> = vec![None; count];
    for level in tree.levels.iter().rev() {
        let results: Vec<Result<(usize, CMat, InverseNode)>> = level
            .par_iter()
            .map(|&t| {
                let node = &tree.nodes[t];
                let d = match (node.children, &node.coupling) {
                    (None, _) => node.diag.clone(),
                    (Some([a, b]), Some((c12, c21))) => {
                        let top = hstack2(&dhat[a], c12);
                        let bottom = hstack2(c21, &dhat[b]);
                        vstack(&[&top, &bottom])
                    }
                    (Some(_), None) => {
                        return Err(Error::Format(format!("node {t} lacks sibling couplings")))
                    }
                };
                let context = format!("HBS node {t} at level {}", node.level);
                if t == 0 {
                    let g = inverse(&d, &context)?;
                    let m = d.nrows();
                    let inv = InverseNode {
                        start: node.start,
                        end: node.end,
                        children: node.children,
                        e: CMat::zeros(m, 0),
                        f: CMat::zeros(0, m),
                        g,
                    };
                    return Ok((t, CMat::zeros(0, 0), inv));
                }
                let (dh, e, f, g) = node_factors(&d, &node.interp, &context)?;
                Ok((
                    t,
                    dh,
                    InverseNode {
                        start: node.start,
                        end: node.end,
                        children: node.children,
                        e,
                        f,
                        g,
                    },
                ))
            })
            .collect();
        for r in results {
            let (t, dh, inv) = r?;
            dhat[t] = dh;
            out[t] = Some(inv);
        }
    }
    let nodes = out
        .into_iter()
        .map(|n| n.expect("every node visited"))
        .collect();
    Ok(CompressedInverse {
        size: tree.size,
        nodes,
        levels: tree.levels.clone(),
        applications: AtomicUsize::new(0),
        columns: AtomicUsize::new(0),
    })
}

fn hstack2(a: &CMat, b: &CMat) -> CMat {
    crate::linalg::hstack(&[a, b])
}

impl CompressedInverse {
    /// Number of `apply` calls made so far, each counting once regardless of
    /// the number of columns.
    pub fn applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }

    /// Total right-hand-side columns pushed through `apply`.
    pub fn columns_applied(&self) -> usize {
        self.columns.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.applications.store(0, Ordering::Relaxed);
        self.columns.store(0, Ordering::Relaxed);
    }

    /// Stored complex entries.
    pub fn stored_entries(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.e.len() + n.f.len() + n.g.len())
            .sum()
    }

    /// A⁻¹·X for a block of right-hand sides. Each column goes through the
    /// same arithmetic as it would alone.
    pub fn apply(&self, x: &CMat) -> Result<CMat> {
        if x.nrows() != self.size {
            return Err(Error::Dimension(format!(
                "expected {} rows, got {}",
                self.size,
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::Dimension("empty right-hand side block".into()));
        }
        self.applications.fetch_add(1, Ordering::Relaxed);
        self.columns.fetch_add(x.ncols(), Ordering::Relaxed);
        let r = x.ncols();
        let count = self.nodes.len();
        let mut gathered: Vec<CMat> = vec![CMat::zeros(0, 0); count];
        let mut up: Vec<CMat> = vec![CMat::zeros(0, 0); count];
        for level in self.levels.iter().rev() {
            let results: Vec<(usize, CMat, CMat)> = level
                .par_iter()
                .map(|&t| {
                    let node = &self.nodes[t];
                    let local = match node.children {
                        None => x.rows(node.start, node.end - node.start).into_owned(),
                        Some([a, b]) => vstack(&[&up[a], &up[b]]),
                    };
                    let hat = matmul(&node.f, &local);
                    (t, local, hat)
                })
                .collect();
            for (t, local, hat) in results {
                gathered[t] = local;
                up[t] = hat;
            }
        }
        let mut down: Vec<CMat> = vec![CMat::zeros(0, r); count];
        let mut y = CMat::zeros(self.size, r);
        for level in &self.levels {
            let results: Vec<(usize, CMat)> = level
                .par_iter()
                .map(|&t| {
                    let node = &self.nodes[t];
                    let mut out = matmul(&node.e, &down[t]);
                    gemm(ONE, &node.g, &gathered[t], ONE, &mut out);
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

    /// Write the factorization in the versioned little-endian layout:
    /// magic, version, size, level lists, then per node its interval,
    /// children and the E, F, G matrices (rows, cols, column-major re/im).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        put_u64(w, self.size)?;
        put_u64(w, self.levels.len())?;
        for level in &self.levels {
            put_u64(w, level.len())?;
            for &t in level {
                put_u64(w, t)?;
            }
        }
        put_u64(w, self.nodes.len())?;
        for node in &self.nodes {
            put_u64(w, node.start)?;
            put_u64(w, node.end)?;
            match node.children {
                Some([a, b]) => {
                    w.write_all(&[1])?;
                    put_u64(w, a)?;
                    put_u64(w, b)?;
                }
                None => w.write_all(&[0])?,
            }
            for m in [&node.e, &node.f, &node.g] {
                put_matrix(w, m)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a compressed inverse file".into()));
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v)?;
        let version = u32::from_le_bytes(v);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version}"
            )));
        }
        let size = get_u64(r)?;
        let nlevels = get_u64(r)?;
        let mut levels = Vec::with_capacity(nlevels.min(64));
        for _ in 0..nlevels {
            let len = get_u64(r)?;
            let mut level = Vec::with_capacity(len.min(1 << 20));
            for _ in 0..len {
                level.push(get_u64(r)?);
            }
            levels.push(level);
        }
        let count = get_u64(r)?;
        let mut nodes = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let start = get_u64(r)?;
            let end = get_u64(r)?;
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)?;
            let children = match flag[0] {
                0 => None,
                1 => Some([get_u64(r)?, get_u64(r)?]),
                f => return Err(Error::Format(format!("bad child flag {f}"))),
            };
            let e = get_matrix(r)?;
            let f = get_matrix(r)?;
            let g = get_matrix(r)?;
            nodes.push(InverseNode {
                start,
                end,
                children,
                e,
                f,
                g,
            });
        }
        let inv = CompressedInverse {
            size,
            nodes,
            levels,
            applications: AtomicUsize::new(0),
            columns: AtomicUsize::new(0),
        };
        inv.validate()?;
        Ok(inv)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Format(msg));
        if self.nodes.is_empty() || self.levels.first().map(|l| l.as_slice()) != Some(&[0][..]) {
            return bad("missing root".into());
        }
        for (t, node) in self.nodes.iter().enumerate() {
            let m = node.g.nrows();
            if node.g.ncols() != m
                || node.e.nrows() != m
                || node.f.ncols() != m
                || node.e.ncols() != node.rank()
            {
                return bad(format!("node {t} has inconsistent factor shapes"));
            }
            match node.children {
                None if m != node.end.saturating_sub(node.start) || node.end > self.size => {
                    return bad(format!("leaf {t} interval does not match its block"))
                }
                Some([a, b]) => {
                    if a >= self.nodes.len() || b >= self.nodes.len() {
                        return bad(format!("node {t} has out-of-range children"));
                    }
                    if self.nodes[a].rank() + self.nodes[b].rank() != m {
                        return bad(format!("node {t} does not match its children's ranks"));
                    }
                }
                None => {}
            }
        }
        Ok(())
    }

    /// Save atomically: write a sibling temporary file, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(fs::File::open(path)?))
    }
}

fn put_u64<W: Write>(w: &mut W, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    usize::try_from(u64::from_le_bytes(b))
        .map_err(|_| Error::Format("index exceeds address space".into()))
}

fn put_matrix<W: Write>(w: &mut W, m: &CMat) -> Result<()> {
    put_u64(w, m.nrows())?;
    put_u64(w, m.ncols())?;
    let mut buf = Vec::with_capacity(16 * m.len());
    for z in m.iter() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn get_matrix<R: Read>(r: &mut R) -> Result<CMat> {
    let rows = get_u64(r)?;
    let cols = get_u64(r)?;
    let len = rows
        .checked_mul(cols)
        .filter(|&l| l <= 1 << 32)
        .ok_or_else(|| Error::Format("matrix too large".into()))?;
    let mut buf = vec![0u8; 16 * len];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect();
    Ok(CMat::from_vec(rows, cols, data))
}
