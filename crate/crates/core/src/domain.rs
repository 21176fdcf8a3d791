//! Cartesian multiblock domains, sources and the free-space Green's function.
//!
//! Blocks form a regular `p_1 x p_2 [x p_3]` partition of a box. All blocks
//! carry `n` points per axis with a common spacing `h`, so neighbouring grids
//! share their interface gridlines. Faces are numbered `2 * axis + side`
//! with `side = 0` at the low end of the axis.

use std::f64::consts::PI;

use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::lowrank::LowRankMatrix;
use crate::tt::TensorTrain;

/// Condition imposed on one block face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceTag {
    /// First-order absorbing condition `w_t + c dw/dn = 0`.
    Nonreflecting,
    /// Homogeneous Neumann (reflecting surface).
    Neumann,
    /// Dirichlet; data (if any) comes from the source specification.
    Dirichlet,
    /// Shared with the given neighbouring block.
    Interface { neighbor: usize },
    /// Exterior face handled by an absorbing damping layer (3D).
    Damped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Block position in the partition (unused axes are 0).
    pub index: [usize; 3],
    /// Wave speed.
    pub c: f64,
    /// One tag per face, `2 * dim` entries.
    pub faces: Vec<FaceTag>,
}

/// Wave speed assignment.
#[derive(Debug, Clone, PartialEq)]
pub enum Speeds {
    Uniform(f64),
    /// One value per block in linear block order.
    PerBlock(Vec<f64>),
}

/// Input to [`build_domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub dim: usize,
    /// `(lo, hi)` per axis.
    pub extents: Vec<(f64, f64)>,
    /// Blocks per axis.
    pub partition: Vec<usize>,
    /// Grid points per axis per block.
    pub n: usize,
    pub speeds: Speeds,
    /// Tags of the `2 * dim` outer faces of the box.
    pub outer: Vec<FaceTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiblockDomain {
    pub dim: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub partition: [usize; 3],
    pub n: usize,
    pub h: f64,
    pub blocks: Vec<Block>,
    /// Tags of the outer box faces.
    pub outer: Vec<FaceTag>,
}

/// Points per wavelength `2 pi c / (omega h)`.
pub fn ppw(c: f64, omega: f64, h: f64) -> f64 {
    2.0 * PI * c / (omega * h)
}

/// Validate a configuration and build the tagged block partition.
pub fn build_domain(cfg: &DomainConfig) -> Result<MultiblockDomain> {
    let dim = cfg.dim;
    if dim != 2 && dim != 3 {
        return Err(Error::Domain(format!("dimension must be 2 or 3, got {dim}")));
    }
    if cfg.extents.len() != dim || cfg.partition.len() != dim {
        return Err(Error::Domain("extents and partition need one entry per axis".into()));
    }
    if cfg.outer.len() != 2 * dim {
        return Err(Error::Domain(format!("need {} outer face tags", 2 * dim)));
    }
    if cfg.outer.iter().any(|t| matches!(t, FaceTag::Interface { .. })) {
        return Err(Error::Domain("outer faces cannot be interfaces".into()));
    }
    if cfg.n < 2 {
        return Err(Error::Domain("need at least two points per block axis".into()));
    }
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    let mut partition = [1; 3];
    let mut h = f64::NAN;
    for a in 0..dim {
        let (l, u) = cfg.extents[a];
        let p = cfg.partition[a];
        if !(u > l) || p == 0 {
            return Err(Error::Domain(format!("axis {a}: empty extent or partition")));
        }
        let ha = (u - l) / p as f64 / (cfg.n - 1) as f64;
        if h.is_nan() {
            h = ha;
        } else if (ha - h).abs() > 1e-10 * h {
            return Err(Error::Domain(format!(
                "misaligned grids: spacing {ha} on axis {a} differs from {h}"
            )));
        }
        lo[a] = l;
        hi[a] = u;
        partition[a] = p;
    }
    let nblocks: usize = partition.iter().product();
    let speeds = match &cfg.speeds {
        Speeds::Uniform(c) => vec![*c; nblocks],
        Speeds::PerBlock(v) => {
            if v.len() != nblocks {
                return Err(Error::Domain(format!("need {nblocks} wave speeds, got {}", v.len())));
            }
            v.clone()
        }
    };
    let mut blocks = Vec::with_capacity(nblocks);
    for id in 0..nblocks {
        let index = block_index(&partition, id);
        let mut faces = Vec::with_capacity(2 * dim);
        for a in 0..dim {
            for side in 0..2 {
                let at_boundary = if side == 0 { index[a] == 0 } else { index[a] + 1 == partition[a] };
                if at_boundary {
                    faces.push(cfg.outer[2 * a + side]);
                } else {
                    let mut nb = index;
                    if side == 0 {
                        nb[a] -= 1
                    } else {
                        nb[a] += 1
                    }
                    faces.push(FaceTag::Interface { neighbor: block_id(&partition, nb) });
                }
            }
        }
        blocks.push(Block { index, c: speeds[id], faces });
    }
    let d = MultiblockDomain { dim, lo, hi, partition, n: cfg.n, h, blocks, outer: cfg.outer.clone() };
    d.validate()?;
    Ok(d)
}

fn block_index(p: &[usize; 3], id: usize) -> [usize; 3] {
    [id % p[0], (id / p[0]) % p[1], id / (p[0] * p[1])]
}

fn block_id(p: &[usize; 3], idx: [usize; 3]) -> usize {
    idx[0] + p[0] * (idx[1] + p[1] * idx[2])
}

impl MultiblockDomain {
    /// Check tags, speeds and interface consistency.
    pub fn validate(&self) -> Result<()> {
        let nb = self.blocks.len();
        if nb != self.partition.iter().product::<usize>() {
            return Err(Error::Domain("block count does not match the partition".into()));
        }
        for (id, b) in self.blocks.iter().enumerate() {
            if !(b.c > 0.0 && b.c.is_finite()) {
                return Err(Error::Domain(format!("block {id}: wave speed must be positive")));
            }
            if b.faces.len() != 2 * self.dim {
                return Err(Error::Domain(format!("block {id}: need {} face tags", 2 * self.dim)));
            }
            if b.index != block_index(&self.partition, id) {
                return Err(Error::Domain(format!("block {id}: index does not match position")));
            }
            for (f, tag) in b.faces.iter().enumerate() {
                let (axis, side) = (f / 2, f % 2);
                if let FaceTag::Interface { neighbor } = *tag {
                    if neighbor >= nb {
                        return Err(Error::Domain(format!("block {id}: neighbour {neighbor} out of range")));
                    }
                    let other = &self.blocks[neighbor];
                    let mut expect = b.index;
                    let ok = if side == 0 {
                        expect[axis] > 0 && {
                            expect[axis] -= 1;
                            true
                        }
                    } else {
                        expect[axis] += 1;
                        expect[axis] < self.partition[axis]
                    };
                    if !ok || other.index != expect {
                        return Err(Error::Domain(format!(
                            "block {id} face {f}: interface with non-adjacent block {neighbor}"
                        )));
                    }
                    let back = other.faces[2 * axis + (1 - side)];
                    if back != (FaceTag::Interface { neighbor: id }) {
                        return Err(Error::Domain(format!(
                            "block {id} face {f}: neighbour {neighbor} does not reference it back"
                        )));
                    }
                } else if self.dim == 2 && *tag == FaceTag::Damped {
                    return Err(Error::Domain("damped faces are only available in 3D".into()));
                }
            }
        }
        Ok(())
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Edge length of a block along `axis`.
    pub fn block_edge(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.partition[axis] as f64
    }

    /// Grid coordinates of block `id` along `axis`.
    pub fn coords(&self, id: usize, axis: usize) -> Vec<f64> {
        let start = self.lo[axis] + self.blocks[id].index[axis] as f64 * self.block_edge(axis);
        (0..self.n).map(|i| start + i as f64 * self.h).collect()
    }

    /// Points per wavelength in block `id` at frequency `omega`.
    pub fn ppw(&self, id: usize, omega: f64) -> f64 {
        ppw(self.blocks[id].c, omega, self.h)
    }

    /// Total number of grid points (interfaces counted once per block).
    pub fn num_points(&self) -> usize {
        self.blocks.len() * self.n.pow(self.dim as u32)
    }
}

/// Source kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Narrow Gaussian forcing term.
    GaussianPoint,
    /// Time-harmonic Dirichlet data from the free-space Green's function.
    GreensDirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// Centre (unused coordinates ignored in 2D); may lie outside the domain.
    pub center: [f64; 3],
    /// Angular frequency.
    pub omega: f64,
}

impl SourceSpec {
    /// Gaussian width `1 / (2 omega)`.
    pub fn width(&self) -> f64 {
        1.0 / (2.0 * self.omega)
    }

    /// Amplitude `-1/delta^2` and one factor `exp(-(x - x0)^2 / delta^2)` per axis.
    fn gaussian_factors(&self, d: &MultiblockDomain, id: usize) -> (f64, Vec<Vec<f64>>) {
        let delta = self.width();
        let amp = -1.0 / (delta * delta);
        let f = (0..d.dim)
            .map(|a| {
                d.coords(id, a)
                    .iter()
                    .map(|x| (-(x - self.center[a]).powi(2) / (delta * delta)).exp())
                    .collect()
            })
            .collect();
        (amp, f)
    }

    /// Direct pointwise evaluation of the Gaussian.
    pub fn gaussian_at(&self, x: &[f64]) -> f64 {
        let delta = self.width();
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        -(-r2 / (delta * delta)).exp() / (delta * delta)
    }
}

/// Rank-one factored Gaussian forcing on a 2D block.
pub fn gaussian_source_lowrank(spec: &SourceSpec, d: &MultiblockDomain, id: usize) -> LowRankMatrix {
    assert_eq!(d.dim, 2);
    let (amp, f) = spec.gaussian_factors(d, id);
    LowRankMatrix::rank1(&f[0], &f[1], amp)
}

/// Rank-(1,1,1,1) Gaussian forcing on a 3D block.
pub fn gaussian_source_tt(spec: &SourceSpec, d: &MultiblockDomain, id: usize) -> TensorTrain {
    assert_eq!(d.dim, 3);
    let (amp, f) = spec.gaussian_factors(d, id);
    if f.iter().any(|v| v.iter().all(|&x| x == 0.0)) {
        return TensorTrain::zeros([d.n; 3]);
    }
    TensorTrain::rank1(&f[0], &f[1], &f[2], amp)
}

/// Dense grid evaluation of the Gaussian on a 2D block.
pub fn gaussian_source_dense(spec: &SourceSpec, d: &MultiblockDomain, id: usize) -> Mat<f64> {
    let (x, y) = (d.coords(id, 0), d.coords(id, 1));
    Mat::from_fn(d.n, d.n, |i, j| spec.gaussian_at(&[x[i], y[j]]))
}

/// Free-space Green's function `exp(i omega r) / (4 pi r)` at one point as `(re, im)`.
pub fn greens_value(spec: &SourceSpec, x: &[f64]) -> Result<(f64, f64)> {
    let r = x.iter().zip(&spec.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if r <= 1e-14 {
        return Err(Error::InvalidArgument("Green's function centre lies on a grid point".into()));
    }
    let m = 1.0 / (4.0 * PI * r);
    let ph = spec.omega * r;
    Ok((m * ph.cos(), m * ph.sin()))
}

/// Green's function on a 2D block as `(real, imaginary)` grid functions.
pub fn greens_function_2d(spec: &SourceSpec, d: &MultiblockDomain, id: usize) -> Result<(Mat<f64>, Mat<f64>)> {
    let (x, y) = (d.coords(id, 0), d.coords(id, 1));
    let mut re = Mat::zeros(d.n, d.n);
    let mut im = Mat::zeros(d.n, d.n);
    for j in 0..d.n {
        for i in 0..d.n {
            let (a, b) = greens_value(spec, &[x[i], y[j]])?;
            re[(i, j)] = a;
            im[(i, j)] = b;
        }
    }
    Ok((re, im))
}

/// Green's function sampled on an arbitrary list of points.
pub fn greens_function(spec: &SourceSpec, points: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut re = Vec::with_capacity(points.len());
    let mut im = Vec::with_capacity(points.len());
    for p in points {
        let (a, b) = greens_value(spec, p)?;
        re.push(a);
        im.push(b);
    }
    Ok((re, im))
}

/// Rank of the truncated complex Green's function on a 2D block: the number
/// of singular values kept by the tail rule at absolute tolerance `eps`.
pub fn greens_rank_2d(spec: &SourceSpec, d: &MultiblockDomain, id: usize, eps: f64) -> Result<usize> {
    let (re, im) = greens_function_2d(spec, d, id)?;
    let g = Mat::<c64>::from_fn(d.n, d.n, |i, j| c64::new(re[(i, j)], im[(i, j)]));
    let svd = g.thin_svd().map_err(|_| Error::Singular("SVD failed to converge".into()))?;
    let s: Vec<f64> = (0..d.n).map(|i| svd.S()[i].re).collect();
    Ok(crate::lowrank::truncation_rank(&s, eps))
}
