//! Prior-graph constructors: anatomical neighborhoods from a 3-D label
//! volume, node-only and fully connected graphs, 2-D lattices, and random
//! graphs matched in edge count.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::model::{GraphKind, PriorGraph};
use crate::rng;

/// 3-D integer segmentation, `0` meaning background. Stored row-major with
/// the last axis fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    dims: [usize; 3],
    labels: Vec<u32>,
    voxel_counts: BTreeMap<u32, usize>,
}

impl LabelVolume {
    pub fn new(dims: [usize; 3], labels: Vec<u32>) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!("volume dimensions must be positive, got {dims:?}")));
        }
        let total = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::InvalidArgument("volume too large".into()))?;
        if labels.len() != total {
            return Err(Error::Dimension(format!(
                "{} labels for a {}x{}x{} volume",
                labels.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        let mut voxel_counts = BTreeMap::new();
        for &l in &labels {
            if l != 0 {
                *voxel_counts.entry(l).or_insert(0) += 1;
            }
        }
        Ok(LabelVolume {
            dims,
            labels,
            voxel_counts,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_counts(&self) -> &BTreeMap<u32, usize> {
        &self.voxel_counts
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u32 {
        self.labels[(x * self.dims[1] + y) * self.dims[2] + z]
    }

    /// Reads the binary layout: three little-endian `i32` dimensions followed
    /// by the row-major `i32` labels.
    pub fn read_from<R: Read>(mut reader: R) -> Result<Self> {
        let mut word = [0u8; 4];
        let mut read_i32 = |what: &str| -> Result<i32> {
            reader
                .read_exact(&mut word)
                .map_err(|_| Error::Parse(format!("label volume truncated while reading {what}")))?;
            Ok(i32::from_le_bytes(word))
        };
        let mut dims = [0usize; 3];
        for (axis, slot) in dims.iter_mut().enumerate() {
            let v = read_i32("header")?;
            if v <= 0 {
                return Err(Error::Parse(format!("axis {axis} has non-positive size {v}")));
            }
            *slot = v as usize;
        }
        let total = dims[0] * dims[1] * dims[2];
        let mut labels = Vec::with_capacity(total);
        for _ in 0..total {
            let v = read_i32("labels")?;
            if v < 0 {
                return Err(Error::Parse(format!("negative label {v}")));
            }
            labels.push(v as u32);
        }
        LabelVolume::new(dims, labels)
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        let mut buf = Vec::with_capacity(4 * (3 + self.labels.len()));
        for &n in &self.dims {
            buf.extend_from_slice(&(n as i32).to_le_bytes());
        }
        for &l in &self.labels {
            buf.extend_from_slice(&(l as i32).to_le_bytes());
        }
        writer.write_all(&buf).map_err(|e| Error::io("<label volume>", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        LabelVolume::read_from(std::io::BufReader::new(f))
    }
}

/// Neighborhood graph of a segmentation under 26-connectivity.
///
/// Labels with fewer than `min_voxels` voxels are dropped. Surviving labels
/// become nodes in ascending label order (returned alongside the graph); two
/// nodes are joined when any voxel of one lies in the 3×3×3 neighborhood of a
/// voxel of the other.
pub fn neighborhood_graph(vol: &LabelVolume, min_voxels: usize) -> Result<(PriorGraph, Vec<u32>)> {
    let kept: Vec<u32> = vol
        .voxel_counts
        .iter()
        .filter(|(_, &c)| c >= min_voxels)
        .map(|(&l, _)| l)
        .collect();
    if kept.len() < 2 {
        return Err(Error::InvalidGraph(format!(
            "{} label(s) survive the {min_voxels}-voxel threshold, need at least 2",
            kept.len()
        )));
    }
    let node: BTreeMap<u32, usize> = kept.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let [nx, ny, nz] = vol.dims;
    let mut pairs = BTreeSet::new();
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let Some(&a) = node.get(&vol.get(x, y, z)) else {
                    continue;
                };
                // Each unordered voxel pair is visited once via the forward half
                // of the 26-neighborhood.
                for dx in 0..=1i64 {
                    for dy in -1..=1i64 {
                        for dz in -1..=1i64 {
                            if (dx, dy, dz) <= (0, 0, 0) {
                                continue;
                            }
                            let (x2, y2, z2) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if x2 >= nx as i64 || y2 < 0 || y2 >= ny as i64 || z2 < 0 || z2 >= nz as i64 {
                                continue;
                            }
                            let Some(&b) = node.get(&vol.get(x2 as usize, y2 as usize, z2 as usize)) else {
                                continue;
                            };
                            if a != b {
                                pairs.insert((a.min(b), a.max(b)));
                            }
                        }
                    }
                }
            }
        }
    }
    let edges: Vec<(usize, usize)> = pairs.into_iter().collect();
    let graph = PriorGraph::from_edges(kept.len(), &edges, GraphKind::Neighborhood)?;
    Ok((graph, kept))
}

pub fn node_only_graph(d: usize) -> Result<PriorGraph> {
    if d < 1 {
        return Err(Error::InvalidArgument("graph needs d >= 1".into()));
    }
    PriorGraph::from_edges(d, &[], GraphKind::NodeOnly)
}

pub fn full_graph(d: usize) -> Result<PriorGraph> {
    if d < 1 {
        return Err(Error::InvalidArgument("graph needs d >= 1".into()));
    }
    PriorGraph::from_adjacency(Array2::from_elem((d, d), true), GraphKind::Full)
}

/// 4-neighbor grid over `rows × cols` regions numbered row-major.
pub fn lattice_graph(rows: usize, cols: usize) -> Result<PriorGraph> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("lattice needs positive rows and cols".into()));
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
        }
    }
    PriorGraph::from_edges(rows * cols, &edges, GraphKind::Neighborhood)
}

/// Graph on the same nodes with the same number of edges, placed uniformly at
/// random among all `i < j` pairs. The diagonal stays set.
pub fn random_graph_like(g: &PriorGraph, seed: u64) -> Result<PriorGraph> {
    let d = g.dim();
    let m = g.edge_count();
    let total = d * (d - 1) / 2;
    if m > total {
        return Err(Error::InvalidGraph(format!("{m} edges exceed the {total} possible pairs")));
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let mut rng = rng::seeded(seed);
    let edges: Vec<(usize, usize)> = index::sample(&mut rng, total, m)
        .into_iter()
        .map(|k| pairs[k])
        .collect();
    PriorGraph::from_edges(d, &edges, GraphKind::Random)
}
