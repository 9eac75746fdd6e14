//! Inverted-file index: spherical k-means coarse quantizer plus posting lists.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{dot_f32, KnowledgeBase, Neighbor, StoreError, TopK};
use crate::par::{self, ExecMode};

/// Upper bound on Lloyd iterations.
pub const KMEANS_MAX_ITERS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IvfParams {
    pub nlist: usize,
    /// Default probe count stored with the index.
    pub nprobe: usize,
    pub seed: u64,
}

impl IvfParams {
    pub fn new(nlist: usize) -> Self {
        Self { nlist, nprobe: ((nlist as f64).sqrt().ceil() as usize).max(1), seed: 0 }
    }

    pub fn with_nprobe(mut self, nprobe: usize) -> Self {
        self.nprobe = nprobe;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    pub(crate) nlist: usize,
    pub(crate) nprobe: usize,
    pub(crate) seed: u64,
    /// Row-major `nlist x dim`, unit rows.
    pub(crate) centroids: Vec<f32>,
    pub(crate) lists: Vec<Vec<u32>>,
}

fn nearest_centroid(centroids: &[f32], dim: usize, v: &[f32]) -> usize {
    let mut best = 0;
    let mut best_sim = f32::NEG_INFINITY;
    for (c, row) in centroids.chunks_exact(dim).enumerate() {
        let s = dot_f32(row, v);
        if s > best_sim {
            best_sim = s;
            best = c;
        }
    }
    best
}

impl IvfIndex {
    /// Seeded spherical k-means over the database keys. `nlist` is clamped to
    /// the record count. Empty clusters are re-seeded with the record that is
    /// worst served by its current centroid.
    pub fn build(kb: &KnowledgeBase, params: IvfParams, mode: ExecMode) -> Result<Self, StoreError> {
        if params.nlist == 0 {
            return Err(StoreError::BadNlist);
        }
        let m = kb.len();
        let dim = kb.dim();
        let nlist = params.nlist.min(m);
        let nprobe = params.nprobe.clamp(1, nlist);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut centroids: Vec<f32> = Vec::with_capacity(nlist * dim);
        let mut seeds: Vec<usize> = sample(&mut rng, m, nlist).into_vec();
        seeds.sort_unstable();
        for &s in &seeds {
            centroids.extend_from_slice(kb.key(s));
        }

        let mut assign: Vec<usize> = vec![usize::MAX; m];
        for _ in 0..KMEANS_MAX_ITERS {
            let next = par::map_range(mode, m, |i| nearest_centroid(&centroids, dim, kb.key(i)));
            let changed = next != assign;
            assign = next;
            if !changed {
                break;
            }
            let mut sums = vec![0.0f64; nlist * dim];
            let mut counts = vec![0usize; nlist];
            for (i, &c) in assign.iter().enumerate() {
                counts[c] += 1;
                for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(kb.key(i)) {
                    *s += v as f64;
                }
            }
            for c in 0..nlist {
                let row = &sums[c * dim..(c + 1) * dim];
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if counts[c] > 0 && norm > 0.0 {
                    for (dst, &s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(row) {
                        *dst = (s / norm) as f32;
                    }
                }
            }
            for c in 0..nlist {
                if counts[c] == 0 {
                    let worst = (0..m)
                        .min_by(|&a, &b| {
                            let sa = dot_f32(&centroids[assign[a] * dim..(assign[a] + 1) * dim], kb.key(a));
                            let sb = dot_f32(&centroids[assign[b] * dim..(assign[b] + 1) * dim], kb.key(b));
                            sa.total_cmp(&sb).then(a.cmp(&b))
                        })
                        .unwrap_or(0);
                    centroids[c * dim..(c + 1) * dim].copy_from_slice(kb.key(worst));
                    assign[worst] = c;
                }
            }
        }
        let assign = par::map_range(mode, m, |i| nearest_centroid(&centroids, dim, kb.key(i)));
        let mut lists = vec![Vec::new(); nlist];
        for (i, c) in assign.into_iter().enumerate() {
            lists[c].push(i as u32);
        }
        Ok(Self { nlist, nprobe, seed: params.seed, centroids, lists })
    }

    pub fn nlist(&self) -> usize {
        self.nlist
    }

    pub fn nprobe(&self) -> usize {
        self.nprobe
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// The `nprobe` centroids most similar to `query`, ties by lower id.
    pub fn probe_order(&self, query: &[f32], nprobe: usize) -> Vec<usize> {
        let dim = query.len();
        let mut top = TopK::new(nprobe.min(self.nlist));
        for (c, row) in self.centroids.chunks_exact(dim).enumerate() {
            top.push(dot_f32(row, query), c as u32);
        }
        top.into_vec().into_iter().map(|(_, c)| c as usize).collect()
    }
}

/// Exact scan restricted to the posting lists of the `nprobe` nearest
/// centroids. Candidates are visited in ascending record id, so with
/// `nprobe == nlist` the result equals [`super::knn_exact`] bit for bit.
pub fn knn_ivf(kb: &KnowledgeBase, query: &[f32], k: usize, nprobe: usize) -> Result<Vec<Neighbor>, StoreError> {
    let index = kb.index().ok_or(StoreError::IndexMissing)?;
    if nprobe == 0 || nprobe > index.nlist {
        return Err(StoreError::BadNprobe { nprobe, nlist: index.nlist });
    }
    kb.check_query(query, k)?;
    let mut candidates: Vec<u32> =
        index.probe_order(query, nprobe).into_iter().flat_map(|c| index.lists[c].iter().copied()).collect();
    candidates.sort_unstable();
    let mut top = TopK::new(k.min(candidates.len()).max(1));
    for id in candidates {
        top.push(dot_f32(kb.key(id as usize), query), id);
    }
    Ok(kb.neighbors(top))
}
