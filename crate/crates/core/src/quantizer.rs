//! K-Means codebook training and nearest-code lookup.
//!
//! A segment embedding maps to the index of its nearest centroid under
//! squared Euclidean distance; that index is the segment's semantic id.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synth::SegmentEvent;

/// Semantic id: row index into a [`Codebook`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sid(pub u32);

impl Sid {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Trained centroid table.
///
/// Centroids are stored in single precision so that the on-disk form is the
/// in-memory form and a save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<f32>,
    size: usize,
    dim: usize,
    train_inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub size: usize,
    pub max_iters: usize,
    /// Stop once the relative inertia improvement drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(size: usize, seed: u64) -> Self {
        KMeansParams {
            size,
            max_iters: 100,
            tol: 1e-7,
            seed,
        }
    }
}

/// State after one Lloyd iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydStep {
    /// Assignments computed against the centroids entering this iteration.
    pub assignments: Vec<usize>,
    /// Inertia of those assignments against those centroids.
    pub inertia: f64,
    /// Whether the empty-cluster repair fired.
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansTrace {
    pub initial_centroids: Vec<Vec<f64>>,
    pub steps: Vec<LloydStep>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn argmin_dist(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding: first centroid uniform, each next one drawn with
/// probability proportional to squared distance from the chosen set.
fn kmeanspp<R: Rng>(rng: &mut R, points: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = dist.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if target < acc && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // Every point already coincides with a centroid.
            rng.gen_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Trains a codebook with k-means++ seeding and Lloyd iterations.
pub fn train_kmeans(points: &[Vec<f64>], params: &KMeansParams) -> Result<Codebook> {
    train_kmeans_traced(points, params).map(|(cb, _)| cb)
}

/// Like [`train_kmeans`], also returning the seeding and every iteration's
/// assignments and inertia.
pub fn train_kmeans_traced(
    points: &[Vec<f64>],
    params: &KMeansParams,
) -> Result<(Codebook, KMeansTrace)> {
    let k = params.size;
    if points.is_empty() {
        return Err(Error::Empty("k-means input"));
    }
    if k == 0 || params.max_iters == 0 || !(params.tol >= 0.0) {
        return Err(Error::invalid("k-means needs size ≥ 1, max_iters ≥ 1, tol ≥ 0"));
    }
    if points.len() < k {
        return Err(Error::invalid(format!(
            "{} points cannot fill {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("k-means points must share a positive dimension"));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("k-means input"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeanspp(&mut rng, points, k);
    let initial_centroids = centroids.clone();
    let mut steps: Vec<LloydStep> = Vec::new();
    let mut prev_inertia = f64::INFINITY;

    for _ in 0..params.max_iters {
        let mut assignments = Vec::with_capacity(points.len());
        let mut inertia = 0.0;
        for p in points {
            let (i, d) = argmin_dist(p, &centroids);
            assignments.push(i);
            inertia += d;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut repaired = false;
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / n).collect();
            }
        }
        // Re-seed empty clusters at the point farthest from its nearest
        // centroid so every code stays live.
        for c in 0..k {
            if counts[c] == 0 {
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, argmin_dist(p, &centroids).1))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                centroids[c] = points[far.0].clone();
                repaired = true;
            }
        }

        let improvement = prev_inertia - inertia;
        steps.push(LloydStep {
            assignments,
            inertia,
            repaired,
        });
        if prev_inertia.is_finite() && !repaired {
            let rel = if prev_inertia > 0.0 {
                improvement / prev_inertia
            } else {
                0.0
            };
            if rel < params.tol {
                break;
            }
        }
        prev_inertia = inertia;
    }

    let cb = Codebook::from_f64_rows(&centroids)?;
    let final_inertia = points.iter().map(|p| cb.distance_to_nearest(p)).sum();
    Ok((cb.with_inertia(final_inertia), KMeansTrace { initial_centroids, steps }))
}

impl Codebook {
    pub fn new(size: usize, dim: usize, centroids: Vec<f32>, train_inertia: f64) -> Result<Self> {
        if size == 0 || dim == 0 {
            return Err(Error::invalid("codebook needs N ≥ 1 and d ≥ 1"));
        }
        if centroids.len() != size * dim {
            return Err(Error::ShapeMismatch {
                op: "codebook",
                left: vec![size, dim],
                right: vec![centroids.len()],
            });
        }
        if centroids.iter().any(|x| !x.is_finite()) || !train_inertia.is_finite() || train_inertia < 0.0 {
            return Err(Error::NonFinite("codebook"));
        }
        Ok(Codebook {
            centroids,
            size,
            dim,
            train_inertia,
        })
    }

    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("ragged centroid rows"));
        }
        let flat = rows.iter().flatten().map(|&x| x as f32).collect();
        Codebook::new(rows.len(), dim, flat, 0.0)
    }

    fn with_inertia(mut self, inertia: f64) -> Self {
        self.train_inertia = inertia;
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn train_inertia(&self) -> f64 {
        self.train_inertia
    }

    pub fn centroid(&self, sid: Sid) -> &[f32] {
        let i = sid.index();
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centroid_f64(&self, sid: Sid) -> Vec<f64> {
        self.centroid(sid).iter().map(|&x| f64::from(x)).collect()
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.size).map(|i| self.centroid_f64(Sid(i as u32))).collect()
    }

    fn sq_dist_to(&self, e: &[f64], i: usize) -> f64 {
        self.centroids[i * self.dim..(i + 1) * self.dim]
            .iter()
            .zip(e)
            .map(|(&c, x)| {
                let d = x - f64::from(c);
                d * d
            })
            .sum()
    }

    fn distance_to_nearest(&self, e: &[f64]) -> f64 {
        (0..self.size)
            .map(|i| self.sq_dist_to(e, i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest centroid by squared Euclidean distance, lowest index on ties.
    pub fn nearest_code(&self, e: &[f64]) -> Result<Sid> {
        if e.len() != self.dim {
            return Err(Error::ShapeMismatch {
                op: "nearest_code",
                left: vec![self.dim],
                right: vec![e.len()],
            });
        }
        let mut best = (0, f64::INFINITY);
        for i in 0..self.size {
            let d = self.sq_dist_to(e, i);
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(Sid(best.0 as u32))
    }

    /// SHA-256 of the serialized codebook, hex encoded.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        crate::numerics::checkpoint::hex(&Sha256::digest(self.to_bytes()))
    }

    /// File layout, little-endian: `b"FSCB"`, version u32, N u32, d u32,
    /// N·d f32 row-major, train_inertia f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 4 * self.centroids.len() + 8);
        buf.extend_from_slice(CODEBOOK_MAGIC);
        buf.extend_from_slice(&CODEBOOK_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.size as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for x in &self.centroids {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        buf.extend_from_slice(&self.train_inertia.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != CODEBOOK_MAGIC {
            return Err(Error::format("bad codebook magic"));
        }
        let word = |p: usize| u32::from_le_bytes(bytes[p..p + 4].try_into().unwrap());
        if word(4) != CODEBOOK_VERSION {
            return Err(Error::format(format!("unsupported codebook version {}", word(4))));
        }
        let (size, dim) = (word(8) as usize, word(12) as usize);
        let expected = size
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(16 + 8))
            .ok_or_else(|| Error::format("codebook header overflow"))?;
        if bytes.len() != expected {
            return Err(Error::format(format!(
                "codebook is {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let centroids = bytes[16..expected - 8]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let inertia = f64::from_le_bytes(bytes[expected - 8..].try_into().unwrap());
        Codebook::new(size, dim, centroids, inertia)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Codebook::from_bytes(&fs::read(path)?)
    }
}

const CODEBOOK_MAGIC: &[u8; 4] = b"FSCB";
const CODEBOOK_VERSION: u32 = 1;

/// One quantized segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizedSegment {
    pub author_id: u64,
    pub seq_index: u64,
    pub sid: Sid,
}

/// Order-preserving map of [`Codebook::nearest_code`] over a segment list.
pub fn quantize_stream<'a, I>(events: I, codebook: &Codebook) -> Result<Vec<QuantizedSegment>>
where
    I: IntoIterator<Item = &'a SegmentEvent>,
{
    events
        .into_iter()
        .map(|e| {
            Ok(QuantizedSegment {
                author_id: e.author_id,
                seq_index: e.seq_index,
                sid: codebook.nearest_code(&e.embedding)?,
            })
        })
        .collect()
}
