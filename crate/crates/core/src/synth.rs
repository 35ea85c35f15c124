//! Synthetic `(L*, S*, M*)` instances.
//!
//! `L* = U Vᵀ` with `U, V` (`d x r`) filled with i.i.d. standard normals, `S*`
//! has exactly `floor(alpha * d)` nonzeros per row (whenever the column cap
//! allows it) and at most that many per column, with values uniform on
//! `[-c * mean|L*|, c * mean|L*|]`.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64(case.seed)`.
//! Sample `i` of a dataset uses stream `i` of that generator, so sample 0 of a
//! dataset equals [`gen_case`] on the same case. Within a sample, `U` then `V`
//! are drawn in column-major order, followed by the support and values.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, MatrixFormat};
use crate::DenseMatrix;

pub const PRESET_DIM: usize = 250;
pub const PRESET_RANK: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthCase {
    pub d: usize,
    pub r: usize,
    pub alpha: f64,
    pub c: f64,
    pub seed: u64,
}

impl SynthCase {
    pub fn new(d: usize, r: usize, alpha: f64, c: f64, seed: u64) -> Self {
        SynthCase {
            d,
            r,
            alpha,
            c,
            seed,
        }
    }

    /// The four benchmark settings at `d = 250`, `r = 2`:
    /// 1: (0.1, 1), 2: (0.3, 1), 3: (0.01, 1), 4: (0.1, 10).
    pub fn preset(id: u32, seed: u64) -> Result<Self> {
        let (alpha, c) = match id {
            1 => (0.1, 1.0),
            2 => (0.3, 1.0),
            3 => (0.01, 1.0),
            4 => (0.1, 10.0),
            _ => return Err(Error::InvalidConfig(format!("unknown case {id}"))),
        };
        Ok(SynthCase::new(PRESET_DIM, PRESET_RANK, alpha, c, seed))
    }

    /// Per-row and per-column nonzero cap `floor(alpha * d)`.
    pub fn cap(&self) -> usize {
        (self.alpha * self.d as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be >= 1".into()));
        }
        if self.r > self.d {
            return Err(Error::InvalidConfig(format!(
                "rank {} exceeds dimension {}",
                self.r, self.d
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "c must be > 0, got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// Generator for dataset sample `index`.
    pub fn rng(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTriple {
    pub l_star: DenseMatrix,
    pub s_star: DenseMatrix,
    pub m_star: DenseMatrix,
    /// Nonzero positions of `s_star`, sorted row-major.
    pub support: Vec<(usize, usize)>,
}

/// `U Vᵀ` with standard-normal factors; `r = 0` gives the zero matrix.
pub fn gen_low_rank<R: Rng>(d: usize, r: usize, rng: &mut R) -> DenseMatrix {
    if r == 0 {
        return DMatrix::zeros(d, d);
    }
    let u: DenseMatrix = DMatrix::from_fn(d, r, |_, _| rng.sample(StandardNormal));
    let v: DenseMatrix = DMatrix::from_fn(d, r, |_, _| rng.sample(StandardNormal));
    u * v.transpose()
}

/// Samples a support with `floor(alpha * d)` entries per row (column counts
/// capped likewise) and uniform values scaled by `c * mean|L*|`.
pub fn gen_sparse<R: Rng>(
    d: usize,
    alpha: f64,
    c: f64,
    l_star: &DenseMatrix,
    rng: &mut R,
) -> Result<(DenseMatrix, Vec<(usize, usize)>)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if l_star.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "L* is {:?}, expected {d}x{d}",
            l_star.shape()
        )));
    }
    let cap = (alpha * d as f64).floor() as usize;
    if cap == 0 {
        return Err(Error::InfeasibleSupport { requested: 1 });
    }
    let amplitude = l_star.iter().map(|v| v.abs()).sum::<f64>() / (d * d) as f64;
    if amplitude == 0.0 {
        return Err(Error::InvalidConfig("L* is identically zero".into()));
    }

    let support = sample_capped_support(d, cap, rng);
    let mut s = DMatrix::zeros(d, d);
    for &(i, j) in &support {
        let u = loop {
            let u: f64 = rng.random_range(-1.0..=1.0);
            if u != 0.0 {
                break u;
            }
        };
        s[(i, j)] = c * (u * amplitude);
    }
    let mut sorted = support;
    sorted.sort_unstable();
    Ok((s, sorted))
}

/// Draws cells uniformly from those whose row and column are both below
/// `cap` and that are still unused, until every row holds `cap` cells or no
/// such cell remains. Returned in draw order.
fn sample_capped_support<R: Rng>(d: usize, cap: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut row_count = vec![0usize; d];
    let mut col_count = vec![0usize; d];
    let mut open_rows: Vec<usize> = (0..d).collect();
    let mut open_cols: Vec<usize> = (0..d).collect();
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut out = Vec::with_capacity(cap * d);
    let target = cap.min(d) * d;

    while out.len() < target && !open_rows.is_empty() && !open_cols.is_empty() {
        // A uniform pair over open rows x open cols, rejected when used, is
        // uniform over the feasible cells.
        let mut pick = None;
        for _ in 0..64 {
            let i = open_rows[rng.random_range(0..open_rows.len())];
            let j = open_cols[rng.random_range(0..open_cols.len())];
            if !used.contains(&(i, j)) {
                pick = Some((i, j));
                break;
            }
        }
        let (i, j) = match pick {
            Some(cell) => cell,
            None => {
                let feasible: Vec<(usize, usize)> = open_rows
                    .iter()
                    .flat_map(|&i| open_cols.iter().map(move |&j| (i, j)))
                    .filter(|cell| !used.contains(cell))
                    .collect();
                if feasible.is_empty() {
                    break;
                }
                feasible[rng.random_range(0..feasible.len())]
            }
        };
        used.insert((i, j));
        out.push((i, j));
        row_count[i] += 1;
        col_count[j] += 1;
        if row_count[i] == cap {
            open_rows.retain(|&x| x != i);
        }
        if col_count[j] == cap {
            open_cols.retain(|&x| x != j);
        }
    }
    out
}

fn gen_with_rng(case: &SynthCase, rng: &mut ChaCha20Rng) -> Result<SynthTriple> {
    case.validate()?;
    let l_star = gen_low_rank(case.d, case.r, rng);
    let (s_star, support) = gen_sparse(case.d, case.alpha, case.c, &l_star, rng)?;
    let m_star = &l_star + &s_star;
    Ok(SynthTriple {
        l_star,
        s_star,
        m_star,
        support,
    })
}

pub fn gen_case(case: &SynthCase) -> Result<SynthTriple> {
    gen_with_rng(case, &mut case.rng(0))
}

/// Sample `index` of the dataset generated from `case`.
pub fn gen_sample(case: &SynthCase, index: u64) -> Result<SynthTriple> {
    gen_with_rng(case, &mut case.rng(index))
}

/// `total` samples split into the first `train` and the remaining `total - train`.
pub fn gen_dataset(
    case: &SynthCase,
    total: usize,
    train: usize,
) -> Result<(Vec<SynthTriple>, Vec<SynthTriple>)> {
    if train > total {
        return Err(Error::InvalidConfig(format!(
            "train split {train} exceeds total {total}"
        )));
    }
    let mut all = (0..total as u64)
        .into_par_iter()
        .map(|i| gen_sample(case, i))
        .collect::<Result<Vec<_>>>()?;
    let test = all.split_off(train);
    Ok((all, test))
}

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    pub split: Split,
    /// Directory relative to the dataset root holding `M.bin`, `L.bin`, `S.bin`.
    pub dir: String,
}

/// On-disk dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub case: SynthCase,
    pub total: usize,
    pub train: usize,
    pub stream_rule: String,
    pub samples: Vec<SampleEntry>,
}

/// A dataset sample loaded from disk.
#[derive(Debug, Clone)]
pub struct StoredSample {
    pub index: usize,
    pub m: DenseMatrix,
    pub l: DenseMatrix,
    pub s: DenseMatrix,
}

fn sample_dir(split: Split, index: usize) -> String {
    match split {
        Split::Train => format!("train/{index:04}"),
        Split::Test => format!("test/{index:04}"),
    }
}

/// Writes `train` and `test` under `root` with a manifest.
pub fn save_dataset(
    root: &Path,
    case: &SynthCase,
    train: &[SynthTriple],
    test: &[SynthTriple],
) -> Result<DatasetManifest> {
    let mut samples = Vec::with_capacity(train.len() + test.len());
    let tagged = train
        .iter()
        .map(|t| (Split::Train, t))
        .chain(test.iter().map(|t| (Split::Test, t)));
    for (index, (split, triple)) in tagged.enumerate() {
        let rel = sample_dir(split, index);
        let dir = root.join(&rel);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        io::save_matrix(&triple.m_star, dir.join("M.bin"), MatrixFormat::Binary)?;
        io::save_matrix(&triple.l_star, dir.join("L.bin"), MatrixFormat::Binary)?;
        io::save_matrix(&triple.s_star, dir.join("S.bin"), MatrixFormat::Binary)?;
        samples.push(SampleEntry {
            index,
            split,
            dir: rel,
        });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        case: *case,
        total: train.len() + test.len(),
        train: train.len(),
        stream_rule: "ChaCha20Rng::seed_from_u64(seed), stream = sample index".into(),
        samples,
    };
    let path = root.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Loads every sample of one split, in index order.
pub fn load_split(root: &Path, split: Split) -> Result<Vec<StoredSample>> {
    let manifest = load_manifest(root)?;
    manifest
        .samples
        .iter()
        .filter(|e| e.split == split)
        .map(|e| {
            let dir: PathBuf = root.join(&e.dir);
            Ok(StoredSample {
                index: e.index,
                m: io::load_matrix(dir.join("M.bin"), MatrixFormat::Binary)?,
                l: io::load_matrix(dir.join("L.bin"), MatrixFormat::Binary)?,
                s: io::load_matrix(dir.join("S.bin"), MatrixFormat::Binary)?,
            })
        })
        .collect()
}
