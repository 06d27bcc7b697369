//! Benchmark data: random low-rank targets, non-uniform sampling, noise,
//! accuracy metrics and the MovieLens / Jester rating readers.

use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obskernel::{FactorPair, Matrix, ObservationSet};

/// Row/column sampling profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Uniform,
    /// Weights 2 on the first tenth of indices, 4 on the next tenth, 1 elsewhere.
    One,
    /// Weights 3, 9 and 1 on the same segments.
    Two,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "uniform" => Ok(Scheme::Uniform),
            "1" => Ok(Scheme::One),
            "2" => Ok(Scheme::Two),
            other => Err(Error::InvalidConfig(format!("unknown sampling scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Exactly `ceil(sr * total)` entries without replacement.
    ExactCount,
    /// Independent inclusion with probability `min(1, sr * total * weight)`.
    Bernoulli,
}

/// `Z = left * right^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankTarget {
    pub left: Matrix,
    pub right: Matrix,
}

impl LowRankTarget {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.left.row(i).dot(&self.right.row(j))
    }

    pub fn dense(&self) -> Matrix {
        &self.left * self.right.transpose()
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }
}

#[derive(Debug, Clone)]
pub enum Truth {
    LowRank(LowRankTarget),
    /// Only the given entries are known.
    Given(ObservationSet),
}

/// A completion problem together with what it should recover.
#[derive(Debug, Clone)]
pub struct TargetInstance {
    pub m: usize,
    pub n: usize,
    pub truth: Truth,
    pub observed: ObservationSet,
    pub rating_range: Option<(f64, f64)>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub re: Option<f64>,
    pub nmae: Option<f64>,
}

impl TargetInstance {
    pub fn evaluate(&self, pair: &FactorPair) -> Result<Metrics> {
        match &self.truth {
            Truth::LowRank(t) => Ok(Metrics { re: Some(relative_error(pair, t)?), nmae: None }),
            Truth::Given(given) => {
                let (lo, hi) = self.rating_range.unwrap_or((0.0, 1.0));
                Ok(Metrics { re: None, nmae: Some(nmae(pair, given, &self.observed, lo, hi)?) })
            }
        }
    }
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Square `n x n` target of rank `rank` with standard normal factors.
pub fn gen_target(n: usize, rank: usize, seed: u64) -> Result<LowRankTarget> {
    if rank == 0 || rank > n {
        return Err(Error::InvalidConfig(format!("rank {rank} must lie in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let left = normal_matrix(n, rank, &mut rng);
    let right = normal_matrix(n, rank, &mut rng);
    Ok(LowRankTarget { left, right })
}

/// Normalized per-index sampling probabilities (indices counted from 1).
pub fn sampling_probs(n: usize, scheme: Scheme) -> Vec<f64> {
    let (head, next) = match scheme {
        Scheme::Uniform => (1.0, 1.0),
        Scheme::One => (2.0, 4.0),
        Scheme::Two => (3.0, 9.0),
    };
    let w: Vec<f64> = (1..=n)
        .map(|k| {
            if 10 * k <= n {
                head
            } else if 5 * k <= n {
                next
            } else {
                1.0
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// `ceil(sr * total)`, treating values within 1e-9 of an integer as that integer.
pub fn sample_count(sr: f64, total: usize) -> Result<usize> {
    if !(sr > 0.0 && sr <= 1.0) {
        return Err(Error::SrTooLarge(sr));
    }
    let x = sr * total as f64;
    let c = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
    Ok((c as usize).min(total))
}

/// Indices of `count` items drawn without replacement with probability
/// proportional to `weights` (exponential-key method).
pub fn weighted_sample(weights: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if count >= weights.len() {
        return (0..weights.len()).collect();
    }
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(t, &w)| {
            let u: f64 = rng.random::<f64>();
            let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
            (u.ln() / w, t)
        })
        .collect();
    keys.select_nth_unstable_by(count, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = keys[..count].iter().map(|k| k.1).collect();
    chosen.sort_unstable();
    chosen
}

fn bernoulli_sample(weights: &[f64], expected: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .enumerate()
        .filter_map(|(t, &w)| {
            let p = (expected * w / total).min(1.0);
            (rng.random::<f64>() < p).then_some(t)
        })
        .collect()
}

/// Observed index set for an `m x n` matrix, sampling entry `(k, l)` with
/// weight `p_rows[k] * p_cols[l]`. Pairs come back sorted row-major.
pub fn sample_mask(
    m: usize,
    n: usize,
    p_rows: &[f64],
    p_cols: &[f64],
    sr: f64,
    seed: u64,
    mode: SamplingMode,
) -> Result<Vec<(usize, usize)>> {
    if p_rows.len() != m || p_cols.len() != n {
        return Err(Error::ShapeMismatch("probability vectors do not match the matrix".into()));
    }
    let count = sample_count(sr, m * n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..m * n).map(|t| p_rows[t / n] * p_cols[t % n]).collect();
    let picked = match mode {
        SamplingMode::ExactCount => weighted_sample(&weights, count, &mut rng),
        SamplingMode::Bernoulli => bernoulli_sample(&weights, sr * (m * n) as f64, &mut rng),
    };
    Ok(picked.into_iter().map(|t| (t / n, t % n)).collect())
}

/// `clean + sigma * |clean| * xi / |xi|` with `xi` standard normal.
pub fn add_noise(clean: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if sigma < 0.0 {
        return Err(Error::NegativeInput(sigma));
    }
    if sigma == 0.0 || clean.is_empty() {
        return Ok(clean.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi: Vec<f64> = (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let xn = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let zn = clean.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(clean.iter().zip(&xi).map(|(z, e)| z + sigma * zn * e / xn).collect())
}

/// Parameters of one synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub rank: usize,
    pub sr: f64,
    pub noise: f64,
    pub scheme: Scheme,
    pub mode: SamplingMode,
    pub seed: u64,
}

pub fn synthetic_instance(spec: &SynthSpec) -> Result<TargetInstance> {
    // independent streams for factors, mask and noise
    let target = gen_target(spec.n, spec.rank, spec.seed)?;
    let p = sampling_probs(spec.n, spec.scheme);
    let mask = sample_mask(spec.n, spec.n, &p, &p, spec.sr, spec.seed ^ 0x5eed_0001, spec.mode)?;
    let clean: Vec<f64> = mask.iter().map(|&(i, j)| target.entry(i, j)).collect();
    let noisy = add_noise(&clean, spec.noise, spec.seed ^ 0x5eed_0002)?;
    let trip: Vec<(usize, usize, f64)> = mask.iter().zip(&noisy).map(|(&(i, j), &v)| (i, j, v)).collect();
    let observed = ObservationSet::from_triplets(spec.n, spec.n, &trip)?;
    Ok(TargetInstance {
        m: spec.n,
        n: spec.n,
        truth: Truth::LowRank(target),
        observed,
        rating_range: None,
        label: format!("synthetic n={} rank={} sr={} noise={}", spec.n, spec.rank, spec.sr, spec.noise),
    })
}

/// `|X Y^T - Z|_F / |Z|_F`, accumulated over row blocks.
pub fn relative_error(pair: &FactorPair, target: &LowRankTarget) -> Result<f64> {
    let m = target.left.nrows();
    let n = target.right.nrows();
    if pair.x.nrows() != m || pair.y.nrows() != n {
        return Err(Error::ShapeMismatch("output and target shapes differ".into()));
    }
    let block = 128;
    let yt = pair.y.transpose();
    let rt = target.right.transpose();
    let (mut num, mut den) = (0.0, 0.0);
    let mut start = 0;
    while start < m {
        let rows = block.min(m - start);
        let out = pair.x.rows(start, rows) * &yt;
        let truth = target.left.rows(start, rows) * &rt;
        num += (&out - &truth).norm_squared();
        den += truth.norm_squared();
        start += rows;
    }
    if den == 0.0 {
        return Err(Error::InsufficientData("target is zero".into()));
    }
    Ok((num / den).sqrt())
}

/// Mean absolute error on the given-but-unobserved entries, divided by the
/// rating range.
pub fn nmae(pair: &FactorPair, given: &ObservationSet, observed: &ObservationSet, r_min: f64, r_max: f64) -> Result<f64> {
    if r_max <= r_min {
        return Err(Error::InvalidConfig("rating range is empty".into()));
    }
    if pair.x.nrows() != given.m() || pair.y.nrows() != given.n() {
        return Err(Error::ShapeMismatch("output and data shapes differ".into()));
    }
    let (mut total, mut count) = (0.0, 0usize);
    let mut o = 0;
    let (orows, ocols) = (observed.rows(), observed.cols());
    for (i, j, v) in given.iter() {
        while o < observed.len() && (orows[o], ocols[o]) < (i, j) {
            o += 1;
        }
        if o < observed.len() && (orows[o], ocols[o]) == (i, j) {
            continue;
        }
        total += (pair.x.row(i).dot(&pair.y.row(j)) - v).abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyHoldout);
    }
    Ok(total / (count as f64 * (r_max - r_min)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingFormat {
    Movielens100k,
    Movielens1m,
    JesterCsv,
}

impl std::str::FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_100k" | "ml100k" => Ok(RatingFormat::Movielens100k),
            "movielens_1m" | "ml1m" => Ok(RatingFormat::Movielens1m),
            "jester_csv" | "jester" => Ok(RatingFormat::JesterCsv),
            other => Err(Error::InvalidConfig(format!("unknown rating format {other:?}"))),
        }
    }
}

impl RatingFormat {
    pub fn range(self) -> (f64, f64) {
        match self {
            RatingFormat::JesterCsv => (-10.0, 10.0),
            _ => (1.0, 5.0),
        }
    }
}

/// An incomplete rating matrix as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Ratings {
    pub m: usize,
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
    pub r_min: f64,
    pub r_max: f64,
}

pub fn load_ratings(path: &Path, format: RatingFormat) -> Result<Ratings> {
    let file = std::fs::File::open(path)?;
    parse_ratings(std::io::BufReader::new(file), format)
}

const JESTER_MISSING: f64 = 99.0;
const JESTER_JOKES: usize = 100;

pub fn parse_ratings<R: BufRead>(reader: R, format: RatingFormat) -> Result<Ratings> {
    let (r_min, r_max) = format.range();
    let mut entries = Vec::new();
    let (mut m, mut n) = (0usize, 0usize);
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse { line: lineno, msg: msg.to_string() };
        match format {
            RatingFormat::Movielens100k | RatingFormat::Movielens1m => {
                let fields: Vec<&str> = match format {
                    RatingFormat::Movielens100k => line.split('\t').collect(),
                    _ => line.split("::").collect(),
                };
                if fields.len() < 3 {
                    return Err(bad("expected user, item and rating fields"));
                }
                let user: usize = fields[0].trim().parse().map_err(|_| bad("bad user id"))?;
                let item: usize = fields[1].trim().parse().map_err(|_| bad("bad item id"))?;
                let rating: f64 = fields[2].trim().parse().map_err(|_| bad("bad rating"))?;
                if user == 0 || item == 0 {
                    return Err(bad("ids are 1-based"));
                }
                if !(r_min..=r_max).contains(&rating) {
                    return Err(Error::RatingOutOfRange { line: lineno, value: rating });
                }
                m = m.max(user);
                n = n.max(item);
                entries.push((user - 1, item - 1, rating));
            }
            RatingFormat::JesterCsv => {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != JESTER_JOKES + 1 {
                    return Err(bad("expected 101 comma-separated fields"));
                }
                let user = m;
                for (j, f) in fields[1..].iter().enumerate() {
                    let v: f64 = f.trim().parse().map_err(|_| bad("bad rating"))?;
                    if v == JESTER_MISSING {
                        continue;
                    }
                    if !(r_min..=r_max).contains(&v) {
                        return Err(Error::RatingOutOfRange { line: lineno, value: v });
                    }
                    entries.push((user, j, v));
                }
                m += 1;
                n = JESTER_JOKES;
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::InsufficientData("no ratings found".into()));
    }
    Ok(Ratings { m, n, entries, r_min, r_max })
}

/// How to cut a benchmark instance out of a rating matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub rows: usize,
    /// `None` keeps every column.
    pub cols: Option<usize>,
    pub scheme: Scheme,
    pub sr: f64,
    /// Shuffle each selected row's ratings across the columns.
    pub permute_rows: bool,
    pub seed: u64,
}

/// Random rows (and columns) of a rating matrix, with the observed set drawn
/// from the given ratings by the sampling scheme.
pub fn subsample_real(ratings: &Ratings, spec: &SubsampleSpec) -> Result<TargetInstance> {
    let ncols = spec.cols.unwrap_or(ratings.n);
    if spec.rows == 0 || spec.rows > ratings.m || ncols == 0 || ncols > ratings.n {
        return Err(Error::InsufficientData(format!(
            "cannot select {}x{} from a {}x{} rating matrix",
            spec.rows, ncols, ratings.m, ratings.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut row_ids: Vec<usize> = (0..ratings.m).collect();
    row_ids.shuffle(&mut rng);
    row_ids.truncate(spec.rows);
    let mut col_ids: Vec<usize> = (0..ratings.n).collect();
    if spec.cols.is_some() {
        col_ids.shuffle(&mut rng);
        col_ids.truncate(ncols);
    }
    let mut row_pos = vec![usize::MAX; ratings.m];
    for (p, &r) in row_ids.iter().enumerate() {
        row_pos[r] = p;
    }
    let mut col_pos = vec![usize::MAX; ratings.n];
    for (p, &c) in col_ids.iter().enumerate() {
        col_pos[c] = p;
    }
    let mut given: Vec<(usize, usize, f64)> = ratings
        .entries
        .iter()
        .filter(|&&(i, j, _)| row_pos[i] != usize::MAX && col_pos[j] != usize::MAX)
        .map(|&(i, j, v)| (row_pos[i], col_pos[j], v))
        .collect();
    if given.is_empty() {
        return Err(Error::InsufficientData("selected rows and columns hold no ratings".into()));
    }
    if spec.permute_rows {
        given.sort_by_key(|a| (a.0, a.1));
        let mut perm: Vec<usize> = (0..ncols).collect();
        let mut start = 0;
        while start < given.len() {
            let row = given[start].0;
            let end = start + given[start..].iter().take_while(|e| e.0 == row).count();
            perm.shuffle(&mut rng);
            for e in &mut given[start..end] {
                e.1 = perm[e.1];
            }
            start = end;
        }
    }
    let given = ObservationSet::from_triplets(spec.rows, ncols, &given)?;
    let pr = sampling_probs(spec.rows, spec.scheme);
    let pc = sampling_probs(ncols, spec.scheme);
    let weights: Vec<f64> = given.iter().map(|(i, j, _)| pr[i] * pc[j]).collect();
    let count = sample_count(spec.sr, given.len())?;
    let picked = weighted_sample(&weights, count, &mut rng);
    let trip: Vec<(usize, usize, f64)> = picked.iter().map(|&t| (given.rows()[t], given.cols()[t], given.values()[t])).collect();
    let observed = ObservationSet::from_triplets(spec.rows, ncols, &trip)?;
    Ok(TargetInstance {
        m: spec.rows,
        n: ncols,
        truth: Truth::Given(given),
        observed,
        rating_range: Some((ratings.r_min, ratings.r_max)),
        label: format!("ratings {}x{} sr={}", spec.rows, ncols, spec.sr),
    })
}
