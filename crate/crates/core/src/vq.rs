//! Vector quantization of continuous feature vectors into a discrete
//! bag-of-words modality: k-means++ seeding, Lloyd refinement, and nearest-
//! centroid quantization. Several codebooks can be concatenated into one
//! vocabulary with offset id ranges ([`CodebookSet`]).

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use crate::corpus::{Vocabulary, WordBag};
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<Vec<f64>>,
    dim: usize,
    seed: u64,
    /// Mean squared distance of the training points to their nearest
    /// centroid. Set by fitting; absent on codebooks loaded from disk
    /// (the persisted format does not carry it).
    distortion: Option<f64>,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn distortion(&self) -> Option<f64> {
        self.distortion
    }

    /// Persist as CSV: one `K d seed` header line, then one centroid per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("{} {} {}\n", self.k(), self.dim, self.seed);
        for c in &self.centroids {
            let fields: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Codebook> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty file, expected 'K d seed' header"))?;
        let header = header.map_err(|e| Error::io(path, e))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::parse(
                path,
                1,
                format!("header must be 'K d seed', got '{header}'"),
            ));
        }
        let k: usize = parts[0]
            .parse()
            .map_err(|_| Error::parse(path, 1, format!("bad K '{}'", parts[0])))?;
        let dim: usize = parts[1]
            .parse()
            .map_err(|_| Error::parse(path, 1, format!("bad d '{}'", parts[1])))?;
        let seed: u64 = parts[2]
            .parse()
            .map_err(|_| Error::parse(path, 1, format!("bad seed '{}'", parts[2])))?;
        let mut centroids = Vec::with_capacity(k);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse()
                        .map_err(|_| Error::parse(path, lineno, format!("bad value '{f}'")))
                })
                .collect::<Result<_>>()?;
            if row.len() != dim {
                return Err(Error::Dimension(format!(
                    "{}:{lineno}: centroid has {} values, header says d={dim}",
                    path.display(),
                    row.len()
                )));
            }
            centroids.push(row);
        }
        if centroids.len() != k {
            return Err(Error::Validation(format!(
                "{}: header declares K={k} but file has {} centroids",
                path.display(),
                centroids.len()
            )));
        }
        Ok(Codebook {
            centroids,
            dim,
            seed,
            distortion: None,
        })
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by Euclidean distance; ties resolve to the lowest id.
fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, point);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    (best, best_d)
}

fn validate_points(points: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = points.first() else {
        return Err(Error::Validation("empty point set".into()));
    };
    let dim = first.len();
    if dim == 0 {
        return Err(Error::Validation("zero-dimensional points".into()));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::Dimension(format!(
                "point {i} has dimension {}, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("point {i} is not finite")));
        }
    }
    Ok(dim)
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let keys: BTreeSet<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect())
        .collect();
    keys.len()
}

/// Fit a codebook with k-means++ seeding and Lloyd iterations.
///
/// Stops when the relative distortion improvement drops below `tol` or after
/// `max_iters` assignment/update rounds. Deterministic given the seed.
pub fn fit_codebook(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Codebook> {
    fit_codebook_traced(points, k, seed, max_iters, tol).map(|(cb, _)| cb)
}

/// [`fit_codebook`] plus the per-iteration distortion trace.
pub fn fit_codebook_traced(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<(Codebook, Vec<f64>)> {
    let dim = validate_points(points)?;
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::Config(format!("tol must be >= 0, got {tol}")));
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::Validation(format!(
            "K={k} exceeds the {distinct} distinct points"
        )));
    }
    let mut rng = rng_from(seed);

    // k-means++: first centroid uniform, then proportional to squared
    // distance from the nearest chosen centroid. Duplicates of chosen
    // points carry zero mass, so centroids start distinct.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut dist2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = 0;
            for (i, &d) in dist2.iter().enumerate() {
                u -= d;
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
                chosen = i;
            }
            chosen
        } else {
            // All residual mass zero yet k <= distinct: pick the first
            // point not already a centroid.
            (0..points.len())
                .find(|&i| !centroids.iter().any(|c| c == &points[i]))
                .expect("distinct count guarantees an unchosen point")
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p, centroids.last().unwrap());
            if d < dist2[i] {
                dist2[i] = d;
            }
        }
    }

    let mut assignment = vec![0usize; points.len()];
    let mut trace = Vec::new();
    let mut previous = f64::INFINITY;
    for _ in 0..max_iters {
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(&centroids, p);
            assignment[i] = c;
            total += d;
        }
        let distortion = total / points.len() as f64;
        trace.push(distortion);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            sizes[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, (sum, &size)) in centroids.iter_mut().zip(sums.iter().zip(&sizes)) {
            if size > 0 {
                for (ci, si) in c.iter_mut().zip(sum) {
                    *ci = si / size as f64;
                }
            }
        }
        // Empty-cluster repair: reseed at the point farthest from its own
        // (updated) centroid, one point per empty cluster.
        let mut taken = BTreeSet::new();
        for cluster in 0..k {
            if sizes[cluster] > 0 {
                continue;
            }
            let mut farthest: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                if taken.contains(&i) {
                    continue;
                }
                let d = squared_distance(p, &centroids[assignment[i]]);
                if farthest.map_or(true, |(_, best)| d > best) {
                    farthest = Some((i, d));
                }
            }
            if let Some((i, _)) = farthest {
                taken.insert(i);
                centroids[cluster] = points[i].clone();
            }
        }

        if previous.is_finite() {
            let improvement = (previous - distortion) / previous.max(f64::MIN_POSITIVE);
            if improvement < tol {
                break;
            }
        }
        previous = distortion;
    }

    let final_distortion = points
        .iter()
        .map(|p| nearest(&centroids, p).1)
        .sum::<f64>()
        / points.len() as f64;
    if trace.is_empty() {
        trace.push(final_distortion);
    }
    Ok((
        Codebook {
            centroids,
            dim,
            seed,
            distortion: Some(final_distortion),
        },
        trace,
    ))
}

/// Map each feature vector to its nearest centroid id and count occurrences.
pub fn quantize(codebook: &Codebook, features: &[Vec<f64>]) -> Result<WordBag> {
    let mut bag = WordBag::new();
    for (i, f) in features.iter().enumerate() {
        if f.len() != codebook.dim {
            return Err(Error::Dimension(format!(
                "feature {i} has dimension {}, codebook expects {}",
                f.len(),
                codebook.dim
            )));
        }
        let (id, _) = nearest(&codebook.centroids, f);
        *bag.entry(id as u32).or_insert(0) += 1;
    }
    Ok(bag)
}

/// Several codebooks concatenated into one vocabulary: family `i`'s word ids
/// are offset by the total size of families before it.
#[derive(Debug, Clone)]
pub struct CodebookSet {
    books: Vec<Codebook>,
}

impl CodebookSet {
    pub fn new(books: Vec<Codebook>) -> Result<Self> {
        if books.is_empty() {
            return Err(Error::Validation("codebook set is empty".into()));
        }
        Ok(CodebookSet { books })
    }

    pub fn books(&self) -> &[Codebook] {
        &self.books
    }

    pub fn total_words(&self) -> usize {
        self.books.iter().map(Codebook::k).sum()
    }

    pub fn offsets(&self) -> Vec<u32> {
        let mut offsets = Vec::with_capacity(self.books.len());
        let mut acc = 0u32;
        for b in &self.books {
            offsets.push(acc);
            acc += b.k() as u32;
        }
        offsets
    }

    /// Quantize one family of feature vectors per codebook and merge the
    /// bags under the offset ids.
    pub fn quantize(&self, features_per_family: &[Vec<Vec<f64>>]) -> Result<WordBag> {
        if features_per_family.len() != self.books.len() {
            return Err(Error::Dimension(format!(
                "{} feature families for {} codebooks",
                features_per_family.len(),
                self.books.len()
            )));
        }
        let mut merged = WordBag::new();
        for ((book, features), offset) in
            self.books.iter().zip(features_per_family).zip(self.offsets())
        {
            for (w, c) in quantize(book, features)? {
                *merged.entry(w + offset).or_insert(0) += c;
            }
        }
        Ok(merged)
    }

    /// Numbered vocabulary covering the concatenated id range.
    pub fn vocabulary(&self, modality_name: &str) -> Result<Vocabulary> {
        Vocabulary::numbered(modality_name, self.total_words())
    }
}

/// One feature vector per line; fields split on commas when present,
/// whitespace otherwise.
pub fn load_feature_vectors(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vectors = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        vectors.push(parse_vector(&line, path, lineno)?);
    }
    Ok(vectors)
}

/// Lines of `track_id,v1,...,vd`; multiple lines per track accumulate.
pub fn load_tracked_features(path: &Path) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut features: std::collections::BTreeMap<String, Vec<Vec<f64>>> = Default::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, lineno, "expected 'track_id,v1,...,vd'"))?;
        let id = id.trim().to_string();
        let vector = parse_vector(rest, path, lineno)?;
        if !features.contains_key(&id) {
            order.push(id.clone());
        }
        features.entry(id).or_default().push(vector);
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let v = features.remove(&id).unwrap();
            (id, v)
        })
        .collect())
}

fn parse_vector(line: &str, path: &Path, lineno: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = if line.contains(',') {
        line.split(',').collect()
    } else {
        line.split_whitespace().collect()
    };
    fields
        .iter()
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad value '{}'", f.trim())))
        })
        .collect()
}
