//! Document-to-document similarity under a trained model.
//!
//! The primary measure scores how well B's topic proportions predict A's
//! observed words: mean per-token log likelihood of A's bags under the
//! mixture `Σ_t φ_tw · θ_Bt`, averaged across modalities by token count.
//! It is asymmetric, and the matrix keeps both directions. Alternative
//! measures compare the two proportion vectors directly.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sampler::TrainedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// Mean per-token predictive log likelihood of A's words under θ_B.
    Predictive,
    /// KL divergence between the proportion vectors (lower is closer).
    Kl,
    Cosine,
    /// Plain inner product of the proportion vectors.
    Inner,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Measure::Predictive => "predictive",
            Measure::Kl => "kl",
            Measure::Cosine => "cosine",
            Measure::Inner => "inner",
        };
        f.write_str(name)
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predictive" => Ok(Measure::Predictive),
            "kl" => Ok(Measure::Kl),
            "cosine" => Ok(Measure::Cosine),
            "inner" => Ok(Measure::Inner),
            other => Err(Error::Config(format!(
                "unknown measure '{other}' (expected predictive, kl, cosine, or inner)"
            ))),
        }
    }
}

/// Score document A's word bags (one per modality) under proportions
/// `theta_b` and the model's φ tables.
pub fn predictive_similarity(
    words_a: &[crate::corpus::WordBag],
    theta_b: &[f64],
    model: &TrainedModel,
) -> Result<f64> {
    if words_a.len() != model.modality_names.len() {
        return Err(Error::Dimension(format!(
            "document has {} modalities, model has {}",
            words_a.len(),
            model.modality_names.len()
        )));
    }
    let mut log_sum = 0.0;
    let mut tokens = 0u64;
    for (m, bag) in words_a.iter().enumerate() {
        for (&w, &c) in bag {
            let mixture: f64 = (0..model.topic_count())
                .map(|t| model.phi[m][t][w as usize] * theta_b[t])
                .sum();
            if !(mixture > 0.0) {
                return Err(Error::UndefinedSimilarity {
                    a: String::new(),
                    b: String::new(),
                    message: format!(
                        "word {w} of modality '{}' has zero probability under the target proportions",
                        model.modality_names[m]
                    ),
                });
            }
            log_sum += c as f64 * mixture.ln();
            tokens += u64::from(c);
        }
    }
    if tokens == 0 {
        return Err(Error::UndefinedSimilarity {
            a: String::new(),
            b: String::new(),
            message: "document has no tokens in any modality".into(),
        });
    }
    Ok(log_sum / tokens as f64)
}

/// Compare two proportion vectors directly. `Predictive` is rejected here
/// because it needs the source document's words, not just its proportions.
pub fn alt_similarity(theta_a: &[f64], theta_b: &[f64], measure: Measure) -> Result<f64> {
    if theta_a.len() != theta_b.len() {
        return Err(Error::Dimension(format!(
            "proportion vectors have lengths {} and {}",
            theta_a.len(),
            theta_b.len()
        )));
    }
    match measure {
        Measure::Predictive => Err(Error::Config(
            "the predictive measure scores word bags, not proportion pairs".into(),
        )),
        Measure::Kl => {
            let mut kl = 0.0;
            for (&a, &b) in theta_a.iter().zip(theta_b) {
                if a < 0.0 || b < 0.0 {
                    return Err(Error::Validation(
                        "proportions must be non-negative".into(),
                    ));
                }
                if a > 0.0 {
                    if b == 0.0 {
                        return Err(Error::UndefinedSimilarity {
                            a: String::new(),
                            b: String::new(),
                            message: "KL divergence is infinite: a supported topic has zero mass in the target".into(),
                        });
                    }
                    kl += a * (a / b).ln();
                }
            }
            Ok(kl)
        }
        Measure::Cosine => {
            let dot: f64 = theta_a.iter().zip(theta_b).map(|(a, b)| a * b).sum();
            let na: f64 = theta_a.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nb: f64 = theta_b.iter().map(|b| b * b).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::UndefinedSimilarity {
                    a: String::new(),
                    b: String::new(),
                    message: "cosine similarity with a zero vector".into(),
                });
            }
            Ok(dot / (na * nb))
        }
        Measure::Inner => Ok(theta_a.iter().zip(theta_b).map(|(a, b)| a * b).sum()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub doc_ids: Vec<String>,
    pub measure: Measure,
    /// Label for which held-out fold produced the matrix, if any.
    pub fold: Option<String>,
    values: Vec<f64>,
    n: usize,
}

impl SimilarityMatrix {
    pub fn new(
        doc_ids: Vec<String>,
        measure: Measure,
        fold: Option<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n = doc_ids.len();
        if values.len() != n * n {
            return Err(Error::Dimension(format!(
                "{} values for a {n}×{n} matrix",
                values.len()
            )));
        }
        Ok(SimilarityMatrix {
            doc_ids,
            measure,
            fold,
            values,
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn manifest_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().map_or_else(String::new, |n| {
            n.to_string_lossy().into_owned()
        });
        name.push_str(".manifest");
        path.with_file_name(name)
    }

    /// Square CSV with document ids along the first row and column, plus a
    /// `<name>.manifest` sidecar recording the measure and fold.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut body = String::from("doc_id");
        for id in &self.doc_ids {
            body.push(',');
            body.push_str(id);
        }
        body.push('\n');
        for (i, id) in self.doc_ids.iter().enumerate() {
            body.push_str(id);
            for j in 0..self.n {
                body.push_str(&format!(",{}", self.get(i, j)));
            }
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))?;

        let manifest_path = Self::manifest_path(path);
        let mut manifest = format!("measure={}\nn={}\n", self.measure, self.n);
        if let Some(fold) = &self.fold {
            manifest.push_str(&format!("fold={fold}\n"));
        }
        fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (doc_ids, values, _) = read_matrix_csv(path)?;
        let manifest_path = Self::manifest_path(path);
        let manifest =
            fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let mut measure = None;
        let mut fold = None;
        for line in manifest.lines() {
            if let Some(v) = line.strip_prefix("measure=") {
                measure = Some(v.parse()?);
            } else if let Some(v) = line.strip_prefix("fold=") {
                fold = Some(v.to_string());
            }
        }
        let measure = measure.ok_or_else(|| {
            Error::parse(&manifest_path, 0, "missing measure=")
        })?;
        SimilarityMatrix::new(doc_ids, measure, fold, values)
    }
}

/// Read any square id-labelled similarity CSV: (ids, row-major values, n).
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>, usize)> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = body.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let header_ids: Vec<&str> = header.split(',').skip(1).collect();
    let n = header_ids.len();
    let mut doc_ids = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * n);
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts
            .next()
            .ok_or_else(|| Error::parse(path, idx + 1, "missing row id"))?;
        doc_ids.push(id.to_string());
        let row: Vec<f64> = parts
            .map(|p| {
                p.parse()
                    .map_err(|_| Error::parse(path, idx + 1, format!("bad value '{p}'")))
            })
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("row has {} values, expected {n}", row.len()),
            ));
        }
        values.extend(row);
    }
    if doc_ids.len() != n {
        return Err(Error::Dimension(format!(
            "{} rows for {n} header columns in {}",
            doc_ids.len(),
            path.display()
        )));
    }
    for (row_id, col_id) in doc_ids.iter().zip(&header_ids) {
        if row_id != col_id {
            return Err(Error::Validation(format!(
                "row ids and column ids disagree ('{row_id}' vs '{col_id}')"
            )));
        }
    }
    Ok((doc_ids, values, n))
}

/// Full pairwise matrix over one held-out fold: entry (i, j) scores
/// document i against document j's proportions. The diagonal is computed
/// like any other entry.
pub fn similarity_matrix(
    heldout: &Corpus,
    doc_ids: &[String],
    thetas: &[Vec<f64>],
    model: &TrainedModel,
    measure: Measure,
) -> Result<SimilarityMatrix> {
    let n = heldout.doc_count();
    if doc_ids != heldout.documents().iter().map(|d| d.doc_id.clone()).collect::<Vec<_>>() {
        return Err(Error::Validation(
            "proportion rows are not aligned with the held-out documents".into(),
        ));
    }
    if thetas.len() != n {
        return Err(Error::Dimension(format!(
            "{} proportion rows for {n} documents",
            thetas.len()
        )));
    }
    let mut values = vec![0.0; n * n];
    match measure {
        Measure::Predictive => {
            let t_count = model.topic_count();
            let modalities = model.modality_names.len();
            // Distinct words present anywhere in the fold, per modality.
            let mut fold_words: Vec<Vec<u32>> = vec![Vec::new(); modalities];
            for (m, words) in fold_words.iter_mut().enumerate() {
                let mut seen = vec![false; model.vocab_size(m)];
                for doc in heldout.documents() {
                    for &w in doc.counts[m].keys() {
                        seen[w as usize] = true;
                    }
                }
                words.extend((0..seen.len() as u32).filter(|&w| seen[w as usize]));
            }
            let mut mixtures: Vec<Vec<f64>> = (0..modalities)
                .map(|m| vec![0.0; model.vocab_size(m)])
                .collect();
            for j in 0..n {
                let theta_b = &thetas[j];
                for m in 0..modalities {
                    for &w in &fold_words[m] {
                        mixtures[m][w as usize] = (0..t_count)
                            .map(|t| model.phi[m][t][w as usize] * theta_b[t])
                            .sum();
                    }
                }
                for i in 0..n {
                    let doc = heldout.document(i);
                    let mut log_sum = 0.0;
                    let mut tokens = 0u64;
                    let mut dead_word = None;
                    for m in 0..modalities {
                        for (&w, &c) in &doc.counts[m] {
                            let mixture = mixtures[m][w as usize];
                            if !(mixture > 0.0) {
                                dead_word = Some((m, w));
                                break;
                            }
                            log_sum += c as f64 * mixture.ln();
                            tokens += u64::from(c);
                        }
                        if dead_word.is_some() {
                            break;
                        }
                    }
                    if let Some((m, w)) = dead_word {
                        return Err(Error::UndefinedSimilarity {
                            a: doc.doc_id.clone(),
                            b: heldout.document(j).doc_id.clone(),
                            message: format!(
                                "word {w} of modality '{}' has zero probability",
                                model.modality_names[m]
                            ),
                        });
                    }
                    if tokens == 0 {
                        return Err(Error::UndefinedSimilarity {
                            a: doc.doc_id.clone(),
                            b: heldout.document(j).doc_id.clone(),
                            message: "document has no tokens in any modality".into(),
                        });
                    }
                    values[i * n + j] = log_sum / tokens as f64;
                }
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    values[i * n + j] =
                        alt_similarity(&thetas[i], &thetas[j], measure).map_err(|e| match e {
                            Error::UndefinedSimilarity { message, .. } => {
                                Error::UndefinedSimilarity {
                                    a: heldout.document(i).doc_id.clone(),
                                    b: heldout.document(j).doc_id.clone(),
                                    message,
                                }
                            }
                            other => other,
                        })?;
                }
            }
        }
    }
    SimilarityMatrix::new(doc_ids.to_vec(), measure, None, values)
}
