//! Fold-in inference: estimate topic proportions for held-out documents
//! against a trained model whose topics stay fixed.
//!
//! Each document is folded in independently with its own generator stream
//! derived from the batch seed and the document id, so results do not
//! depend on how a batch is composed or ordered.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::sampler::TrainedModel;

/// How token-topic weights are computed while resampling held-out tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldInMode {
    /// Weight topics by the point-estimate rows of φ.
    FrozenPhi,
    /// Weight topics by the smoothed frozen training counts,
    /// `(n̂_tw + β) / (n̂_t + V·β)`, without adding held-out tokens to them.
    /// Requires a model trained in-process (counts are not persisted).
    FrozenCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldInResult {
    pub doc_ids: Vec<String>,
    /// One row per held-out document, rows sum to 1.
    pub thetas: Vec<Vec<f64>>,
    pub sweeps: usize,
}

/// Fold held-out documents in against frozen φ (the default mode).
pub fn fold_in(
    model: &TrainedModel,
    heldout: &Corpus,
    sweeps: usize,
    seed: u64,
) -> Result<FoldInResult> {
    fold_in_with_mode(model, heldout, sweeps, seed, FoldInMode::FrozenPhi)
}

pub fn fold_in_with_mode(
    model: &TrainedModel,
    heldout: &Corpus,
    sweeps: usize,
    seed: u64,
    mode: FoldInMode,
) -> Result<FoldInResult> {
    if sweeps == 0 {
        return Err(Error::Config("fold-in needs at least one sweep".into()));
    }
    let names = heldout.modality_names();
    if names != model.modality_names {
        return Err(Error::Validation(format!(
            "held-out modalities {:?} do not match the model's {:?}",
            names, model.modality_names
        )));
    }
    for (m, name) in names.iter().enumerate() {
        if heldout.vocabulary(m).size() != model.vocab_size(m) {
            return Err(Error::Dimension(format!(
                "modality '{name}' has vocabulary {} but the model expects {}",
                heldout.vocabulary(m).size(),
                model.vocab_size(m)
            )));
        }
    }
    let counts = match mode {
        FoldInMode::FrozenPhi => None,
        FoldInMode::FrozenCounts => Some(model.counts.as_ref().ok_or_else(|| {
            Error::Config(
                "count-based fold-in needs the training counts, which loaded models do not carry"
                    .into(),
            )
        })?),
    };

    let t_count = model.topic_count();
    let alpha = &model.hyper.alpha;
    let alpha_sum: f64 = alpha.iter().sum();

    let mut doc_ids = Vec::with_capacity(heldout.doc_count());
    let mut thetas = Vec::with_capacity(heldout.doc_count());
    for doc in heldout.documents() {
        let mut rng = rng_from(derive_seed(seed, &doc.doc_id));

        // Expand bags to token lists and assign uniform topics.
        let mut words: Vec<Vec<u32>> = Vec::with_capacity(names.len());
        let mut topics: Vec<Vec<usize>> = Vec::with_capacity(names.len());
        let mut doc_topic = vec![0u32; t_count];
        let mut total_tokens = 0u64;
        for bag in &doc.counts {
            let mut block = Vec::new();
            for (&w, &c) in bag {
                for _ in 0..c {
                    block.push(w);
                }
            }
            let assigned: Vec<usize> = block.iter().map(|_| rng.gen_range(0..t_count)).collect();
            for &t in &assigned {
                doc_topic[t] += 1;
                total_tokens += 1;
            }
            words.push(block);
            topics.push(assigned);
        }

        let weight = |m: usize, t: usize, w: u32| -> f64 {
            match counts {
                None => model.phi[m][t][w as usize],
                Some(c) => {
                    let v = c.vocab_sizes[m];
                    let beta = model.hyper.beta[m];
                    (c.topic_word[m][t * v + w as usize] as f64 + beta)
                        / (c.topic_totals[m][t] as f64 + v as f64 * beta)
                }
            }
        };

        let mut masses = vec![0.0f64; t_count];
        for _ in 0..sweeps {
            for m in 0..names.len() {
                for i in 0..words[m].len() {
                    let w = words[m][i];
                    let t_old = topics[m][i];
                    doc_topic[t_old] -= 1;
                    let mut total = 0.0;
                    for t in 0..t_count {
                        let mass = (doc_topic[t] as f64 + alpha[t]) * weight(m, t, w);
                        masses[t] = mass;
                        total += mass;
                    }
                    if !(total > 0.0) || !total.is_finite() {
                        return Err(Error::Validation(format!(
                            "word {w} of modality '{}' has no topic with positive weight",
                            names[m]
                        )));
                    }
                    let u = rng.gen::<f64>() * total;
                    let mut acc = 0.0;
                    let mut t_new = t_count - 1;
                    for (t, &mass) in masses.iter().enumerate() {
                        acc += mass;
                        if u < acc {
                            t_new = t;
                            break;
                        }
                    }
                    topics[m][i] = t_new;
                    doc_topic[t_new] += 1;
                }
            }
        }

        let den = total_tokens as f64 + alpha_sum;
        let theta: Vec<f64> = (0..t_count)
            .map(|t| (doc_topic[t] as f64 + alpha[t]) / den)
            .collect();
        doc_ids.push(doc.doc_id.clone());
        thetas.push(theta);
    }
    Ok(FoldInResult {
        doc_ids,
        thetas,
        sweeps,
    })
}

impl FoldInResult {
    /// `doc_id,t0,…` rows, same layout as a trained model's theta table.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let t_count = self.thetas.first().map_or(0, Vec::len);
        let mut body = String::from("doc_id");
        for t in 0..t_count {
            body.push_str(&format!(",t{t}"));
        }
        body.push('\n');
        for (id, row) in self.doc_ids.iter().zip(&self.thetas) {
            body.push_str(id);
            for v in row {
                body.push_str(&format!(",{v}"));
            }
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Read a `doc_id,t0,…` table back as (ids, rows).
pub fn read_theta_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, line) in body.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts
            .next()
            .ok_or_else(|| Error::parse(path, idx + 1, "missing doc_id"))?;
        let row: Vec<f64> = parts
            .map(|p| {
                p.parse()
                    .map_err(|_| Error::parse(path, idx + 1, format!("bad value '{p}'")))
            })
            .collect::<Result<_>>()?;
        if row.is_empty() {
            return Err(Error::parse(path, idx + 1, "row has no values"));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("row has {} values, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        ids.push(id.to_string());
        rows.push(row);
    }
    Ok((ids, rows))
}
