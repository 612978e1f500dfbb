//! Collapsed Gibbs training of the multi-modal topic model.
//!
//! All modalities of a document share one topic-proportion vector, so a
//! single doc-topic count table spans every modality while each modality
//! keeps its own topic-word table. Sweeps resample every token from the
//! collapsed conditional
//!
//! ```text
//! p(t) ∝ (n_dt + α_t) · (n_tw + β) / (n_t + V·β)
//! ```
//!
//! decomposed into smoothing/document/word buckets so only nonzero counts
//! are walked. Dirichlet hyperparameters (asymmetric α shared across
//! documents, symmetric β per modality) are optimized by fixed-point
//! updates, and the trained model is the Dirichlet-expectation point
//! estimate of the best-evidence state in the final window of the chain.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::math::{digamma, ln_gamma};
use crate::rng::rng_from;

/// Fixed-point updates never push a hyperparameter below this.
pub const HYPER_FLOOR: f64 = 1e-10;

const TOKEN_UNASSIGNED: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Per-topic Dirichlet parameter of the document-topic prior.
    pub alpha: Vec<f64>,
    /// Symmetric topic-word parameter, one per modality.
    pub beta: Vec<f64>,
}

impl Hyperparams {
    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() {
            return Err(Error::Validation("alpha vector is empty".into()));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Validation("alpha entries must be positive finite".into()));
        }
        if self.beta.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::Validation("beta entries must be positive finite".into()));
        }
        Ok(())
    }
}

/// Tokens of one (document, modality) block, expanded from the count bag.
#[derive(Debug, Clone)]
struct TokenBlock {
    words: Vec<u32>,
    topics: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct ModelState {
    doc_ids: Vec<String>,
    modality_names: Vec<String>,
    vocab_sizes: Vec<usize>,
    blocks: Vec<Vec<TokenBlock>>,
    /// n_dt over tokens of all modalities.
    doc_topic: Vec<Vec<u32>>,
    /// N_d across modalities (constant once initialized).
    doc_totals: Vec<u64>,
    /// Per modality, flat T×V table n_tw.
    topic_word: Vec<Vec<u32>>,
    /// Per modality, n_t.
    topic_totals: Vec<Vec<u32>>,
    hyper: Hyperparams,
    rng: ChaCha8Rng,
    seed: u64,
    iteration: usize,
}

/// Assign every token a uniformly random topic and build the count tables.
///
/// The prior starts at α_t = alpha_init/T per component and β = beta_init
/// for every modality.
pub fn init_state(
    corpus: &Corpus,
    topics: usize,
    seed: u64,
    alpha_init: f64,
    beta_init: f64,
) -> Result<ModelState> {
    if topics == 0 {
        return Err(Error::Config("T must be at least 1".into()));
    }
    if corpus.doc_count() == 0 {
        return Err(Error::Validation("corpus has no documents".into()));
    }
    if !(alpha_init > 0.0) || !(beta_init > 0.0) {
        return Err(Error::Config(format!(
            "alpha_init and beta_init must be positive, got {alpha_init}, {beta_init}"
        )));
    }
    let modalities = corpus.modality_count();
    let vocab_sizes: Vec<usize> = (0..modalities).map(|m| corpus.vocabulary(m).size()).collect();
    let mut rng = rng_from(seed);

    let mut state = ModelState {
        doc_ids: corpus.documents().iter().map(|d| d.doc_id.clone()).collect(),
        modality_names: corpus.modality_names(),
        vocab_sizes: vocab_sizes.clone(),
        blocks: Vec::with_capacity(corpus.doc_count()),
        doc_topic: vec![vec![0; topics]; corpus.doc_count()],
        doc_totals: vec![0; corpus.doc_count()],
        topic_word: vocab_sizes.iter().map(|&v| vec![0; topics * v]).collect(),
        topic_totals: vec![vec![0; topics]; modalities],
        hyper: Hyperparams {
            alpha: vec![alpha_init / topics as f64; topics],
            beta: vec![beta_init; modalities],
        },
        rng: rng_from(seed),
        seed,
        iteration: 0,
    };

    for (d, doc) in corpus.documents().iter().enumerate() {
        let mut doc_blocks = Vec::with_capacity(modalities);
        for m in 0..modalities {
            let mut words = Vec::new();
            for (&w, &c) in &doc.counts[m] {
                for _ in 0..c {
                    words.push(w);
                }
            }
            let topics_vec: Vec<u32> = words
                .iter()
                .map(|_| rng.gen_range(0..topics) as u32)
                .collect();
            for (&w, &t) in words.iter().zip(&topics_vec) {
                state.doc_topic[d][t as usize] += 1;
                state.topic_word[m][t as usize * vocab_sizes[m] + w as usize] += 1;
                state.topic_totals[m][t as usize] += 1;
                state.doc_totals[d] += 1;
            }
            doc_blocks.push(TokenBlock {
                words,
                topics: topics_vec,
            });
        }
        state.blocks.push(doc_blocks);
    }
    // The init draws came from a scratch generator; the state's own stream
    // starts after them so that sweeps do not replay initialization noise.
    state.rng = rng;
    Ok(state)
}

impl ModelState {
    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn topic_count(&self) -> usize {
        self.hyper.alpha.len()
    }

    pub fn modality_count(&self) -> usize {
        self.modality_names.len()
    }

    pub fn vocab_size(&self, m: usize) -> usize {
        self.vocab_sizes[m]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn modality_names(&self) -> &[String] {
        &self.modality_names
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn set_hyper(&mut self, hyper: Hyperparams) -> Result<()> {
        hyper.validate()?;
        if hyper.alpha.len() != self.topic_count() {
            return Err(Error::Dimension(format!(
                "alpha has {} entries for {} topics",
                hyper.alpha.len(),
                self.topic_count()
            )));
        }
        if hyper.beta.len() != self.modality_count() {
            return Err(Error::Dimension(format!(
                "beta has {} entries for {} modalities",
                hyper.beta.len(),
                self.modality_count()
            )));
        }
        self.hyper = hyper;
        Ok(())
    }

    /// Replace the generator stream (e.g. to branch a chain).
    pub fn reseed(&mut self, seed: u64) {
        self.rng = rng_from(seed);
    }

    pub fn doc_topic(&self, d: usize) -> &[u32] {
        &self.doc_topic[d]
    }

    pub fn doc_total(&self, d: usize) -> u64 {
        self.doc_totals[d]
    }

    pub fn topic_word_count(&self, m: usize, t: usize, w: u32) -> u32 {
        self.topic_word[m][t * self.vocab_sizes[m] + w as usize]
    }

    pub fn topic_total(&self, m: usize, t: usize) -> u32 {
        self.topic_totals[m][t]
    }

    pub fn token_count(&self, d: usize, m: usize) -> usize {
        self.blocks[d][m].words.len()
    }

    pub fn token_word(&self, d: usize, m: usize, i: usize) -> u32 {
        self.blocks[d][m].words[i]
    }

    pub fn token_topic(&self, d: usize, m: usize, i: usize) -> Option<u32> {
        let t = self.blocks[d][m].topics[i];
        (t != TOKEN_UNASSIGNED).then_some(t)
    }

    /// Detach one token from the count tables (the precondition for
    /// [`ModelState::topic_conditional`]). Returns its former topic.
    pub fn remove_token(&mut self, d: usize, m: usize, i: usize) -> Result<u32> {
        let t = self.blocks[d][m].topics[i];
        if t == TOKEN_UNASSIGNED {
            return Err(Error::Inconsistent(format!(
                "token {i} of doc {d} modality {m} is already detached"
            )));
        }
        let w = self.blocks[d][m].words[i];
        self.blocks[d][m].topics[i] = TOKEN_UNASSIGNED;
        self.decrement(d, m, w, t)?;
        Ok(t)
    }

    /// Re-attach a detached token under the given topic.
    pub fn place_token(&mut self, d: usize, m: usize, i: usize, topic: u32) -> Result<()> {
        if topic as usize >= self.topic_count() {
            return Err(Error::Validation(format!(
                "topic {topic} out of range for T={}",
                self.topic_count()
            )));
        }
        if self.blocks[d][m].topics[i] != TOKEN_UNASSIGNED {
            return Err(Error::Inconsistent(format!(
                "token {i} of doc {d} modality {m} is already assigned"
            )));
        }
        let w = self.blocks[d][m].words[i];
        self.blocks[d][m].topics[i] = topic;
        self.increment(d, m, w, topic);
        Ok(())
    }

    fn decrement(&mut self, d: usize, m: usize, w: u32, t: u32) -> Result<()> {
        let t = t as usize;
        let v = self.vocab_sizes[m];
        let cell = &mut self.topic_word[m][t * v + w as usize];
        if self.doc_topic[d][t] == 0 || *cell == 0 || self.topic_totals[m][t] == 0 {
            return Err(Error::Inconsistent(format!(
                "negative count while detaching (doc {d}, modality {m}, word {w}, topic {t})"
            )));
        }
        *cell -= 1;
        self.doc_topic[d][t] -= 1;
        self.topic_totals[m][t] -= 1;
        Ok(())
    }

    fn increment(&mut self, d: usize, m: usize, w: u32, t: u32) {
        let t = t as usize;
        let v = self.vocab_sizes[m];
        self.topic_word[m][t * v + w as usize] += 1;
        self.doc_topic[d][t] += 1;
        self.topic_totals[m][t] += 1;
    }

    /// Dense collapsed conditional for resampling a (detached) token of
    /// word `w` in document `d`, modality `m`. Normalized over topics.
    pub fn topic_conditional(&self, d: usize, m: usize, w: u32) -> Vec<f64> {
        let t_count = self.topic_count();
        let v = self.vocab_sizes[m];
        let vb = v as f64 * self.hyper.beta[m];
        let beta = self.hyper.beta[m];
        let mut p = Vec::with_capacity(t_count);
        let mut total = 0.0;
        for t in 0..t_count {
            let mass = (self.doc_topic[d][t] as f64 + self.hyper.alpha[t])
                * (self.topic_word[m][t * v + w as usize] as f64 + beta)
                / (self.topic_totals[m][t] as f64 + vb);
            p.push(mass);
            total += mass;
        }
        for mass in p.iter_mut() {
            *mass /= total;
        }
        p
    }

    /// The same conditional assembled from the smoothing, document, and
    /// word buckets of the sparse decomposition. Used to cross-check the
    /// bucketed sweep against the dense formula.
    pub fn sparse_conditional(&self, d: usize, m: usize, w: u32) -> Vec<f64> {
        let t_count = self.topic_count();
        let v = self.vocab_sizes[m];
        let vb = v as f64 * self.hyper.beta[m];
        let beta = self.hyper.beta[m];
        let mut p = vec![0.0; t_count];
        let mut total = 0.0;
        for (t, mass) in p.iter_mut().enumerate() {
            let den = self.topic_totals[m][t] as f64 + vb;
            let smoothing = self.hyper.alpha[t] * beta / den;
            let document = self.doc_topic[d][t] as f64 * beta / den;
            let word = (self.hyper.alpha[t] + self.doc_topic[d][t] as f64)
                * self.topic_word[m][t * v + w as usize] as f64
                / den;
            *mass = smoothing + document + word;
            total += *mass;
        }
        for mass in p.iter_mut() {
            *mass /= total;
        }
        p
    }

    /// Resample every token once, walking the three buckets.
    pub fn gibbs_sweep(&mut self) -> Result<()> {
        let t_count = self.topic_count();
        let modalities = self.modality_count();

        // Topics with n_tw > 0 per (modality, word), rebuilt each sweep and
        // maintained incrementally through it.
        let mut word_topics: Vec<Vec<Vec<u32>>> = (0..modalities)
            .map(|m| {
                let v = self.vocab_sizes[m];
                let mut lists: Vec<Vec<u32>> = vec![Vec::new(); v];
                for t in 0..t_count {
                    for w in 0..v {
                        if self.topic_word[m][t * v + w] > 0 {
                            lists[w].push(t as u32);
                        }
                    }
                }
                lists
            })
            .collect();

        let mut coef = vec![0.0f64; t_count];
        let mut doc_nonzero: Vec<u32> = Vec::with_capacity(t_count);
        let mut word_masses: Vec<f64> = Vec::with_capacity(t_count);

        for d in 0..self.doc_count() {
            for m in 0..modalities {
                if self.blocks[d][m].words.is_empty() {
                    continue;
                }
                let v = self.vocab_sizes[m];
                let beta = self.hyper.beta[m];
                let vb = v as f64 * beta;

                // Fresh per-block caches: smoothing mass, document mass,
                // per-topic word-bucket coefficients, and the document's
                // nonzero topic list.
                let mut smoothing = 0.0;
                let mut document = 0.0;
                doc_nonzero.clear();
                for t in 0..t_count {
                    let den = self.topic_totals[m][t] as f64 + vb;
                    let n_dt = self.doc_topic[d][t] as f64;
                    smoothing += self.hyper.alpha[t] * beta / den;
                    coef[t] = (self.hyper.alpha[t] + n_dt) / den;
                    if self.doc_topic[d][t] > 0 {
                        document += n_dt * beta / den;
                        doc_nonzero.push(t as u32);
                    }
                }

                for i in 0..self.blocks[d][m].words.len() {
                    let w = self.blocks[d][m].words[i] as usize;
                    let t_old = self.blocks[d][m].topics[i];
                    if t_old == TOKEN_UNASSIGNED {
                        return Err(Error::Inconsistent(format!(
                            "detached token {i} in doc {d} modality {m} during sweep"
                        )));
                    }
                    let t_old = t_old as usize;

                    // Detach: retract topic t_old's bucket contributions,
                    // decrement, re-add the updated contributions.
                    {
                        let den = self.topic_totals[m][t_old] as f64 + vb;
                        smoothing -= self.hyper.alpha[t_old] * beta / den;
                        document -= self.doc_topic[d][t_old] as f64 * beta / den;
                    }
                    self.blocks[d][m].topics[i] = TOKEN_UNASSIGNED;
                    self.decrement(d, m, w as u32, t_old as u32)?;
                    let n_dt_old = self.doc_topic[d][t_old];
                    {
                        let den = self.topic_totals[m][t_old] as f64 + vb;
                        smoothing += self.hyper.alpha[t_old] * beta / den;
                        document += n_dt_old as f64 * beta / den;
                        coef[t_old] = (self.hyper.alpha[t_old] + n_dt_old as f64) / den;
                    }
                    if n_dt_old == 0 {
                        if let Some(pos) = doc_nonzero.iter().position(|&t| t as usize == t_old) {
                            doc_nonzero.swap_remove(pos);
                        }
                    }
                    if self.topic_word[m][t_old * v + w] == 0 {
                        if let Some(pos) =
                            word_topics[m][w].iter().position(|&t| t as usize == t_old)
                        {
                            word_topics[m][w].swap_remove(pos);
                        }
                    }

                    // Word bucket for this token's word.
                    word_masses.clear();
                    let mut word_mass = 0.0;
                    for &t in &word_topics[m][w] {
                        let mass = coef[t as usize] * self.topic_word[m][t as usize * v + w] as f64;
                        word_masses.push(mass);
                        word_mass += mass;
                    }

                    let total = smoothing + document + word_mass;
                    let u = self.rng.gen::<f64>() * total;
                    let t_new = if u < word_mass {
                        let mut acc = 0.0;
                        let mut chosen = *word_topics[m][w].last().unwrap();
                        for (&t, &mass) in word_topics[m][w].iter().zip(&word_masses) {
                            acc += mass;
                            if u < acc {
                                chosen = t;
                                break;
                            }
                        }
                        chosen
                    } else if u < word_mass + document {
                        let target = u - word_mass;
                        let mut acc = 0.0;
                        let mut chosen = *doc_nonzero.last().unwrap();
                        for &t in &doc_nonzero {
                            let den = self.topic_totals[m][t as usize] as f64 + vb;
                            acc += self.doc_topic[d][t as usize] as f64 * beta / den;
                            if target < acc {
                                chosen = t;
                                break;
                            }
                        }
                        chosen
                    } else {
                        let target = u - word_mass - document;
                        let mut acc = 0.0;
                        let mut chosen = (t_count - 1) as u32;
                        for t in 0..t_count {
                            let den = self.topic_totals[m][t] as f64 + vb;
                            acc += self.hyper.alpha[t] * beta / den;
                            if target < acc {
                                chosen = t as u32;
                                break;
                            }
                        }
                        chosen
                    };
                    let t_new = t_new as usize;

                    // Attach under the sampled topic, mirroring the detach.
                    {
                        let den = self.topic_totals[m][t_new] as f64 + vb;
                        smoothing -= self.hyper.alpha[t_new] * beta / den;
                        document -= self.doc_topic[d][t_new] as f64 * beta / den;
                    }
                    if self.topic_word[m][t_new * v + w] == 0 {
                        word_topics[m][w].push(t_new as u32);
                    }
                    if self.doc_topic[d][t_new] == 0 {
                        doc_nonzero.push(t_new as u32);
                    }
                    self.blocks[d][m].topics[i] = t_new as u32;
                    self.increment(d, m, w as u32, t_new as u32);
                    {
                        let den = self.topic_totals[m][t_new] as f64 + vb;
                        smoothing += self.hyper.alpha[t_new] * beta / den;
                        document += self.doc_topic[d][t_new] as f64 * beta / den;
                        coef[t_new] = (self.hyper.alpha[t_new] + self.doc_topic[d][t_new] as f64) / den;
                    }
                }

                #[cfg(debug_assertions)]
                {
                    let mut fresh_s = 0.0;
                    let mut fresh_r = 0.0;
                    for t in 0..t_count {
                        let den = self.topic_totals[m][t] as f64 + vb;
                        fresh_s += self.hyper.alpha[t] * beta / den;
                        fresh_r += self.doc_topic[d][t] as f64 * beta / den;
                    }
                    debug_assert!(
                        (fresh_s - smoothing).abs() <= 1e-9 * fresh_s.max(1e-300),
                        "smoothing bucket drifted: {smoothing} vs {fresh_s}"
                    );
                    debug_assert!(
                        (fresh_r - document).abs() <= 1e-9 * fresh_r.max(1e-12),
                        "document bucket drifted: {document} vs {fresh_r}"
                    );
                }
            }
        }
        self.iteration += 1;
        Ok(())
    }

    /// Log joint probability of words and assignments given the prior,
    /// `log p(w, z | α, β)`.
    pub fn log_evidence(&self) -> f64 {
        let t_count = self.topic_count();
        let alpha_sum = self.hyper.alpha_sum();
        let ln_gamma_alpha_sum = ln_gamma(alpha_sum);
        let ln_gamma_alpha: Vec<f64> = self.hyper.alpha.iter().map(|&a| ln_gamma(a)).collect();

        let mut total = 0.0;
        for d in 0..self.doc_count() {
            if self.doc_totals[d] == 0 {
                continue;
            }
            total += ln_gamma_alpha_sum - ln_gamma(self.doc_totals[d] as f64 + alpha_sum);
            for t in 0..t_count {
                let n = self.doc_topic[d][t];
                if n > 0 {
                    total += ln_gamma(n as f64 + self.hyper.alpha[t]) - ln_gamma_alpha[t];
                }
            }
        }
        for m in 0..self.modality_count() {
            let v = self.vocab_sizes[m];
            let beta = self.hyper.beta[m];
            let vb = v as f64 * beta;
            let ln_gamma_vb = ln_gamma(vb);
            let ln_gamma_beta = ln_gamma(beta);
            for t in 0..t_count {
                if self.topic_totals[m][t] == 0 {
                    continue;
                }
                total += ln_gamma_vb - ln_gamma(self.topic_totals[m][t] as f64 + vb);
                for w in 0..v {
                    let n = self.topic_word[m][t * v + w];
                    if n > 0 {
                        total += ln_gamma(n as f64 + beta) - ln_gamma_beta;
                    }
                }
            }
        }
        total
    }

    /// One fixed-point step on the asymmetric α. Returns the new vector
    /// (also installed in the state). Left unchanged when every document
    /// is empty.
    pub fn update_alpha(&mut self) -> &[f64] {
        self.hyper.alpha = alpha_fixed_point(&self.doc_topic, &self.hyper.alpha);
        &self.hyper.alpha
    }

    /// One fixed-point step on modality `m`'s symmetric β. Returns the new
    /// value (also installed). Left unchanged when the modality is empty.
    pub fn update_beta(&mut self, m: usize) -> f64 {
        let v = self.vocab_sizes[m];
        let rows: Vec<&[u32]> = (0..self.topic_count())
            .map(|t| &self.topic_word[m][t * v..(t + 1) * v])
            .collect();
        let new = beta_fixed_point(&rows, self.hyper.beta[m]);
        self.hyper.beta[m] = new;
        new
    }

    /// Dirichlet-expectation point estimates of the current state.
    pub fn point_estimates(&self) -> TrainedModel {
        let evidence = self.log_evidence();
        self.estimates_with(evidence, self.iteration)
    }

    fn estimates_with(&self, evidence: f64, selected_iteration: usize) -> TrainedModel {
        let t_count = self.topic_count();
        let alpha_sum = self.hyper.alpha_sum();
        let theta: Vec<Vec<f64>> = (0..self.doc_count())
            .map(|d| {
                let den = self.doc_totals[d] as f64 + alpha_sum;
                (0..t_count)
                    .map(|t| (self.doc_topic[d][t] as f64 + self.hyper.alpha[t]) / den)
                    .collect()
            })
            .collect();
        let phi: Vec<Vec<Vec<f64>>> = (0..self.modality_count())
            .map(|m| {
                let v = self.vocab_sizes[m];
                let beta = self.hyper.beta[m];
                let vb = v as f64 * beta;
                (0..t_count)
                    .map(|t| {
                        let den = self.topic_totals[m][t] as f64 + vb;
                        (0..v)
                            .map(|w| (self.topic_word[m][t * v + w] as f64 + beta) / den)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        TrainedModel {
            doc_ids: self.doc_ids.clone(),
            modality_names: self.modality_names.clone(),
            theta,
            phi,
            hyper: self.hyper.clone(),
            evidence,
            selected_iteration,
            seed: self.seed,
            counts: Some(FrozenCounts {
                topic_word: self.topic_word.clone(),
                topic_totals: self.topic_totals.clone(),
                vocab_sizes: self.vocab_sizes.clone(),
            }),
        }
    }

    /// Recompute every count table from the token assignments and compare
    /// with the maintained tables (integer equality).
    pub fn validate_counts(&self) -> Result<()> {
        let t_count = self.topic_count();
        let mut doc_topic = vec![vec![0u32; t_count]; self.doc_count()];
        let mut topic_word: Vec<Vec<u32>> = self
            .vocab_sizes
            .iter()
            .map(|&v| vec![0; t_count * v])
            .collect();
        let mut topic_totals = vec![vec![0u32; t_count]; self.modality_count()];
        let mut doc_totals = vec![0u64; self.doc_count()];
        for d in 0..self.doc_count() {
            for m in 0..self.modality_count() {
                let block = &self.blocks[d][m];
                for (&w, &t) in block.words.iter().zip(&block.topics) {
                    if t == TOKEN_UNASSIGNED {
                        return Err(Error::Inconsistent(format!(
                            "detached token in doc {d} modality {m}"
                        )));
                    }
                    doc_topic[d][t as usize] += 1;
                    topic_word[m][t as usize * self.vocab_sizes[m] + w as usize] += 1;
                    topic_totals[m][t as usize] += 1;
                    doc_totals[d] += 1;
                }
            }
        }
        if doc_topic != self.doc_topic
            || topic_word != self.topic_word
            || topic_totals != self.topic_totals
            || doc_totals != self.doc_totals
        {
            return Err(Error::Inconsistent(
                "maintained count tables differ from recomputation".into(),
            ));
        }
        Ok(())
    }
}

/// One Minka-style fixed-point step for the document-topic Dirichlet:
///
/// ```text
/// α_t ← α_t · Σ_d [Ψ(n_dt + α_t) − Ψ(α_t)] / Σ_d [Ψ(N_d + Σα) − Ψ(Σα)]
/// ```
///
/// clamped below at [`HYPER_FLOOR`]. Returns the input unchanged when the
/// denominator vanishes (every document empty).
pub fn alpha_fixed_point(doc_topic: &[Vec<u32>], alpha: &[f64]) -> Vec<f64> {
    let alpha_sum: f64 = alpha.iter().sum();
    let psi_alpha_sum = digamma(alpha_sum);
    let mut denominator = 0.0;
    for row in doc_topic {
        let n: u64 = row.iter().map(|&c| u64::from(c)).sum();
        if n > 0 {
            denominator += digamma(n as f64 + alpha_sum) - psi_alpha_sum;
        }
    }
    if denominator == 0.0 {
        return alpha.to_vec();
    }
    alpha
        .iter()
        .enumerate()
        .map(|(t, &a)| {
            let psi_a = digamma(a);
            let mut numerator = 0.0;
            for row in doc_topic {
                if row[t] > 0 {
                    numerator += digamma(row[t] as f64 + a) - psi_a;
                }
            }
            (a * numerator / denominator).max(HYPER_FLOOR)
        })
        .collect()
}

/// One fixed-point step for a modality's symmetric topic-word Dirichlet:
///
/// ```text
/// β ← β · Σ_t Σ_w [Ψ(n_tw + β) − Ψ(β)] / (V · Σ_t [Ψ(n_t + Vβ) − Ψ(Vβ)])
/// ```
///
/// clamped below at [`HYPER_FLOOR`]; unchanged when the modality has no
/// tokens.
pub fn beta_fixed_point(topic_word_rows: &[&[u32]], beta: f64) -> f64 {
    let Some(first) = topic_word_rows.first() else {
        return beta;
    };
    let v = first.len();
    if v == 0 {
        return beta;
    }
    let vb = v as f64 * beta;
    let psi_beta = digamma(beta);
    let psi_vb = digamma(vb);
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for row in topic_word_rows {
        let n: u64 = row.iter().map(|&c| u64::from(c)).sum();
        if n == 0 {
            continue;
        }
        denominator += digamma(n as f64 + vb) - psi_vb;
        for &c in row.iter() {
            if c > 0 {
                numerator += digamma(c as f64 + beta) - psi_beta;
            }
        }
    }
    denominator *= v as f64;
    if denominator == 0.0 {
        return beta;
    }
    (beta * numerator / denominator).max(HYPER_FLOOR)
}

/// Frozen training count tables, carried so the count-based fold-in mode
/// can run without retraining. Not part of the persisted model directory.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenCounts {
    pub topic_word: Vec<Vec<u32>>,
    pub topic_totals: Vec<Vec<u32>>,
    pub vocab_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub doc_ids: Vec<String>,
    pub modality_names: Vec<String>,
    /// D×T, rows sum to 1.
    pub theta: Vec<Vec<f64>>,
    /// Per modality, T×V, rows sum to 1.
    pub phi: Vec<Vec<Vec<f64>>>,
    pub hyper: Hyperparams,
    pub evidence: f64,
    pub selected_iteration: usize,
    pub seed: u64,
    /// Present on models trained in-process; absent after loading from disk.
    pub counts: Option<FrozenCounts>,
}

impl TrainedModel {
    pub fn topic_count(&self) -> usize {
        self.hyper.alpha.len()
    }

    pub fn vocab_size(&self, m: usize) -> usize {
        self.phi[m].first().map_or(0, Vec::len)
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modality_names.iter().position(|n| n == name)
    }

    /// Persist as a directory: `theta.csv`, one `phi_<modality>.csv` per
    /// modality, `hyper.txt`, and `manifest.txt`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let t_count = self.topic_count();

        let theta_path = dir.join("theta.csv");
        let mut theta = String::from("doc_id");
        for t in 0..t_count {
            theta.push_str(&format!(",t{t}"));
        }
        theta.push('\n');
        for (id, row) in self.doc_ids.iter().zip(&self.theta) {
            theta.push_str(id);
            for v in row {
                theta.push_str(&format!(",{v}"));
            }
            theta.push('\n');
        }
        fs::write(&theta_path, theta).map_err(|e| Error::io(&theta_path, e))?;

        for (m, name) in self.modality_names.iter().enumerate() {
            let path = dir.join(format!("phi_{name}.csv"));
            let v_size = self.vocab_size(m);
            let mut body = String::from("topic");
            for w in 0..v_size {
                body.push_str(&format!(",w{w}"));
            }
            body.push('\n');
            for (t, row) in self.phi[m].iter().enumerate() {
                body.push_str(&t.to_string());
                for v in row {
                    body.push_str(&format!(",{v}"));
                }
                body.push('\n');
            }
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }

        let hyper_path = dir.join("hyper.txt");
        let alpha: Vec<String> = self.hyper.alpha.iter().map(|a| format!("{a}")).collect();
        let mut hyper = format!("alpha={}\n", alpha.join(","));
        for (name, b) in self.modality_names.iter().zip(&self.hyper.beta) {
            hyper.push_str(&format!("beta_{name}={b}\n"));
        }
        fs::write(&hyper_path, hyper).map_err(|e| Error::io(&hyper_path, e))?;

        let manifest_path = dir.join("manifest.txt");
        let manifest = format!(
            "topics={}\ndocs={}\nmodalities={}\nseed={}\nselected_iteration={}\nevidence={}\n",
            t_count,
            self.doc_ids.len(),
            self.modality_names.join(","),
            self.seed,
            self.selected_iteration,
            self.evidence
        );
        fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))
    }

    pub fn load_dir(dir: &Path) -> Result<TrainedModel> {
        let manifest_path = dir.join("manifest.txt");
        let manifest = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let mut fields = BTreeMap::new();
        for line in manifest.lines() {
            if let Some((k, v)) = line.split_once('=') {
                fields.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| -> Result<&String> {
            fields
                .get(k)
                .ok_or_else(|| Error::parse(&manifest_path, 0, format!("missing {k}=")))
        };
        let topics: usize = get("topics")?
            .parse()
            .map_err(|_| Error::parse(&manifest_path, 0, "bad topics"))?;
        let modality_names: Vec<String> = get("modalities")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let seed: u64 = get("seed")?
            .parse()
            .map_err(|_| Error::parse(&manifest_path, 0, "bad seed"))?;
        let selected_iteration: usize = get("selected_iteration")?
            .parse()
            .map_err(|_| Error::parse(&manifest_path, 0, "bad selected_iteration"))?;
        let evidence: f64 = get("evidence")?
            .parse()
            .map_err(|_| Error::parse(&manifest_path, 0, "bad evidence"))?;

        let theta_path = dir.join("theta.csv");
        let theta_body = fs::read_to_string(&theta_path).map_err(|e| Error::io(&theta_path, e))?;
        let mut doc_ids = Vec::new();
        let mut theta = Vec::new();
        for (idx, line) in theta_body.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let id = parts
                .next()
                .ok_or_else(|| Error::parse(&theta_path, idx + 1, "missing doc_id"))?;
            let row: Vec<f64> = parts
                .map(|p| {
                    p.parse()
                        .map_err(|_| Error::parse(&theta_path, idx + 1, format!("bad value '{p}'")))
                })
                .collect::<Result<_>>()?;
            if row.len() != topics {
                return Err(Error::Dimension(format!(
                    "theta row for '{id}' has {} entries, expected {topics}",
                    row.len()
                )));
            }
            doc_ids.push(id.to_string());
            theta.push(row);
        }

        let mut phi = Vec::new();
        for name in &modality_names {
            let path = dir.join(format!("phi_{name}.csv"));
            let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut rows = Vec::new();
            for (idx, line) in body.lines().enumerate().skip(1) {
                if line.trim().is_empty() {
                    continue;
                }
                let row: Vec<f64> = line
                    .split(',')
                    .skip(1)
                    .map(|p| {
                        p.parse()
                            .map_err(|_| Error::parse(&path, idx + 1, format!("bad value '{p}'")))
                    })
                    .collect::<Result<_>>()?;
                rows.push(row);
            }
            if rows.len() != topics {
                return Err(Error::Dimension(format!(
                    "{} has {} topic rows, expected {topics}",
                    path.display(),
                    rows.len()
                )));
            }
            phi.push(rows);
        }

        let hyper_path = dir.join("hyper.txt");
        let hyper_body = fs::read_to_string(&hyper_path).map_err(|e| Error::io(&hyper_path, e))?;
        let mut alpha = Vec::new();
        let mut beta = vec![0.0; modality_names.len()];
        for line in hyper_body.lines() {
            if let Some(v) = line.strip_prefix("alpha=") {
                alpha = v
                    .split(',')
                    .map(|p| {
                        p.parse()
                            .map_err(|_| Error::parse(&hyper_path, 0, format!("bad alpha '{p}'")))
                    })
                    .collect::<Result<_>>()?;
            } else if let Some(rest) = line.strip_prefix("beta_") {
                if let Some((name, v)) = rest.split_once('=') {
                    let m = modality_names
                        .iter()
                        .position(|n| n == name)
                        .ok_or_else(|| {
                            Error::Validation(format!("hyper.txt names unknown modality '{name}'"))
                        })?;
                    beta[m] = v
                        .parse()
                        .map_err(|_| Error::parse(&hyper_path, 0, format!("bad beta '{v}'")))?;
                }
            }
        }
        let hyper = Hyperparams { alpha, beta };
        hyper.validate()?;
        if hyper.alpha.len() != topics {
            return Err(Error::Dimension(format!(
                "hyper.txt has {} alpha entries, expected {topics}",
                hyper.alpha.len()
            )));
        }

        Ok(TrainedModel {
            doc_ids,
            modality_names,
            theta,
            phi,
            hyper,
            evidence,
            selected_iteration,
            seed,
            counts: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub topics: usize,
    pub iterations: usize,
    pub evidence_window: usize,
    pub burn_in: usize,
    pub hyper_update_every: usize,
    pub alpha_init: f64,
    pub beta_init: f64,
    pub seed: u64,
    /// Evaluate the evidence every iteration instead of only in the final
    /// window. Sample selection still uses the window alone.
    pub trace_evidence: bool,
}

impl TrainConfig {
    pub fn new(topics: usize) -> Self {
        TrainConfig {
            topics,
            iterations: 4000,
            evidence_window: 50,
            burn_in: 200,
            hyper_update_every: 10,
            alpha_init: 1.0,
            beta_init: 0.01,
            seed: 0,
            trace_evidence: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::Config("topics must be at least 1".into()));
        }
        if self.evidence_window == 0 {
            return Err(Error::Config("evidence_window must be at least 1".into()));
        }
        if self.iterations < self.evidence_window {
            return Err(Error::Config(format!(
                "iterations ({}) must be at least evidence_window ({})",
                self.iterations, self.evidence_window
            )));
        }
        if !(self.alpha_init > 0.0) || !(self.beta_init > 0.0) {
            return Err(Error::Config(
                "alpha_init and beta_init must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
        }
        match key {
            "topics" => self.topics = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "evidence_window" => self.evidence_window = parse(key, value)?,
            "burn_in" => self.burn_in = parse(key, value)?,
            "hyper_update_every" => self.hyper_update_every = parse(key, value)?,
            "alpha_init" => self.alpha_init = parse(key, value)?,
            "beta_init" => self.beta_init = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "trace_evidence" => self.trace_evidence = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Flat `key=value` file; `#` starts a comment line.
    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = TrainConfig::new(0);
        let mut saw_topics = false;
        for (idx, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, idx + 1, "expected key=value"))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "topics" {
                saw_topics = true;
            }
            config.set(key, value)?;
        }
        if !saw_topics {
            return Err(Error::Config(format!(
                "{}: missing required key 'topics'",
                path.display()
            )));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = format!(
            "topics={}\niterations={}\nevidence_window={}\nburn_in={}\nhyper_update_every={}\nalpha_init={}\nbeta_init={}\nseed={}\ntrace_evidence={}\n",
            self.topics,
            self.iterations,
            self.evidence_window,
            self.burn_in,
            self.hyper_update_every,
            self.alpha_init,
            self.beta_init,
            self.seed,
            self.trace_evidence
        );
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Run the full chain and return the point estimates of the best-evidence
/// state within the final window.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainedModel> {
    train_with_trace(corpus, config).map(|(model, _)| model)
}

/// [`train`] plus the (iteration, log evidence) pairs that were evaluated.
pub fn train_with_trace(
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<(TrainedModel, Vec<(usize, f64)>)> {
    config.validate()?;
    let mut state = init_state(
        corpus,
        config.topics,
        config.seed,
        config.alpha_init,
        config.beta_init,
    )?;
    let window_start = config.iterations - config.evidence_window;
    let mut trace = Vec::new();
    let mut best: Option<(f64, ModelState)> = None;
    for i in 0..config.iterations {
        state.gibbs_sweep()?;
        let completed = i + 1;
        if completed >= config.burn_in
            && config.hyper_update_every > 0
            && completed % config.hyper_update_every == 0
        {
            state.update_alpha();
            for m in 0..state.modality_count() {
                state.update_beta(m);
            }
        }
        let in_window = i >= window_start;
        if in_window || config.trace_evidence {
            let evidence = state.log_evidence();
            trace.push((i, evidence));
            if in_window && best.as_ref().map_or(true, |(b, _)| evidence > *b) {
                let mut snapshot = state.clone();
                snapshot.iteration = i;
                best = Some((evidence, snapshot));
            }
        }
    }
    let (evidence, snapshot) = best.expect("evidence window is nonempty");
    let selected = snapshot.iteration;
    Ok((snapshot.estimates_with(evidence, selected), trace))
}
