//! Synthetic corpora with known topic structure, for validating recovery
//! and for experiments that need a ground-truth generating process.

use std::collections::BTreeMap;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand_distr::Gamma;

use crate::corpus::{assemble_corpus, Corpus, Vocabulary, WordBag};
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone)]
pub struct ModalitySpec {
    pub name: String,
    pub vocab_size: usize,
    pub tokens_per_doc: usize,
}

/// Whether every modality of a document is generated from one shared
/// proportion vector (the model's own assumption) or each modality draws
/// its own, leaving nothing shared across modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Shared,
    Independent,
}

#[derive(Debug, Clone)]
pub struct LabelSpec {
    /// Number of label groups; documents are dealt round-robin.
    pub count: usize,
    /// How tightly documents concentrate around their group's center.
    pub concentration: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub docs: usize,
    pub topics: usize,
    pub modalities: Vec<ModalitySpec>,
    /// Symmetric Dirichlet parameter for document proportions (and for
    /// label-group centers when labels are requested).
    pub doc_alpha: f64,
    /// Symmetric Dirichlet parameter for topic-word rows.
    pub phi_concentration: f64,
    pub labels: Option<LabelSpec>,
    pub coupling: Coupling,
    pub seed: u64,
}

pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// True proportions, indexed `[modality][doc][topic]`. Under
    /// [`Coupling::Shared`] every modality holds the same rows.
    pub theta: Vec<Vec<Vec<f64>>>,
    /// True topic-word tables, indexed `[modality][topic][word]`.
    pub phi: Vec<Vec<Vec<f64>>>,
}

/// Draw a Dirichlet vector by normalizing Gamma draws. Components are
/// floored at a tiny mass so no word is ever strictly impossible (tiny
/// concentrations underflow Gamma draws to zero).
fn dirichlet(rng: &mut impl rand::Rng, concentration: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive shape");
    let mut draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / dim as f64; dim];
    }
    for d in draws.iter_mut() {
        *d = *d / total + 1e-12;
    }
    let rescale: f64 = draws.iter().sum();
    for d in draws.iter_mut() {
        *d /= rescale;
    }
    draws
}

fn dirichlet_with_alpha(rng: &mut impl rand::Rng, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / alpha.len() as f64; alpha.len()];
    }
    for d in draws.iter_mut() {
        *d = *d / total + 1e-12;
    }
    let rescale: f64 = draws.iter().sum();
    for d in draws.iter_mut() {
        *d /= rescale;
    }
    draws
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if config.docs == 0 || config.topics == 0 {
        return Err(Error::Config("docs and topics must be at least 1".into()));
    }
    if config.modalities.is_empty() {
        return Err(Error::Config("need at least one modality".into()));
    }
    if !(config.doc_alpha > 0.0) || !(config.phi_concentration > 0.0) {
        return Err(Error::Config(
            "doc_alpha and phi_concentration must be positive".into(),
        ));
    }
    if let Some(labels) = &config.labels {
        if labels.count == 0 || !(labels.concentration > 0.0) {
            return Err(Error::Config(
                "label count must be at least 1 with positive concentration".into(),
            ));
        }
    }

    let mut rng = rng_from(config.seed);
    let modalities = config.modalities.len();

    let phi: Vec<Vec<Vec<f64>>> = config
        .modalities
        .iter()
        .map(|spec| {
            (0..config.topics)
                .map(|_| dirichlet(&mut rng, config.phi_concentration, spec.vocab_size))
                .collect()
        })
        .collect();

    let centers: Option<Vec<Vec<f64>>> = config.labels.as_ref().map(|labels| {
        (0..labels.count)
            .map(|_| dirichlet(&mut rng, config.doc_alpha, config.topics))
            .collect()
    });

    let draw_theta = |rng: &mut rand_chacha::ChaCha8Rng, d: usize| -> Vec<f64> {
        match (&config.labels, &centers) {
            (Some(labels), Some(centers)) => {
                let center = &centers[d % labels.count];
                let alpha: Vec<f64> = center
                    .iter()
                    .map(|&c| labels.concentration * c + 0.01)
                    .collect();
                dirichlet_with_alpha(rng, &alpha)
            }
            _ => dirichlet(rng, config.doc_alpha, config.topics),
        }
    };

    let mut theta: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(config.docs); modalities];
    for d in 0..config.docs {
        match config.coupling {
            Coupling::Shared => {
                let shared = draw_theta(&mut rng, d);
                for rows in theta.iter_mut() {
                    rows.push(shared.clone());
                }
            }
            Coupling::Independent => {
                for rows in theta.iter_mut() {
                    let own = draw_theta(&mut rng, d);
                    rows.push(own);
                }
            }
        }
    }

    let phi_samplers: Vec<Vec<WeightedIndex<f64>>> = phi
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|row| WeightedIndex::new(row).expect("positive weights"))
                .collect()
        })
        .collect();

    let mut bags_by_modality: Vec<Vec<WordBag>> = vec![Vec::with_capacity(config.docs); modalities];
    for d in 0..config.docs {
        for (m, spec) in config.modalities.iter().enumerate() {
            let mut bag = WordBag::new();
            if spec.tokens_per_doc > 0 {
                let topic_sampler = WeightedIndex::new(&theta[m][d]).expect("positive weights");
                for _ in 0..spec.tokens_per_doc {
                    let t = topic_sampler.sample(&mut rng);
                    let w = phi_samplers[m][t].sample(&mut rng) as u32;
                    *bag.entry(w).or_insert(0) += 1;
                }
            }
            bags_by_modality[m].push(bag);
        }
    }

    let labels_map: Option<BTreeMap<String, String>> = config.labels.as_ref().map(|labels| {
        (0..config.docs)
            .map(|d| (d.to_string(), format!("g{}", d % labels.count)))
            .collect()
    });

    let parts: Vec<(Vocabulary, Vec<WordBag>)> = config
        .modalities
        .iter()
        .zip(bags_by_modality)
        .map(|(spec, bags)| Ok((Vocabulary::numbered(&spec.name, spec.vocab_size)?, bags)))
        .collect::<Result<_>>()?;
    let corpus = assemble_corpus("synthetic", parts, labels_map.as_ref())?;

    Ok(SyntheticCorpus { corpus, theta, phi })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> SyntheticConfig {
        SyntheticConfig {
            docs: 12,
            topics: 3,
            modalities: vec![
                ModalitySpec {
                    name: "a".into(),
                    vocab_size: 20,
                    tokens_per_doc: 15,
                },
                ModalitySpec {
                    name: "b".into(),
                    vocab_size: 10,
                    tokens_per_doc: 8,
                },
            ],
            doc_alpha: 0.5,
            phi_concentration: 0.2,
            labels: None,
            coupling: Coupling::Shared,
            seed: 5,
        }
    }

    #[test]
    fn generation_is_deterministic_and_shaped_as_requested() {
        let config = base_config();
        let x = generate(&config).unwrap();
        let y = generate(&config).unwrap();
        assert_eq!(x.theta, y.theta);
        assert_eq!(x.phi, y.phi);
        assert_eq!(x.corpus.doc_count(), 12);
        assert_eq!(x.corpus.modality_count(), 2);
        for doc in x.corpus.documents() {
            assert_eq!(doc.tokens_in(0), 15);
            assert_eq!(doc.tokens_in(1), 8);
        }
        let mut other = config;
        other.seed = 6;
        let z = generate(&other).unwrap();
        assert_ne!(x.theta, z.theta);
    }

    #[test]
    fn true_tables_are_strictly_positive_distributions() {
        let config = base_config();
        let made = generate(&config).unwrap();
        for rows in made.phi.iter().chain(made.theta.iter()) {
            for row in rows {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "row sums to {sum}");
                assert!(row.iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn shared_coupling_reuses_one_theta_across_modalities() {
        let config = base_config();
        let shared = generate(&config).unwrap();
        assert_eq!(shared.theta[0], shared.theta[1]);

        let mut independent = base_config();
        independent.coupling = Coupling::Independent;
        let split = generate(&independent).unwrap();
        assert_ne!(split.theta[0], split.theta[1]);
    }

    #[test]
    fn labels_are_balanced_round_robin_groups() {
        let mut config = base_config();
        config.labels = Some(LabelSpec {
            count: 3,
            concentration: 25.0,
        });
        let made = generate(&config).unwrap();
        let mut sizes = BTreeMap::new();
        for doc in made.corpus.documents() {
            let label = doc.label.clone().expect("labelled corpus");
            *sizes.entry(label).or_insert(0usize) += 1;
        }
        assert_eq!(sizes.len(), 3);
        assert!(sizes.values().all(|&s| s == 4));

        let unlabelled = generate(&base_config()).unwrap();
        assert!(unlabelled.corpus.documents().iter().all(|d| d.label.is_none()));
    }

    #[test]
    fn zero_token_modalities_yield_empty_bags() {
        let mut config = base_config();
        config.modalities[1].tokens_per_doc = 0;
        let made = generate(&config).unwrap();
        assert!(made.corpus.documents().iter().all(|d| d.counts[1].is_empty()));

        config.modalities[0].tokens_per_doc = 0;
        let all_empty = generate(&config).unwrap();
        assert_eq!(all_empty.corpus.empty_document_ids().len(), 12);
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let mut config = base_config();
        config.docs = 0;
        assert!(generate(&config).is_err());
        let mut config = base_config();
        config.modalities.clear();
        assert!(generate(&config).is_err());
        let mut config = base_config();
        config.doc_alpha = 0.0;
        assert!(generate(&config).is_err());
        let mut config = base_config();
        config.labels = Some(LabelSpec {
            count: 0,
            concentration: 1.0,
        });
        assert!(generate(&config).is_err());
    }
}
