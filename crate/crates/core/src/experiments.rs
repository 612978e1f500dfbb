//! Experiment orchestration: seed-stability within a modality group and
//! cross-group comparison of the similarity structure.
//!
//! One cross-validation split (derived from the plan seed) is shared by
//! every group and topic count so comparisons are always over the same
//! held-out documents. Every training, fold-in, and permutation job gets
//! its own seed derived from the plan seed and the job's coordinates, so
//! results are independent of scheduling and identical across runs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{augment_empty_documents, cv_split, Corpus, FoldSplit};
use crate::error::{Error, Result};
use crate::inference::fold_in;
use crate::mantel::{mantel_test, spearman_offdiag, Tail};
use crate::rng::derive_seed;
use crate::sampler::{train, TrainConfig};
use crate::similarity::{similarity_matrix, Measure, SimilarityMatrix};

#[derive(Debug, Clone)]
pub struct ExperimentGroup {
    pub name: String,
    /// Modalities this group trains on, by name.
    pub modalities: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub groups: Vec<ExperimentGroup>,
    pub topic_counts: Vec<usize>,
    /// Independent chains per (group, topic count, fold).
    pub seeds_per_model: usize,
    pub folds: usize,
    pub permutations: usize,
    pub foldin_sweeps: usize,
    /// Template for each training job; `topics` and `seed` are overridden
    /// per job.
    pub train: TrainConfig,
    pub tail: Tail,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn new(groups: Vec<ExperimentGroup>, topic_counts: Vec<usize>, train: TrainConfig) -> Self {
        ExperimentPlan {
            groups,
            topic_counts,
            seeds_per_model: 5,
            folds: 10,
            permutations: 100,
            foldin_sweeps: 200,
            train,
            tail: Tail::Upper,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Config("plan has no groups".into()));
        }
        for (i, group) in self.groups.iter().enumerate() {
            if group.modalities.is_empty() {
                return Err(Error::Config(format!(
                    "group '{}' lists no modalities",
                    group.name
                )));
            }
            if self.groups[..i].iter().any(|g| g.name == group.name) {
                return Err(Error::Config(format!("duplicate group name '{}'", group.name)));
            }
        }
        if self.topic_counts.is_empty() || self.topic_counts.iter().any(|&t| t == 0) {
            return Err(Error::Config("topic counts must be non-empty and positive".into()));
        }
        if self.seeds_per_model == 0 {
            return Err(Error::Config("seeds_per_model must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("need at least 2 folds".into()));
        }
        if self.permutations == 0 || self.foldin_sweeps == 0 {
            return Err(Error::Config(
                "permutations and foldin_sweeps must be at least 1".into(),
            ));
        }
        let mut probe = self.train.clone();
        probe.topics = self.topic_counts[0];
        probe.validate()
    }

    fn train_seed(&self, group: &str, topics: usize, fold: usize, replicate: usize) -> u64 {
        derive_seed(self.seed, &format!("train/{group}/{topics}/{fold}/{replicate}"))
    }

    fn foldin_seed(&self, group: &str, topics: usize, fold: usize, replicate: usize) -> u64 {
        derive_seed(self.seed, &format!("foldin/{group}/{topics}/{fold}/{replicate}"))
    }

    fn mantel_seed(
        &self,
        a: &str,
        b: &str,
        topics: usize,
        fold: usize,
        rep_a: usize,
        rep_b: usize,
    ) -> u64 {
        derive_seed(
            self.seed,
            &format!("mantel/{a}/{b}/{topics}/{fold}/{rep_a}/{rep_b}"),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub group_a: String,
    pub group_b: String,
    pub topics: usize,
    pub fold: usize,
    pub replicate_a: usize,
    pub replicate_b: usize,
    pub rho: f64,
    /// Permutation p-value; absent for within-group stability rows.
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedCell {
    pub group: String,
    pub topics: usize,
    pub fold: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub failed: Vec<FailedCell>,
    pub permutations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub group_a: String,
    pub group_b: String,
    pub topics: usize,
    pub pairs: usize,
    pub median_rho: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    /// Count of pairs with p < 0.05, when p-values were computed.
    pub significant: Option<usize>,
}

impl CorrelationReport {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut body =
            String::from("group_a,group_b,topics,fold,replicate_a,replicate_b,rho,p\n");
        for row in &self.rows {
            let p = row.p.map_or_else(String::new, |p| format!("{p}"));
            body.push_str(&format!(
                "{},{},{},{},{},{},{},{p}\n",
                row.group_a,
                row.group_b,
                row.topics,
                row.fold,
                row.replicate_a,
                row.replicate_b,
                row.rho
            ));
        }
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// Collapse rows to per-(pair of groups, topic count) summaries.
    pub fn summaries(&self) -> Vec<SummaryEntry> {
        let mut buckets: BTreeMap<(String, String, usize), Vec<&CorrelationRow>> = BTreeMap::new();
        for row in &self.rows {
            buckets
                .entry((row.group_a.clone(), row.group_b.clone(), row.topics))
                .or_default()
                .push(row);
        }
        buckets
            .into_iter()
            .map(|((group_a, group_b, topics), rows)| {
                let mut rhos: Vec<f64> = rows.iter().map(|r| r.rho).collect();
                rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let significant = rows.iter().any(|r| r.p.is_some()).then(|| {
                    rows.iter()
                        .filter(|r| r.p.is_some_and(|p| p < 0.05))
                        .count()
                });
                SummaryEntry {
                    group_a,
                    group_b,
                    topics,
                    pairs: rows.len(),
                    median_rho: median_sorted(&rhos),
                    min_rho: rhos[0],
                    max_rho: rhos[rhos.len() - 1],
                    significant,
                }
            })
            .collect()
    }

    pub fn write_summary_json(&self, path: &std::path::Path) -> Result<()> {
        #[derive(Serialize)]
        struct Body<'a> {
            permutations: usize,
            summaries: Vec<SummaryEntry>,
            failed: Vec<BTreeMap<&'a str, String>>,
        }
        let failed = self
            .failed
            .iter()
            .map(|f| {
                BTreeMap::from([
                    ("group", f.group.clone()),
                    ("topics", f.topics.to_string()),
                    ("fold", f.fold.to_string()),
                    ("message", f.message.clone()),
                ])
            })
            .collect();
        let body = Body {
            permutations: self.permutations,
            summaries: self.summaries(),
            failed,
        };
        let text = serde_json::to_string_pretty(&body)
            .map_err(|e| Error::Validation(format!("cannot serialize summary: {e}")))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Train and held-out corpora for one (group, fold): the group's view of
/// the corpus restricted to its modalities, with otherwise-empty held-out
/// documents given a uniform pseudo-token bag.
struct FoldData {
    train: Corpus,
    heldout: Corpus,
}

fn prepare_folds(corpus: &Corpus, group: &ExperimentGroup, splits: &[FoldSplit]) -> Result<Vec<FoldData>> {
    let names: Vec<&str> = group.modalities.iter().map(String::as_str).collect();
    let restricted = corpus.restrict_modalities(&names)?;
    splits
        .iter()
        .map(|split| {
            let train = restricted.subset(&split.train_ids)?;
            let heldout = restricted.subset(&split.heldout_ids)?;
            let heldout = augment_empty_documents(&heldout, &names)?;
            Ok(FoldData { train, heldout })
        })
        .collect()
}

/// Coordinates of one training job: (group index, topics, fold, replicate).
type JobKey = (usize, usize, usize, usize);
type MatrixCell = std::result::Result<SimilarityMatrix, String>;

/// One similarity matrix per (group, topic count, fold, replicate); jobs
/// run in parallel, failures land in the report instead of aborting.
fn build_matrices(
    corpus: &Corpus,
    plan: &ExperimentPlan,
    groups: &[&ExperimentGroup],
) -> Result<BTreeMap<JobKey, MatrixCell>> {
    let split_seed = derive_seed(plan.seed, "cv-split");
    let splits = cv_split(corpus, plan.folds, split_seed)?;
    let mut folds_by_group = Vec::new();
    for group in groups {
        folds_by_group.push(prepare_folds(corpus, group, &splits)?);
    }

    let mut jobs: Vec<JobKey> = Vec::new();
    for gi in 0..groups.len() {
        for &topics in &plan.topic_counts {
            for fold in 0..plan.folds {
                for replicate in 0..plan.seeds_per_model {
                    jobs.push((gi, topics, fold, replicate));
                }
            }
        }
    }

    let results: Vec<(JobKey, MatrixCell)> = jobs
        .par_iter()
        .map(|&(gi, topics, fold, replicate)| {
            let group_name = &groups[gi].name;
            let data = &folds_by_group[gi][fold];
            let mut config = plan.train.clone();
            config.topics = topics;
            config.seed = plan.train_seed(group_name, topics, fold, replicate);
            let outcome = (|| -> Result<SimilarityMatrix> {
                let model = train(&data.train, &config)?;
                let folded = fold_in(
                    &model,
                    &data.heldout,
                    plan.foldin_sweeps,
                    plan.foldin_seed(group_name, topics, fold, replicate),
                )?;
                similarity_matrix(
                    &data.heldout,
                    &folded.doc_ids,
                    &folded.thetas,
                    &model,
                    Measure::Predictive,
                )
            })();
            ((gi, topics, fold, replicate), outcome.map_err(|e| e.to_string()))
        })
        .collect();
    Ok(results.into_iter().collect())
}

/// Within-group seed stability: for every (group, topic count, fold),
/// correlate the similarity matrices of all replicate pairs.
pub fn run_stability(corpus: &Corpus, plan: &ExperimentPlan) -> Result<CorrelationReport> {
    plan.validate()?;
    if plan.seeds_per_model < 2 {
        return Err(Error::Config(
            "stability needs at least 2 seeds per model".into(),
        ));
    }
    let groups: Vec<&ExperimentGroup> = plan.groups.iter().collect();
    let matrices = build_matrices(corpus, plan, &groups)?;

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (gi, group) in groups.iter().enumerate() {
        for &topics in &plan.topic_counts {
            for fold in 0..plan.folds {
                let mut cell = Vec::new();
                let mut broken = false;
                for replicate in 0..plan.seeds_per_model {
                    match &matrices[&(gi, topics, fold, replicate)] {
                        Ok(matrix) => cell.push(matrix),
                        Err(message) => {
                            failed.push(FailedCell {
                                group: group.name.clone(),
                                topics,
                                fold,
                                message: message.clone(),
                            });
                            broken = true;
                        }
                    }
                }
                if broken {
                    continue;
                }
                for i in 0..cell.len() {
                    for j in (i + 1)..cell.len() {
                        match spearman_offdiag(cell[i].values(), cell[j].values(), cell[i].n()) {
                            Ok(rho) => rows.push(CorrelationRow {
                                group_a: group.name.clone(),
                                group_b: group.name.clone(),
                                topics,
                                fold,
                                replicate_a: i,
                                replicate_b: j,
                                rho,
                                p: None,
                            }),
                            Err(e) => failed.push(FailedCell {
                                group: group.name.clone(),
                                topics,
                                fold,
                                message: e.to_string(),
                            }),
                        }
                    }
                }
            }
        }
    }
    Ok(CorrelationReport {
        rows,
        failed,
        permutations: plan.permutations,
    })
}

/// Cross-group association: for every (topic count, fold) and every
/// ordered replicate pair, the Mantel test between group A's and group B's
/// similarity matrices over the same held-out documents.
pub fn run_cross_group(
    corpus: &Corpus,
    plan: &ExperimentPlan,
    group_a: &str,
    group_b: &str,
) -> Result<CorrelationReport> {
    plan.validate()?;
    let find = |name: &str| -> Result<&ExperimentGroup> {
        plan.groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::Config(format!("plan has no group named '{name}'")))
    };
    let a = find(group_a)?;
    let b = find(group_b)?;
    if group_a == group_b {
        return Err(Error::Config(
            "cross-group comparison needs two different groups".into(),
        ));
    }
    let groups = vec![a, b];
    let matrices = build_matrices(corpus, plan, &groups)?;

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &topics in &plan.topic_counts {
        for fold in 0..plan.folds {
            let mut cell_a = Vec::new();
            let mut cell_b = Vec::new();
            let mut broken = false;
            for (gi, group, cell) in [(0usize, a, &mut cell_a), (1usize, b, &mut cell_b)] {
                for replicate in 0..plan.seeds_per_model {
                    match &matrices[&(gi, topics, fold, replicate)] {
                        Ok(matrix) => cell.push(matrix),
                        Err(message) => {
                            failed.push(FailedCell {
                                group: group.name.clone(),
                                topics,
                                fold,
                                message: message.clone(),
                            });
                            broken = true;
                        }
                    }
                }
            }
            if broken {
                continue;
            }
            for (i, ma) in cell_a.iter().enumerate() {
                for (j, mb) in cell_b.iter().enumerate() {
                    if ma.doc_ids != mb.doc_ids {
                        return Err(Error::Validation(format!(
                            "held-out documents differ between groups in fold {fold}"
                        )));
                    }
                    let outcome = mantel_test(
                        ma.values(),
                        mb.values(),
                        ma.n(),
                        plan.permutations,
                        plan.mantel_seed(group_a, group_b, topics, fold, i, j),
                        plan.tail,
                    );
                    match outcome {
                        Ok(result) => rows.push(CorrelationRow {
                            group_a: group_a.to_string(),
                            group_b: group_b.to_string(),
                            topics,
                            fold,
                            replicate_a: i,
                            replicate_b: j,
                            rho: result.rho,
                            p: Some(result.p),
                        }),
                        Err(e) => failed.push(FailedCell {
                            group: format!("{group_a}×{group_b}"),
                            topics,
                            fold,
                            message: e.to_string(),
                        }),
                    }
                }
            }
        }
    }
    Ok(CorrelationReport {
        rows,
        failed,
        permutations: plan.permutations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn five_number(values: &mut Vec<f64>) -> FiveNumber {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| -> f64 {
        let pos = q * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        values[lo] * (1.0 - frac) + values[hi] * frac
    };
    FiveNumber {
        min: values[0],
        q1: quantile(0.25),
        median: quantile(0.5),
        q3: quantile(0.75),
        max: values[values.len() - 1],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSeparation {
    pub within: FiveNumber,
    pub between: FiveNumber,
    /// median(within) − median(between); positive when same-label pairs
    /// score higher.
    pub median_gap: f64,
    pub within_pairs: usize,
    pub between_pairs: usize,
}

/// Split a similarity matrix's off-diagonal entries by whether the row and
/// column documents share a label.
pub fn summarize_group_separation(
    matrix: &SimilarityMatrix,
    labels: &BTreeMap<String, String>,
) -> Result<GroupSeparation> {
    let doc_labels: Vec<&String> = matrix
        .doc_ids
        .iter()
        .map(|id| {
            labels
                .get(id)
                .ok_or_else(|| Error::Validation(format!("document '{id}' has no label")))
        })
        .collect::<Result<_>>()?;
    let distinct: std::collections::BTreeSet<&String> = doc_labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Validation(
            "group separation needs at least two labels".into(),
        ));
    }
    let n = matrix.n();
    let mut within = Vec::new();
    let mut between = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if doc_labels[i] == doc_labels[j] {
                within.push(matrix.get(i, j));
            } else {
                between.push(matrix.get(i, j));
            }
        }
    }
    if within.is_empty() || between.is_empty() {
        return Err(Error::Validation(
            "need both same-label and different-label pairs".into(),
        ));
    }
    let within_pairs = within.len();
    let between_pairs = between.len();
    let within = five_number(&mut within);
    let between = five_number(&mut between);
    Ok(GroupSeparation {
        median_gap: within.median - between.median,
        within,
        between,
        within_pairs,
        between_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::Measure;
    use crate::synthetic::{generate, Coupling, ModalitySpec, SyntheticConfig};

    fn quick_train() -> TrainConfig {
        let mut train = TrainConfig::new(2);
        train.iterations = 60;
        train.evidence_window = 10;
        train.burn_in = 20;
        train.hyper_update_every = 10;
        train
    }

    fn two_modality_corpus(seed: u64) -> Corpus {
        generate(&SyntheticConfig {
            docs: 24,
            topics: 2,
            modalities: vec![
                ModalitySpec {
                    name: "wide".into(),
                    vocab_size: 12,
                    tokens_per_doc: 14,
                },
                ModalitySpec {
                    name: "narrow".into(),
                    vocab_size: 8,
                    tokens_per_doc: 10,
                },
            ],
            doc_alpha: 0.3,
            phi_concentration: 0.25,
            labels: None,
            coupling: Coupling::Shared,
            seed,
        })
        .unwrap()
        .corpus
    }

    fn small_plan() -> ExperimentPlan {
        let groups = vec![
            ExperimentGroup {
                name: "wide".into(),
                modalities: vec!["wide".into()],
            },
            ExperimentGroup {
                name: "narrow".into(),
                modalities: vec!["narrow".into()],
            },
        ];
        let mut plan = ExperimentPlan::new(groups, vec![2], quick_train());
        plan.seeds_per_model = 2;
        plan.folds = 2;
        plan.permutations = 30;
        plan.foldin_sweeps = 25;
        plan.seed = 7;
        plan
    }

    #[test]
    fn stability_produces_one_row_per_replicate_pair_and_is_deterministic() {
        let corpus = two_modality_corpus(3);
        let plan = small_plan();
        let report = run_stability(&corpus, &plan).unwrap();
        assert!(report.failed.is_empty(), "failed cells: {:?}", report.failed);
        // 2 groups × 1 topic count × 2 folds × C(2,2)=1 pair.
        assert_eq!(report.rows.len(), 4);
        for row in &report.rows {
            assert_eq!(row.group_a, row.group_b);
            assert!(row.rho.is_finite() && (-1.0..=1.0).contains(&row.rho));
            assert!(row.p.is_none());
        }
        let again = run_stability(&corpus, &plan).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn stability_requires_replicates() {
        let corpus = two_modality_corpus(3);
        let mut plan = small_plan();
        plan.seeds_per_model = 1;
        assert!(run_stability(&corpus, &plan).is_err());
    }

    #[test]
    fn cross_group_rows_cover_all_ordered_replicate_pairs_with_p_values() {
        let corpus = two_modality_corpus(4);
        let plan = small_plan();
        let report = run_cross_group(&corpus, &plan, "wide", "narrow").unwrap();
        assert!(report.failed.is_empty(), "failed cells: {:?}", report.failed);
        // 1 topic count × 2 folds × 2×2 ordered pairs.
        assert_eq!(report.rows.len(), 8);
        for row in &report.rows {
            assert_eq!((row.group_a.as_str(), row.group_b.as_str()), ("wide", "narrow"));
            let p = row.p.expect("cross rows carry p");
            assert!(p > 0.0 && p <= 1.0);
            assert!(row.rho.is_finite());
        }
        assert!(run_cross_group(&corpus, &plan, "wide", "wide").is_err());
        assert!(run_cross_group(&corpus, &plan, "wide", "missing").is_err());
    }

    #[test]
    fn reports_write_csv_and_summary_json() {
        let report = CorrelationReport {
            rows: vec![
                CorrelationRow {
                    group_a: "a".into(),
                    group_b: "a".into(),
                    topics: 4,
                    fold: 0,
                    replicate_a: 0,
                    replicate_b: 1,
                    rho: 0.9,
                    p: None,
                },
                CorrelationRow {
                    group_a: "a".into(),
                    group_b: "a".into(),
                    topics: 4,
                    fold: 1,
                    replicate_a: 0,
                    replicate_b: 1,
                    rho: 0.7,
                    p: None,
                },
                CorrelationRow {
                    group_a: "a".into(),
                    group_b: "b".into(),
                    topics: 4,
                    fold: 0,
                    replicate_a: 0,
                    replicate_b: 0,
                    rho: 0.4,
                    p: Some(0.01),
                },
            ],
            failed: vec![FailedCell {
                group: "b".into(),
                topics: 8,
                fold: 1,
                message: "boom".into(),
            }],
            permutations: 99,
        };
        let summaries = report.summaries();
        assert_eq!(summaries.len(), 2);
        let own = summaries.iter().find(|s| s.group_b == "a").unwrap();
        assert_eq!(own.pairs, 2);
        assert!((own.median_rho - 0.8).abs() < 1e-12);
        assert_eq!(own.significant, None);
        let cross = summaries.iter().find(|s| s.group_b == "b").unwrap();
        assert_eq!(cross.significant, Some(1));

        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("rows.csv");
        report.write_csv(&csv_path).unwrap();
        let body = std::fs::read_to_string(&csv_path).unwrap();
        assert!(body.starts_with("group_a,group_b,topics,fold,replicate_a,replicate_b,rho,p\n"));
        assert_eq!(body.lines().count(), 4);
        assert!(body.contains("a,a,4,0,0,1,0.9,\n"), "{body}");
        assert!(body.contains("a,b,4,0,0,0,0.4,0.01\n"), "{body}");

        let json_path = dir.path().join("summary.json");
        report.write_summary_json(&json_path).unwrap();
        let json = std::fs::read_to_string(&json_path).unwrap();
        assert!(json.contains("\"permutations\": 99"));
        assert!(json.contains("\"boom\""));
    }

    #[test]
    fn separation_summary_matches_hand_counts() {
        let ids: Vec<String> = ["a0", "a1", "b0", "b1"].iter().map(|s| s.to_string()).collect();
        // Within-label entries are 1.0, across labels 0.0.
        let mut values = vec![0.0; 16];
        for (i, vi) in ids.iter().enumerate() {
            for (j, vj) in ids.iter().enumerate() {
                if vi.as_bytes()[0] == vj.as_bytes()[0] {
                    values[i * 4 + j] = 1.0;
                }
            }
        }
        let matrix = SimilarityMatrix::new(ids, Measure::Inner, None, values).unwrap();
        let labels: BTreeMap<String, String> = [
            ("a0", "left"),
            ("a1", "left"),
            ("b0", "right"),
            ("b1", "right"),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        let summary = summarize_group_separation(&matrix, &labels).unwrap();
        assert_eq!(summary.within_pairs, 4);
        assert_eq!(summary.between_pairs, 8);
        assert_eq!(summary.within.median, 1.0);
        assert_eq!(summary.between.median, 0.0);
        assert_eq!(summary.median_gap, 1.0);

        let mut missing = labels.clone();
        missing.remove("b1");
        assert!(summarize_group_separation(&matrix, &missing).is_err());
        let uniform: BTreeMap<String, String> = matrix
            .doc_ids
            .iter()
            .map(|id| (id.clone(), "one".to_string()))
            .collect();
        assert!(summarize_group_separation(&matrix, &uniform).is_err());
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let mut plan = small_plan();
        plan.folds = 1;
        assert!(plan.validate().is_err());
        let mut plan = small_plan();
        plan.topic_counts.clear();
        assert!(plan.validate().is_err());
        let mut plan = small_plan();
        plan.groups[1].name = plan.groups[0].name.clone();
        assert!(plan.validate().is_err());
        let mut plan = small_plan();
        plan.groups[0].modalities.clear();
        assert!(plan.validate().is_err());
        let mut plan = small_plan();
        plan.train.iterations = 5;
        plan.train.evidence_window = 10;
        assert!(plan.validate().is_err());
    }
}
