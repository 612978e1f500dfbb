//! Multi-modal bag-of-words corpora: loading, validation, cross-validation
//! splitting, and empty-document augmentation.
//!
//! On disk a corpus is a directory of per-modality pairs `<name>.counts`
//! (sparse bag file: header `D V NNZ`, then `doc word count` triples,
//! 0-based) and `<name>.vocab` (one token per line), an optional tab-separated
//! `labels.tsv`, and a `corpus.manifest` pinning the modality order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Sparse word counts of one document in one modality: word id → count ≥ 1.
pub type WordBag = BTreeMap<u32, u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    modality_name: String,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn new(modality_name: impl Into<String>, tokens: Vec<String>) -> Result<Self> {
        let modality_name = modality_name.into();
        if tokens.is_empty() {
            return Err(Error::Validation(format!(
                "vocabulary '{modality_name}' is empty"
            )));
        }
        let mut seen = BTreeSet::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Validation(format!(
                    "vocabulary '{modality_name}': empty token at id {i}"
                )));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::Validation(format!(
                    "vocabulary '{modality_name}': duplicate token '{t}'"
                )));
            }
        }
        Ok(Vocabulary {
            modality_name,
            tokens,
        })
    }

    /// Synthetic vocabulary `w0..w{size-1}`, used by generators and quantizer output.
    pub fn numbered(modality_name: impl Into<String>, size: usize) -> Result<Self> {
        let width = size.saturating_sub(1).to_string().len();
        Vocabulary::new(
            modality_name,
            (0..size).map(|i| format!("w{i:0width$}")).collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.modality_name
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn load(path: &Path, modality_name: impl Into<String>) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            tokens.push(line);
        }
        while tokens.last().is_some_and(|t| t.is_empty()) {
            tokens.pop();
        }
        Vocabulary::new(modality_name, tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    /// One bag per corpus modality, in corpus modality order.
    pub counts: Vec<WordBag>,
    pub label: Option<String>,
}

impl Document {
    pub fn total_tokens(&self) -> u64 {
        self.counts
            .iter()
            .map(|bag| bag.values().map(|&c| u64::from(c)).sum::<u64>())
            .sum()
    }

    pub fn tokens_in(&self, modality: usize) -> u64 {
        self.counts[modality].values().map(|&c| u64::from(c)).sum()
    }

    pub fn is_empty_in(&self, modalities: &[usize]) -> bool {
        modalities.iter().all(|&m| self.counts[m].is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    vocabularies: Vec<Vocabulary>,
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        vocabularies: Vec<Vocabulary>,
        documents: Vec<Document>,
    ) -> Result<Self> {
        let name = name.into();
        if vocabularies.is_empty() {
            return Err(Error::Validation(format!("corpus '{name}' has no modalities")));
        }
        let mut modality_names = BTreeSet::new();
        for v in &vocabularies {
            if !modality_names.insert(v.name()) {
                return Err(Error::Validation(format!(
                    "duplicate modality '{}'",
                    v.name()
                )));
            }
        }
        let mut doc_ids = BTreeSet::new();
        for doc in &documents {
            if !doc_ids.insert(doc.doc_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate doc_id '{}'",
                    doc.doc_id
                )));
            }
            if doc.counts.len() != vocabularies.len() {
                return Err(Error::Dimension(format!(
                    "doc '{}' has {} modality bags, corpus declares {}",
                    doc.doc_id,
                    doc.counts.len(),
                    vocabularies.len()
                )));
            }
            for (m, bag) in doc.counts.iter().enumerate() {
                let v = vocabularies[m].size() as u32;
                for (&w, &c) in bag {
                    if w >= v {
                        return Err(Error::Validation(format!(
                            "doc '{}' modality '{}': word id {w} >= vocabulary size {v}",
                            doc.doc_id,
                            vocabularies[m].name()
                        )));
                    }
                    if c == 0 {
                        return Err(Error::Validation(format!(
                            "doc '{}' modality '{}': zero count for word {w}",
                            doc.doc_id,
                            vocabularies[m].name()
                        )));
                    }
                }
            }
        }
        Ok(Corpus {
            name,
            vocabularies,
            documents,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn modality_count(&self) -> usize {
        self.vocabularies.len()
    }

    pub fn doc_count(&self) -> usize {
        self.documents.len()
    }

    pub fn vocabularies(&self) -> &[Vocabulary] {
        &self.vocabularies
    }

    pub fn vocabulary(&self, modality: usize) -> &Vocabulary {
        &self.vocabularies[modality]
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, index: usize) -> &Document {
        &self.documents[index]
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.vocabularies.iter().position(|v| v.name() == name)
    }

    pub fn modality_names(&self) -> Vec<String> {
        self.vocabularies.iter().map(|v| v.name().to_string()).collect()
    }

    /// Documents with zero tokens across every modality (retained at assembly,
    /// surfaced here so callers can decide what to do with them).
    pub fn empty_document_ids(&self) -> Vec<&str> {
        self.documents
            .iter()
            .filter(|d| d.total_tokens() == 0)
            .map(|d| d.doc_id.as_str())
            .collect()
    }

    /// View containing exactly the given documents, in corpus order.
    pub fn subset(&self, ids: &BTreeSet<String>) -> Result<Corpus> {
        let known: BTreeSet<&str> = self.documents.iter().map(|d| d.doc_id.as_str()).collect();
        let missing: Vec<&str> = ids
            .iter()
            .map(String::as_str)
            .filter(|id| !known.contains(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "unknown doc ids in subset: {}",
                missing.join(", ")
            )));
        }
        let documents = self
            .documents
            .iter()
            .filter(|d| ids.contains(&d.doc_id))
            .cloned()
            .collect();
        Corpus::new(self.name.clone(), self.vocabularies.clone(), documents)
    }

    /// View restricted to the named modalities, in the order given.
    pub fn restrict_modalities(&self, names: &[&str]) -> Result<Corpus> {
        let mut indices = Vec::with_capacity(names.len());
        for &n in names {
            let m = self
                .modality_index(n)
                .ok_or_else(|| Error::Validation(format!("unknown modality '{n}'")))?;
            indices.push(m);
        }
        if indices.is_empty() {
            return Err(Error::Validation("modality restriction is empty".into()));
        }
        let vocabularies = indices.iter().map(|&m| self.vocabularies[m].clone()).collect();
        let documents = self
            .documents
            .iter()
            .map(|d| Document {
                doc_id: d.doc_id.clone(),
                counts: indices.iter().map(|&m| d.counts[m].clone()).collect(),
                label: d.label.clone(),
            })
            .collect();
        Corpus::new(self.name.clone(), vocabularies, documents)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = format!("name={}\nmodalities={}\n", self.name, self.modality_names().join(","));
        for (m, vocab) in self.vocabularies.iter().enumerate() {
            vocab.save(&dir.join(format!("{}.vocab", vocab.name())))?;
            let counts_path = dir.join(format!("{}.counts", vocab.name()));
            let mut entries = Vec::new();
            for (d, doc) in self.documents.iter().enumerate() {
                for (&w, &c) in &doc.counts[m] {
                    entries.push((d, w, c));
                }
            }
            let mut body = format!(
                "{} {} {}\n",
                self.documents.len(),
                vocab.size(),
                entries.len()
            );
            for (d, w, c) in entries {
                body.push_str(&format!("{d} {w} {c}\n"));
            }
            fs::write(&counts_path, body).map_err(|e| Error::io(&counts_path, e))?;
        }
        let labelled: Vec<&Document> = self.documents.iter().filter(|d| d.label.is_some()).collect();
        if !labelled.is_empty() {
            let path = dir.join("labels.tsv");
            let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            for d in labelled {
                writeln!(file, "{}\t{}", d.doc_id, d.label.as_deref().unwrap())
                    .map_err(|e| Error::io(&path, e))?;
            }
        }
        let ids_path = dir.join("doc_ids.txt");
        let mut ids = String::new();
        for d in &self.documents {
            ids.push_str(&d.doc_id);
            ids.push('\n');
        }
        fs::write(&ids_path, ids).map_err(|e| Error::io(&ids_path, e))?;
        manifest.push_str("format=sparse-bags-v1\n");
        let mpath = dir.join("corpus.manifest");
        fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Corpus> {
        let mpath = dir.join("corpus.manifest");
        let manifest = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let mut name = None;
        let mut modality_order = None;
        for line in manifest.lines() {
            if let Some(v) = line.strip_prefix("name=") {
                name = Some(v.to_string());
            } else if let Some(v) = line.strip_prefix("modalities=") {
                modality_order = Some(
                    v.split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.to_string())
                        .collect::<Vec<_>>(),
                );
            }
        }
        let name = name.ok_or_else(|| Error::parse(&mpath, 0, "missing name="))?;
        let order = modality_order.ok_or_else(|| Error::parse(&mpath, 0, "missing modalities="))?;

        let mut modalities = Vec::new();
        for modality in &order {
            let pair = load_modality(
                &dir.join(format!("{modality}.counts")),
                &dir.join(format!("{modality}.vocab")),
            )?;
            modalities.push((Vocabulary::new(modality.clone(), pair.0.tokens)?, pair.1));
        }

        let ids_path = dir.join("doc_ids.txt");
        let doc_ids = if ids_path.exists() {
            let body = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
            Some(body.lines().map(|l| l.to_string()).collect::<Vec<_>>())
        } else {
            None
        };

        let mut corpus = assemble_corpus(name, modalities, None)?;
        if let Some(ids) = doc_ids {
            if ids.len() != corpus.documents.len() {
                return Err(Error::Validation(format!(
                    "doc_ids.txt lists {} ids for {} documents",
                    ids.len(),
                    corpus.documents.len()
                )));
            }
            // Restore original identifiers (assembly numbers documents by
            // index) and re-validate their uniqueness.
            for (doc, id) in corpus.documents.iter_mut().zip(&ids) {
                doc.doc_id = id.clone();
            }
            corpus = Corpus::new(corpus.name, corpus.vocabularies, corpus.documents)?;
        }

        let labels_path = dir.join("labels.tsv");
        if labels_path.exists() {
            let labels = load_labels(&labels_path)?;
            for doc in corpus.documents.iter_mut() {
                doc.label = labels.get(&doc.doc_id).cloned();
            }
        }
        Ok(corpus)
    }
}

/// Parse one modality: a sparse counts file plus its vocabulary file.
pub fn load_modality(counts_path: &Path, vocab_path: &Path) -> Result<(Vocabulary, Vec<WordBag>)> {
    let vocab = Vocabulary::load(vocab_path, stem_of(vocab_path))?;
    let file = fs::File::open(counts_path).map_err(|e| Error::io(counts_path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(counts_path, 1, "empty file, expected 'D V NNZ' header"))?;
    let header = header.map_err(|e| Error::io(counts_path, e))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::parse(
            counts_path,
            1,
            format!("header must be 'D V NNZ', got '{header}'"),
        ));
    }
    let parse_count = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| {
            Error::parse(counts_path, 1, format!("{what} is not a count: '{s}'"))
        })
    };
    let docs = parse_count(parts[0], "D")?;
    let vocab_size = parse_count(parts[1], "V")?;
    let nnz = parse_count(parts[2], "NNZ")?;
    if vocab_size != vocab.size() {
        return Err(Error::Validation(format!(
            "{}: header V={vocab_size} but vocabulary has {} tokens",
            counts_path.display(),
            vocab.size()
        )));
    }

    let mut bags = vec![WordBag::new(); docs];
    let mut entries = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(counts_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                counts_path,
                lineno,
                format!("expected 'doc word count', got '{line}'"),
            ));
        }
        let parse_field = |s: &str, what: &str| -> Result<u64> {
            s.parse().map_err(|_| {
                Error::parse(counts_path, lineno, format!("{what} is not a count: '{s}'"))
            })
        };
        let d = parse_field(fields[0], "doc id")? as usize;
        let w = parse_field(fields[1], "word id")?;
        let c = parse_field(fields[2], "count")?;
        if d >= docs {
            return Err(Error::Validation(format!(
                "{}:{lineno}: doc id {d} >= D={docs}",
                counts_path.display()
            )));
        }
        if w >= vocab_size as u64 {
            return Err(Error::Validation(format!(
                "{}:{lineno}: word id {w} >= V={vocab_size}",
                counts_path.display()
            )));
        }
        if c == 0 {
            return Err(Error::Validation(format!(
                "{}:{lineno}: zero count",
                counts_path.display()
            )));
        }
        if bags[d].insert(w as u32, c as u32).is_some() {
            return Err(Error::Validation(format!(
                "{}:{lineno}: duplicate entry for (doc {d}, word {w})",
                counts_path.display()
            )));
        }
        entries += 1;
    }
    if entries != nnz {
        return Err(Error::Validation(format!(
            "{}: header declares NNZ={nnz} but file has {entries} entries",
            counts_path.display()
        )));
    }
    Ok((vocab, bags))
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "modality".into())
}

pub fn load_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected 'doc_id<TAB>label'"))?;
        if labels.insert(id.to_string(), label.to_string()).is_some() {
            return Err(Error::Validation(format!(
                "{}:{lineno}: duplicate label for doc '{id}'",
                path.display()
            )));
        }
    }
    Ok(labels)
}

/// Fuse per-modality bags over a common document universe into one corpus.
///
/// Documents are identified by their index in the bag sequences; doc ids are
/// the decimal index strings. Documents with zero tokens in every modality
/// are retained (see [`Corpus::empty_document_ids`]).
pub fn assemble_corpus(
    name: impl Into<String>,
    modalities: Vec<(Vocabulary, Vec<WordBag>)>,
    labels: Option<&BTreeMap<String, String>>,
) -> Result<Corpus> {
    let name = name.into();
    if modalities.is_empty() {
        return Err(Error::Validation(format!("corpus '{name}' has no modalities")));
    }
    let docs = modalities[0].1.len();
    for (vocab, bags) in &modalities {
        if bags.len() != docs {
            return Err(Error::Validation(format!(
                "conflicting document universes: modality '{}' declares {} documents, '{}' declares {docs}",
                vocab.name(),
                bags.len(),
                modalities[0].0.name()
            )));
        }
    }
    let mut per_doc: Vec<Vec<WordBag>> = (0..docs).map(|_| Vec::new()).collect();
    let mut vocabularies = Vec::new();
    for (vocab, bags) in modalities {
        for (d, bag) in bags.into_iter().enumerate() {
            per_doc[d].push(bag);
        }
        vocabularies.push(vocab);
    }
    let documents = per_doc
        .into_iter()
        .enumerate()
        .map(|(d, counts)| {
            let doc_id = d.to_string();
            let label = labels.and_then(|l| l.get(&doc_id).cloned());
            Document {
                doc_id,
                counts,
                label,
            }
        })
        .collect();
    Corpus::new(name, vocabularies, documents)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: BTreeSet<String>,
    pub heldout_ids: BTreeSet<String>,
}

/// Partition the corpus into K cross-validation folds.
///
/// Deterministic given the seed. When any document carries a label, the split
/// is stratified: documents are grouped by label (unlabelled documents form
/// their own stratum), shuffled within each stratum, and dealt round-robin
/// with the deal position carried across strata — so both the overall fold
/// sizes and each label's share differ by at most one.
pub fn cv_split(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    let d = corpus.doc_count();
    if k < 2 {
        return Err(Error::Config(format!("cv_split needs K >= 2, got {k}")));
    }
    if k > d {
        return Err(Error::Config(format!(
            "cv_split needs K <= D, got K={k} for {d} documents"
        )));
    }
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, doc) in corpus.documents().iter().enumerate() {
        strata
            .entry(doc.label.as_deref().unwrap_or(""))
            .or_default()
            .push(i);
    }
    let mut rng = rng_from(seed);
    let mut fold_of = vec![0usize; d];
    let mut position = 0usize;
    for docs in strata.values_mut() {
        docs.shuffle(&mut rng);
        for &doc in docs.iter() {
            fold_of[doc] = position % k;
            position += 1;
        }
    }
    let mut folds: Vec<FoldSplit> = (0..k)
        .map(|fold_index| FoldSplit {
            fold_index,
            train_ids: BTreeSet::new(),
            heldout_ids: BTreeSet::new(),
        })
        .collect();
    for (i, doc) in corpus.documents().iter().enumerate() {
        for fold in folds.iter_mut() {
            if fold_of[i] == fold.fold_index {
                fold.heldout_ids.insert(doc.doc_id.clone());
            } else {
                fold.train_ids.insert(doc.doc_id.clone());
            }
        }
    }
    Ok(folds)
}

/// Replace documents that are empty across the given modalities by
/// pseudo-documents with one occurrence of every word of those modalities.
///
/// Idempotent: a pseudo-document is not empty, so a second pass changes
/// nothing. An empty modality subset leaves the input unchanged.
pub fn augment_empty_documents(corpus: &Corpus, modality_subset: &[&str]) -> Result<Corpus> {
    let mut indices = Vec::with_capacity(modality_subset.len());
    for &name in modality_subset {
        indices.push(
            corpus
                .modality_index(name)
                .ok_or_else(|| Error::Validation(format!("unknown modality '{name}'")))?,
        );
    }
    let documents = corpus
        .documents()
        .iter()
        .map(|doc| {
            if indices.is_empty() || !doc.is_empty_in(&indices) {
                return doc.clone();
            }
            let mut counts = doc.counts.clone();
            for &m in &indices {
                counts[m] = (0..corpus.vocabulary(m).size() as u32).map(|w| (w, 1)).collect();
            }
            Document {
                doc_id: doc.doc_id.clone(),
                counts,
                label: doc.label.clone(),
            }
        })
        .collect();
    Corpus::new(corpus.name(), corpus.vocabularies().to_vec(), documents)
}
