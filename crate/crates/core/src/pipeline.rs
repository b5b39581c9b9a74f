//! Corpus transformations: surprisal/frequency attachment, flat-structure
//! merging, exclusions, dependency extraction and reading-time tables.
//!
//! The intended order is
//! `attach_surprisal -> attach_frequency -> merge -> apply_exclusions ->
//! extract_dependencies (-> build_rt_table)`.
//!
//! Positions used for dependency lengths are word positions over the words
//! that survive exclusion. A merged flat structure occupies one position per
//! component word and is located at its first word, so in "Isaac Newton left"
//! the subject sits at position 1, "left" at 3, and the dependency spans one
//! intervening word.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conllu::{
    base_relation, Corpus, FlatPart, Genre, Sentence, SentenceExclusion, Token, TokenExclusion,
};
use crate::format::{ser_f64, ser_opt_f64};
use crate::{Error, Result};

pub const DEFAULT_MAX_SURPRISAL_BITS: f64 = 20.0;
pub const DEFAULT_MIN_SENTENCE_LEN: usize = 5;
pub const DEFAULT_RT_MIN_MS: f64 = 100.0;
pub const DEFAULT_RT_MAX_MS: f64 = 3000.0;

// ---------------------------------------------------------------------------
// Surprisal and frequency attachment

#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalEntry {
    pub doc_id: String,
    pub form: String,
    pub surprisal_bits: f64,
}

/// Word-level surprisal keyed by `(sent_id, token_index)`, where the index is
/// the token ID in the treebank.
#[derive(Debug, Clone, Default)]
pub struct SurprisalTable {
    rows: HashMap<(String, usize), SurprisalEntry>,
}

impl SurprisalTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sent_id: &str, token_index: usize, entry: SurprisalEntry) -> Result<()> {
        if !entry.surprisal_bits.is_finite() {
            return Err(Error::Alignment {
                sent_id: sent_id.to_string(),
                index: token_index,
                message: format!("surprisal {} is not finite", entry.surprisal_bits),
            });
        }
        let key = (sent_id.to_string(), token_index);
        if self.rows.contains_key(&key) {
            return Err(Error::Alignment {
                sent_id: sent_id.to_string(),
                index: token_index,
                message: "duplicate surprisal row".into(),
            });
        }
        self.rows.insert(key, entry);
        Ok(())
    }

    pub fn get(&self, sent_id: &str, token_index: usize) -> Option<&SurprisalEntry> {
        self.rows.get(&(sent_id.to_string(), token_index))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Copy surprisal onto every token, checking that the table's word form
/// matches the treebank's.
pub fn attach_surprisal(mut corpus: Corpus, table: &SurprisalTable) -> Result<Corpus> {
    for s in corpus.sentences_mut() {
        for t in &mut s.tokens {
            let entry = table.get(&s.sent_id, t.source_index).ok_or_else(|| Error::Alignment {
                sent_id: s.sent_id.clone(),
                index: t.source_index,
                message: format!("no surprisal row for `{}`", t.form),
            })?;
            if entry.form != t.form {
                return Err(Error::Alignment {
                    sent_id: s.sent_id.clone(),
                    index: t.source_index,
                    message: format!("form mismatch: table `{}` vs corpus `{}`", entry.form, t.form),
                });
            }
            t.surprisal_bits = Some(entry.surprisal_bits);
        }
    }
    Ok(corpus)
}

/// Log-frequency lexicon with case-folded keys.
#[derive(Debug, Clone, Default)]
pub struct FrequencyLexicon {
    entries: HashMap<String, f64>,
}

impl FrequencyLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, form: &str, log_frequency: f64) {
        self.entries.insert(form.to_lowercase(), log_frequency);
    }

    pub fn get(&self, form: &str) -> Option<f64> {
        self.entries.get(&form.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FromIterator<(String, f64)> for FrequencyLexicon {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        let mut lex = Self::new();
        for (form, f) in iter {
            lex.insert(&form, f);
        }
        lex
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub tokens: usize,
    pub matched: usize,
    pub fallback: usize,
}

pub fn attach_frequency(
    mut corpus: Corpus,
    lexicon: &FrequencyLexicon,
    fallback: f64,
) -> (Corpus, FrequencyReport) {
    let mut report = FrequencyReport::default();
    for s in corpus.sentences_mut() {
        for t in &mut s.tokens {
            report.tokens += 1;
            match lexicon.get(&t.form) {
                Some(f) => {
                    report.matched += 1;
                    t.log_frequency = Some(f);
                    t.frequency_fallback = false;
                }
                None => {
                    report.fallback += 1;
                    t.log_frequency = Some(fallback);
                    t.frequency_fallback = true;
                }
            }
        }
    }
    (corpus, report)
}

// ---------------------------------------------------------------------------
// Flat structures

fn is_flat(t: &Token) -> bool {
    t.base_deprel() == "flat"
}

fn sum_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values.sum()
}

fn parts_of(t: &Token) -> Vec<FlatPart> {
    if t.flat_parts.is_empty() {
        vec![FlatPart {
            source_index: t.source_index,
            form: t.form.clone(),
            surprisal_bits: t.surprisal_bits,
            log_frequency: t.log_frequency,
        }]
    } else {
        t.flat_parts.clone()
    }
}

/// Collapse each flat structure into one token at the position of its first
/// word. The unit keeps the external attachment of the structure's head,
/// joins the forms with spaces and sums surprisal and log frequency over the
/// components. Remaining tokens are renumbered and heads remapped.
pub fn merge_flat_structures(s: &Sentence) -> Sentence {
    if s.excluded == Some(SentenceExclusion::Malformed) || !s.tokens.iter().any(is_flat) {
        return s.clone();
    }
    let n = s.tokens.len();
    // group[i] = 0-based index of the non-flat token that heads i's flat chain
    let mut group = vec![usize::MAX; n];
    fn resolve(i: usize, s: &Sentence, group: &mut [usize]) -> usize {
        if group[i] != usize::MAX {
            return group[i];
        }
        let t = &s.tokens[i];
        let g = if is_flat(t) && t.head != 0 {
            resolve(t.head - 1, s, group)
        } else {
            i
        };
        group[i] = g;
        g
    }
    for i in 0..n {
        resolve(i, s, &mut group);
    }
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &g) in group.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }

    let mut new_index = vec![0usize; n];
    let mut units: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let m = &members[&group[i]];
        if m[0] == i {
            units.push((group[i], m.clone()));
        }
    }
    for (k, (_, m)) in units.iter().enumerate() {
        for &i in m {
            new_index[i] = k + 1;
        }
    }

    let tokens = units
        .into_iter()
        .enumerate()
        .map(|(k, (root, m))| {
            let r = &s.tokens[root];
            let head = if r.head == 0 { 0 } else { new_index[r.head - 1] };
            if m.len() == 1 {
                return Token {
                    index: k + 1,
                    head,
                    ..r.clone()
                };
            }
            let parts: Vec<FlatPart> = m.iter().flat_map(|&i| parts_of(&s.tokens[i])).collect();
            let first = &s.tokens[m[0]];
            Token {
                index: k + 1,
                source_index: first.source_index,
                form: join(m.iter().map(|&i| s.tokens[i].form.as_str())),
                lemma: join(m.iter().map(|&i| s.tokens[i].lemma.as_str())),
                head,
                surprisal_bits: sum_opt(parts.iter().map(|p| p.surprisal_bits)),
                log_frequency: sum_opt(parts.iter().map(|p| p.log_frequency)),
                frequency_fallback: m.iter().any(|&i| s.tokens[i].frequency_fallback),
                flat_parts: parts,
                excluded: None,
                ..r.clone()
            }
        })
        .collect();
    Sentence {
        tokens,
        ..s.clone()
    }
}

fn join<'a>(forms: impl Iterator<Item = &'a str>) -> String {
    forms.collect::<Vec<_>>().join(" ")
}

pub fn merge_corpus(mut corpus: Corpus) -> Corpus {
    corpus.documents.par_iter_mut().for_each(|d| {
        for s in &mut d.sentences {
            *s = merge_flat_structures(s);
        }
    });
    corpus
}

// ---------------------------------------------------------------------------
// Exclusions

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionPolicy {
    pub max_surprisal_bits: f64,
    pub min_sentence_len: usize,
}

impl Default for ExclusionPolicy {
    fn default() -> Self {
        Self {
            max_surprisal_bits: DEFAULT_MAX_SURPRISAL_BITS,
            min_sentence_len: DEFAULT_MIN_SENTENCE_LEN,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub sentences: usize,
    pub sentences_retained: usize,
    pub sentences_short: usize,
    pub sentences_malformed: usize,
    /// Tokens in retained sentences.
    pub tokens: usize,
    pub tokens_retained: usize,
    pub tokens_punctuation: usize,
    pub tokens_high_surprisal: usize,
}

/// Non-punctuation words in a sentence, counting merged units by width.
pub fn word_count(s: &Sentence) -> usize {
    s.tokens.iter().filter(|t| !t.is_punct()).map(Token::width).sum()
}

/// Flag short sentences and, inside the remaining ones, punctuation and
/// over-threshold tokens. Flags are recomputed from scratch, so applying the
/// same policy twice changes nothing. A merged unit is dropped when any of
/// its component words is over the threshold.
pub fn apply_exclusions(mut corpus: Corpus, policy: &ExclusionPolicy) -> Result<(Corpus, ExclusionReport)> {
    let mut report = ExclusionReport::default();
    for s in corpus.sentences_mut() {
        report.sentences += 1;
        for t in &mut s.tokens {
            t.excluded = None;
        }
        if s.excluded == Some(SentenceExclusion::Malformed) {
            report.sentences_malformed += 1;
            continue;
        }
        if word_count(s) < policy.min_sentence_len {
            s.excluded = Some(SentenceExclusion::Short);
            report.sentences_short += 1;
            continue;
        }
        s.excluded = None;
        report.sentences_retained += 1;
        for t in &mut s.tokens {
            report.tokens += 1;
            if t.is_punct() {
                t.excluded = Some(TokenExclusion::Punctuation);
                report.tokens_punctuation += 1;
                continue;
            }
            let mut over = false;
            for h in t.word_surprisals() {
                let h = h.ok_or_else(|| Error::Alignment {
                    sent_id: s.sent_id.clone(),
                    index: t.source_index,
                    message: "surprisal not attached".into(),
                })?;
                over |= h > policy.max_surprisal_bits;
            }
            if over {
                t.excluded = Some(TokenExclusion::HighSurprisal);
                report.tokens_high_surprisal += 1;
            } else {
                report.tokens_retained += 1;
            }
        }
    }
    Ok((corpus, report))
}

// ---------------------------------------------------------------------------
// Dependency extraction

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationClass {
    Subject,
    Object,
    Other,
}

pub fn classify_relation(deprel: &str) -> RelationClass {
    match base_relation(deprel) {
        "nsubj" | "csubj" => RelationClass::Subject,
        "obj" | "iobj" | "ccomp" | "xcomp" => RelationClass::Object,
        _ => RelationClass::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyRecord {
    pub doc_id: String,
    pub sent_id: String,
    /// Deprel of the dependent.
    pub relation: String,
    pub relation_class: RelationClass,
    /// Word position of the left codependent among surviving words (1-based).
    pub antecedent_index: usize,
    /// Word position of the right codependent.
    pub retrieval_index: usize,
    /// Treebank token IDs of the two codependents' first words.
    pub antecedent_token: usize,
    pub retrieval_token: usize,
    pub antecedent_form: String,
    pub retrieval_form: String,
    /// True when the arc runs from the left word (head) to the right word.
    pub head_is_antecedent: bool,
    #[serde(rename = "L_O")]
    pub l_o: usize,
    #[serde(rename = "L_I", serialize_with = "ser_f64")]
    pub l_i: f64,
    #[serde(serialize_with = "ser_f64")]
    pub antecedent_surprisal_bits: f64,
    #[serde(serialize_with = "ser_opt_f64")]
    pub antecedent_log_frequency: Option<f64>,
    pub frequency_fallback: bool,
    /// Position of the sentence in its document; only for document-organised corpora.
    pub sentence_position: Option<usize>,
    pub antecedent_position: usize,
    /// Surviving words in the sentence.
    pub sentence_length: usize,
    #[serde(serialize_with = "ser_f64")]
    pub baseline_surprisal_bits: f64,
}

/// A surviving word of a sentence in reading order.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub source_index: usize,
    pub form: String,
    pub surprisal_bits: f64,
    pub log_frequency: Option<f64>,
    /// Index into `Sentence::tokens` of the unit this word belongs to.
    pub unit: usize,
}

/// Surviving words plus the word position (1-based) of every surviving unit.
#[derive(Debug, Clone, PartialEq)]
pub struct WordLayout {
    pub words: Vec<Word>,
    /// `unit_position[i]` is `Some(p)` when token `i` survives.
    pub unit_position: Vec<Option<usize>>,
}

pub fn word_layout(s: &Sentence) -> Result<WordLayout> {
    let mut words = Vec::new();
    let mut unit_position = vec![None; s.tokens.len()];
    for (i, t) in s.tokens.iter().enumerate() {
        if t.excluded.is_some() {
            continue;
        }
        unit_position[i] = Some(words.len() + 1);
        for p in parts_of(t) {
            let surprisal_bits = p.surprisal_bits.ok_or_else(|| Error::Alignment {
                sent_id: s.sent_id.clone(),
                index: p.source_index,
                message: "surprisal not attached".into(),
            })?;
            words.push(Word {
                source_index: p.source_index,
                form: p.form,
                surprisal_bits,
                log_frequency: p.log_frequency,
                unit: i,
            });
        }
    }
    Ok(WordLayout { words, unit_position })
}

fn extract_sentence(
    doc_id: &str,
    sentence_position: Option<usize>,
    s: &Sentence,
) -> Result<Vec<DependencyRecord>> {
    if s.excluded.is_some() {
        return Ok(Vec::new());
    }
    let layout = word_layout(s)?;
    let n_words = layout.words.len();
    if n_words == 0 {
        return Ok(Vec::new());
    }
    let baseline = layout.words.iter().map(|w| w.surprisal_bits).sum::<f64>() / n_words as f64;
    let mut out = Vec::new();
    for (i, dep) in s.tokens.iter().enumerate() {
        if dep.head == 0 {
            continue;
        }
        let h = dep.head - 1;
        let (Some(pd), Some(ph)) = (layout.unit_position[i], layout.unit_position[h]) else {
            continue;
        };
        let ((left, pl), (right, pr)) = if ph < pd { ((h, ph), (i, pd)) } else { ((i, pd), (h, ph)) };
        let ante = &s.tokens[left];
        let retr = &s.tokens[right];
        // fold from +0.0: an empty float sum is -0.0
        let l_i = layout.words[pl..pr - 1].iter().fold(0.0, |acc, w| acc + w.surprisal_bits);
        out.push(DependencyRecord {
            doc_id: doc_id.to_string(),
            sent_id: s.sent_id.clone(),
            relation: dep.deprel.clone(),
            relation_class: classify_relation(&dep.deprel),
            antecedent_index: pl,
            retrieval_index: pr,
            antecedent_token: ante.source_index,
            retrieval_token: retr.source_index,
            antecedent_form: ante.form.clone(),
            retrieval_form: retr.form.clone(),
            head_is_antecedent: left == h,
            l_o: pr - pl - 1,
            l_i,
            antecedent_surprisal_bits: ante.surprisal_bits.expect("checked by word_layout"),
            antecedent_log_frequency: ante.log_frequency,
            frequency_fallback: ante.frequency_fallback,
            sentence_position,
            antecedent_position: pl,
            sentence_length: n_words,
            baseline_surprisal_bits: baseline,
        });
    }
    Ok(out)
}

/// One record per dependency whose two codependents both survived
/// exclusion, in corpus order.
pub fn extract_dependencies(corpus: &Corpus) -> Result<Vec<DependencyRecord>> {
    let jobs: Vec<(&str, Option<usize>, &Sentence)> = corpus
        .documents
        .iter()
        .flat_map(|d| {
            d.sentences.iter().enumerate().map(move |(k, s)| {
                let pos = (corpus.genre == Genre::DocumentOrganized).then_some(k + 1);
                (d.doc_id.as_str(), pos, s)
            })
        })
        .collect();
    let per_sentence: Vec<Vec<DependencyRecord>> = jobs
        .par_iter()
        .map(|&(doc, pos, s)| extract_sentence(doc, pos, s))
        .collect::<Result<_>>()?;
    Ok(per_sentence.into_iter().flatten().collect())
}

pub fn filter_relation(records: &[DependencyRecord], subset: Option<RelationClass>) -> Vec<DependencyRecord> {
    records
        .iter()
        .filter(|r| subset.is_none_or(|c| r.relation_class == c))
        .cloned()
        .collect()
}

// ---------------------------------------------------------------------------
// Reading times

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtObservation {
    pub participant: String,
    pub sent_id: String,
    pub token_index: usize,
    pub rt_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Critical,
    Spillover,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtOptions {
    pub rt_min_ms: f64,
    pub rt_max_ms: f64,
    pub include_spillover: bool,
}

impl Default for RtOptions {
    fn default() -> Self {
        Self {
            rt_min_ms: DEFAULT_RT_MIN_MS,
            rt_max_ms: DEFAULT_RT_MAX_MS,
            include_spillover: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtRow {
    pub participant: String,
    pub region: Region,
    #[serde(serialize_with = "ser_f64")]
    pub rt_ms: f64,
    #[serde(serialize_with = "ser_f64")]
    pub log_rt: f64,
    /// Index of the dependency in the list passed to [`build_rt_table`].
    pub dependency_id: usize,
    pub doc_id: String,
    pub sent_id: String,
    pub relation: String,
    pub relation_class: RelationClass,
    /// Treebank token ID of the word the reading time was measured on.
    pub word_index: usize,
    pub word_form: String,
    pub word_length: usize,
    #[serde(serialize_with = "ser_f64")]
    pub word_surprisal_bits: f64,
    #[serde(serialize_with = "ser_f64")]
    pub prev1_surprisal_bits: f64,
    #[serde(serialize_with = "ser_f64")]
    pub prev2_surprisal_bits: f64,
    #[serde(serialize_with = "ser_opt_f64")]
    pub word_log_frequency: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub prev1_log_frequency: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub prev2_log_frequency: Option<f64>,
    #[serde(rename = "L_O")]
    pub l_o: usize,
    #[serde(rename = "L_I", serialize_with = "ser_f64")]
    pub l_i: f64,
    #[serde(serialize_with = "ser_f64")]
    pub antecedent_surprisal_bits: f64,
    #[serde(serialize_with = "ser_opt_f64")]
    pub antecedent_log_frequency: Option<f64>,
    pub sentence_position: Option<usize>,
    pub antecedent_position: usize,
    pub sentence_length: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtReport {
    pub observations: usize,
    pub rows: usize,
    pub dropped_out_of_bounds: usize,
    /// Region words with fewer than two preceding surviving words.
    pub skipped_missing_context: usize,
    /// Dependencies whose retrieval site ends the sentence.
    pub no_spillover_word: usize,
}

struct SentenceIndex<'a> {
    layout: WordLayout,
    source_len: usize,
    sentence: &'a Sentence,
}

fn source_len(s: &Sentence) -> usize {
    s.tokens
        .iter()
        .flat_map(|t| parts_of(t).into_iter().map(|p| p.source_index))
        .max()
        .unwrap_or(0)
}

/// Critical-region (and optionally spillover-region) rows for every
/// dependency and participant. Reading times outside the bounds are dropped
/// and the rest log-transformed.
pub fn build_rt_table(
    corpus: &Corpus,
    deps: &[DependencyRecord],
    rt: &[RtObservation],
    options: &RtOptions,
) -> Result<(Vec<RtRow>, RtReport)> {
    let mut report = RtReport {
        observations: rt.len(),
        ..Default::default()
    };
    let mut sentences: HashMap<&str, SentenceIndex> = HashMap::new();
    for s in corpus.sentences() {
        if s.excluded.is_some() {
            // still needed for alignment checks
            sentences.insert(
                &s.sent_id,
                SentenceIndex {
                    layout: WordLayout {
                        words: Vec::new(),
                        unit_position: Vec::new(),
                    },
                    source_len: source_len(s),
                    sentence: s,
                },
            );
            continue;
        }
        sentences.insert(
            &s.sent_id,
            SentenceIndex {
                layout: word_layout(s)?,
                source_len: source_len(s),
                sentence: s,
            },
        );
    }

    let mut times: HashMap<(&str, &str, usize), f64> = HashMap::new();
    let mut participants = BTreeSet::new();
    for obs in rt {
        let idx = sentences.get(obs.sent_id.as_str()).ok_or_else(|| Error::Alignment {
            sent_id: obs.sent_id.clone(),
            index: obs.token_index,
            message: "reading time refers to an unknown sentence".into(),
        })?;
        if obs.token_index == 0 || obs.token_index > idx.source_len {
            return Err(Error::Alignment {
                sent_id: obs.sent_id.clone(),
                index: obs.token_index,
                message: format!("token index outside 1..={}", idx.source_len),
            });
        }
        if !obs.rt_ms.is_finite() {
            return Err(Error::Alignment {
                sent_id: obs.sent_id.clone(),
                index: obs.token_index,
                message: format!("reading time {} is not finite", obs.rt_ms),
            });
        }
        let key = (obs.participant.as_str(), obs.sent_id.as_str(), obs.token_index);
        if times.insert(key, obs.rt_ms).is_some() {
            return Err(Error::Alignment {
                sent_id: obs.sent_id.clone(),
                index: obs.token_index,
                message: format!("duplicate reading time for participant `{}`", obs.participant),
            });
        }
        participants.insert(obs.participant.as_str());
    }

    let mut rows = Vec::new();
    for (dep_id, dep) in deps.iter().enumerate() {
        let Some(idx) = sentences.get(dep.sent_id.as_str()) else {
            return Err(Error::Alignment {
                sent_id: dep.sent_id.clone(),
                index: dep.retrieval_token,
                message: "dependency refers to a sentence missing from the corpus".into(),
            });
        };
        let words = &idx.layout.words;
        let crit = dep.retrieval_index;
        if crit == 0 || crit > words.len() || words[crit - 1].source_index != dep.retrieval_token {
            return Err(Error::Alignment {
                sent_id: dep.sent_id.clone(),
                index: dep.retrieval_token,
                message: "dependency does not match the corpus layout".into(),
            });
        }
        let mut regions = vec![(Region::Critical, crit)];
        if options.include_spillover {
            let unit = words[crit - 1].unit;
            let next = crit + idx.sentence.tokens[unit].width();
            if next <= words.len() {
                regions.push((Region::Spillover, next));
            } else {
                report.no_spillover_word += 1;
            }
        }
        for (region, pos) in regions {
            if pos < 3 {
                report.skipped_missing_context += 1;
                continue;
            }
            let (w, p1, p2) = (&words[pos - 1], &words[pos - 2], &words[pos - 3]);
            for &participant in &participants {
                let Some(&rt_ms) = times.get(&(participant, dep.sent_id.as_str(), w.source_index)) else {
                    continue;
                };
                if rt_ms < options.rt_min_ms || rt_ms > options.rt_max_ms {
                    report.dropped_out_of_bounds += 1;
                    continue;
                }
                rows.push(RtRow {
                    participant: participant.to_string(),
                    region,
                    rt_ms,
                    log_rt: rt_ms.ln(),
                    dependency_id: dep_id,
                    doc_id: dep.doc_id.clone(),
                    sent_id: dep.sent_id.clone(),
                    relation: dep.relation.clone(),
                    relation_class: dep.relation_class,
                    word_index: w.source_index,
                    word_form: w.form.clone(),
                    word_length: w.form.chars().count(),
                    word_surprisal_bits: w.surprisal_bits,
                    prev1_surprisal_bits: p1.surprisal_bits,
                    prev2_surprisal_bits: p2.surprisal_bits,
                    word_log_frequency: w.log_frequency,
                    prev1_log_frequency: p1.log_frequency,
                    prev2_log_frequency: p2.log_frequency,
                    l_o: dep.l_o,
                    l_i: dep.l_i,
                    antecedent_surprisal_bits: dep.antecedent_surprisal_bits,
                    antecedent_log_frequency: dep.antecedent_log_frequency,
                    sentence_position: dep.sentence_position,
                    antecedent_position: dep.antecedent_position,
                    sentence_length: dep.sentence_length,
                });
            }
        }
    }
    report.rows = rows.len();
    Ok((rows, report))
}
