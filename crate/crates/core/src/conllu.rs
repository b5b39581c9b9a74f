//! CoNLL-U reader, writer and tree validator.
//!
//! Only basic dependencies are read: multiword-token ranges (`3-4`) and empty
//! nodes (`5.1`) are counted and skipped, and the DEPS column is carried
//! through untouched. Sentences whose tree is broken are kept but marked
//! [`SentenceExclusion::Malformed`], with the reasons in the parse report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One syntactic word folded into a merged flat structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatPart {
    pub source_index: usize,
    pub form: String,
    pub surprisal_bits: Option<f64>,
    pub log_frequency: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenExclusion {
    Punctuation,
    HighSurprisal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceExclusion {
    Malformed,
    Short,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position in the sentence (renumbered after merging).
    pub index: usize,
    /// ID of this token (or of the first word of a merged unit) in the source file.
    pub source_index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    /// 0 marks the root.
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
    pub surprisal_bits: Option<f64>,
    pub log_frequency: Option<f64>,
    pub frequency_fallback: bool,
    /// Component words when this token is a merged flat structure, in
    /// sentence order; empty otherwise.
    pub flat_parts: Vec<FlatPart>,
    pub excluded: Option<TokenExclusion>,
}

impl Token {
    /// Number of syntactic words this token stands for.
    pub fn width(&self) -> usize {
        self.flat_parts.len().max(1)
    }

    pub fn is_punct(&self) -> bool {
        self.upos == "PUNCT"
    }

    /// Per-word surprisal, first word first.
    pub fn word_surprisals(&self) -> Vec<Option<f64>> {
        if self.flat_parts.is_empty() {
            vec![self.surprisal_bits]
        } else {
            self.flat_parts.iter().map(|p| p.surprisal_bits).collect()
        }
    }

    /// Deprel with any `:subtype` removed.
    pub fn base_deprel(&self) -> &str {
        base_relation(&self.deprel)
    }
}

pub fn base_relation(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sent_id: String,
    pub text: Option<String>,
    pub tokens: Vec<Token>,
    pub excluded: Option<SentenceExclusion>,
}

impl Sentence {
    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Genre {
    SentenceOrganized,
    DocumentOrganized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub genre: Genre,
}

impl Corpus {
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn sentences_mut(&mut self) -> impl Iterator<Item = &mut Sentence> {
        self.documents.iter_mut().flat_map(|d| d.sentences.iter_mut())
    }

    pub fn token_count(&self) -> usize {
        self.sentences().map(|s| s.tokens.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    NoRoot,
    MultipleRoots { tokens: Vec<usize> },
    HeadOutOfRange { token: usize, head: usize },
    SelfLoop { token: usize },
    Cycle { tokens: Vec<usize> },
    NonContiguousIndex { position: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceDiagnostics {
    pub sent_id: String,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub documents: usize,
    pub sentences: usize,
    pub token_lines: usize,
    pub multiword_ranges: usize,
    pub empty_nodes: usize,
    pub malformed_sentences: usize,
    pub diagnostics: Vec<SentenceDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCorpus {
    pub corpus: Corpus,
    pub report: ParseReport,
}

#[derive(Default)]
struct Pending {
    sent_id: Option<String>,
    text: Option<String>,
    tokens: Vec<Token>,
}

fn comment_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.strip_prefix(key)?;
    let rest = rest.trim_start();
    match rest.strip_prefix('=') {
        Some(v) => Some(v.trim()),
        None if rest.is_empty() => Some(""),
        None => None,
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parse a CoNLL-U byte stream. Malformed trees are reported, not rejected;
/// lexical errors (wrong column count, non-numeric ID or HEAD) abort with the
/// offending line number.
pub fn parse_conllu(input: &[u8]) -> Result<ParsedCorpus> {
    let text = std::str::from_utf8(input).map_err(|e| {
        let line = input[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        parse_err(line, "input is not valid UTF-8")
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    let mut report = ParseReport::default();
    let mut documents: Vec<Document> = Vec::new();
    let mut saw_newdoc = false;
    let mut pending_doc: Option<String> = None;
    let mut cur = Pending::default();
    let mut ordinal = 0usize;

    let mut finish = |cur: &mut Pending,
                      pending_doc: &mut Option<String>,
                      documents: &mut Vec<Document>,
                      report: &mut ParseReport| {
        let taken = std::mem::take(cur);
        if let Some(id) = pending_doc.take() {
            documents.push(Document {
                doc_id: id,
                sentences: Vec::new(),
            });
        }
        if taken.tokens.is_empty() {
            return;
        }
        ordinal += 1;
        if documents.is_empty() {
            documents.push(Document {
                doc_id: String::new(),
                sentences: Vec::new(),
            });
        }
        let mut sentence = Sentence {
            sent_id: taken.sent_id.unwrap_or_else(|| format!("s{ordinal}")),
            text: taken.text,
            tokens: taken.tokens,
            excluded: None,
        };
        let diagnostics = validate_sentence(&sentence);
        if !diagnostics.is_empty() {
            sentence.excluded = Some(SentenceExclusion::Malformed);
            report.malformed_sentences += 1;
            report.diagnostics.push(SentenceDiagnostics {
                sent_id: sentence.sent_id.clone(),
                diagnostics,
            });
        }
        report.sentences += 1;
        documents.last_mut().unwrap().sentences.push(sentence);
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut cur, &mut pending_doc, &mut documents, &mut report);
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(id) = comment_value(comment, "newdoc id").or_else(|| comment_value(comment, "newdoc")) {
                if !cur.tokens.is_empty() {
                    finish(&mut cur, &mut pending_doc, &mut documents, &mut report);
                }
                saw_newdoc = true;
                let id = if id.is_empty() {
                    format!("doc{}", documents.len() + 1)
                } else {
                    id.to_string()
                };
                pending_doc = Some(id);
            } else if let Some(id) = comment_value(comment, "sent_id") {
                cur.sent_id = Some(id.to_string());
            } else if let Some(t) = comment_value(comment, "text") {
                cur.text = Some(t.to_string());
            }
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('-') {
            report.multiword_ranges += 1;
            continue;
        }
        if id.contains('.') {
            report.empty_nodes += 1;
            continue;
        }
        let index: usize = id
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| parse_err(lineno, format!("invalid token ID `{id}`")))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| parse_err(lineno, format!("HEAD `{}` is not a non-negative integer", cols[6])))?;
        report.token_lines += 1;
        cur.tokens.push(Token {
            index,
            source_index: index,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            head,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
            surprisal_bits: None,
            log_frequency: None,
            frequency_fallback: false,
            flat_parts: Vec::new(),
            excluded: None,
        });
    }
    finish(&mut cur, &mut pending_doc, &mut documents, &mut report);

    report.documents = documents.len();
    let genre = if saw_newdoc {
        Genre::DocumentOrganized
    } else {
        Genre::SentenceOrganized
    };
    Ok(ParsedCorpus {
        corpus: Corpus { documents, genre },
        report,
    })
}

/// Structural checks on a sentence's basic dependency tree.
pub fn validate_sentence(s: &Sentence) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = s.tokens.len();
    for (pos, t) in s.tokens.iter().enumerate() {
        if t.index != pos + 1 {
            out.push(Diagnostic::NonContiguousIndex {
                position: pos + 1,
                found: t.index,
            });
            // heads cannot be interpreted without contiguous ids
            return out;
        }
    }
    let roots: Vec<usize> = s.tokens.iter().filter(|t| t.head == 0).map(|t| t.index).collect();
    match roots.len() {
        0 => out.push(Diagnostic::NoRoot),
        1 => {}
        _ => out.push(Diagnostic::MultipleRoots { tokens: roots }),
    }
    let mut heads_ok = true;
    for t in &s.tokens {
        if t.head > n {
            out.push(Diagnostic::HeadOutOfRange {
                token: t.index,
                head: t.head,
            });
            heads_ok = false;
        } else if t.head == t.index {
            out.push(Diagnostic::SelfLoop { token: t.index });
            heads_ok = false;
        }
    }
    if heads_ok {
        // 0 = unvisited, 1 = on current path, 2 = reaches the root
        let mut state = vec![0u8; n + 1];
        for start in 1..=n {
            let mut path = Vec::new();
            let mut cur = start;
            while cur != 0 && state[cur] == 0 {
                state[cur] = 1;
                path.push(cur);
                cur = s.tokens[cur - 1].head;
            }
            if cur != 0 && state[cur] == 1 {
                let from = path.iter().position(|&x| x == cur).unwrap();
                let mut tokens = path[from..].to_vec();
                tokens.sort_unstable();
                out.push(Diagnostic::Cycle { tokens });
            }
            for p in path {
                state[p] = 2;
            }
        }
    }
    out
}

/// Serialise back to CoNLL-U. Annotations that have no column (surprisal,
/// frequency, exclusion flags) are not written.
pub fn write_conllu(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in &corpus.documents {
        if !doc.doc_id.is_empty() {
            let _ = writeln!(out, "# newdoc id = {}", doc.doc_id);
        }
        for s in &doc.sentences {
            let _ = writeln!(out, "# sent_id = {}", s.sent_id);
            if let Some(t) = &s.text {
                let _ = writeln!(out, "# text = {t}");
            }
            for t in &s.tokens {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    t.index, t.form, t.lemma, t.upos, t.xpos, t.feats, t.head, t.deprel, t.deps, t.misc
                );
            }
            out.push('\n');
        }
    }
    out
}
