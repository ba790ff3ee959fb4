//! Multi-stage corpus curation: unsafe-term removal, quality rules,
//! minimum length, and near-duplicate removal over consecutive-sentence
//! shingles.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Stage};
use crate::error::{Error, Result};
use crate::sentences::SentenceSplitter;

/// Bundled unsafe-term snapshot used when no wordlist path is configured.
pub const BUILTIN_WORDLIST: &str = include_str!("../data/unsafe_terms.txt");

pub fn builtin_wordlist() -> Result<WordList> {
    WordList::from_terms(BUILTIN_WORDLIST.lines())
}

/// Terms that disqualify a document, matched case-insensitively on word
/// boundaries. Loaded from a pinned snapshot file, one term per line.
#[derive(Debug, Clone)]
pub struct WordList {
    terms: Vec<Vec<String>>,
}

impl WordList {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let list = Self::from_terms(raw.lines())?;
        if list.terms.is_empty() {
            return Err(Error::EmptyWordlist(path.to_path_buf()));
        }
        Ok(list)
    }

    /// Build from an iterator of terms; blank lines and `#` comments are
    /// ignored. Errors if nothing usable remains.
    pub fn from_terms<'a>(terms: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut out = Vec::new();
        for term in terms {
            let term = term.trim();
            if term.is_empty() || term.starts_with('#') {
                continue;
            }
            let tokens = word_tokens(term);
            if !tokens.is_empty() {
                out.push(tokens);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidInput("wordlist has no usable terms".into()));
        }
        Ok(WordList { terms: out })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Lowercased alphanumeric runs; everything else is a boundary.
fn word_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// True iff any wordlist term occurs in the document on word boundaries.
pub fn contains_unsafe(doc: &Document, wordlist: &WordList) -> bool {
    let tokens = word_tokens(&doc.text);
    wordlist
        .terms
        .iter()
        .any(|term| tokens.windows(term.len()).any(|w| w == term.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityRule {
    MinSentences,
    TerminalPunct,
    Boilerplate,
    LongToken,
}

impl fmt::Display for QualityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QualityRule::MinSentences => "min_sentences",
            QualityRule::TerminalPunct => "terminal_punct",
            QualityRule::Boilerplate => "boilerplate",
            QualityRule::LongToken => "long_token",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct QualityConfig {
    pub min_sentences: usize,
    pub max_token_len: usize,
    /// Lines with fewer words than this are exempt from the
    /// terminal-punctuation rule (headings, list items).
    pub min_line_words: usize,
    /// Lowercased boilerplate markers beyond the built-in "lorem ipsum".
    pub boilerplate_phrases: Vec<String>,
}

/// Cookie-notice phrases matched case-insensitively, in addition to
/// "lorem ipsum". Overridable in configuration.
pub fn default_boilerplate_phrases() -> Vec<String> {
    [
        "we use cookies",
        "this website uses cookies",
        "cookie policy",
        "accept all cookies",
        "by continuing to browse",
        "javascript must be enabled",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            min_sentences: 5,
            max_token_len: 1000,
            min_line_words: 3,
            boilerplate_phrases: default_boilerplate_phrases(),
        }
    }
}

const TERMINALS: &[char] = &['.', '!', '?'];
const CLOSING_QUOTES: &[char] = &['"', '\'', '\u{201d}', '\u{2019}'];

fn line_has_terminal_punct(line: &str) -> bool {
    let trimmed = line.trim_end();
    let mut chars = trimmed.chars().rev();
    match chars.next() {
        None => false,
        Some(c) if TERMINALS.contains(&c) => true,
        Some(c) if CLOSING_QUOTES.contains(&c) => {
            matches!(chars.next(), Some(p) if TERMINALS.contains(&p))
        }
        Some(_) => false,
    }
}

/// Evaluate every quality rule and report the first failure in canonical
/// order; rules are independent, so evaluation order cannot change which
/// rules fail.
pub fn check_quality(
    doc: &Document,
    cfg: &QualityConfig,
    splitter: &SentenceSplitter,
) -> std::result::Result<(), QualityRule> {
    let mut failed: Vec<QualityRule> = Vec::new();

    if splitter.count(&doc.text) < cfg.min_sentences {
        failed.push(QualityRule::MinSentences);
    }

    let punct_ok = doc.text.lines().all(|line| {
        let words = line.split_whitespace().count();
        words < cfg.min_line_words || line.trim().is_empty() || line_has_terminal_punct(line)
    });
    if !punct_ok {
        failed.push(QualityRule::TerminalPunct);
    }

    let lower = doc.text.to_lowercase();
    if lower.contains("lorem ipsum")
        || cfg
            .boilerplate_phrases
            .iter()
            .any(|p| !p.is_empty() && lower.contains(&p.to_lowercase()))
    {
        failed.push(QualityRule::Boilerplate);
    }

    if doc
        .text
        .split_whitespace()
        .any(|tok| tok.chars().count() > cfg.max_token_len)
    {
        failed.push(QualityRule::LongToken);
    }

    match failed.first() {
        None => Ok(()),
        Some(rule) => Err(*rule),
    }
}

/// True iff the document has at least `k` whitespace-delimited words.
pub fn min_words(doc: &Document, k: usize) -> bool {
    doc.word_count() >= k
}

/// Normalized key over `size` consecutive sentences.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shingle {
    pub key: String,
}

/// Lowercase, collapse internal whitespace, and strip terminal punctuation
/// before concatenating sentences into a shingle key.
fn normalize_sentence(sentence: &str) -> String {
    let stripped = sentence
        .trim()
        .trim_end_matches(|c: char| TERMINALS.contains(&c) || CLOSING_QUOTES.contains(&c));
    stripped
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// All `size`-sentence shingles of a text.
pub fn shingles(text: &str, splitter: &SentenceSplitter, size: usize) -> Vec<Shingle> {
    assert!(size >= 1, "shingle size must be at least 1");
    let normalized: Vec<String> = splitter
        .split(text)
        .iter()
        .map(|s| normalize_sentence(s))
        .filter(|s| !s.is_empty())
        .collect();
    if normalized.len() < size {
        return Vec::new();
    }
    normalized
        .windows(size)
        .map(|w| Shingle { key: w.join(" ") })
        .collect()
}

/// First-wins streaming near-duplicate filter.
///
/// A document is dropped iff any of its shingles already appears in the
/// set contributed by previously retained documents; retained documents
/// contribute all their shingles.
pub fn near_dup_filter(
    docs: Vec<Document>,
    splitter: &SentenceSplitter,
    shingle_size: usize,
) -> (Vec<Document>, usize) {
    // shingle extraction is parallel; admission stays sequential so the
    // first-wins order is deterministic
    let all_shingles: Vec<Vec<Shingle>> = docs
        .par_iter()
        .map(|d| shingles(&d.text, splitter, shingle_size))
        .collect();
    let mut seen: HashSet<String> = HashSet::new();
    let mut retained = Vec::with_capacity(docs.len());
    let mut dropped = 0usize;
    for (doc, doc_shingles) in docs.into_iter().zip(all_shingles) {
        if doc_shingles.iter().any(|s| seen.contains(&s.key)) {
            dropped += 1;
            continue;
        }
        for s in doc_shingles {
            seen.insert(s.key);
        }
        retained.push(doc);
    }
    (retained, dropped)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityBreakdown {
    pub min_sentences: usize,
    pub terminal_punct: usize,
    pub boilerplate: usize,
    pub long_token: usize,
}

impl QualityBreakdown {
    fn bump(&mut self, rule: QualityRule) {
        match rule {
            QualityRule::MinSentences => self.min_sentences += 1,
            QualityRule::TerminalPunct => self.terminal_punct += 1,
            QualityRule::Boilerplate => self.boilerplate += 1,
            QualityRule::LongToken => self.long_token += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.min_sentences + self.terminal_punct + self.boilerplate + self.long_token
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationReport {
    pub input_count: usize,
    pub dropped_unsafe: usize,
    pub dropped_quality: usize,
    pub quality_breakdown: QualityBreakdown,
    pub dropped_short: usize,
    pub dropped_near_dup: usize,
    pub retained: usize,
}

impl CurationReport {
    /// The drop counters and the retained count partition the input.
    pub fn reconciles(&self) -> bool {
        self.retained
            + self.dropped_unsafe
            + self.dropped_quality
            + self.dropped_short
            + self.dropped_near_dup
            == self.input_count
            && self.quality_breakdown.total() == self.dropped_quality
    }
}

#[derive(Debug, Clone)]
pub struct CurationContext {
    pub wordlist: WordList,
    pub quality: QualityConfig,
    pub min_words: usize,
    pub shingle_size: usize,
    pub splitter: SentenceSplitter,
}

enum PerDocVerdict {
    Pass,
    Unsafe,
    Quality(QualityRule),
    Short,
}

/// Apply unsafe -> quality -> length -> near-duplicate filters in order.
/// Survivors advance to [`Stage::Clean`].
pub fn curate(docs: Vec<Document>, ctx: &CurationContext) -> (Vec<Document>, CurationReport) {
    let mut report = CurationReport {
        input_count: docs.len(),
        ..Default::default()
    };

    // per-document predicates are independent and run in parallel
    let verdicts: Vec<PerDocVerdict> = docs
        .par_iter()
        .map(|doc| {
            if contains_unsafe(doc, &ctx.wordlist) {
                return PerDocVerdict::Unsafe;
            }
            if let Err(rule) = check_quality(doc, &ctx.quality, &ctx.splitter) {
                return PerDocVerdict::Quality(rule);
            }
            if !min_words(doc, ctx.min_words) {
                return PerDocVerdict::Short;
            }
            PerDocVerdict::Pass
        })
        .collect();

    let mut survivors: VecDeque<Document> = VecDeque::new();
    for (doc, verdict) in docs.into_iter().zip(verdicts) {
        match verdict {
            PerDocVerdict::Pass => survivors.push_back(doc),
            PerDocVerdict::Unsafe => report.dropped_unsafe += 1,
            PerDocVerdict::Quality(rule) => {
                report.dropped_quality += 1;
                report.quality_breakdown.bump(rule);
            }
            PerDocVerdict::Short => report.dropped_short += 1,
        }
    }

    let (mut retained, near_dupes) =
        near_dup_filter(survivors.into_iter().collect(), &ctx.splitter, ctx.shingle_size);
    report.dropped_near_dup = near_dupes;
    for doc in &mut retained {
        doc.advance(Stage::Clean);
    }
    report.retained = retained.len();
    debug_assert!(report.reconciles());
    (retained, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        let mut d = Document::new(id, text);
        d.stage = Stage::Agnostic;
        d
    }

    fn five_sentences(tag: &str) -> String {
        (0..5)
            .map(|i| format!("This is filler sentence number {i} about {tag} matters."))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn test_wordlist() -> WordList {
        WordList::from_terms(["badword", "two part"]).unwrap()
    }

    #[test]
    fn unsafe_term_as_standalone_word() {
        let list = test_wordlist();
        assert!(contains_unsafe(&doc("a", "clearly a BadWord appears"), &list));
        assert!(contains_unsafe(&doc("b", "has two part phrase"), &list));
        assert!(!contains_unsafe(&doc("c", "entirely wholesome text"), &list));
    }

    #[test]
    fn unsafe_term_inside_longer_word_does_not_match() {
        let list = test_wordlist();
        assert!(!contains_unsafe(&doc("a", "notabadwordhere"), &list));
        assert!(!contains_unsafe(&doc("b", "badwords are plural"), &list));
    }

    /// 50-case fixture checked against a reference regex word-boundary
    /// matcher.
    #[test]
    fn unsafe_matching_agrees_with_regex_oracle() {
        let terms = ["badword", "grim", "two part"];
        let list = WordList::from_terms(terms).unwrap();
        let oracles: Vec<regex::Regex> = terms
            .iter()
            .map(|t| {
                regex::RegexBuilder::new(&format!(r"\b{}\b", regex::escape(t)))
                    .case_insensitive(true)
                    .build()
                    .unwrap()
            })
            .collect();
        let cases: Vec<String> = (0..50)
            .map(|i| match i % 10 {
                0 => format!("case {i} with badword inside"),
                1 => format!("case {i} with BADWORD uppercase"),
                2 => format!("case {i} notabadword fused"),
                3 => format!("case {i} badwords plural"),
                4 => format!("case {i} grim. punctuation"),
                5 => format!("case {i} (grim) wrapped"),
                6 => format!("case {i} pilgrim suffix"),
                7 => format!("case {i} two part split"),
                8 => format!("case {i} two  part double space"),
                9 => format!("case {i} perfectly clean"),
                _ => unreachable!(),
            })
            .collect();
        for case in &cases {
            let d = doc("x", case);
            let got = contains_unsafe(&d, &list);
            let want = oracles.iter().any(|re| re.is_match(case));
            assert_eq!(got, want, "mismatch on: {case}");
        }
    }

    #[test]
    fn empty_wordlist_rejected_at_load() {
        assert!(WordList::from_terms(["", "  ", "# comment"]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "").unwrap();
        assert!(WordList::load(&path).is_err());
    }

    #[test]
    fn quality_fails_under_five_sentences() {
        let cfg = QualityConfig::default();
        let splitter = SentenceSplitter::default();
        let d = doc("a", "One. Two. Three. Four.");
        assert_eq!(
            check_quality(&d, &cfg, &splitter),
            Err(QualityRule::MinSentences)
        );
    }

    #[test]
    fn quality_fails_on_lorem_ipsum() {
        let cfg = QualityConfig::default();
        let splitter = SentenceSplitter::default();
        let d = doc("a", format!("{} Lorem Ipsum dolor sit.", five_sentences("x")).as_str());
        assert_eq!(
            check_quality(&d, &cfg, &splitter),
            Err(QualityRule::Boilerplate)
        );
    }

    #[test]
    fn quality_fails_on_cookie_notice_phrase() {
        let cfg = QualityConfig::default();
        let splitter = SentenceSplitter::default();
        let d = doc(
            "a",
            format!("{} We use cookies to improve your experience.", five_sentences("x"))
                .as_str(),
        );
        assert_eq!(
            check_quality(&d, &cfg, &splitter),
            Err(QualityRule::Boilerplate)
        );
    }

    #[test]
    fn quality_fails_on_missing_terminal_punctuation() {
        let cfg = QualityConfig::default();
        let splitter = SentenceSplitter::default();
        let text = format!("{}\nthis long line has no terminal punctuation at all", five_sentences("y"));
        assert_eq!(
            check_quality(&doc("a", &text), &cfg, &splitter),
            Err(QualityRule::TerminalPunct)
        );
        // short heading lines are exempt
        let text = format!("Short Heading\n{}", five_sentences("y"));
        assert_eq!(check_quality(&doc("b", &text), &cfg, &splitter), Ok(()));
    }

    #[test]
    fn quality_fails_on_giant_token() {
        let cfg = QualityConfig::default();
        let splitter = SentenceSplitter::default();
        let giant = "x".repeat(1001);
        let text = format!("{} And {giant} ends here.", five_sentences("z"));
        assert_eq!(
            check_quality(&doc("a", &text), &cfg, &splitter),
            Err(QualityRule::LongToken)
        );
        let borderline = "x".repeat(1000);
        let text = format!("{} And {borderline} ends here.", five_sentences("z"));
        assert_eq!(check_quality(&doc("b", &text), &cfg, &splitter), Ok(()));
    }

    #[test]
    fn quality_passes_clean_document() {
        let cfg = QualityConfig::default();
        let splitter = SentenceSplitter::default();
        let d = doc("a", "First point made. Second point made. Third one follows. Fourth arrives. Fifth concludes. Sixth is extra.");
        assert_eq!(check_quality(&d, &cfg, &splitter), Ok(()));
    }

    #[test]
    fn min_words_boundary() {
        let forty_nine = (0..49).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let fifty = (0..50).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        assert!(!min_words(&doc("a", &forty_nine), 50));
        assert!(min_words(&doc("b", &fifty), 50));
        assert!(min_words(&doc("c", ""), 0));
    }

    fn sentences_to_text(sentences: &[&str]) -> String {
        sentences.join(" ")
    }

    #[test]
    fn near_dup_drops_three_sentence_overlap() {
        let a = doc(
            "a",
            &sentences_to_text(&[
                "Alpha starts here.",
                "Beta follows closely.",
                "Gamma continues on.",
                "Delta wraps up.",
            ]),
        );
        let b = doc(
            "b",
            &sentences_to_text(&[
                "A different opener.",
                "Beta follows closely.",
                "Gamma continues on.",
                "Delta wraps up.",
            ]),
        );
        let splitter = SentenceSplitter::default();
        let (kept, dropped) = near_dup_filter(vec![a, b], &splitter, 3);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "a");
        assert_eq!(dropped, 1);
    }

    #[test]
    fn near_dup_keeps_two_sentence_overlap() {
        let a = doc(
            "a",
            &sentences_to_text(&[
                "Alpha starts here.",
                "Beta follows closely.",
                "Gamma continues on.",
            ]),
        );
        let b = doc(
            "b",
            &sentences_to_text(&[
                "A different opener.",
                "Beta follows closely.",
                "Gamma continues on.",
                "And now something else.",
            ]),
        );
        let splitter = SentenceSplitter::default();
        let (kept, dropped) = near_dup_filter(vec![a, b], &splitter, 3);
        assert_eq!(kept.len(), 2);
        assert_eq!(dropped, 0);
    }

    #[test]
    fn near_dup_normalization_tolerates_case_and_spacing() {
        let a = doc(
            "a",
            "The cat sat down. The dog stood up. The bird flew away. Nothing else happened.",
        );
        let b = doc(
            "b",
            "THE CAT   sat down! The DOG stood up. The bird flew away?  Unrelated tail sentence.",
        );
        let splitter = SentenceSplitter::default();
        let (kept, dropped) = near_dup_filter(vec![a, b], &splitter, 3);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped, 1);
    }

    /// Brute-force oracle that compares every candidate window against the
    /// windows of all previously retained documents, mirroring the
    /// first-wins pass without a shared shingle set.
    pub(crate) fn near_dup_oracle(
        docs: &[Document],
        splitter: &SentenceSplitter,
        size: usize,
    ) -> Vec<String> {
        let mut retained: Vec<&Document> = Vec::new();
        let mut ids = Vec::new();
        'outer: for doc in docs {
            let windows = shingles(&doc.text, splitter, size);
            for prev in &retained {
                let prev_windows = shingles(&prev.text, splitter, size);
                for w in &windows {
                    if prev_windows.iter().any(|p| p.key == w.key) {
                        continue 'outer;
                    }
                }
            }
            retained.push(doc);
            ids.push(doc.id.clone());
        }
        ids
    }

    #[test]
    fn near_dup_matches_oracle_on_planted_fixture() {
        use rand::Rng;
        let mut rng = crate::seed::substream(5, "test.near_dup");
        let mut docs: Vec<Document> = Vec::new();
        for i in 0..180 {
            let n_sent = rng.random_range(4..9);
            let text = (0..n_sent)
                .map(|_| {
                    let a: u32 = rng.random_range(0..40);
                    let b: u32 = rng.random_range(0..40);
                    format!("Topic {a} relates to topic {b} somehow.")
                })
                .collect::<Vec<_>>()
                .join(" ");
            docs.push(doc(&format!("d{i}"), &text));
        }
        // plant 20 overlapping documents copying 3-sentence windows
        let splitter = SentenceSplitter::default();
        for i in 0..20 {
            let src = &docs[i * 3];
            let sents = splitter.split(&src.text);
            let window = sents[0..3].join(" ");
            let text = format!("A fresh unique lead-in number {i}. {window} And a unique tail {i}.");
            docs.push(doc(&format!("planted{i}"), &text));
        }
        let want = near_dup_oracle(&docs, &splitter, 3);
        let (kept, dropped) = near_dup_filter(docs.clone(), &splitter, 3);
        let got: Vec<String> = kept.iter().map(|d| d.id.clone()).collect();
        assert_eq!(got, want);
        assert_eq!(dropped, docs.len() - got.len());
        assert!(dropped >= 20, "planted duplicates should be dropped");
    }

    fn curate_ctx() -> CurationContext {
        CurationContext {
            wordlist: test_wordlist(),
            quality: QualityConfig::default(),
            min_words: 10,
            shingle_size: 3,
            splitter: SentenceSplitter::default(),
        }
    }

    fn passing_doc(id: &str, tag: &str) -> Document {
        doc(
            id,
            &format!(
                "Opening line about {tag} sets the scene. Second thought on {tag} follows. \
                 A third remark on {tag} lands here. Fourth observation about {tag} continues. \
                 Fifth sentence on {tag} closes it."
            ),
        )
    }

    /// Fixture engineered so each filter drops exactly one document.
    #[test]
    fn curate_counts_reconcile_on_engineered_fixture() {
        let mut docs = vec![
            passing_doc("keep1", "rivers"),
            passing_doc("keep2", "mountains"),
        ];
        // unsafe
        docs.push(doc(
            "drop_unsafe",
            &format!("{} This badword sinks it.", passing_doc("x", "noise").text),
        ));
        // quality: too few sentences (still >= 10 words)
        docs.push(doc(
            "drop_quality",
            "Only one very long sentence with plenty of words to clear the length bar easily.",
        ));
        // short: fine quality but under 10 words needs >=5 sentences though...
        docs.push(doc("drop_short", "One. Two. Three. Four. Five."));
        // near-dup of keep1
        let dup_text = format!(
            "{} Completely novel closing line here.",
            passing_doc("y", "rivers").text
        );
        docs.push(doc("drop_dup", &dup_text));

        let (kept, report) = curate(docs, &curate_ctx());
        assert_eq!(report.input_count, 6);
        assert_eq!(report.dropped_unsafe, 1);
        assert_eq!(report.dropped_quality, 1);
        assert_eq!(report.quality_breakdown.min_sentences, 1);
        assert_eq!(report.dropped_short, 1);
        assert_eq!(report.dropped_near_dup, 1);
        assert_eq!(report.retained, 2);
        assert!(report.reconciles());
        assert!(kept.iter().all(|d| d.stage == Stage::Clean));
        let ids: Vec<&str> = kept.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["keep1", "keep2"]);
    }

    #[test]
    fn curate_all_pass_and_empty_input() {
        let docs = vec![passing_doc("a", "one"), passing_doc("b", "two")];
        let (kept, report) = curate(docs, &curate_ctx());
        assert_eq!(kept.len(), 2);
        assert_eq!(report.retained, report.input_count);
        assert!(report.reconciles());

        let (kept, report) = curate(Vec::new(), &curate_ctx());
        assert!(kept.is_empty());
        assert_eq!(report.input_count, 0);
        assert!(report.reconciles());
    }

    #[test]
    fn curate_is_idempotent_on_its_own_output() {
        let mut docs = vec![
            passing_doc("a", "glaciers"),
            passing_doc("b", "volcanoes"),
            passing_doc("c", "meadows"),
        ];
        let dup = format!("{} Extra unique sentence at the end.", docs[0].text);
        docs.push(doc("d", &dup));
        let ctx = curate_ctx();
        let (first, report1) = curate(docs, &ctx);
        let (second, report2) = curate(first.clone(), &ctx);
        assert_eq!(report2.retained, report2.input_count);
        assert_eq!(
            first.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(),
            second.iter().map(|d| d.id.as_str()).collect::<Vec<_>>()
        );
        assert!(report1.reconciles() && report2.reconciles());
    }

    #[test]
    fn quality_failure_reason_is_stable_for_single_rule_failures() {
        // each rule fired in isolation reports itself regardless of the
        // order rules are evaluated in
        let cfg = QualityConfig::default();
        let splitter = SentenceSplitter::default();
        let cases = vec![
            ("Too short. Really.", QualityRule::MinSentences),
            (
                &*format!(
                    "{}\nanother line which is long enough and unpunctuated",
                    five_sentences("q")
                ),
                QualityRule::TerminalPunct,
            ),
            (
                &*format!("{} we use cookies here.", five_sentences("r")),
                QualityRule::Boilerplate,
            ),
            (
                &*format!("{} {}.", five_sentences("s"), "y".repeat(1200)),
                QualityRule::LongToken,
            ),
        ];
        for (text, want) in cases {
            assert_eq!(check_quality(&doc("x", text), &cfg, &splitter), Err(want));
        }
    }
}
