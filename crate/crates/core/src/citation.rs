//! Inline citation parsing and per-source visibility metrics.
//!
//! Answers are split into sentences on `.`, `!` or `?` followed by whitespace
//! or end of text. Bracket groups such as `[1]`, `[1][2]` or `[1, 2]`
//! attach to the sentence they sit in, to the sentence whose terminal mark
//! they immediately follow, or (when they open a sentence before any word)
//! to the preceding sentence. Abbreviations are not special-cased.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CitationError {
    #[error("number of sources must be at least 1")]
    NoSources,
    #[error("parse {index} has {found} sources, expected {expected}")]
    MismatchedSources {
        index: usize,
        found: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedSentence {
    pub text: String,
    pub word_count: usize,
    pub cited: BTreeSet<usize>,
    /// 1-based.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationParse {
    pub sentences: Vec<CitedSentence>,
    pub num_sources: usize,
    /// Citation indices that fell outside `1..=num_sources`.
    pub dropped: usize,
}

impl CitationParse {
    /// Every source cited anywhere in the answer.
    pub fn cited_sources(&self) -> BTreeSet<usize> {
        self.sentences
            .iter()
            .flat_map(|s| s.cited.iter().copied())
            .collect()
    }

    pub fn total_words(&self) -> usize {
        self.sentences.iter().map(|s| s.word_count).sum()
    }
}

#[derive(Default)]
struct Pending {
    text: String,
    cited: BTreeSet<usize>,
}

impl Pending {
    fn has_words(&self) -> bool {
        self.text.split_whitespace().next().is_some()
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    num_sources: usize,
    dropped: usize,
    sentences: Vec<(String, BTreeSet<usize>)>,
    current: Pending,
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | '\u{201d}' | '\u{2019}')
}

impl Parser {
    /// Parses `[k]` or `[k, j, ...]` at the cursor, returning the indices and
    /// the number of chars consumed.
    fn group_at(&self, start: usize) -> Option<(Vec<usize>, usize)> {
        let chars = &self.chars;
        if chars.get(start) != Some(&'[') {
            return None;
        }
        let mut i = start + 1;
        let mut indices = Vec::new();
        loop {
            while chars.get(i).is_some_and(|c| *c == ' ') {
                i += 1;
            }
            let digits_start = i;
            while chars.get(i).is_some_and(|c| c.is_ascii_digit()) {
                i += 1;
            }
            if i == digits_start || i - digits_start > 6 {
                return None;
            }
            let n: String = chars[digits_start..i].iter().collect();
            indices.push(n.parse().ok()?);
            while chars.get(i).is_some_and(|c| *c == ' ') {
                i += 1;
            }
            match chars.get(i) {
                Some(',') => i += 1,
                Some(']') => return Some((indices, i + 1 - start)),
                _ => return None,
            }
        }
    }

    fn add_citations(&mut self, indices: Vec<usize>, target_previous: bool) {
        for k in indices {
            if k == 0 || k > self.num_sources {
                self.dropped += 1;
                continue;
            }
            if target_previous {
                if let Some(last) = self.sentences.last_mut() {
                    last.1.insert(k);
                }
            } else {
                self.current.cited.insert(k);
            }
        }
    }

    /// Consumes a run of adjacent bracket groups at the cursor.
    fn take_groups(&mut self) -> Option<Vec<usize>> {
        let mut all = Vec::new();
        let mut found = false;
        while let Some((indices, len)) = self.group_at(self.pos) {
            all.extend(indices);
            self.pos += len;
            found = true;
        }
        found.then_some(all)
    }

    fn flush(&mut self) {
        let pending = std::mem::take(&mut self.current);
        if pending.has_words() {
            self.sentences.push((pending.text, pending.cited));
        } else if let Some(last) = self.sentences.last_mut() {
            last.1.extend(pending.cited);
        }
    }

    fn run(mut self) -> CitationParse {
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            if c == '[' {
                if let Some(indices) = self.take_groups() {
                    let leading = !self.current.has_words() && !self.sentences.is_empty();
                    self.add_citations(indices, leading);
                    continue;
                }
            }
            if is_terminal(c) {
                let trimmed = self.current.text.trim_end().len();
                self.current.text.truncate(trimmed);
                while self.pos < self.chars.len() && is_terminal(self.chars[self.pos]) {
                    self.current.text.push(self.chars[self.pos]);
                    self.pos += 1;
                }
                while self.pos < self.chars.len() && is_closer(self.chars[self.pos]) {
                    self.current.text.push(self.chars[self.pos]);
                    self.pos += 1;
                }
                if let Some(indices) = self.take_groups() {
                    self.add_citations(indices, false);
                }
                let at_boundary = self
                    .chars
                    .get(self.pos)
                    .is_none_or(|c| c.is_whitespace());
                if at_boundary {
                    self.flush();
                }
                continue;
            }
            self.current.text.push(c);
            self.pos += 1;
        }
        self.flush();

        let sentences = self
            .sentences
            .into_iter()
            .enumerate()
            .map(|(i, (text, cited))| {
                let words: Vec<&str> = text.split_whitespace().collect();
                CitedSentence {
                    word_count: words.len(),
                    text: words.join(" "),
                    cited,
                    position: i + 1,
                }
            })
            .collect();
        if self.dropped > 0 {
            log::warn!(
                "dropped {} citation(s) outside 1..={}",
                self.dropped,
                self.num_sources
            );
        }
        CitationParse {
            sentences,
            num_sources: self.num_sources,
            dropped: self.dropped,
        }
    }
}

/// Splits an answer into sentences and attaches inline citations.
pub fn parse_citations(answer: &str, num_sources: usize) -> Result<CitationParse, CitationError> {
    if num_sources == 0 {
        return Err(CitationError::NoSources);
    }
    let parser = Parser {
        chars: answer.chars().collect(),
        pos: 0,
        num_sources,
        dropped: 0,
        sentences: Vec::new(),
        current: Pending::default(),
    };
    Ok(parser.run())
}

/// Word, position and combined visibility of one source, each in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceVisibility {
    pub word: f64,
    pub pos: f64,
    pub vis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityScores {
    /// Indexed by `source_id - 1`.
    pub per_source: Vec<SourceVisibility>,
}

impl VisibilityScores {
    /// Scores for a 1-based source id; uncited or unknown ids score zero.
    pub fn source(&self, id: usize) -> SourceVisibility {
        id.checked_sub(1)
            .and_then(|i| self.per_source.get(i))
            .copied()
            .unwrap_or_default()
    }
}

/// Word-share and position-decayed word-share for every source.
///
/// With `S` sentences, sentence at position `k` carries weight
/// `word_count * exp(-k / S)` in the position metric. A sentence citing
/// several sources counts fully for each of them.
pub fn visibility_scores(parse: &CitationParse) -> VisibilityScores {
    let mut per_source = vec![SourceVisibility::default(); parse.num_sources];
    let total_words = parse.total_words() as f64;
    if parse.sentences.is_empty() || total_words == 0.0 {
        return VisibilityScores { per_source };
    }
    let count = parse.sentences.len() as f64;
    let decayed = |s: &CitedSentence| s.word_count as f64 * (-(s.position as f64) / count).exp();
    let total_decayed: f64 = parse.sentences.iter().map(decayed).sum();

    let mut words = vec![0.0; parse.num_sources];
    let mut positional = vec![0.0; parse.num_sources];
    for s in &parse.sentences {
        let w = decayed(s);
        for &k in &s.cited {
            words[k - 1] += s.word_count as f64;
            positional[k - 1] += w;
        }
    }
    for (i, out) in per_source.iter_mut().enumerate() {
        let word = 100.0 * words[i] / total_words;
        let pos = 100.0 * positional[i] / total_decayed;
        *out = SourceVisibility {
            word,
            pos,
            vis: 0.5 * (word + pos),
        };
    }
    VisibilityScores { per_source }
}

/// How many answers cite each source, over a set of probe queries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CitationFrequencyTable {
    pub frequencies: BTreeMap<usize, usize>,
    pub total_queries: usize,
}

impl CitationFrequencyTable {
    pub fn frequency(&self, source: usize) -> usize {
        self.frequencies.get(&source).copied().unwrap_or(0)
    }
}

pub fn citation_frequency(parses: &[CitationParse]) -> Result<CitationFrequencyTable, CitationError> {
    let Some(first) = parses.first() else {
        return Ok(CitationFrequencyTable::default());
    };
    let n = first.num_sources;
    let mut frequencies: BTreeMap<usize, usize> = (1..=n).map(|s| (s, 0)).collect();
    for (index, parse) in parses.iter().enumerate() {
        if parse.num_sources != n {
            return Err(CitationError::MismatchedSources {
                index,
                found: parse.num_sources,
                expected: n,
            });
        }
        for s in parse.cited_sources() {
            *frequencies.entry(s).or_default() += 1;
        }
    }
    Ok(CitationFrequencyTable {
        frequencies,
        total_queries: parses.len(),
    })
}

/// Top-`k` cited sources, most frequent first, ties to the smaller id.
pub fn select_exemplars(table: &CitationFrequencyTable, k: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, usize)> = table
        .frequencies
        .iter()
        .filter(|(_, f)| **f >= 1)
        .map(|(s, f)| (*s, *f))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(s, _)| s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[usize]) -> BTreeSet<usize> {
        items.iter().copied().collect()
    }

    #[test]
    fn parses_adjacent_groups() {
        let p = parse_citations("A is B [1][2]. C is D [3].", 3).unwrap();
        assert_eq!(p.sentences.len(), 2);
        assert_eq!(p.sentences[0].cited, set(&[1, 2]));
        assert_eq!(p.sentences[1].cited, set(&[3]));
        assert_eq!(p.sentences[0].text, "A is B.");
        assert_eq!(p.sentences[0].word_count, 3);
        assert_eq!(p.sentences[1].position, 2);
    }

    #[test]
    fn parses_comma_groups() {
        let p = parse_citations("X [1, 2].", 3).unwrap();
        assert_eq!(p.sentences.len(), 1);
        assert_eq!(p.sentences[0].cited, set(&[1, 2]));
        assert_eq!(p.sentences[0].word_count, 1);
    }

    #[test]
    fn no_citations() {
        let p = parse_citations("No citations here.", 2).unwrap();
        assert_eq!(p.sentences.len(), 1);
        assert!(p.sentences[0].cited.is_empty());
        assert_eq!(p.sentences[0].word_count, 3);
    }

    #[test]
    fn empty_answer_is_empty_parse() {
        let p = parse_citations("", 3).unwrap();
        assert!(p.sentences.is_empty());
        assert_eq!(parse_citations("x", 0), Err(CitationError::NoSources));
    }

    #[test]
    fn citation_after_terminal_mark() {
        let p = parse_citations("First claim.[2] Second claim. [1] Third.", 2).unwrap();
        assert_eq!(p.sentences.len(), 3);
        assert_eq!(p.sentences[0].cited, set(&[2]));
        assert_eq!(p.sentences[1].cited, set(&[1]));
        assert!(p.sentences[2].cited.is_empty());
    }

    #[test]
    fn out_of_range_indices_dropped() {
        let p = parse_citations("Claim [0][4][2].", 3).unwrap();
        assert_eq!(p.sentences[0].cited, set(&[2]));
        assert_eq!(p.dropped, 2);
    }

    #[test]
    fn decimal_point_is_not_a_boundary() {
        let p = parse_citations("Pi is 3.14 roughly [1]. Done [1].", 1).unwrap();
        assert_eq!(p.sentences.len(), 2);
        assert_eq!(p.sentences[0].word_count, 4);
    }

    #[test]
    fn non_numeric_brackets_are_text() {
        let p = parse_citations("See [note] here [1].", 1).unwrap();
        assert_eq!(p.sentences[0].text, "See [note] here.");
        assert_eq!(p.sentences[0].cited, set(&[1]));
    }

    #[test]
    fn single_sentence_full_visibility() {
        let p = parse_citations("Only one sentence here [1].", 2).unwrap();
        let v = visibility_scores(&p);
        assert_eq!(v.source(1).word, 100.0);
        assert!((v.source(1).pos - 100.0).abs() < 1e-12);
        assert!((v.source(1).vis - 100.0).abs() < 1e-12);
        assert_eq!(v.source(2), SourceVisibility::default());
    }

    #[test]
    fn two_sentence_position_decay() {
        let p = parse_citations("Alpha beta gamma [1]. Delta epsilon zeta [2].", 2).unwrap();
        let v = visibility_scores(&p);
        let e1 = (-0.5f64).exp();
        let e2 = (-1.0f64).exp();
        let expected = 100.0 * e1 / (e1 + e2);
        assert!((v.source(1).word - 50.0).abs() < 1e-12);
        assert!((v.source(1).pos - expected).abs() < 1e-12);
        assert!((v.source(1).pos - 62.25).abs() < 0.01);
    }

    #[test]
    fn zero_sentences_score_zero() {
        let p = parse_citations("", 2).unwrap();
        let v = visibility_scores(&p);
        assert!(v.per_source.iter().all(|s| *s == SourceVisibility::default()));
    }

    fn fixture(cited: &[&[usize]], n: usize) -> CitationParse {
        let text: String = cited
            .iter()
            .map(|c| {
                let marks: String = c.iter().map(|k| format!("[{k}]")).collect();
                format!("Some words here {marks}. ")
            })
            .collect();
        parse_citations(&text, n).unwrap()
    }

    #[test]
    fn frequency_counts_answers_not_sentences() {
        let parses = vec![
            fixture(&[&[1], &[1]], 3),
            fixture(&[&[1, 2]], 3),
            fixture(&[&[3]], 3),
            fixture(&[&[1]], 3),
            fixture(&[&[2]], 3),
        ];
        let t = citation_frequency(&parses).unwrap();
        assert_eq!(t.total_queries, 5);
        assert_eq!(t.frequency(1), 3);
        assert_eq!(t.frequency(2), 2);
        assert_eq!(t.frequency(3), 1);
    }

    #[test]
    fn frequency_empty_and_mismatched() {
        let t = citation_frequency(&[]).unwrap();
        assert_eq!(t.total_queries, 0);
        assert!(t.frequencies.is_empty());
        let err = citation_frequency(&[fixture(&[&[1]], 2), fixture(&[&[1]], 3)]);
        assert!(matches!(err, Err(CitationError::MismatchedSources { index: 1, .. })));
    }

    #[test]
    fn exemplar_selection() {
        let table = CitationFrequencyTable {
            frequencies: [(1, 3), (2, 3), (3, 1)].into_iter().collect(),
            total_queries: 3,
        };
        assert_eq!(select_exemplars(&table, 2), vec![1, 2]);
        assert_eq!(select_exemplars(&table, 10), vec![1, 2, 3]);
        let zero = CitationFrequencyTable {
            frequencies: [(1, 0), (2, 0)].into_iter().collect(),
            total_queries: 4,
        };
        assert!(select_exemplars(&zero, 3).is_empty());
    }

    #[test]
    fn word_is_order_invariant_but_pos_is_not() {
        let a = fixture(&[&[1], &[2], &[2]], 2);
        let b = fixture(&[&[2], &[2], &[1]], 2);
        let (va, vb) = (visibility_scores(&a), visibility_scores(&b));
        assert!((va.source(1).word - vb.source(1).word).abs() < 1e-12);
        assert!(va.source(1).pos > vb.source(1).pos);
    }

    fn random_parse() -> impl Strategy<Value = CitationParse> {
        (1usize..6).prop_flat_map(|n| {
            proptest::collection::vec(
                (1usize..8, proptest::collection::btree_set(1..=n, 0..=n)),
                0..12,
            )
            .prop_map(move |sentences| CitationParse {
                sentences: sentences
                    .into_iter()
                    .enumerate()
                    .map(|(i, (wc, cited))| CitedSentence {
                        text: "w ".repeat(wc).trim().to_string(),
                        word_count: wc,
                        cited,
                        position: i + 1,
                    })
                    .collect(),
                num_sources: n,
                dropped: 0,
            })
        })
    }

    proptest! {
        #[test]
        fn scores_are_bounded(p in random_parse()) {
            let v = visibility_scores(&p);
            for s in &v.per_source {
                prop_assert!(s.word >= 0.0 && s.word <= 100.0 + 1e-9);
                prop_assert!(s.pos >= 0.0 && s.pos <= 100.0 + 1e-9);
                prop_assert!(s.vis >= 0.0 && s.vis <= 100.0 + 1e-9);
            }
        }

        #[test]
        fn citing_every_sentence_is_full(mut p in random_parse()) {
            prop_assume!(!p.sentences.is_empty());
            for s in &mut p.sentences {
                s.cited.insert(1);
            }
            let v = visibility_scores(&p);
            prop_assert!((v.source(1).word - 100.0).abs() < 1e-9);
            prop_assert!((v.source(1).pos - 100.0).abs() < 1e-9);
        }

        #[test]
        fn moving_citation_earlier_never_lowers_pos(p in random_parse(), a in 0usize..12, b in 0usize..12) {
            let n = p.sentences.len();
            prop_assume!(n >= 2);
            let (i, j) = (a % n, b % n);
            prop_assume!(i < j);
            let mut p = p;
            // equal lengths, source 1 only on the later sentence
            p.sentences[i].word_count = 3;
            p.sentences[j].word_count = 3;
            p.sentences[i].cited.remove(&1);
            p.sentences[j].cited.insert(1);
            let before = visibility_scores(&p).source(1).pos;
            let (ci, cj) = (p.sentences[i].cited.clone(), p.sentences[j].cited.clone());
            p.sentences[i].cited = cj;
            p.sentences[j].cited = ci;
            let after = visibility_scores(&p).source(1).pos;
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn frequency_matches_double_loop(parses in proptest::collection::vec(random_parse(), 0..8)) {
            let n = parses.first().map_or(1, |p| p.num_sources);
            let parses: Vec<_> = parses
                .into_iter()
                .map(|mut p| {
                    p.num_sources = n;
                    for s in &mut p.sentences {
                        s.cited.retain(|k| *k <= n);
                    }
                    p
                })
                .collect();
            let table = citation_frequency(&parses).unwrap();
            for s in 1..=n {
                let mut expected = 0;
                for p in &parses {
                    if p.sentences.iter().any(|x| x.cited.contains(&s)) {
                        expected += 1;
                    }
                }
                prop_assert_eq!(table.frequency(s), expected);
            }
            prop_assert_eq!(table.total_queries, parses.len());
        }

        #[test]
        fn parser_never_panics(text in "[a-z \\[\\]0-9,.!?]{0,80}", n in 1usize..5) {
            let p = parse_citations(&text, n).unwrap();
            for (i, s) in p.sentences.iter().enumerate() {
                prop_assert_eq!(s.position, i + 1);
                prop_assert!(s.word_count >= 1);
                prop_assert!(s.cited.iter().all(|k| (1..=n).contains(k)));
            }
        }
    }
}
