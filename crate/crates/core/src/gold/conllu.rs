//! Minimal CoNLL-U reader: basic HEAD column only.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {kind}")]
pub struct ConlluError {
    pub line: usize,
    pub kind: ConlluErrorKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConlluErrorKind {
    #[error("expected 10 tab-separated columns, found {0}")]
    ColumnCount(usize),
    #[error("invalid token id {0:?}")]
    BadId(String),
    #[error("invalid head {0:?}")]
    BadHead(String),
    #[error("head {head} does not exist in a {words}-word sentence")]
    MissingHead { head: usize, words: usize },
    #[error("sentence has {0} root words, expected exactly one")]
    RootCount(usize),
    #[error("cyclic head chain through word {0}")]
    Cycle(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub form: String,
    /// 1-based position of the head word, 0 for root.
    pub head: usize,
    /// Original CoNLL-U token id.
    pub token_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencySentence {
    pub id: String,
    pub words: Vec<Word>,
}

impl DependencySentence {
    /// Builds a sentence from 1-based heads (0 = root), validating the tree.
    pub fn from_heads(id: impl Into<String>, heads: &[usize]) -> Result<Self, ConlluErrorKind> {
        let words = heads
            .iter()
            .enumerate()
            .map(|(i, &head)| Word {
                form: format!("w{}", i + 1),
                head,
                token_id: (i + 1).to_string(),
            })
            .collect();
        let s = Self {
            id: id.into(),
            words,
        };
        s.validate().map_err(|(_, kind)| kind)?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Undirected tree edges as 0-based `(min, max)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.head != 0)
            .map(|(i, w)| {
                let h = w.head - 1;
                (i.min(h), i.max(h))
            })
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Element id of each word: `<sentence id>:<token id>`.
    pub fn element_ids(&self) -> Vec<String> {
        self.words
            .iter()
            .map(|w| format!("{}:{}", self.id, w.token_id))
            .collect()
    }

    // Returns the offending word index (0-based) with the error.
    fn validate(&self) -> Result<(), (usize, ConlluErrorKind)> {
        let n = self.words.len();
        let roots = self.words.iter().filter(|w| w.head == 0).count();
        for (i, w) in self.words.iter().enumerate() {
            if w.head > n {
                return Err((
                    i,
                    ConlluErrorKind::MissingHead {
                        head: w.head,
                        words: n,
                    },
                ));
            }
        }
        // 0 unknown, 1 on current path, 2 reaches root
        let mut state = vec![0u8; n];
        for start in 0..n {
            let mut path = Vec::new();
            let mut cur = start;
            loop {
                match state[cur] {
                    2 => break,
                    1 => return Err((cur, ConlluErrorKind::Cycle(cur + 1))),
                    _ => {}
                }
                state[cur] = 1;
                path.push(cur);
                match self.words[cur].head {
                    0 => break,
                    h => cur = h - 1,
                }
            }
            for p in path {
                state[p] = 2;
            }
        }
        if roots != 1 {
            return Err((0, ConlluErrorKind::RootCount(roots)));
        }
        Ok(())
    }
}

/// Minimal CoNLL-U with id, form, head and deprel columns; token ids are
/// renumbered from 1.
pub fn write_conllu(sentences: &[DependencySentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&format!("# sent_id = {}\n", s.id));
        for (i, w) in s.words.iter().enumerate() {
            let deprel = if w.head == 0 { "root" } else { "dep" };
            out.push_str(&format!(
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_\n",
                i + 1,
                w.form,
                w.head,
                deprel
            ));
        }
        out.push('\n');
    }
    out
}

/// Parses a CoNLL-U document. Multiword ranges (`3-4`) and empty nodes
/// (`5.1`) are skipped.
pub fn parse_conllu(text: &str) -> Result<Vec<DependencySentence>, ConlluError> {
    let mut sentences = Vec::new();
    let mut words = Vec::new();
    let mut lines = Vec::new();
    let mut sent_id: Option<String> = None;

    let flush = |words: &mut Vec<Word>,
                 lines: &mut Vec<usize>,
                 sent_id: &mut Option<String>,
                 sentences: &mut Vec<DependencySentence>|
     -> Result<(), ConlluError> {
        if words.is_empty() {
            *sent_id = None;
            return Ok(());
        }
        let id = sent_id
            .take()
            .unwrap_or_else(|| format!("s{}", sentences.len() + 1));
        let s = DependencySentence {
            id,
            words: std::mem::take(words),
        };
        s.validate().map_err(|(i, kind)| ConlluError {
            line: lines[i],
            kind,
        })?;
        lines.clear();
        sentences.push(s);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut words, &mut lines, &mut sent_id, &mut sentences)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError {
                line: line_no,
                kind: ConlluErrorKind::ColumnCount(cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let position: usize = id.parse().map_err(|_| ConlluError {
            line: line_no,
            kind: ConlluErrorKind::BadId(id.to_string()),
        })?;
        if position != words.len() + 1 {
            return Err(ConlluError {
                line: line_no,
                kind: ConlluErrorKind::BadId(id.to_string()),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| ConlluError {
            line: line_no,
            kind: ConlluErrorKind::BadHead(cols[6].to_string()),
        })?;
        words.push(Word {
            form: cols[1].to_string(),
            head,
            token_id: id.to_string(),
        });
        lines.push(line_no);
    }
    flush(&mut words, &mut lines, &mut sent_id, &mut sentences)?;
    Ok(sentences)
}

/// Path length between every pair of words in the dependency tree.
pub fn tree_distance_matrix(s: &DependencySentence) -> Array2<u32> {
    let n = s.len();
    let mut adj = vec![Vec::new(); n];
    for (a, b) in s.edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut out = Array2::zeros((n, n));
    let mut queue = std::collections::VecDeque::new();
    for src in 0..n {
        let mut seen = vec![false; n];
        seen[src] = true;
        queue.push_back((src, 0u32));
        while let Some((node, d)) = queue.pop_front() {
            out[[src, node]] = d;
            for &next in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back((next, d + 1));
                }
            }
        }
    }
    out
}

/// Surface-order distances `|i - j|`.
pub fn linear_tree_distances(n: usize) -> Array2<u32> {
    Array2::from_shape_fn((n, n), |(i, j)| i.abs_diff(j) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, form: &str, head: &str) -> String {
        format!("{id}\t{form}\t_\t_\t_\t_\t{head}\t_\t_\t_")
    }

    #[test]
    fn two_word_sentence() {
        let text = format!(
            "# sent_id = a\n{}\n{}\n\n",
            row("1", "dogs", "2"),
            row("2", "bark", "0")
        );
        let parsed = parse_conllu(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        let s = &parsed[0];
        assert_eq!(s.id, "a");
        assert_eq!(s.words[1].head, 0);
        assert_eq!(s.words[0].head, 2);
        assert_eq!(s.edges(), vec![(0, 1)]);
        assert_eq!(s.element_ids(), vec!["a:1", "a:2"]);
    }

    #[test]
    fn write_round_trip() {
        let a = DependencySentence::from_heads("x", &[2, 0, 2, 3]).unwrap();
        let b = DependencySentence::from_heads("y", &[0]).unwrap();
        let text = write_conllu(&[a.clone(), b.clone()]);
        assert_eq!(parse_conllu(&text).unwrap(), vec![a, b]);
    }

    #[test]
    fn skips_ranges_and_empty_nodes() {
        let text = [
            row("1", "I", "2"),
            row("2", "went", "0"),
            row("3-4", "to the", "_"),
            row("3", "to", "5"),
            row("4", "the", "5"),
            row("4.1", "ghost", "_"),
            row("5", "store", "2"),
        ]
        .join("\n");
        let s = &parse_conllu(&text).unwrap()[0];
        assert_eq!(s.len(), 5);
        assert_eq!(s.words[2].form, "to");
        assert_eq!(s.words[3].form, "the");
        assert_eq!(s.id, "s1");
    }

    #[test]
    fn missing_head_reports_line() {
        let text = [
            "# text = x".to_string(),
            row("1", "a", "2"),
            row("2", "b", "0"),
            row("3", "c", "99"),
            row("4", "d", "2"),
            row("5", "e", "2"),
        ]
        .join("\n");
        let err = parse_conllu(&text).unwrap_err();
        assert_eq!(err.line, 4);
        assert_eq!(
            err.kind,
            ConlluErrorKind::MissingHead { head: 99, words: 5 }
        );
    }

    #[test]
    fn malformed_inputs() {
        let err = parse_conllu("1\tonly\tthree").unwrap_err();
        assert_eq!(
            err,
            ConlluError {
                line: 1,
                kind: ConlluErrorKind::ColumnCount(3)
            }
        );

        let cyclic = [row("1", "a", "2"), row("2", "b", "1"), row("3", "c", "0")].join("\n");
        let err = parse_conllu(&cyclic).unwrap_err();
        assert!(matches!(err.kind, ConlluErrorKind::Cycle(_)));
        assert!(err.line == 1 || err.line == 2);

        let two_roots = [row("1", "a", "0"), row("2", "b", "0")].join("\n");
        assert_eq!(
            parse_conllu(&two_roots).unwrap_err().kind,
            ConlluErrorKind::RootCount(2)
        );
    }

    #[test]
    fn several_sentences_and_crlf() {
        let text = format!(
            "{}\r\n{}\r\n\r\n\r\n{}\r\n",
            row("1", "a", "2"),
            row("2", "b", "0"),
            row("1", "c", "0")
        );
        let parsed = parse_conllu(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1].id, "s2");
        assert_eq!(parsed[1].len(), 1);
    }

    #[test]
    fn chain_distances() {
        let s = DependencySentence::from_heads("c", &[2, 3, 0]).unwrap();
        let d = tree_distance_matrix(&s);
        assert_eq!(d[[0, 2]], 2);
        assert_eq!(d[[0, 1]], 1);
        assert!((0..3).all(|i| d[[i, i]] == 0));
    }

    #[test]
    fn linear_distances() {
        assert_eq!(
            linear_tree_distances(3),
            ndarray::array![[0, 1, 2], [1, 0, 1], [2, 1, 0]]
        );
        assert_eq!(linear_tree_distances(1), ndarray::array![[0]]);
        let heads: Vec<usize> = (2..=7).chain([0]).collect();
        let chain = DependencySentence::from_heads("c", &heads).unwrap();
        assert_eq!(tree_distance_matrix(&chain), linear_tree_distances(7));
    }
}
