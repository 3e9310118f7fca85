//! Streaming tokenizers for `bnpsketch sketch`.

use std::collections::{HashSet, VecDeque};
use std::io::BufRead;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tokenizer {
    /// Each non-empty line is one token.
    Lines,
    /// Lowercased whitespace-separated words with ASCII punctuation removed.
    Words,
    /// Every length-`k` window of each sequence record. Lines starting with
    /// `>` are FASTA headers and start a new record.
    Kmer(usize),
    /// Sliding `n`-tuples of normalized words joined by one space.
    Ngram(usize),
}

impl FromStr for Tokenizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let positive = |v: &str| -> Result<usize, String> {
            match v.parse::<usize>() {
                Ok(k) if k > 0 => Ok(k),
                _ => Err(format!("invalid tokenizer size in {s:?}")),
            }
        };
        match s.split_once(':') {
            None if s == "lines" => Ok(Tokenizer::Lines),
            None if s == "words" => Ok(Tokenizer::Words),
            Some(("kmer", k)) => Ok(Tokenizer::Kmer(positive(k)?)),
            Some(("ngram", n)) => Ok(Tokenizer::Ngram(positive(n)?)),
            _ => Err(format!(
                "unknown tokenizer {s:?}; expected lines, words, kmer:K or ngram:N"
            )),
        }
    }
}

pub fn normalize_word(w: &str) -> String {
    w.chars()
        .filter(|c| !c.is_ascii_punctuation())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Reads `input` line by line and calls `emit` once per token.
pub fn tokenize<R: BufRead>(
    input: R,
    tokenizer: Tokenizer,
    dictionary: Option<&HashSet<String>>,
    mut emit: impl FnMut(&str) -> std::io::Result<()>,
) -> std::io::Result<()> {
    let keep = |w: &str| !w.is_empty() && dictionary.is_none_or(|d| d.contains(w));
    let mut window: VecDeque<String> = VecDeque::new();
    let mut seq: Vec<u8> = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        match tokenizer {
            Tokenizer::Lines => {
                if !line.is_empty() {
                    emit(line)?;
                }
            }
            Tokenizer::Words => {
                for w in line.split_whitespace().map(normalize_word) {
                    if keep(&w) {
                        emit(&w)?;
                    }
                }
            }
            Tokenizer::Ngram(n) => {
                for w in line.split_whitespace().map(normalize_word) {
                    if !keep(&w) {
                        continue;
                    }
                    window.push_back(w);
                    if window.len() > n {
                        window.pop_front();
                    }
                    if window.len() == n {
                        let gram = window.iter().map(String::as_str).collect::<Vec<_>>().join(" ");
                        emit(&gram)?;
                    }
                }
            }
            Tokenizer::Kmer(k) => {
                if line.starts_with('>') {
                    seq.clear();
                    continue;
                }
                for b in line.bytes().filter(|b| !b.is_ascii_whitespace()) {
                    seq.push(b);
                    if seq.len() > k {
                        seq.remove(0);
                    }
                    if seq.len() == k {
                        emit(&String::from_utf8_lossy(&seq))?;
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn load_dictionary<R: BufRead>(input: R) -> std::io::Result<HashSet<String>> {
    let mut words = HashSet::new();
    for line in input.lines() {
        for w in line?.split_whitespace() {
            let w = normalize_word(w);
            if !w.is_empty() {
                words.insert(w);
            }
        }
    }
    Ok(words)
}
