use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 128;

/// Token-level word vectors. Every single lowercase letter resolves, so any
/// alphabetic token can be covered by splitting.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        for (token, v) in &vectors {
            if v.len() != EMBEDDING_DIM {
                return Err(Error::InvalidInput(format!(
                    "embedding `{token}` has {} components, expected {EMBEDDING_DIM}",
                    v.len()
                )));
            }
        }
        let table = EmbeddingTable { dim: EMBEDDING_DIM, vectors };
        if let Some(letter) = ('a'..='z').find(|c| table.resolve(&c.to_string()).is_none()) {
            return Err(Error::InvalidInput(format!("embedding table lacks the letter `{letter}`")));
        }
        Ok(table)
    }

    /// Reads `token v1 … v128` lines.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut vectors = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidInput(format!("embedding line {}: {e}", n + 1)))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let v = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidInput(format!("embedding line {}: {e}", n + 1)))?;
            vectors.insert(token.to_string(), v);
        }
        EmbeddingTable::new(vectors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        EmbeddingTable::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Looks a token up as written, then capitalized, then lowercased.
    pub fn resolve(&self, token: &str) -> Option<&[f64]> {
        if let Some(v) = self.vectors.get(token) {
            return Some(v);
        }
        let lower = token.to_lowercase();
        let mut chars = lower.chars();
        let first = chars.next()?;
        let capitalized: String = first.to_uppercase().chain(chars).collect();
        self.vectors.get(&capitalized).or_else(|| self.vectors.get(&lower)).map(Vec::as_slice)
    }

    /// Dictionary pieces covering `token`: the token itself if it resolves,
    /// otherwise the split with the fewest pieces, ties going to the smallest
    /// spread of piece lengths. Characters with no entry are skipped.
    pub fn split_token(&self, token: &str) -> Vec<String> {
        if self.resolve(token).is_some() {
            return vec![token.to_string()];
        }
        let chars: Vec<char> = token.chars().filter(|c| self.resolve(&c.to_string()).is_some()).collect();
        let n = chars.len();
        // best[i] = (pieces, sum of squared lengths, next cut) for chars[i..].
        let mut best: Vec<Option<(usize, usize, usize)>> = vec![None; n + 1];
        best[n] = Some((0, 0, n));
        for i in (0..n).rev() {
            for j in i + 1..=n {
                let Some((pieces, sq, _)) = best[j] else { continue };
                let piece: String = chars[i..j].iter().collect();
                if self.resolve(&piece).is_none() {
                    continue;
                }
                let len = j - i;
                let cand = (pieces + 1, sq + len * len, j);
                if best[i].is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                    best[i] = Some(cand);
                }
            }
        }
        let mut pieces = Vec::new();
        let mut i = 0;
        while i < n {
            let (_, _, j) = best[i].expect("single letters always resolve");
            pieces.push(chars[i..j].iter().collect());
            i = j;
        }
        pieces
    }

    /// Sum of the piece vectors divided by √(piece count).
    pub fn embed_phrase(&self, phrase: &str) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        let mut count = 0usize;
        for token in tokenize(phrase) {
            for piece in self.split_token(&token) {
                let v = self.resolve(&piece).expect("split pieces resolve");
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                count += 1;
            }
        }
        if count > 0 {
            let scale = (count as f64).sqrt();
            sum.iter_mut().for_each(|s| *s /= scale);
        }
        sum
    }
}

/// Whitespace tokens with punctuation removed; case is preserved.
pub fn tokenize(phrase: &str) -> Vec<String> {
    phrase
        .split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn table_with(words: &[&str], seed: u64) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = HashMap::new();
        let letters: Vec<String> = ('a'..='z').map(|c| c.to_string()).collect();
        for w in letters.iter().map(String::as_str).chain(words.iter().copied()) {
            vectors.insert(w.to_string(), (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        EmbeddingTable::new(vectors).unwrap()
    }

    #[test]
    fn single_token_unchanged() {
        let t = table_with(&["Facebook"], 1);
        assert_eq!(t.embed_phrase("Facebook"), t.resolve("Facebook").unwrap().to_vec());
    }

    #[test]
    fn repeated_token_scales_by_sqrt_two() {
        let t = table_with(&["Intel"], 2);
        let v = t.resolve("Intel").unwrap();
        let e = t.embed_phrase("Intel Intel");
        for (a, b) in e.iter().zip(v) {
            assert!((a - 2f64.sqrt() * b).abs() < 1e-12);
        }
    }

    #[test]
    fn case_fallbacks() {
        let t = table_with(&["Facebook", "inc"], 3);
        assert!(t.resolve("FACEBOOK").is_some());
        assert!(t.resolve("Inc").is_some());
        assert!(t.resolve("zzz").is_none());
    }

    #[test]
    fn unknown_token_splits_into_letters() {
        let t = table_with(&[], 4);
        assert_eq!(t.split_token("qxz"), vec!["q", "x", "z"]);
    }

    #[test]
    fn split_prefers_fewest_then_even_pieces() {
        // "abcd" = ab|cd (lengths 2,2) or abc|d (3,1): same count, even split wins.
        let t = table_with(&["ab", "cd", "abc"], 5);
        assert_eq!(t.split_token("abcd"), vec!["ab", "cd"]);
        let t = table_with(&["facebook", "face", "book"], 6);
        assert_eq!(t.split_token("facebookx"), vec!["facebook", "x"]);
    }

    #[test]
    fn missing_letters_rejected() {
        let mut vectors = HashMap::new();
        vectors.insert("a".to_string(), vec![0.0; EMBEDDING_DIM]);
        assert!(EmbeddingTable::new(vectors).is_err());
    }

    #[test]
    fn text_format() {
        let mut text = String::new();
        for c in 'a'..='z' {
            text.push(c);
            for k in 0..EMBEDDING_DIM {
                text.push_str(&format!(" {}", (k as f64) * 0.01));
            }
            text.push('\n');
        }
        let t = EmbeddingTable::from_reader(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 26);
        assert_eq!(t.dim(), EMBEDDING_DIM);
    }

    #[test]
    fn self_cosine_is_one() {
        let t = table_with(&["Apple", "Inc"], 7);
        let e = t.embed_phrase("Apple Inc");
        assert!((cosine_similarity(&e, &e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_invariance() {
        let t = table_with(&["General", "Motors", "Corp"], 8);
        let a = t.embed_phrase("General Motors Corp");
        let b = t.embed_phrase("Corp General Motors");
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}
