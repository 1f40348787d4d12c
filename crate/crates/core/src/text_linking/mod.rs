//! Linking news keyword strings to tickers by normalized LCS similarity and
//! Sqrt-N word-embedding cosine similarity.

mod articles;
mod embedding;
mod lcs;
mod normalize;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use articles::{link_articles, read_articles_jsonl, ArticleKeyword, NewsArticle};
pub use embedding::{cosine_similarity, tokenize, EmbeddingTable, EMBEDDING_DIM};
pub use lcs::{lcs_length, lcs_similarity};
pub use normalize::{clean_text, normalize_name, SynonymRules, DEFAULT_RULES};

/// Pre-filter thresholds for the manual review list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkThresholds {
    pub lcs: f64,
    pub cosine: f64,
}

impl Default for LinkThresholds {
    fn default() -> Self {
        LinkThresholds { lcs: 0.85, cosine: 0.90 }
    }
}

impl LinkThresholds {
    pub fn accepts(&self, lcs: f64, cosine: f64) -> bool {
        lcs >= self.lcs || cosine >= self.cosine
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityLink {
    pub ticker: String,
    #[serde(rename = "keyword")]
    pub matched_keyword: String,
    pub lcs_score: f64,
    pub cosine_score: f64,
    pub confirmed: bool,
}

impl EntityLink {
    pub fn score(&self) -> f64 {
        self.lcs_score.max(self.cosine_score)
    }
}

/// Scores every keyword against one company name and returns the best `k`,
/// ranked by `max(lcs, cosine)`. Candidates passing `thresholds` come back
/// marked confirmed; the list is meant for manual review.
pub fn match_candidates(
    ticker: &str,
    company_name: &str,
    keywords: &BTreeSet<String>,
    table: &EmbeddingTable,
    rules: &SynonymRules,
    thresholds: LinkThresholds,
    k: usize,
) -> Result<Vec<EntityLink>> {
    let name_norm = normalize_name(company_name, rules)?;
    let name_vec = table.embed_phrase(company_name);
    let mut links: Vec<EntityLink> = keywords
        .iter()
        .filter_map(|kw| {
            let kw_norm = normalize_name(kw, rules).ok()?;
            let lcs_score = lcs_similarity(&name_norm, &kw_norm);
            let cosine_score = cosine_similarity(&name_vec, &table.embed_phrase(kw));
            Some(EntityLink {
                ticker: ticker.to_string(),
                matched_keyword: kw.clone(),
                lcs_score,
                cosine_score,
                confirmed: thresholds.accepts(lcs_score, cosine_score),
            })
        })
        .collect();
    links.sort_by(|a, b| {
        b.score()
            .total_cmp(&a.score())
            .then(b.lcs_score.total_cmp(&a.lcs_score))
            .then(a.matched_keyword.cmp(&b.matched_keyword))
    });
    links.truncate(k);
    Ok(links)
}

/// Review list with scores: `ticker,keyword,lcs_score,cosine_score,confirmed`.
pub fn write_candidates_csv(path: &Path, links: &[EntityLink]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for link in links {
        writer.serialize(link)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ConfirmedRow {
    ticker: String,
    keyword: String,
    confirmed: bool,
}

/// Link table: `ticker,keyword,confirmed`.
pub fn write_links_csv(path: &Path, links: &[EntityLink]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for link in links {
        writer.serialize(ConfirmedRow {
            ticker: link.ticker.clone(),
            keyword: link.matched_keyword.clone(),
            confirmed: link.confirmed,
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Confirmed keywords per ticker from a link table.
pub fn read_confirmed_links(path: &Path) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for record in reader.deserialize::<ConfirmedRow>() {
        let row = record.map_err(|e| Error::parse(path, e.to_string()))?;
        if row.confirmed {
            out.entry(row.ticker).or_default().insert(row.keyword);
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct CompanyRow {
    ticker: String,
    name: String,
}

/// Company names: `ticker,name`.
pub fn read_company_names(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out = BTreeMap::new();
    for record in reader.deserialize::<CompanyRow>() {
        let row = record.map_err(|e| Error::parse(path, e.to_string()))?;
        out.insert(row.ticker, row.name);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text_linking::embedding::tests::table_with;

    fn keywords(list: &[&str]) -> BTreeSet<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn exact_name_ranks_first() {
        let t = table_with(&["Facebook", "Inc", "Twitter", "Apple"], 11);
        let kws = keywords(&["Twitter Inc", "Facebook Inc", "Apple Inc"]);
        let out = match_candidates("FB", "Facebook Inc", &kws, &t, &SynonymRules::default(), LinkThresholds::default(), 2)
            .unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].matched_keyword, "Facebook Inc");
        assert_eq!(out[0].lcs_score, 1.0);
        assert!(out[0].confirmed);
    }

    #[test]
    fn k_beyond_candidates_returns_all() {
        let t = table_with(&[], 12);
        let kws = keywords(&["Alpha", "Beta"]);
        let out =
            match_candidates("A", "Alpha", &kws, &t, &SynonymRules::default(), LinkThresholds::default(), 10).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn empty_keywords_empty_result() {
        let t = table_with(&[], 13);
        let out = match_candidates("A", "Alpha", &BTreeSet::new(), &t, &SynonymRules::default(), LinkThresholds::default(), 5)
            .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn link_files_roundtrip_confirmed_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("links.csv");
        let mk = |kw: &str, confirmed| EntityLink {
            ticker: "FB".into(),
            matched_keyword: kw.into(),
            lcs_score: 0.5,
            cosine_score: 0.5,
            confirmed,
        };
        write_links_csv(&path, &[mk("Facebook Inc", true), mk("Facebook Fan Club", false)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("ticker,keyword,confirmed\n"));
        let read = read_confirmed_links(&path).unwrap();
        assert_eq!(read["FB"], keywords(&["Facebook Inc"]));
    }
}
