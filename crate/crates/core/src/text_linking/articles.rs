use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleKeyword {
    pub name: String,
    pub value: String,
    pub rank: u32,
}

/// One archive article with the fields the pipeline uses.
#[derive(Debug, Clone, PartialEq)]
pub struct NewsArticle {
    pub id: String,
    pub publish_date: NaiveDate,
    pub headline: String,
    pub snippet: String,
    pub lead_paragraph: String,
    pub keywords: Vec<ArticleKeyword>,
}

impl NewsArticle {
    pub fn organizations(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().filter(|k| k.name == "organizations").map(|k| k.value.as_str())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Headline {
    Text(String),
    Parts { main: Option<String> },
}

#[derive(Deserialize)]
struct RawArticle {
    #[serde(rename = "_id")]
    id: String,
    pub_date: String,
    headline: Option<Headline>,
    snippet: Option<String>,
    lead_paragraph: Option<String>,
    #[serde(default)]
    keywords: Vec<ArticleKeyword>,
}

fn convert(raw: RawArticle) -> Result<NewsArticle> {
    let date_part = raw.pub_date.get(..10).unwrap_or(&raw.pub_date);
    let publish_date = NaiveDate::parse_from_str(date_part, "%Y-%m-%d")
        .map_err(|e| Error::InvalidInput(format!("article {}: pub_date `{}`: {e}", raw.id, raw.pub_date)))?;
    if let Some(k) = raw.keywords.iter().find(|k| k.rank == 0) {
        return Err(Error::InvalidInput(format!("article {}: keyword `{}` has rank 0", raw.id, k.value)));
    }
    let headline = match raw.headline {
        Some(Headline::Text(s)) => s,
        Some(Headline::Parts { main }) => main.unwrap_or_default(),
        None => String::new(),
    };
    Ok(NewsArticle {
        id: raw.id,
        publish_date,
        headline,
        snippet: raw.snippet.unwrap_or_default(),
        lead_paragraph: raw.lead_paragraph.unwrap_or_default(),
        keywords: raw.keywords,
    })
}

/// One JSON object per line, archive field names (`_id`, `pub_date`,
/// `headline.main`, `snippet`, `lead_paragraph`, `keywords`).
pub fn read_articles_jsonl(path: &Path) -> Result<Vec<NewsArticle>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawArticle =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?;
        out.push(convert(raw).map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// (ticker, article id) pairs for articles carrying a confirmed organization
/// keyword, sorted.
pub fn link_articles(
    articles: &[NewsArticle],
    confirmed: &BTreeMap<String, BTreeSet<String>>,
) -> Vec<(String, String)> {
    let mut by_keyword: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (ticker, kws) in confirmed {
        for kw in kws {
            by_keyword.entry(kw.as_str()).or_default().push(ticker.as_str());
        }
    }
    let mut pairs = BTreeSet::new();
    for article in articles {
        for org in article.organizations() {
            for ticker in by_keyword.get(org).into_iter().flatten() {
                pairs.insert((ticker.to_string(), article.id.clone()));
            }
        }
    }
    pairs.into_iter().collect()
}
