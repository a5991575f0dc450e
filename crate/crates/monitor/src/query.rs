//! Keyword queries in the search-box dialect analysts already use: bare
//! terms, `"quoted"` or `(parenthesized)` phrases, `OR`, and implicit AND by
//! adjacency. Matching is case-insensitive on word boundaries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhraseStyle {
    Quoted,
    Parenthesized,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Query {
    Term(String),
    Phrase { words: Vec<String>, style: PhraseStyle },
    And(Vec<Query>),
    Or(Vec<Query>),
    /// Parentheses around anything that is not a plain run of words.
    Group(Box<Query>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at offset {position}")]
pub struct QueryError {
    /// Character offset into the query string.
    pub position: usize,
    pub message: String,
}

impl QueryError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Or,
    Word(String),
    Quoted(Vec<String>),
}

fn lex(input: &str) -> Result<(Vec<(usize, Tok)>, usize), QueryError> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            ')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            '"' => {
                let start = i;
                i += 1;
                let body_start = i;
                while i < chars.len() && chars[i] != '"' {
                    i += 1;
                }
                if i == chars.len() {
                    return Err(QueryError::new(i, format!("unterminated quote opened at offset {start}")));
                }
                let body: String = chars[body_start..i].iter().collect();
                let words: Vec<String> = body.split_whitespace().map(str::to_string).collect();
                if words.is_empty() {
                    return Err(QueryError::new(start, "empty quoted phrase"));
                }
                out.push((start, Tok::Quoted(words)));
                i += 1;
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !matches!(chars[i], '(' | ')' | '"') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push((start, if word == "OR" { Tok::Or } else { Tok::Word(word) }));
            }
        }
    }
    Ok((out, chars.len()))
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn or(&mut self) -> Result<Query, QueryError> {
        let mut arms = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            arms.push(self.and()?);
        }
        Ok(if arms.len() == 1 { arms.pop().unwrap() } else { Query::Or(arms) })
    }

    fn and(&mut self) -> Result<Query, QueryError> {
        let mut parts = Vec::new();
        while matches!(self.peek(), Some(Tok::Open | Tok::Word(_) | Tok::Quoted(_))) {
            parts.push(self.atom()?);
        }
        match parts.len() {
            0 => Err(QueryError::new(self.offset(), "expected a term")),
            1 => Ok(parts.pop().unwrap()),
            _ => Ok(Query::And(parts)),
        }
    }

    fn atom(&mut self) -> Result<Query, QueryError> {
        let tok = self.toks[self.pos].1.clone();
        self.pos += 1;
        match tok {
            Tok::Word(w) => Ok(Query::Term(w)),
            Tok::Quoted(words) => Ok(Query::Phrase {
                words,
                style: PhraseStyle::Quoted,
            }),
            Tok::Open => {
                let inner = self.or()?;
                if self.peek() != Some(&Tok::Close) {
                    return Err(QueryError::new(self.offset(), "expected ')'"));
                }
                self.pos += 1;
                Ok(match inner {
                    Query::And(parts) if parts.iter().all(|p| matches!(p, Query::Term(_))) => Query::Phrase {
                        words: parts
                            .into_iter()
                            .map(|p| match p {
                                Query::Term(w) => w,
                                _ => unreachable!(),
                            })
                            .collect(),
                        style: PhraseStyle::Parenthesized,
                    },
                    other => Query::Group(Box::new(other)),
                })
            }
            Tok::Close | Tok::Or => unreachable!("and() only calls atom() on atom starts"),
        }
    }
}

pub fn parse_keyword_query(input: &str) -> Result<Query, QueryError> {
    let (toks, end) = lex(input)?;
    if toks.is_empty() {
        return Err(QueryError::new(0, "empty query"));
    }
    let mut p = Parser { toks, pos: 0, end };
    let q = p.or()?;
    match p.peek() {
        None => Ok(q),
        Some(Tok::Close) => Err(QueryError::new(p.offset(), "unbalanced ')'")),
        Some(_) => Err(QueryError::new(p.offset(), "unexpected token")),
    }
}

impl FromStr for Query {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_keyword_query(s)
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, parts: &[Query], sep: &str) -> fmt::Result {
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{p}")?;
            }
            Ok(())
        }
        match self {
            Query::Term(t) => f.write_str(t),
            Query::Phrase { words, style } => match style {
                PhraseStyle::Quoted => write!(f, "\"{}\"", words.join(" ")),
                PhraseStyle::Parenthesized => write!(f, "({})", words.join(" ")),
            },
            Query::And(parts) => join(f, parts, " "),
            Query::Or(parts) => join(f, parts, " OR "),
            Query::Group(inner) => write!(f, "({inner})"),
        }
    }
}

/// Lowercased alphanumeric runs.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

impl Query {
    pub fn matches(&self, text: &str) -> bool {
        self.matches_words(&words(text))
    }

    fn matches_words(&self, hay: &[String]) -> bool {
        match self {
            Query::Term(t) => contains_run(hay, &words(t)),
            Query::Phrase { words: ws, .. } => contains_run(hay, &words(&ws.join(" "))),
            Query::And(parts) => parts.iter().all(|p| p.matches_words(hay)),
            Query::Or(parts) => parts.iter().any(|p| p.matches_words(hay)),
            Query::Group(inner) => inner.matches_words(hay),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(t: &str) -> Query {
        Query::Term(t.into())
    }

    #[test]
    fn or_of_terms() {
        assert_eq!(parse_keyword_query("tiro OR tiroteio").unwrap(), Query::Or(vec![term("tiro"), term("tiroteio")]));
    }

    #[test]
    fn parenthesized_words_are_a_phrase() {
        let q = parse_keyword_query("(bala voando) OR baleado").unwrap();
        assert_eq!(
            q,
            Query::Or(vec![
                Query::Phrase {
                    words: vec!["bala".into(), "voando".into()],
                    style: PhraseStyle::Parenthesized
                },
                term("baleado"),
            ])
        );
    }

    #[test]
    fn monitored_query_round_trips_and_matches() {
        let src = "(bala voando) OR tiro OR tiroteio OR baleado";
        let q = parse_keyword_query(src).unwrap();
        assert_eq!(q.to_string(), src);
        assert!(q.matches("Muita BALA VOANDO aqui agora"));
        assert!(q.matches("ouvi tiros? não, foi tiro mesmo"));
        assert!(!q.matches("a bala acabou, voando pra casa"));
        assert!(!q.matches("tirou foto"));
    }

    #[test]
    fn adjacency_is_and_and_binds_tighter_than_or() {
        let q = parse_keyword_query("policia tiro OR baleado").unwrap();
        assert_eq!(q, Query::Or(vec![Query::And(vec![term("policia"), term("tiro")]), term("baleado")]));
        assert!(q.matches("tiro perto da policia"));
        assert!(!q.matches("tiro"));
    }

    #[test]
    fn groups_and_quotes_round_trip() {
        for src in ["(tiro OR disparo) \"zona norte\"", "a (b OR (c d)) OR \"e\"", "(x)"] {
            let q = parse_keyword_query(src).unwrap();
            assert_eq!(q.to_string(), src);
        }
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse_keyword_query("((").unwrap_err();
        assert_eq!(e.position, 2);
        assert_eq!(parse_keyword_query("tiro)").unwrap_err().position, 4);
        assert_eq!(parse_keyword_query("(tiro").unwrap_err().position, 5);
        assert_eq!(parse_keyword_query("tiro OR").unwrap_err().position, 7);
        assert_eq!(parse_keyword_query("OR tiro").unwrap_err().position, 0);
        assert_eq!(parse_keyword_query("a () b").unwrap_err().position, 3);
        assert_eq!(parse_keyword_query("\"bala").unwrap_err().position, 5);
        assert_eq!(parse_keyword_query("   ").unwrap_err().position, 0);
        // offsets count characters, not bytes
        assert_eq!(parse_keyword_query("ação)").unwrap_err().position, 4);
    }
}
