use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Lowercase, decompose, drop combining marks, collapse whitespace.
pub fn fold(text: &str) -> String {
    let stripped: String = text.nfd().filter(|c| !is_combining_mark(*c)).collect::<String>().to_lowercase();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionAlias {
    pub pattern: String,
    pub region: String,
}

impl RegionAlias {
    pub fn new(pattern: impl Into<String>, region: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            region: region.into(),
        }
    }
}

/// Ordered alias patterns; the first pattern found in the location text
/// wins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AliasTable {
    aliases: Vec<RegionAlias>,
}

#[derive(Debug, thiserror::Error)]
pub enum AliasTableError {
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path} line {line}: empty pattern")]
    EmptyPattern { path: String, line: usize },
}

impl AliasTable {
    pub fn new(aliases: Vec<RegionAlias>) -> Self {
        Self { aliases }
    }

    pub fn aliases(&self) -> &[RegionAlias] {
        &self.aliases
    }

    pub fn len(&self) -> usize {
        self.aliases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aliases.is_empty()
    }

    /// Reads a headered `pattern,region` CSV file.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, AliasTableError> {
        let path = path.as_ref();
        let p = path.display().to_string();
        let mut reader = csv::Reader::from_path(path).map_err(|source| AliasTableError::Csv { path: p.clone(), source })?;
        let mut aliases = Vec::new();
        for (i, row) in reader.deserialize::<RegionAlias>().enumerate() {
            let alias = row.map_err(|source| AliasTableError::Csv { path: p.clone(), source })?;
            if fold(&alias.pattern).is_empty() {
                return Err(AliasTableError::EmptyPattern { path: p, line: i + 2 });
            }
            aliases.push(alias);
        }
        Ok(Self { aliases })
    }

    pub fn match_region(&self, location_text: Option<&str>) -> Option<&str> {
        let text = fold(location_text?);
        if text.is_empty() {
            return None;
        }
        self.aliases.iter().find(|a| text.contains(&fold(&a.pattern))).map(|a| a.region.as_str())
    }
}

pub fn match_region<'a>(location_text: Option<&str>, aliases: &'a AliasTable) -> Option<&'a str> {
    aliases.match_region(location_text)
}
