use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

const BUNDLED_TABLE: &str = include_str!("../../data/emoji_table.tsv");

/// Codepoint-sequence to short-name lookup with greedy longest match.
#[derive(Debug, Clone)]
pub struct EmojiTable {
    names: HashMap<Vec<char>, String>,
    starts: HashSet<char>,
    longest: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("emoji table line {line}: {reason}")]
pub struct EmojiTableError {
    pub line: usize,
    pub reason: String,
}

impl EmojiTable {
    /// Parses the `codepoints<TAB>short_name` format. Codepoints are
    /// space-separated hex scalars; blank lines and `#` comments are skipped.
    pub fn parse(source: &str) -> Result<Self, EmojiTableError> {
        let mut names = HashMap::new();
        let mut longest = 0;
        for (idx, raw) in source.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| EmojiTableError {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (cps, name) = line.split_once('\t').ok_or_else(|| err("missing tab"))?;
            let name = name.trim();
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(err("short name must be a single non-empty word"));
            }
            let seq = cps
                .split_whitespace()
                .map(|hex| {
                    u32::from_str_radix(hex, 16)
                        .ok()
                        .and_then(char::from_u32)
                        .ok_or_else(|| err(&format!("bad codepoint {hex:?}")))
                })
                .collect::<Result<Vec<char>, _>>()?;
            if seq.is_empty() {
                return Err(err("empty codepoint sequence"));
            }
            longest = longest.max(seq.len());
            names.insert(seq, name.to_lowercase());
        }
        let starts = names.keys().map(|seq| seq[0]).collect();
        Ok(Self { names, starts, longest })
    }

    /// The table shipped with the crate.
    pub fn bundled() -> &'static EmojiTable {
        static TABLE: OnceLock<EmojiTable> = OnceLock::new();
        TABLE.get_or_init(|| EmojiTable::parse(BUNDLED_TABLE).expect("bundled emoji table is valid"))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn lookup(&self, seq: &[char]) -> Option<&str> {
        self.names.get(seq).map(String::as_str)
    }

    fn longest_match(&self, chars: &[char]) -> Option<(usize, &str)> {
        if !self.starts.contains(chars.first()?) {
            return None;
        }
        let max = self.longest.min(chars.len());
        (1..=max)
            .rev()
            .find_map(|n| self.names.get(&chars[..n]).map(|name| (n, name.as_str())))
    }

    /// Replaces known emoji with `:short_name:` and drops unknown ones.
    ///
    /// A replacement is separated from adjacent non-whitespace text by one
    /// space; a dropped emoji leaves a word boundary behind. Whitespace already
    /// present in the input is left as is.
    pub fn replace(&self, text: &str) -> (String, usize) {
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::with_capacity(text.len());
        let mut count = 0;
        let mut need_space = false;
        let mut i = 0;
        while i < chars.len() {
            if let Some((len, name)) = self.longest_match(&chars[i..]) {
                if out.chars().next_back().is_some_and(|c| !c.is_whitespace()) {
                    out.push(' ');
                }
                out.push(':');
                out.push_str(name);
                out.push(':');
                count += 1;
                need_space = true;
                i += len;
                continue;
            }
            let c = chars[i];
            if is_emoji_like(c) {
                if !is_emoji_modifier(c) {
                    count += 1;
                }
                need_space = true;
                i += 1;
                continue;
            }
            if need_space && !c.is_whitespace() && out.chars().next_back().is_some_and(|c| !c.is_whitespace()) {
                out.push(' ');
            }
            need_space = false;
            out.push(c);
            i += 1;
        }
        (out, count)
    }
}

/// Joiners, selectors, skin tones and tag characters: dropped silently and
/// not counted as emoji on their own.
fn is_emoji_modifier(c: char) -> bool {
    matches!(c as u32,
        0x200D | 0xFE0E | 0xFE0F | 0x20E3
        | 0x1F3FB..=0x1F3FF
        | 0xE0020..=0xE007F)
}

/// Codepoints treated as emoji for the purpose of dropping unknown ones.
pub fn is_emoji_like(c: char) -> bool {
    is_emoji_modifier(c)
        || matches!(c as u32,
            0x2300..=0x23FF
            | 0x2600..=0x27BF
            | 0x2B00..=0x2BFF
            | 0x1F000..=0x1FAFF)
}

/// Rewrites emoji in `text` using the bundled table.
pub fn emoji_to_text(text: &str) -> String {
    EmojiTable::bundled().replace(text).0
}
