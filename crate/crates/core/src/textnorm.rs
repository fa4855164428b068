//! Name normalization, tokenization, character encoding, and the classical
//! string metrics used both as matching primitives and as baselines.

use std::collections::HashMap;

use thiserror::Error;

/// Fixed model sequence length; shorter names are padded, longer truncated.
pub const SEQ_LEN: usize = 32;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;

/// Surface form of the UNK symbol in normalized text.
pub const UNK_CHAR: char = '?';

/// The model alphabet: PAD, UNK, start/end-of-sequence, 'a'-'z', '0'-'9',
/// space, period, hyphen, apostrophe, comma. Index order is frozen; it
/// defines the character ids used by every serialized model. Control
/// symbols use surface stand-ins that [`normalize`] never emits except for
/// [`UNK_CHAR`].
pub fn alphabet() -> &'static [char] {
    use std::sync::OnceLock;
    static CELL: OnceLock<Vec<char>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut v = vec!['\u{0}', UNK_CHAR, '\u{2}', '\u{3}'];
        v.extend('a'..='z');
        v.extend('0'..='9');
        v.extend([' ', '.', '-', '\'', ',']);
        v
    })
}

/// Vocabulary size (alphabet length).
pub fn vocab_size() -> usize {
    alphabet().len()
}

/// Map a character to its alphabet id, if it is in the alphabet.
pub fn char_id(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(4 + (c as usize - 'a' as usize)),
        '0'..='9' => Some(30 + (c as usize - '0' as usize)),
        ' ' => Some(40),
        '.' => Some(41),
        '-' => Some(42),
        '\'' => Some(43),
        ',' => Some(44),
        UNK_CHAR => Some(UNK),
        _ => None,
    }
}

/// Inverse of [`char_id`] for printable symbols; control ids yield None.
pub fn id_char(id: usize) -> Option<char> {
    let a = alphabet();
    if id < a.len() && id != PAD && id != SOS && id != EOS {
        Some(a[id])
    } else {
        None
    }
}

/// A name after normalization: lowercase, ASCII-folded, whitespace-collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NormalizedName {
    text: String,
    original: String,
}

impl NormalizedName {
    /// Wrap a string that is already normalized (e.g. a stored entity
    /// variant), skipping re-normalization.
    pub fn from_normalized(text: &str) -> NormalizedName {
        debug_assert_eq!(normalize(text).text(), text, "input was not normalized");
        NormalizedName { text: text.to_string(), original: text.to_string() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn original(&self) -> &str {
        &self.original
    }
}

/// A fixed-length character-id sequence (length [`SEQ_LEN`], PAD-suffixed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharSequence {
    pub ids: [usize; SEQ_LEN],
}

impl CharSequence {
    /// Number of non-PAD leading positions.
    pub fn len(&self) -> usize {
        self.ids.iter().take_while(|&&id| id != PAD).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed latin-1 (plus common latin-extended) to ASCII folding table,
/// applied after lowercasing.
fn fold_char(c: char) -> Option<&'static str> {
    let s = match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' | 'ā' | 'ă' | 'ą' => "a",
        'æ' => "ae",
        'ç' | 'ć' | 'ĉ' | 'ċ' | 'č' => "c",
        'ď' | 'đ' | 'ð' => "d",
        'è' | 'é' | 'ê' | 'ë' | 'ē' | 'ĕ' | 'ė' | 'ę' | 'ě' => "e",
        'ĝ' | 'ğ' | 'ġ' | 'ģ' => "g",
        'ĥ' | 'ħ' => "h",
        'ì' | 'í' | 'î' | 'ï' | 'ĩ' | 'ī' | 'ĭ' | 'į' | 'ı' => "i",
        'ĵ' => "j",
        'ķ' => "k",
        'ĺ' | 'ļ' | 'ľ' | 'ŀ' | 'ł' => "l",
        'ñ' | 'ń' | 'ņ' | 'ň' => "n",
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' | 'ō' | 'ŏ' | 'ő' => "o",
        'œ' => "oe",
        'ŕ' | 'ŗ' | 'ř' => "r",
        'ś' | 'ŝ' | 'ş' | 'š' => "s",
        'ß' => "ss",
        'ţ' | 'ť' | 'ŧ' => "t",
        'þ' => "th",
        'ù' | 'ú' | 'û' | 'ü' | 'ũ' | 'ū' | 'ŭ' | 'ů' | 'ű' | 'ų' => "u",
        'ŵ' => "w",
        'ý' | 'ÿ' | 'ŷ' => "y",
        'ź' | 'ż' | 'ž' => "z",
        _ => return None,
    };
    Some(s)
}

/// Normalize a raw name to the model alphabet: lowercase, fold diacritics,
/// replace remaining out-of-alphabet characters by [`UNK_CHAR`], collapse
/// whitespace. Total and idempotent.
pub fn normalize(name: &str) -> NormalizedName {
    let mut out = String::with_capacity(name.len());
    for c in name.chars().flat_map(|c| c.to_lowercase()) {
        if c.is_whitespace() {
            out.push(' ');
        } else if char_id(c).is_some() {
            out.push(c);
        } else if let Some(folded) = fold_char(c) {
            out.push_str(folded);
        } else {
            out.push(UNK_CHAR);
        }
    }
    let collapsed: Vec<&str> = out.split_whitespace().collect();
    NormalizedName {
        text: collapsed.join(" "),
        original: name.to_string(),
    }
}

/// Split a normalized name into tokens: whitespace-separated, trailing
/// periods and commas stripped, punctuation-only tokens dropped.
pub fn tokenize(name: &NormalizedName) -> Vec<String> {
    name.text()
        .split_whitespace()
        .filter_map(|tok| {
            let tok = tok.trim_end_matches(['.', ',']);
            if tok.is_empty() || tok.chars().all(|c| !c.is_alphanumeric() && c != UNK_CHAR) {
                None
            } else {
                Some(tok.to_string())
            }
        })
        .collect()
}

/// Encode a normalized name as a fixed-length id sequence: first
/// [`SEQ_LEN`] characters mapped to ids, PAD-suffixed.
pub fn encode(name: &NormalizedName) -> CharSequence {
    let mut ids = [PAD; SEQ_LEN];
    for (i, c) in name.text().chars().take(SEQ_LEN).enumerate() {
        ids[i] = char_id(c).unwrap_or(UNK);
    }
    CharSequence { ids }
}

/// Minimal number of single-character insertions, deletions, and
/// substitutions transforming `a` into `b`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextNormError {
    #[error("n-gram size must be at least 1, got {0}")]
    InvalidNgramSize(usize),
}

fn gram_multiset(s: &str, n: usize) -> HashMap<Vec<char>, usize> {
    let mut padded: Vec<char> = Vec::with_capacity(s.chars().count() + 2 * (n - 1));
    // boundary padding with a sentinel outside the model alphabet
    padded.extend(std::iter::repeat_n('\u{0}', n - 1));
    padded.extend(s.chars());
    padded.extend(std::iter::repeat_n('\u{0}', n - 1));
    let mut grams = HashMap::new();
    if padded.len() >= n {
        for w in padded.windows(n) {
            *grams.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    grams
}

/// Boundary-padded n-gram distance in [0,1]:
/// `1 - shared / max(|grams(a)|, |grams(b)|)` over gram multisets.
pub fn ngram_distance(a: &str, b: &str, n: usize) -> Result<f64, TextNormError> {
    if n < 1 {
        return Err(TextNormError::InvalidNgramSize(n));
    }
    let ga = gram_multiset(a, n);
    let gb = gram_multiset(b, n);
    let total_a: usize = ga.values().sum();
    let total_b: usize = gb.values().sum();
    let denom = total_a.max(total_b);
    if denom == 0 {
        return Ok(0.0);
    }
    let shared: usize = ga
        .iter()
        .map(|(g, &ca)| ca.min(gb.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(1.0 - shared as f64 / denom as f64)
}

/// True iff some token of `a` is within Levenshtein distance < 2 of some
/// token of `b`.
pub fn fuzzy_token_match(a: &NormalizedName, b: &NormalizedName) -> bool {
    let ta = tokenize(a);
    let tb = tokenize(b);
    ta.iter()
        .any(|x| tb.iter().any(|y| levenshtein(x, y) < 2))
}
