//! ISBN parsing, validation, and conversion. ISBNs are the join key against
//! the bibliographic sources, so malformed values downgrade a record to the
//! "no ISBN" path instead of failing the pipeline.

use thiserror::Error;

use crate::record::BookRecord;

/// A validated ISBN, canonicalized to 13 digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Isbn {
    canonical13: String,
    original: String,
}

impl Isbn {
    /// The 13-digit canonical form (starts with 978 or 979, passes the
    /// mod-10 weighted check).
    pub fn canonical13(&self) -> &str {
        &self.canonical13
    }

    pub fn original(&self) -> &str {
        &self.original
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsbnError {
    #[error("ISBN has invalid format: {0}")]
    Format(String),
    #[error("ISBN fails its checksum: {0}")]
    Checksum(String),
}

fn digits10(s: &str) -> Option<Vec<u32>> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() != 10 {
        return None;
    }
    let mut out = Vec::with_capacity(10);
    for (i, c) in chars.iter().enumerate() {
        match c.to_digit(10) {
            Some(d) => out.push(d),
            None if i == 9 && (*c == 'X' || *c == 'x') => out.push(10),
            None => return None,
        }
    }
    Some(out)
}

/// ISBN-10 check: sum of (10-i) * digit over all ten positions, mod 11 == 0.
fn isbn10_checksum_ok(digits: &[u32]) -> bool {
    let sum: u32 = digits.iter().enumerate().map(|(i, &d)| (10 - i as u32) * d).sum();
    sum % 11 == 0
}

/// ISBN-13 check: digits weighted 1,3,1,3,... must sum to 0 mod 10.
fn isbn13_checksum_ok(digits: &[u32]) -> bool {
    let sum: u32 = digits
        .iter()
        .enumerate()
        .map(|(i, &d)| d * if i % 2 == 0 { 1 } else { 3 })
        .sum();
    sum % 10 == 0
}

fn isbn13_check_digit(first12: &[u32]) -> u32 {
    let sum: u32 = first12
        .iter()
        .enumerate()
        .map(|(i, &d)| d * if i % 2 == 0 { 1 } else { 3 })
        .sum();
    (10 - sum % 10) % 10
}

fn isbn10_check_digit(first9: &[u32]) -> u32 {
    let sum: u32 = first9.iter().enumerate().map(|(i, &d)| (10 - i as u32) * d).sum();
    (11 - sum % 11) % 11
}

/// Parse an ISBN in 10- or 13-digit form (hyphens and spaces allowed).
/// 10-digit inputs are converted to the 13-digit "978" form.
pub fn parse(text: &str) -> Result<Isbn, IsbnError> {
    let stripped: String = text.chars().filter(|c| *c != '-' && *c != ' ').collect();
    match stripped.chars().count() {
        10 => {
            let digits = digits10(&stripped)
                .ok_or_else(|| IsbnError::Format(format!("non-digit in {text:?}")))?;
            if !isbn10_checksum_ok(&digits) {
                return Err(IsbnError::Checksum(text.to_string()));
            }
            let mut d13: Vec<u32> = vec![9, 7, 8];
            d13.extend_from_slice(&digits[..9]);
            d13.push(isbn13_check_digit(&d13));
            let canonical13: String =
                d13.iter().map(|d| char::from_digit(*d, 10).unwrap()).collect();
            Ok(Isbn { canonical13, original: text.to_string() })
        }
        13 => {
            if !stripped.chars().all(|c| c.is_ascii_digit()) {
                return Err(IsbnError::Format(format!("non-digit in {text:?}")));
            }
            if !(stripped.starts_with("978") || stripped.starts_with("979")) {
                return Err(IsbnError::Format(format!(
                    "13-digit ISBN must start with 978 or 979: {text:?}"
                )));
            }
            let digits: Vec<u32> = stripped.chars().map(|c| c.to_digit(10).unwrap()).collect();
            if !isbn13_checksum_ok(&digits) {
                return Err(IsbnError::Checksum(text.to_string()));
            }
            Ok(Isbn { canonical13: stripped, original: text.to_string() })
        }
        n => Err(IsbnError::Format(format!("expected 10 or 13 digits, got {n} in {text:?}"))),
    }
}

/// Convert back to the 10-digit form. Defined only for "978" ISBNs;
/// "979" ISBNs have no 10-digit equivalent.
pub fn to_isbn10(isbn: &Isbn) -> Option<String> {
    let c13 = isbn.canonical13();
    if !c13.starts_with("978") {
        return None;
    }
    let first9: Vec<u32> = c13[3..12].chars().map(|c| c.to_digit(10).unwrap()).collect();
    let check = isbn10_check_digit(&first9);
    let mut out: String = c13[3..12].to_string();
    out.push(if check == 10 { 'X' } else { char::from_digit(check, 10).unwrap() });
    Some(out)
}

/// True iff the record carries a parseable ISBN. Malformed values are
/// reported as a diagnostic and treated as absent.
pub fn is_present(record: &BookRecord) -> bool {
    match &record.isbn {
        None => false,
        Some(raw) => match parse(raw) {
            Ok(_) => true,
            Err(e) => {
                log::warn!("record {:?}: invalid ISBN ignored: {e}", record.title);
                false
            }
        },
    }
}

/// Parse the record's ISBN if present and valid.
pub fn of_record(record: &BookRecord) -> Option<Isbn> {
    record.isbn.as_deref().and_then(|raw| parse(raw).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_isbn10_and_converts() {
        let isbn = parse("0-306-40615-2").unwrap();
        assert_eq!(isbn.canonical13(), "9780306406157");
        assert_eq!(isbn.original(), "0-306-40615-2");
    }

    #[test]
    fn accepts_valid_isbn13_unchanged() {
        let isbn = parse("9780306406157").unwrap();
        assert_eq!(isbn.canonical13(), "9780306406157");
    }

    #[test]
    fn rejects_bad_checksums_distinctly() {
        // mod-11 oracle: check digit of 030640615 must be 2
        assert!(matches!(parse("0306406153"), Err(IsbnError::Checksum(_))));
        assert!(matches!(parse("9780306406158"), Err(IsbnError::Checksum(_))));
        assert!(matches!(parse("12345"), Err(IsbnError::Format(_))));
        assert!(matches!(parse("030640615X2"), Err(IsbnError::Format(_))));
        assert!(matches!(parse("1234567890123"), Err(IsbnError::Format(_))));
    }

    #[test]
    fn x_check_digit_is_accepted() {
        // 097522980X is the canonical X-final example
        let isbn = parse("097522980X").unwrap();
        assert_eq!(isbn.canonical13(), "9780975229804");
        assert_eq!(to_isbn10(&isbn).unwrap(), "097522980X");
    }

    #[test]
    fn to_isbn10_roundtrip_and_979() {
        let isbn = parse("9780306406157").unwrap();
        assert_eq!(to_isbn10(&isbn).unwrap(), "0306406152");
        let isbn979 = parse("9791234567896").unwrap();
        assert_eq!(to_isbn10(&isbn979), None);
    }

    #[test]
    fn is_present_cases() {
        let mut rec = BookRecord::new(None, "Gatsby", "F. Scott Fitzgerald").unwrap();
        assert!(!is_present(&rec));
        rec.isbn = Some("9780306406157".into());
        assert!(is_present(&rec));
        rec.isbn = Some("garbage".into());
        assert!(!is_present(&rec));
    }

    /// Generate a valid ISBN-10 from 9 random digits via the mod-11 rule.
    pub(crate) fn gen_isbn10(first9: [u32; 9]) -> String {
        let check = isbn10_check_digit(&first9);
        let mut s: String = first9.iter().map(|d| char::from_digit(*d, 10).unwrap()).collect();
        s.push(if check == 10 { 'X' } else { char::from_digit(check, 10).unwrap() });
        s
    }

    proptest! {
        #[test]
        fn generated_isbn10_parses_and_roundtrips(first9 in proptest::array::uniform9(0u32..10)) {
            let g = gen_isbn10(first9);
            let parsed = parse(&g).unwrap();
            // independent mod-10 oracle on the canonical form
            let digits: Vec<u32> =
                parsed.canonical13().chars().map(|c| c.to_digit(10).unwrap()).collect();
            let weighted: u32 = digits
                .iter()
                .enumerate()
                .map(|(i, &d)| d * if i % 2 == 0 { 1 } else { 3 })
                .sum();
            prop_assert_eq!(weighted % 10, 0);
            // parse . to_isbn10 is the identity on the 10-digit form
            let back = to_isbn10(&parsed).unwrap();
            prop_assert_eq!(back, g.clone());
            // parse is idempotent on canonical13 strings
            let again = parse(parsed.canonical13()).unwrap();
            prop_assert_eq!(again.canonical13(), parsed.canonical13());
        }
    }
}
