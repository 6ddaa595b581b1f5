use std::path::Path;

use super::{read_file, DataError, Result};

/// Newline-separated words; blank lines are skipped, words trimmed.
pub fn parse_lexicon(bytes: &[u8], name: &Path) -> Result<Vec<String>> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        DataError::bytes(name, e.valid_up_to() as u64, "lexicon is not valid UTF-8")
    })?;
    let words: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect();
    if words.is_empty() {
        return Err(DataError::invalid(name, "empty lexicon"));
    }
    Ok(words)
}

pub fn read_lexicon(path: &Path) -> Result<Vec<String>> {
    parse_lexicon(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_words() {
        let n = Path::new("lex.txt");
        assert_eq!(parse_lexicon(b"ab\ncd\n", n).unwrap(), vec!["ab", "cd"]);
        assert_eq!(parse_lexicon(b"  ab \r\n\n cd", n).unwrap(), vec!["ab", "cd"]);
        assert!(parse_lexicon(b"\n \n", n).is_err());
        assert!(parse_lexicon(&[0x61, 0xff], n).is_err());
    }
}
