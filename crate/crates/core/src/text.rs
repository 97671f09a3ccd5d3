//! Text normalization shared by moderation, interview scoring and metrics.

use unicode_normalization::UnicodeNormalization;

/// Unicode NFC followed by full default case folding.
pub fn fold(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    caseless::default_case_fold_str(&nfc)
}

/// Case-folds, trims, collapses internal whitespace and strips surrounding
/// quotes and punctuation. Used to compare free-text answers.
pub fn canonical(text: &str) -> String {
    let folded = fold(text);
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '。' | '，'))
        .trim()
        .to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_case_and_composes() {
        assert_eq!(fold("Straße"), "strasse");
        // e + combining acute composes to é
        assert_eq!(fold("Cafe\u{301}"), "café");
    }

    #[test]
    fn canonical_strips_noise() {
        assert_eq!(canonical("  \"Parrot.\" "), "parrot");
        assert_eq!(canonical("US   Dollars!"), "us dollars");
        assert_eq!(canonical(""), "");
    }
}
