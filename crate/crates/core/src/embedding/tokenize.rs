use unicode_segmentation::UnicodeSegmentation;

/// Unicode word segmentation, lowercased. Punctuation is dropped; no
/// stop-word removal or stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_rule() {
        assert_eq!(tokenize("Self-healing TiO2 films"), vec!["self", "healing", "tio2", "films"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("The, the; THE!"), vec!["the", "the", "the"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(s in "[a-zA-Z0-9 ,.;:!?()\\-'éßøΩ]{0,80}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
