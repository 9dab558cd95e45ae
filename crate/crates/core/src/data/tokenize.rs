/// Lowercase a post body and split it into word and punctuation tokens.
/// Punctuation runs are split into standalone single-character tokens so
/// "world!" becomes ["world", "!"]. Deterministic and idempotent: joining
/// the output with spaces and re-tokenizing reproduces it.
pub fn tokenize(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in body.to_lowercase().chars() {
        if ch.is_whitespace() {
            flush(&mut word, &mut out);
        } else if ch.is_alphanumeric() || ch == '\'' {
            word.push(ch);
        } else {
            flush(&mut word, &mut out);
            out.push(ch.to_string());
        }
    }
    flush(&mut word, &mut out);
    out
}

fn flush(word: &mut String, out: &mut Vec<String>) {
    if !word.is_empty() {
        out.push(std::mem::take(word));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separates_punctuation() {
        assert_eq!(tokenize("Hello, world!"), vec!["hello", ",", "world", "!"]);
    }

    #[test]
    fn empty_and_whitespace_only() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t\n ").is_empty());
    }

    #[test]
    fn keeps_contractions_together() {
        assert_eq!(tokenize("don't stop"), vec!["don't", "stop"]);
    }

    #[test]
    fn numbers_and_mixed_runs() {
        assert_eq!(tokenize("2x4=8?!"), vec!["2x4", "=", "8", "?", "!"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_rejoined_output(s in ".{0,60}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_never_contain_whitespace(s in ".{0,60}") {
            for t in tokenize(&s) {
                prop_assert!(!t.chars().any(char::is_whitespace));
                prop_assert!(!t.is_empty());
            }
        }
    }
}
