/// Characters emitted as standalone tokens. Apostrophes, hyphens and angle
/// brackets stay inside words so pre-tokenized text such as `do n't` or
/// `<person>` survives a second pass unchanged.
const PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')', '[', ']', '{', '}', '…'];

/// Lowercases, splits on whitespace and separates punctuation.
pub fn tokenize(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in raw.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if PUNCT.contains(&ch) {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            } else {
                word.extend(ch.to_lowercase());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(tokenize("Thanks."), vec!["thanks", "."]);
        assert_eq!(tokenize("Can you help?"), vec!["can", "you", "help", "?"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t ").is_empty());
    }

    #[test]
    fn pre_tokenized_rows_round_trip() {
        for row in [
            "you 're sweet to say so .",
            "well , thanks . that 's . i appreciate that .",
            "thank you , ma'am . um , may i ask what this is regarding ?",
            "hi , <person> . how are you ?",
        ] {
            assert_eq!(detokenize(&tokenize(row)), row);
        }
        assert_eq!(
            detokenize(&tokenize("you're sweet to say so .")),
            "you're sweet to say so ."
        );
    }
}
