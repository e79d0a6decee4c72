//! Word-level tokenization.
//!
//! Text is lowercased, split on whitespace, and punctuation characters become
//! their own tokens. Contractions are split Penn-Treebank style (`they're` →
//! `they` `'re`, `doesn't` → `does` `n't`) so the tagger sees the pronoun and
//! the verb separately. Any token that contains a digit collapses to [`NUM`].

/// Placeholder token that replaces every number.
pub const NUM: &str = "NUM";

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

const CLITICS: [&str; 6] = ["'s", "'re", "'ve", "'ll", "'d", "'m"];

fn push_word(tokens: &mut Vec<String>, word: &str) {
    if word.len() > 3 && word.ends_with("n't") {
        tokens.push(word[..word.len() - 3].to_string());
        tokens.push("n't".to_string());
        return;
    }
    for clitic in CLITICS {
        if word.len() > clitic.len() && word.ends_with(clitic) {
            tokens.push(word[..word.len() - clitic.len()].to_string());
            tokens.push(clitic.to_string());
            return;
        }
    }
    tokens.push(word.to_string());
}

pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if is_word_char(c) {
            let start = i;
            while i < chars.len() {
                let ch = chars[i];
                // 3.5 and 1,200 stay a single number token.
                let numeric_sep = (ch == '.' || ch == ',')
                    && i > start
                    && chars[i - 1].is_ascii_digit()
                    && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
                if is_word_char(ch) || numeric_sep {
                    i += 1;
                } else {
                    break;
                }
            }
            let word: String = chars[start..i].iter().collect();
            let word = word.trim_matches('\'');
            if word.is_empty() {
                tokens.push("'".to_string());
            } else if word.chars().any(|ch| ch.is_ascii_digit()) {
                tokens.push(NUM.to_string());
            } else {
                push_word(&mut tokens, word);
            }
        } else {
            tokens.push(c.to_string());
            i += 1;
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn lowercases_and_splits_punctuation() {
        assert_eq!(toks("It was GREAT!"), ["it", "was", "great", "!"]);
    }

    #[test]
    fn numbers_collapse() {
        assert_eq!(toks("we stayed 3 nights"), ["we", "stayed", "NUM", "nights"]);
        assert_eq!(toks("paid 3.50 for 2nd"), ["paid", "NUM", "for", "NUM"]);
        assert_eq!(toks("1,200 people."), ["NUM", "people", "."]);
    }

    #[test]
    fn empty_input() {
        assert!(toks("").is_empty());
        assert!(toks("   \n\t").is_empty());
    }

    #[test]
    fn contractions_split() {
        assert_eq!(
            toks("they're friendly, it's fine"),
            ["they", "'re", "friendly", ",", "it", "'s", "fine"]
        );
        assert_eq!(toks("doesn't"), ["does", "n't"]);
        assert_eq!(toks("I've"), ["i", "'ve"]);
        assert_eq!(toks("'quoted'"), ["quoted"]);
    }

    #[test]
    fn deterministic() {
        let s = "The food... was ok?? 10/10";
        assert_eq!(toks(s), toks(s));
        assert_eq!(toks(s), ["the", "food", ".", ".", ".", "was", "ok", "?", "?", "NUM", "/", "NUM"]);
    }
}
