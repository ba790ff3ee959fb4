//! Deterministic rule-based sentence splitting.
//!
//! Splits on `.`, `!`, or `?` (plus any closing quotes/brackets) followed by
//! whitespace and an uppercase letter, digit, or opening quote. A small
//! built-in abbreviation list and, optionally, single-letter initials
//! suppress splits after `.`. Text without terminal punctuation comes back
//! as one sentence.

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "u.s", "u.k",
    "inc", "ltd", "co", "corp", "fig", "al", "jan", "feb", "mar", "apr", "aug", "sep", "sept",
    "oct", "nov", "dec",
];

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '['];

#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    /// Treat a single letter before `.` as an initial ("J. Smith") and do
    /// not split there.
    pub initials_as_abbreviations: bool,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter {
            initials_as_abbreviations: true,
        }
    }
}

impl SentenceSplitter {
    pub fn split(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let mut sentences = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            let c = chars[i];
            if c == '.' || c == '!' || c == '?' {
                // absorb closing quotes/brackets after the terminator
                let mut end = i + 1;
                while end < chars.len() && CLOSERS.contains(&chars[end]) {
                    end += 1;
                }
                if self.is_boundary(&chars, i, end) {
                    push_sentence(&mut sentences, &chars[start..end]);
                    // skip whitespace to the next sentence start
                    let mut next = end;
                    while next < chars.len() && chars[next].is_whitespace() {
                        next += 1;
                    }
                    start = next;
                    i = next;
                    continue;
                }
            }
            i += 1;
        }
        if start < chars.len() {
            push_sentence(&mut sentences, &chars[start..]);
        }
        sentences
    }

    /// Count of sentences, without allocating the pieces.
    pub fn count(&self, text: &str) -> usize {
        self.split(text).len()
    }

    fn is_boundary(&self, chars: &[char], punct: usize, end: usize) -> bool {
        // end of text always terminates a sentence
        if end >= chars.len() {
            return true;
        }
        // require whitespace after the terminator (protects "3.14", "e.g.x")
        if !chars[end].is_whitespace() {
            return false;
        }
        let mut next = end;
        while next < chars.len() && chars[next].is_whitespace() {
            next += 1;
        }
        if next >= chars.len() {
            return true;
        }
        let starter = chars[next];
        if !(starter.is_uppercase() || starter.is_ascii_digit() || OPENERS.contains(&starter)) {
            return false;
        }
        if chars[punct] == '.' {
            let token = preceding_token(chars, punct);
            if self.is_abbreviation(&token) {
                return false;
            }
        }
        true
    }

    fn is_abbreviation(&self, token: &str) -> bool {
        let trimmed = token.trim_end_matches('.');
        if trimmed.is_empty() {
            return false;
        }
        if self.initials_as_abbreviations
            && trimmed.chars().count() == 1
            && trimmed.chars().all(|c| c.is_alphabetic())
        {
            return true;
        }
        let lower = trimmed.to_lowercase();
        ABBREVIATIONS.contains(&lower.as_str())
    }
}

fn preceding_token(chars: &[char], punct: usize) -> String {
    let mut begin = punct;
    while begin > 0 && !chars[begin - 1].is_whitespace() {
        begin -= 1;
    }
    let token: String = chars[begin..punct].iter().collect();
    // strip leading quotes/brackets so `("etc.` still matches the list
    token
        .trim_start_matches(|c: char| OPENERS.contains(&c))
        .to_string()
}

fn push_sentence(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}
