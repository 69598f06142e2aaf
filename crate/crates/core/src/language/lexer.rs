//! Splits program text into words.
//!
//! Words are whitespace separated, except that `,`, `(`, `)` and `:` are
//! words of their own. A colon between digits stays inside the word so that
//! times of day such as `23:00` survive as one literal.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Word<'a> {
    pub text: &'a str,
    /// Byte offset of the word in the source text.
    pub start: usize,
}

pub fn words(text: &str) -> Vec<Word<'_>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = text[i..].chars().next().expect("in bounds");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if matches!(c, ',' | '(' | ')' | ':') {
            out.push(Word { text: &text[i..i + 1], start: i });
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() {
            let c = text[i..].chars().next().expect("in bounds");
            if c.is_whitespace() || matches!(c, ',' | '(' | ')') {
                break;
            }
            if c == ':' {
                let head = &text[start..i];
                let time_like = !head.is_empty()
                    && head.len() <= 2
                    && head.bytes().all(|b| b.is_ascii_digit())
                    && bytes.get(i + 1).is_some_and(u8::is_ascii_digit);
                if !time_like {
                    break;
                }
            }
            i += c.len_utf8();
        }
        out.push(Word { text: &text[start..i], start });
    }
    out
}
