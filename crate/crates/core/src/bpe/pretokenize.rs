//! Splits text into the words that BPE merges never cross.
//!
//! A word is a run of non-space, non-punctuation characters; each punctuation
//! character is its own word. A single U+0020 directly before a word is glued
//! to its front (the leading-space marker), and any other whitespace stays a
//! word of its own. Concatenating the pieces reproduces the input exactly.

/// Punctuation for splitting and answer normalization: ASCII punctuation,
/// Latin-1 and general punctuation, and Arabic-script marks.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{00A1}' | '\u{00A7}' | '\u{00AB}' | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
            | '\u{2010}'..='\u{2027}'
            | '\u{2030}'..='\u{205E}'
            | '\u{3001}'..='\u{3003}'
            | '\u{060C}' | '\u{060D}' | '\u{061B}' | '\u{061E}' | '\u{061F}'
            | '\u{066A}'..='\u{066D}'
            | '\u{06D4}'
        )
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Space,
    Punct,
    Word,
}

fn class(c: char) -> Class {
    if c.is_whitespace() {
        Class::Space
    } else if is_punctuation(c) {
        Class::Punct
    } else {
        Class::Word
    }
}

/// Words with their byte offsets into `text`.
pub fn pretokenize_with_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut pieces = Vec::new();
    let mut chars = text.char_indices().peekable();
    // Start of a pending leading-space marker, if the previous char was a ' '
    // that should glue onto the next word.
    let mut glued: Option<usize> = None;

    while let Some((start, c)) = chars.next() {
        match class(c) {
            Class::Space => {
                let mut end = start + c.len_utf8();
                let mut last = c;
                let mut last_start = start;
                while let Some(&(i, n)) = chars.peek() {
                    if class(n) != Class::Space {
                        break;
                    }
                    last = n;
                    last_start = i;
                    end = i + n.len_utf8();
                    chars.next();
                }
                if last == ' ' && chars.peek().is_some() {
                    if last_start > start {
                        pieces.push((start, &text[start..last_start]));
                    }
                    glued = Some(last_start);
                } else {
                    pieces.push((start, &text[start..end]));
                }
            }
            Class::Punct => {
                let from = glued.take().unwrap_or(start);
                pieces.push((from, &text[from..start + c.len_utf8()]));
            }
            Class::Word => {
                let from = glued.take().unwrap_or(start);
                let mut end = start + c.len_utf8();
                while let Some(&(i, n)) = chars.peek() {
                    if class(n) != Class::Word {
                        break;
                    }
                    end = i + n.len_utf8();
                    chars.next();
                }
                pieces.push((from, &text[from..end]));
            }
        }
    }
    pieces
}

pub fn pretokenize(text: &str) -> Vec<&str> {
    pretokenize_with_offsets(text).into_iter().map(|(_, w)| w).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_words() {
        assert_eq!(pretokenize("سلام دنیا"), ["سلام", " دنیا"]);
    }

    #[test]
    fn empty() {
        assert!(pretokenize("").is_empty());
    }

    #[test]
    fn punctuation_splits() {
        assert_eq!(pretokenize("خوب!"), ["خوب", "!"]);
        assert_eq!(pretokenize("a ,b"), ["a", " ,", "b"]);
    }

    #[test]
    fn irregular_whitespace_is_kept() {
        assert_eq!(pretokenize("a  b"), ["a", " ", " b"]);
        assert_eq!(pretokenize("a\nb"), ["a", "\n", "b"]);
        assert_eq!(pretokenize(" a "), [" a", " "]);
        assert_eq!(pretokenize("a\n b"), ["a", "\n", " b"]);
    }

    #[test]
    fn zwnj_stays_inside_words() {
        assert_eq!(pretokenize("می\u{200C}روم"), ["می\u{200C}روم"]);
    }

    // Expected splits produced by an independent regex implementation of the
    // rule (whitespace runs, single-char punctuation, glued leading space).
    #[test]
    fn sentence_fixture() {
        let cases: [(&str, &[&str]); 20] = [
            ("سلام دنیا", &["سلام", " دنیا"]),
            ("خوب!", &["خوب", "!"]),
            ("امروز هوا خیلی خوب است.", &["امروز", " هوا", " خیلی", " خوب", " است", "."]),
            ("آیا شما آمدید؟", &["آیا", " شما", " آمدید", "؟"]),
            ("من، تو و او", &["من", "،", " تو", " و", " او"]),
            ("«کتاب» را بخوان", &["«", "کتاب", "»", " را", " بخوان"]),
            ("قیمت ۲۵٫۵ تومان است", &["قیمت", " ۲۵", "٫", "۵", " تومان", " است"]),
            ("می\u{200C}خواهم بروم", &["می\u{200C}خواهم", " بروم"]),
            ("او گفت: «نه»", &["او", " گفت", ":", " «", "نه", "»"]),
            ("سه نقطه...", &["سه", " نقطه", ".", ".", "."]),
            ("(پرانتز)", &["(", "پرانتز", ")"]),
            ("خط اول\nخط دوم", &["خط", " اول", "\n", "خط", " دوم"]),
            ("  فاصله", &[" ", " فاصله"]),
            ("پایان ", &["پایان", " "]),
            ("ایمیل: a@b.com", &["ایمیل", ":", " a", "@", "b", ".", "com"]),
            ("۱۰۰٪ درست", &["۱۰۰", "٪", " درست"]),
            ("کلمه؛ کلمه", &["کلمه", "؛", " کلمه"]),
            ("Hello, world!", &["Hello", ",", " world", "!"]),
            ("تست\t\tتب", &["تست", "\t\t", "تب"]),
            ("— خط تیره", &["—", " خط", " تیره"]),
        ];
        for (text, expected) in cases {
            assert_eq!(pretokenize(text), expected, "{text:?}");
        }
    }

    proptest! {
        #[test]
        fn lossless(s in "\\PC{0,60}|[ \\n\\ta-c!،؟ب]{0,30}") {
            let pieces = pretokenize_with_offsets(&s);
            prop_assert_eq!(pieces.iter().map(|(_, w)| *w).collect::<String>(), s.clone());
            let mut at = 0;
            for (off, w) in &pieces {
                prop_assert_eq!(*off, at);
                prop_assert!(!w.is_empty());
                at += w.len();
            }
        }
    }
}
