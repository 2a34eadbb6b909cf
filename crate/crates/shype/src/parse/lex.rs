//! Tokenizer for the six-section modeling language.
//!
//! Input is UTF-8; identifiers are ASCII alphanumerics plus underscore.
//! `//` comments run to end of line. Every token carries a line/column span
//! for diagnostics.

use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(f64),
    /// A `#section` header with the name after the hash.
    Section(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Plus,
    Minus,
    Star,
    Slash,
    Bang,
    Assign,    // =
    Define,    // :=
    MapsTo,    // :->
    Colon,     // :
    At,        // @
    SyncAll,   // <*>
    ParOr,     // || (interleaving in process position, disjunction in expressions)
    AndAnd,    // &&
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{}`", s),
            Tok::Num(x) => write!(f, "number `{}`", x),
            Tok::Section(s) => write!(f, "section `#{}`", s),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Assign => write!(f, "`=`"),
            Tok::Define => write!(f, "`:=`"),
            Tok::MapsTo => write!(f, "`:->`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::At => write!(f, "`@`"),
            Tok::SyncAll => write!(f, "`<*>`"),
            Tok::ParOr => write!(f, "`||`"),
            Tok::AndAnd => write!(f, "`&&`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::EqEq => write!(f, "`==`"),
            Tok::Ne => write!(f, "`!=`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(input: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let bytes = input.as_bytes();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! push {
        ($tok:expr, $len:expr) => {{
            tokens.push(Token {
                tok: $tok,
                span: Span { line, col },
            });
            i += $len;
            col += $len;
        }};
    }

    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            b' ' | b'\t' | b'\r' => {
                i += 1;
                col += 1;
            }
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'#' => {
                let start = i + 1;
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                if end == start {
                    return Err(ParseError::new(
                        Span { line, col },
                        "expected a section name after `#`".to_string(),
                    ));
                }
                let name = input[start..end].to_string();
                let len = end - i;
                push!(Tok::Section(name), len);
            }
            b'(' => push!(Tok::LParen, 1),
            b')' => push!(Tok::RParen, 1),
            b'[' => push!(Tok::LBracket, 1),
            b']' => push!(Tok::RBracket, 1),
            b',' => push!(Tok::Comma, 1),
            b';' => push!(Tok::Semi, 1),
            b'.' => push!(Tok::Dot, 1),
            b'+' => push!(Tok::Plus, 1),
            b'-' => push!(Tok::Minus, 1),
            b'*' => push!(Tok::Star, 1),
            b'/' => push!(Tok::Slash, 1),
            b'@' => push!(Tok::At, 1),
            b'&' if i + 1 < bytes.len() && bytes[i + 1] == b'&' => push!(Tok::AndAnd, 2),
            b'|' if i + 1 < bytes.len() && bytes[i + 1] == b'|' => push!(Tok::ParOr, 2),
            b'<' if input[i..].starts_with("<*>") => push!(Tok::SyncAll, 3),
            b'<' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => push!(Tok::Le, 2),
            b'<' => push!(Tok::Lt, 1),
            b'>' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => push!(Tok::Ge, 2),
            b'>' => push!(Tok::Gt, 1),
            b'=' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => push!(Tok::EqEq, 2),
            b'=' => push!(Tok::Assign, 1),
            b'!' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => push!(Tok::Ne, 2),
            b'!' => push!(Tok::Bang, 1),
            b':' if input[i..].starts_with(":->") => push!(Tok::MapsTo, 3),
            b':' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => push!(Tok::Define, 2),
            b':' => push!(Tok::Colon, 1),
            b'0'..=b'9' => {
                let start = i;
                let mut end = i;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
                if end < bytes.len() && bytes[end] == b'.' && end + 1 < bytes.len()
                    && bytes[end + 1].is_ascii_digit()
                {
                    end += 1;
                    while end < bytes.len() && bytes[end].is_ascii_digit() {
                        end += 1;
                    }
                }
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut j = end + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        end = j;
                        while end < bytes.len() && bytes[end].is_ascii_digit() {
                            end += 1;
                        }
                    }
                }
                let text = &input[start..end];
                let value: f64 = text.parse().map_err(|_| {
                    ParseError::new(Span { line, col }, format!("bad number `{}`", text))
                })?;
                let len = end - start;
                push!(Tok::Num(value), len);
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                let mut end = i;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                let name = input[start..end].to_string();
                let len = end - start;
                push!(Tok::Ident(name), len);
            }
            _ => {
                return Err(ParseError::new(
                    Span { line, col },
                    format!("unexpected character `{}`", input[i..].chars().next().unwrap()),
                ));
            }
        }
    }

    tokens.push(Token {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_mapping_line() {
        let toks = tokenize("infl in :-> B;").unwrap();
        let kinds: Vec<&Tok> = toks.iter().map(|t| &t.tok).collect();
        assert!(matches!(kinds[0], Tok::Ident(s) if s == "infl"));
        assert!(matches!(kinds[2], Tok::MapsTo));
        assert!(matches!(kinds[4], Tok::Semi));
    }

    #[test]
    fn comments_are_stripped() {
        let toks = tokenize("a // comment\nb").unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[1].span.line, 2);
    }

    #[test]
    fn sync_operator_beats_comparison() {
        let toks = tokenize("a <*> b <= c").unwrap();
        assert!(matches!(toks[1].tok, Tok::SyncAll));
        assert!(matches!(toks[3].tok, Tok::Le));
    }

    #[test]
    fn spans_track_line_and_column() {
        let toks = tokenize("x\n  y").unwrap();
        assert_eq!(toks[1].span, Span { line: 2, col: 3 });
    }

    #[test]
    fn bad_character_is_a_span_error() {
        let err = tokenize("a $ b").unwrap_err();
        assert_eq!(err.span.unwrap().col, 3);
    }
}
