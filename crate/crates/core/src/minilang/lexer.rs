//! Byte-offset preserving scanner shared by the parser, the mutation engine
//! and the model tokenizer.

use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Int(i64),
    Ident(String),
    Keyword(Keyword),
    Punct(Punct),
    /// Only produced in lenient mode.
    Unknown(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Fn,
    Test,
    Let,
    If,
    Else,
    While,
    Return,
    True,
    False,
    Assert,
    AssertEq,
}

impl Keyword {
    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Fn => "fn",
            Keyword::Test => "test",
            Keyword::Let => "let",
            Keyword::If => "if",
            Keyword::Else => "else",
            Keyword::While => "while",
            Keyword::Return => "return",
            Keyword::True => "true",
            Keyword::False => "false",
            Keyword::Assert => "assert",
            Keyword::AssertEq => "assert_eq",
        }
    }

    fn from_ident(s: &str) -> Option<Keyword> {
        Some(match s {
            "fn" => Keyword::Fn,
            "test" => Keyword::Test,
            "let" => Keyword::Let,
            "if" => Keyword::If,
            "else" => Keyword::Else,
            "while" => Keyword::While,
            "return" => Keyword::Return,
            "true" => Keyword::True,
            "false" => Keyword::False,
            "assert" => Keyword::Assert,
            "assert_eq" => Keyword::AssertEq,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Punct {
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
}

impl Punct {
    pub fn as_str(self) -> &'static str {
        match self {
            Punct::LParen => "(",
            Punct::RParen => ")",
            Punct::LBrace => "{",
            Punct::RBrace => "}",
            Punct::LBracket => "[",
            Punct::RBracket => "]",
            Punct::Comma => ",",
            Punct::Semi => ";",
            Punct::Assign => "=",
            Punct::Plus => "+",
            Punct::Minus => "-",
            Punct::Star => "*",
            Punct::Slash => "/",
            Punct::Percent => "%",
            Punct::Bang => "!",
            Punct::EqEq => "==",
            Punct::NotEq => "!=",
            Punct::Lt => "<",
            Punct::Le => "<=",
            Punct::Gt => ">",
            Punct::Ge => ">=",
            Punct::AndAnd => "&&",
            Punct::OrOr => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte range into the scanned text.
    pub start: usize,
    pub end: usize,
    /// 1-based.
    pub line: u32,
    /// 1-based, counted in chars.
    pub column: u32,
}

impl Token {
    /// The token's surface text, as it would be re-lexed.
    pub fn text(&self) -> String {
        match &self.kind {
            TokenKind::Int(v) => v.to_string(),
            TokenKind::Ident(s) => s.clone(),
            TokenKind::Keyword(k) => k.as_str().to_string(),
            TokenKind::Punct(p) => p.as_str().to_string(),
            TokenKind::Unknown(c) => c.to_string(),
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Scans `text` into tokens; unknown characters and overflowing literals are
/// syntax errors.
pub fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    Scanner::new(text, false).run()
}

/// Scans `text` without failing: unrecognised characters become
/// [`TokenKind::Unknown`] and overflowing literals are kept as identifiers.
pub fn lex_lenient(text: &str) -> Vec<Token> {
    Scanner::new(text, true)
        .run()
        .expect("lenient scanning is infallible")
}

struct Scanner<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    line_start: usize,
    lenient: bool,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str, lenient: bool) -> Self {
        Scanner {
            text,
            bytes: text.as_bytes(),
            pos: 0,
            line: 1,
            line_start: 0,
            lenient,
        }
    }

    fn column(&self, at: usize) -> u32 {
        self.text[self.line_start..at].chars().count() as u32 + 1
    }

    fn peek(&self, offset: usize) -> Option<u8> {
        self.bytes.get(self.pos + offset).copied()
    }

    fn run(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            match b {
                b'\n' => {
                    self.pos += 1;
                    self.line += 1;
                    self.line_start = self.pos;
                }
                b' ' | b'\t' | b'\r' => self.pos += 1,
                b'/' if self.peek(1) == Some(b'/') => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b'0'..=b'9' => out.push(self.number()?),
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => out.push(self.word()),
                _ => out.push(self.punct()?),
            }
        }
        Ok(out)
    }

    fn make(&self, kind: TokenKind, start: usize) -> Token {
        Token {
            kind,
            start,
            end: self.pos,
            line: self.line,
            column: self.column(start),
        }
    }

    fn number(&mut self) -> Result<Token, ParseError> {
        let start = self.pos;
        while matches!(self.peek(0), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let digits = &self.text[start..self.pos];
        match digits.parse::<i64>() {
            Ok(v) => Ok(self.make(TokenKind::Int(v), start)),
            Err(_) if self.lenient => Ok(self.make(TokenKind::Ident(digits.to_string()), start)),
            Err(_) => Err(ParseError::Syntax {
                line: self.line,
                column: self.column(start),
                message: format!("integer literal `{digits}` out of range"),
            }),
        }
    }

    fn word(&mut self) -> Token {
        let start = self.pos;
        while matches!(self.peek(0), Some(b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_')) {
            self.pos += 1;
        }
        let word = &self.text[start..self.pos];
        let kind = match Keyword::from_ident(word) {
            Some(k) => TokenKind::Keyword(k),
            None => TokenKind::Ident(word.to_string()),
        };
        self.make(kind, start)
    }

    fn punct(&mut self) -> Result<Token, ParseError> {
        let start = self.pos;
        let two = (self.peek(0), self.peek(1));
        let (p, len) = match two {
            (Some(b'='), Some(b'=')) => (Punct::EqEq, 2),
            (Some(b'!'), Some(b'=')) => (Punct::NotEq, 2),
            (Some(b'<'), Some(b'=')) => (Punct::Le, 2),
            (Some(b'>'), Some(b'=')) => (Punct::Ge, 2),
            (Some(b'&'), Some(b'&')) => (Punct::AndAnd, 2),
            (Some(b'|'), Some(b'|')) => (Punct::OrOr, 2),
            (Some(b'('), _) => (Punct::LParen, 1),
            (Some(b')'), _) => (Punct::RParen, 1),
            (Some(b'{'), _) => (Punct::LBrace, 1),
            (Some(b'}'), _) => (Punct::RBrace, 1),
            (Some(b'['), _) => (Punct::LBracket, 1),
            (Some(b']'), _) => (Punct::RBracket, 1),
            (Some(b','), _) => (Punct::Comma, 1),
            (Some(b';'), _) => (Punct::Semi, 1),
            (Some(b'='), _) => (Punct::Assign, 1),
            (Some(b'+'), _) => (Punct::Plus, 1),
            (Some(b'-'), _) => (Punct::Minus, 1),
            (Some(b'*'), _) => (Punct::Star, 1),
            (Some(b'/'), _) => (Punct::Slash, 1),
            (Some(b'%'), _) => (Punct::Percent, 1),
            (Some(b'!'), _) => (Punct::Bang, 1),
            (Some(b'<'), _) => (Punct::Lt, 1),
            (Some(b'>'), _) => (Punct::Gt, 1),
            _ => {
                let c = self.text[self.pos..].chars().next().expect("in bounds");
                if self.lenient {
                    self.pos += c.len_utf8();
                    return Ok(self.make(TokenKind::Unknown(c), start));
                }
                return Err(ParseError::Syntax {
                    line: self.line,
                    column: self.column(start),
                    message: format!("unexpected character `{c}`"),
                });
            }
        };
        self.pos += len;
        Ok(self.make(TokenKind::Punct(p), start))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        lex(src).unwrap().iter().map(Token::text).collect()
    }

    #[test]
    fn two_char_operators_win() {
        assert_eq!(texts("a<=b!=c&&d||!e"), ["a", "<=", "b", "!=", "c", "&&", "d", "||", "!", "e"]);
    }

    #[test]
    fn comments_and_lines() {
        let toks = lex("// hi\nlet x = 1; // tail\n  x").unwrap();
        assert_eq!(toks[0].line, 2);
        assert_eq!(toks.last().unwrap().line, 3);
        assert_eq!(toks.last().unwrap().column, 3);
    }

    #[test]
    fn spans_slice_back_to_text() {
        let src = "fn f(a){return a+1;}";
        for t in lex(src).unwrap() {
            assert_eq!(&src[t.start..t.end], t.text());
        }
    }

    #[test]
    fn strict_rejects_unknown_but_lenient_keeps_it() {
        assert!(matches!(lex("a $ b"), Err(ParseError::Syntax { line: 1, column: 3, .. })));
        let toks = lex_lenient("a $ b");
        assert_eq!(toks[1].kind, TokenKind::Unknown('$'));
    }

    #[test]
    fn huge_literal() {
        assert!(lex("99999999999999999999").is_err());
        assert_eq!(lex_lenient("99999999999999999999").len(), 1);
    }
}
