//! Tokenizer for `.ukl` kernel-language source.
//!
//! Pragma lines are captured whole as `Token::Pragma`; the directive parser
//! re-lexes their payload.

use crate::diag::{Diag, Pos, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    /// Full pragma line body after `#pragma`, e.g. `omp parallel for ...`.
    Pragma(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Colon,
    Dot,
    Assign,
    PlusAssign,
    MinusAssign,
    StarAssign,
    PlusPlus,
    MinusMinus,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    /// `<<<` / `>>>`
    LaunchOpen,
    LaunchClose,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
    /// Byte offset into the lexed text; used for verbatim slices.
    pub off: usize,
}

pub struct Lexer<'a> {
    src: &'a [u8],
    i: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), i: 0, line: 1, col: 1 }
    }

    /// Lex text that starts at `pos` in some enclosing source (pragma payloads).
    pub fn with_pos(src: &'a str, pos: Pos) -> Self {
        Lexer { src: src.as_bytes(), i: 0, line: pos.line, col: pos.col }
    }

    pub fn tokenize_at(src: &'a str, pos: Pos) -> Result<Vec<Token>> {
        let mut lx = Lexer::with_pos(src, pos);
        let mut out = Vec::new();
        loop {
            let t = lx.next_token()?;
            let done = t.tok == Tok::Eof;
            out.push(t);
            if done {
                return Ok(out);
            }
        }
    }

    pub fn tokenize(src: &'a str) -> Result<Vec<Token>> {
        let mut lx = Lexer::new(src);
        let mut out = Vec::new();
        loop {
            let t = lx.next_token()?;
            let done = t.tok == Tok::Eof;
            out.push(t);
            if done {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> u8 {
        *self.src.get(self.i).unwrap_or(&0)
    }

    fn peek2(&self) -> u8 {
        *self.src.get(self.i + 1).unwrap_or(&0)
    }

    fn peek3(&self) -> u8 {
        *self.src.get(self.i + 2).unwrap_or(&0)
    }

    fn bump(&mut self) -> u8 {
        let c = self.peek();
        self.i += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn pos(&self) -> Pos {
        Pos::new(self.line, self.col)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.bump();
                }
                b'/' if self.peek2() == b'/' => {
                    while self.peek() != b'\n' && self.peek() != 0 {
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn next_token(&mut self) -> Result<Token> {
        self.skip_trivia();
        let pos = self.pos();
        let off = self.i;
        let c = self.peek();
        let tok = match c {
            0 => Tok::Eof,
            b'#' => {
                // Must be a single-line `#pragma ...`.
                let start = self.i;
                while self.peek() != b'\n' && self.peek() != 0 {
                    self.bump();
                }
                let line = std::str::from_utf8(&self.src[start..self.i]).unwrap().trim_end();
                let rest = line
                    .strip_prefix("#pragma")
                    .ok_or_else(|| Diag::new(pos, format!("unsupported preprocessor line `{line}`")))?;
                let pad = (line.len() - rest.trim_start().len()) as u32;
                let payload_pos = Pos::new(pos.line, pos.col + pad);
                return Ok(Token { tok: Tok::Pragma(rest.trim().to_string()), pos: payload_pos, off });
            }
            b'0'..=b'9' => return self.number(pos, off),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = self.i;
                while matches!(self.peek(), b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_') {
                    self.bump();
                }
                Tok::Ident(std::str::from_utf8(&self.src[start..self.i]).unwrap().to_string())
            }
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b'{' => {
                self.bump();
                Tok::LBrace
            }
            b'}' => {
                self.bump();
                Tok::RBrace
            }
            b'[' => {
                self.bump();
                Tok::LBracket
            }
            b']' => {
                self.bump();
                Tok::RBracket
            }
            b';' => {
                self.bump();
                Tok::Semi
            }
            b',' => {
                self.bump();
                Tok::Comma
            }
            b':' => {
                self.bump();
                Tok::Colon
            }
            b'.' => {
                self.bump();
                Tok::Dot
            }
            b'+' => {
                self.bump();
                match self.peek() {
                    b'+' => {
                        self.bump();
                        Tok::PlusPlus
                    }
                    b'=' => {
                        self.bump();
                        Tok::PlusAssign
                    }
                    _ => Tok::Plus,
                }
            }
            b'-' => {
                self.bump();
                match self.peek() {
                    b'-' => {
                        self.bump();
                        Tok::MinusMinus
                    }
                    b'=' => {
                        self.bump();
                        Tok::MinusAssign
                    }
                    _ => Tok::Minus,
                }
            }
            b'*' => {
                self.bump();
                if self.peek() == b'=' {
                    self.bump();
                    Tok::StarAssign
                } else {
                    Tok::Star
                }
            }
            b'/' => {
                self.bump();
                Tok::Slash
            }
            b'%' => {
                self.bump();
                Tok::Percent
            }
            b'<' => {
                if self.peek2() == b'<' && self.peek3() == b'<' {
                    self.bump();
                    self.bump();
                    self.bump();
                    Tok::LaunchOpen
                } else {
                    self.bump();
                    if self.peek() == b'=' {
                        self.bump();
                        Tok::Le
                    } else {
                        Tok::Lt
                    }
                }
            }
            b'>' => {
                if self.peek2() == b'>' && self.peek3() == b'>' {
                    self.bump();
                    self.bump();
                    self.bump();
                    Tok::LaunchClose
                } else {
                    self.bump();
                    if self.peek() == b'=' {
                        self.bump();
                        Tok::Ge
                    } else {
                        Tok::Gt
                    }
                }
            }
            b'=' => {
                self.bump();
                if self.peek() == b'=' {
                    self.bump();
                    Tok::EqEq
                } else {
                    Tok::Assign
                }
            }
            b'!' => {
                self.bump();
                if self.peek() == b'=' {
                    self.bump();
                    Tok::Ne
                } else {
                    return Err(Diag::new(pos, "unexpected character `!`"));
                }
            }
            other => {
                return Err(Diag::new(pos, format!("unexpected character `{}`", other as char)));
            }
        };
        Ok(Token { tok, pos, off })
    }

    fn number(&mut self, pos: Pos, off: usize) -> Result<Token> {
        let start = self.i;
        while self.peek().is_ascii_digit() {
            self.bump();
        }
        let mut is_float = false;
        if self.peek() == b'.' && self.peek2().is_ascii_digit() {
            is_float = true;
            self.bump();
            while self.peek().is_ascii_digit() {
                self.bump();
            }
        }
        if matches!(self.peek(), b'e' | b'E') {
            let save = (self.i, self.line, self.col);
            self.bump();
            if matches!(self.peek(), b'+' | b'-') {
                self.bump();
            }
            if self.peek().is_ascii_digit() {
                is_float = true;
                while self.peek().is_ascii_digit() {
                    self.bump();
                }
            } else {
                (self.i, self.line, self.col) = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.i]).unwrap();
        let tok = if is_float {
            Tok::Float(text.parse().map_err(|_| Diag::new(pos, format!("bad float literal `{text}`")))?)
        } else {
            Tok::Int(text.parse().map_err(|_| Diag::new(pos, format!("bad integer literal `{text}`")))?)
        };
        Ok(Token { tok, pos, off })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_launch_chevrons() {
        let toks = Lexer::tokenize("k<<<1, 2>>>();").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("k".into()),
                Tok::LaunchOpen,
                Tok::Int(1),
                Tok::Comma,
                Tok::Int(2),
                Tok::LaunchClose,
                Tok::LParen,
                Tok::RParen,
                Tok::Semi,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn pragma_lines_are_single_tokens() {
        let toks = Lexer::tokenize("#pragma omp parallel for\nfor").unwrap();
        assert_eq!(toks[0].tok, Tok::Pragma("omp parallel for".into()));
        assert_eq!(toks[1].tok, Tok::Ident("for".into()));
    }

    #[test]
    fn comments_and_positions() {
        let toks = Lexer::tokenize("// hi\nx = 1;").unwrap();
        assert_eq!(toks[0].pos, Pos::new(2, 1));
    }

    #[test]
    fn rejects_stray_bang() {
        assert!(Lexer::tokenize("!x").is_err());
    }
}
