use std::collections::HashMap;

use super::ast::*;
use super::lexer::{lex, Keyword, Punct, Token, TokenKind};
use super::{ParseError, BUILTINS};

/// Parses a MiniLang compilation unit and checks its static rules.
pub fn parse(source: &str) -> Result<Program, ParseError> {
    let tokens = lex(source)?;
    let mut p = Parser { tokens: &tokens, pos: 0, src_len: source.len(), starts: line_starts(source) };
    let mut functions = Vec::new();
    let mut tests = Vec::new();
    while !p.at_end() {
        match p.peek_kind() {
            Some(TokenKind::Keyword(Keyword::Fn)) => functions.push(p.function()?),
            Some(TokenKind::Keyword(Keyword::Test)) => tests.push(p.test()?),
            _ => return Err(p.unexpected("`fn` or `test`")),
        }
    }
    let program = Program {
        fn_index: functions.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect(),
        functions,
        tests,
        source_text: source.to_string(),
        line_starts: p.starts,
    };
    check(&program)?;
    Ok(program)
}

fn check(program: &Program) -> Result<(), ParseError> {
    let mut seen: HashMap<&str, u32> = HashMap::new();
    for f in &program.functions {
        if seen.insert(&f.name, f.line).is_some() || BUILTINS.contains(&f.name.as_str()) {
            return Err(ParseError::Duplicate { kind: "function", name: f.name.clone(), line: f.line });
        }
    }
    let mut seen_tests: HashMap<&str, u32> = HashMap::new();
    for t in &program.tests {
        if seen_tests.insert(&t.name, t.line).is_some() {
            return Err(ParseError::Duplicate { kind: "test", name: t.name.clone(), line: t.line });
        }
    }

    let mut err = None;
    let mut check_calls = |body: &[Stmt]| {
        walk_exprs(body, &mut |e| {
            if err.is_some() {
                return;
            }
            if let ExprKind::Call { name, args } = &e.kind {
                let arity = match program.function(name) {
                    Some(f) => f.params.len(),
                    None if name == "len" => 1,
                    None => {
                        err = Some(ParseError::Semantic {
                            line: e.line,
                            message: format!("call to undeclared function `{name}`"),
                        });
                        return;
                    }
                };
                if arity != args.len() {
                    err = Some(ParseError::Semantic {
                        line: e.line,
                        message: format!("`{name}` expects {arity} argument(s), got {}", args.len()),
                    });
                }
            }
        });
    };
    for f in &program.functions {
        check_calls(&f.body);
    }
    for t in &program.tests {
        check_calls(&t.body);
    }
    if let Some(e) = err {
        return Err(e);
    }

    for t in &program.tests {
        let mut has_assert = false;
        walk_stmts(&t.body, &mut |s| {
            has_assert |= matches!(s.kind, StmtKind::Assert(_) | StmtKind::AssertEq(..));
        });
        if !has_assert {
            return Err(ParseError::Semantic {
                line: t.line,
                message: format!("test `{}` contains no assertion", t.name),
            });
        }
    }
    Ok(())
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    src_len: usize,
    starts: Vec<usize>,
}

impl<'t> Parser<'t> {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&'t TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn peek_at(&self, k: usize) -> Option<&'t TokenKind> {
        self.tokens.get(self.pos + k).map(|t| &t.kind)
    }

    fn prev_end(&self) -> usize {
        self.tokens[self.pos - 1].end
    }

    fn eof_position(&self) -> (u32, u32) {
        match self.tokens.last() {
            Some(t) => (t.line, t.column + (t.end - t.start) as u32),
            None => {
                let line = self.starts.len() as u32;
                (line, (self.src_len - self.starts[line as usize - 1]) as u32 + 1)
            }
        }
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::Syntax {
                line: t.line,
                column: t.column,
                message: format!("expected {wanted}, found `{}`", t.text()),
            },
            None => {
                let (line, column) = self.eof_position();
                ParseError::Syntax { line, column, message: format!("expected {wanted}, found end of input") }
            }
        }
    }

    fn eat_punct(&mut self, p: Punct) -> bool {
        if self.peek_kind() == Some(&TokenKind::Punct(p)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: Punct) -> Result<&'t Token, ParseError> {
        if self.eat_punct(p) {
            Ok(&self.tokens[self.pos - 1])
        } else {
            Err(self.unexpected(&format!("`{}`", p.as_str())))
        }
    }

    fn eat_keyword(&mut self, k: Keyword) -> bool {
        if self.peek_kind() == Some(&TokenKind::Keyword(k)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, k: Keyword) -> Result<&'t Token, ParseError> {
        if self.eat_keyword(k) {
            Ok(&self.tokens[self.pos - 1])
        } else {
            Err(self.unexpected(&format!("`{}`", k.as_str())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek_kind() {
            Some(TokenKind::Ident(name)) => {
                self.pos += 1;
                Ok(name.clone())
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn function(&mut self) -> Result<FunctionDef, ParseError> {
        let kw = self.expect_keyword(Keyword::Fn)?;
        let name = self.ident()?;
        self.expect_punct(Punct::LParen)?;
        let mut params = Vec::new();
        if !self.eat_punct(Punct::RParen) {
            loop {
                params.push(self.ident()?);
                if self.eat_punct(Punct::RParen) {
                    break;
                }
                self.expect_punct(Punct::Comma)?;
            }
        }
        let body = self.block()?;
        Ok(FunctionDef { name, params, body, span: Span::new(kw.start, self.prev_end()), line: kw.line })
    }

    fn test(&mut self) -> Result<TestDef, ParseError> {
        let kw = self.expect_keyword(Keyword::Test)?;
        let name = self.ident()?;
        let body = self.block()?;
        Ok(TestDef { name, body, span: Span::new(kw.start, self.prev_end()), line: kw.line })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_punct(Punct::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat_punct(Punct::RBrace) {
            if self.at_end() {
                return Err(self.unexpected("`}`"));
            }
            stmts.push(self.statement()?);
        }
        Ok(stmts)
    }

    fn finish_stmt(&mut self, kind: StmtKind, first: &Token) -> Result<Stmt, ParseError> {
        self.expect_punct(Punct::Semi)?;
        Ok(Stmt { kind, span: Span::new(first.start, self.prev_end()), line: first.line })
    }

    fn statement(&mut self) -> Result<Stmt, ParseError> {
        let first = self.peek().ok_or_else(|| self.unexpected("statement"))?;
        match &first.kind {
            TokenKind::Keyword(Keyword::Let) => {
                self.pos += 1;
                let name = self.ident()?;
                self.expect_punct(Punct::Assign)?;
                let value = self.expr()?;
                self.finish_stmt(StmtKind::Let { name, value }, first)
            }
            TokenKind::Keyword(Keyword::If) => self.if_stmt(),
            TokenKind::Keyword(Keyword::While) => {
                self.pos += 1;
                let cond = self.paren_cond()?;
                let body = self.block()?;
                Ok(Stmt {
                    kind: StmtKind::While { cond, body },
                    span: Span::new(first.start, self.prev_end()),
                    line: first.line,
                })
            }
            TokenKind::Keyword(Keyword::Return) => {
                self.pos += 1;
                let value = if self.peek_kind() == Some(&TokenKind::Punct(Punct::Semi)) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.finish_stmt(StmtKind::Return(value), first)
            }
            TokenKind::Keyword(Keyword::Assert) => {
                self.pos += 1;
                self.expect_punct(Punct::LParen)?;
                let e = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                self.finish_stmt(StmtKind::Assert(e), first)
            }
            TokenKind::Keyword(Keyword::AssertEq) => {
                self.pos += 1;
                self.expect_punct(Punct::LParen)?;
                let a = self.expr()?;
                self.expect_punct(Punct::Comma)?;
                let b = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                self.finish_stmt(StmtKind::AssertEq(a, b), first)
            }
            TokenKind::Ident(name) if self.peek_at(1) == Some(&TokenKind::Punct(Punct::Assign)) => {
                let name = name.clone();
                self.pos += 2;
                let value = self.expr()?;
                self.finish_stmt(StmtKind::Assign { name, value }, first)
            }
            TokenKind::Ident(name) if self.peek_at(1) == Some(&TokenKind::Punct(Punct::LBracket)) => {
                // Either `a[i] = v;` or an expression statement starting with `a[i]`.
                let save = self.pos;
                let name = name.clone();
                self.pos += 2;
                let index = self.expr()?;
                self.expect_punct(Punct::RBracket)?;
                if self.eat_punct(Punct::Assign) {
                    let value = self.expr()?;
                    self.finish_stmt(StmtKind::AssignIndex { name, index, value }, first)
                } else {
                    self.pos = save;
                    let e = self.expr()?;
                    self.finish_stmt(StmtKind::Expr(e), first)
                }
            }
            _ => {
                let e = self.expr()?;
                self.finish_stmt(StmtKind::Expr(e), first)
            }
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        let first = self.expect_keyword(Keyword::If)?;
        let cond = self.paren_cond()?;
        let then_block = self.block()?;
        let else_block = if self.eat_keyword(Keyword::Else) {
            if self.peek_kind() == Some(&TokenKind::Keyword(Keyword::If)) {
                Some(vec![self.if_stmt()?])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt {
            kind: StmtKind::If { cond, then_block, else_block },
            span: Span::new(first.start, self.prev_end()),
            line: first.line,
        })
    }

    fn paren_cond(&mut self) -> Result<Expr, ParseError> {
        self.expect_punct(Punct::LParen)?;
        let e = self.expr()?;
        self.expect_punct(Punct::RParen)?;
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, ParseError> {
        const LEVELS: [&[BinOp]; 6] = [
            &[BinOp::Or],
            &[BinOp::And],
            &[BinOp::Eq, BinOp::Ne],
            &[BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge],
            &[BinOp::Add, BinOp::Sub],
            &[BinOp::Mul, BinOp::Div, BinOp::Rem],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let Some(tok) = self.peek() else { break };
            let TokenKind::Punct(p) = tok.kind else { break };
            let Some(op) = BinOp::from_symbol(p.as_str()).filter(|op| LEVELS[level].contains(op)) else {
                break;
            };
            self.pos += 1;
            let rhs = self.binary(level + 1)?;
            let span = lhs.span.to(rhs.span);
            let line = lhs.line;
            lhs = Expr {
                kind: ExprKind::Binary {
                    op,
                    op_span: Span::new(tok.start, tok.end),
                    op_line: tok.line,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
                line,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek() else { return Err(self.unexpected("expression")) };
        let op = match tok.kind {
            TokenKind::Punct(Punct::Bang) => UnOp::Not,
            TokenKind::Punct(Punct::Minus) => UnOp::Neg,
            _ => return self.postfix(),
        };
        self.pos += 1;
        let operand = self.unary()?;
        Ok(Expr {
            span: Span::new(tok.start, operand.span.end),
            line: tok.line,
            kind: ExprKind::Unary { op, operand: Box::new(operand) },
        })
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while self.eat_punct(Punct::LBracket) {
            let index = self.expr()?;
            self.expect_punct(Punct::RBracket)?;
            e = Expr {
                span: Span::new(e.span.start, self.prev_end()),
                line: e.line,
                kind: ExprKind::Index { base: Box::new(e), index: Box::new(index) },
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek() else { return Err(self.unexpected("expression")) };
        let simple = |kind| Expr { kind, span: Span::new(tok.start, tok.end), line: tok.line };
        match &tok.kind {
            TokenKind::Int(v) => {
                self.pos += 1;
                Ok(simple(ExprKind::Int(*v)))
            }
            TokenKind::Keyword(Keyword::True) => {
                self.pos += 1;
                Ok(simple(ExprKind::Bool(true)))
            }
            TokenKind::Keyword(Keyword::False) => {
                self.pos += 1;
                Ok(simple(ExprKind::Bool(false)))
            }
            TokenKind::Ident(name) => {
                self.pos += 1;
                if !self.eat_punct(Punct::LParen) {
                    return Ok(simple(ExprKind::Var(name.clone())));
                }
                let mut args = Vec::new();
                if !self.eat_punct(Punct::RParen) {
                    loop {
                        args.push(self.expr()?);
                        if self.eat_punct(Punct::RParen) {
                            break;
                        }
                        self.expect_punct(Punct::Comma)?;
                    }
                }
                Ok(Expr {
                    kind: ExprKind::Call { name: name.clone(), args },
                    span: Span::new(tok.start, self.prev_end()),
                    line: tok.line,
                })
            }
            TokenKind::Punct(Punct::LParen) => {
                self.pos += 1;
                let mut inner = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                // Parenthesised spans include the parentheses so that
                // whole-condition rewrites stay syntactically grouped.
                inner.span = Span::new(tok.start, self.prev_end());
                inner.line = tok.line;
                Ok(inner)
            }
            TokenKind::Punct(Punct::LBracket) => {
                self.pos += 1;
                let mut items = Vec::new();
                if !self.eat_punct(Punct::RBracket) {
                    loop {
                        items.push(self.expr()?);
                        if self.eat_punct(Punct::RBracket) {
                            break;
                        }
                        self.expect_punct(Punct::Comma)?;
                    }
                }
                Ok(Expr {
                    kind: ExprKind::Array(items),
                    span: Span::new(tok.start, self.prev_end()),
                    line: tok.line,
                })
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse("fn f(a){return a+1;} test t{assert_eq(f(1),2);}").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.tests.len(), 1);
        assert_eq!(p.functions[0].params, ["a"]);
    }

    #[test]
    fn malformed_input_reports_line_one() {
        match parse("fn f({") {
            Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicates_are_rejected() {
        assert!(matches!(
            parse("fn f(){return 1;} fn f(){return 2;}"),
            Err(ParseError::Duplicate { kind: "function", .. })
        ));
        assert!(matches!(
            parse("test t{assert(true);} test t{assert(true);}"),
            Err(ParseError::Duplicate { kind: "test", .. })
        ));
    }

    #[test]
    fn semantic_checks() {
        assert!(matches!(parse("test t{assert(g());}"), Err(ParseError::Semantic { .. })));
        assert!(matches!(parse("fn f(a){return a;} test t{assert(f());}"), Err(ParseError::Semantic { .. })));
        assert!(matches!(parse("test t{let x = 1;}"), Err(ParseError::Semantic { .. })));
    }

    #[test]
    fn precedence_and_spans() {
        let src = "fn f(a,b){ return a + b * 2 == 7 || !(a < b); }";
        let p = parse(src).unwrap();
        let StmtKind::Return(Some(e)) = &p.functions[0].body[0].kind else { panic!() };
        let ExprKind::Binary { op, lhs, .. } = &e.kind else { panic!() };
        assert_eq!(*op, BinOp::Or);
        assert_eq!(p.slice(lhs.span), "a + b * 2 == 7");
        assert_eq!(p.slice(e.span), "a + b * 2 == 7 || !(a < b)");
    }

    #[test]
    fn else_if_and_index_assign() {
        let src = "fn f(a){ let xs = [1,2]; xs[0] = a; if (a > 1) { return 1; } else if (a < 0) { return 2; } else { return xs[0]; } }";
        let p = parse(src).unwrap();
        let body = &p.functions[0].body;
        assert!(matches!(body[1].kind, StmtKind::AssignIndex { .. }));
        let StmtKind::If { else_block: Some(e), .. } = &body[2].kind else { panic!() };
        assert!(matches!(e[0].kind, StmtKind::If { .. }));
    }

    #[test]
    fn line_col_and_line_span() {
        let p = parse("fn f(a){\n  return a;\n}\ntest t{ assert(f(1) == 1); }").unwrap();
        assert_eq!(p.line_col(11), (2, 3));
        assert_eq!(p.slice(p.line_span(2).unwrap()), "  return a;");
        assert_eq!(p.line_count(), 4);
    }
}
