//! Reader for MATPOWER case files (format version 2).
//!
//! Only literal assignments of the form `mpc.<field> = <literal>;` are
//! understood. Numeric matrices may use `;` or newlines between rows,
//! whitespace or commas between elements, `%` comments and `...`
//! continuations. Cell arrays and strings are skipped.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{Branch, Bus, BusType, Generator, Grid};

use super::{validate, CaseDocument, SourceFormat};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str,
    Dot,
    Eq,
    Semi,
    Comma,
    Newline,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Other(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: tl, column: tc });
        match c {
            '\n' => {
                push(&mut out, Tok::Newline);
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '.' if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') => {
                // continuation: drop the rest of the line including the newline
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                if i < chars.len() {
                    i += 1;
                    line += 1;
                    col = 1;
                }
                continue;
            }
            '\'' | '"' => {
                let quote = c;
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(syntax(tl, tc, "unterminated string")),
                        Some(&q) if q == quote => {
                            // doubled quote is an escaped quote
                            if chars.get(i + 1) == Some(&quote) {
                                i += 2;
                                col += 2;
                                continue;
                            }
                            i += 1;
                            col += 1;
                            break;
                        }
                        Some(_) => {
                            i += 1;
                            col += 1;
                        }
                    }
                }
                push(&mut out, Tok::Str);
                continue;
            }
            c if c.is_whitespace() => {}
            c if c.is_ascii_digit()
                || ((c == '-' || c == '+' || c == '.')
                    && chars
                        .get(i + 1)
                        .is_some_and(|n| n.is_ascii_digit() || (*n == '.' && c != '.'))) =>
            {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let lit: String = chars[start..i].iter().collect();
                let value = lit
                    .parse::<f64>()
                    .map_err(|_| syntax(tl, tc, format!("malformed number `{lit}`")))?;
                col += i - start;
                push(&mut out, Tok::Num(value));
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                col += i - start;
                push(&mut out, Tok::Ident(word));
                continue;
            }
            '.' => push(&mut out, Tok::Dot),
            '=' => push(&mut out, Tok::Eq),
            ';' => push(&mut out, Tok::Semi),
            ',' => push(&mut out, Tok::Comma),
            '[' => push(&mut out, Tok::LBracket),
            ']' => push(&mut out, Tok::RBracket),
            '{' => push(&mut out, Tok::LBrace),
            '}' => push(&mut out, Tok::RBrace),
            other => push(&mut out, Tok::Other(other)),
        }
        i += 1;
        col += 1;
    }
    Ok(out)
}

#[derive(Debug)]
struct Table {
    rows: Vec<Vec<f64>>,
    line: usize,
    column: usize,
}

enum Value {
    Scalar(f64),
    Matrix(Table),
    Ignored,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eof_error(&self) -> Error {
        let (line, column) = self
            .toks
            .last()
            .map(|t| (t.line, t.column))
            .unwrap_or((1, 1));
        syntax(line, column, "unexpected end of input")
    }

    fn skip_statement(&mut self) {
        while let Some(t) = self.bump() {
            if matches!(t.tok, Tok::Semi | Tok::Newline) {
                break;
            }
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token> {
        let t = self.bump().ok_or_else(|| self.eof_error())?;
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(t.line, t.column, format!("expected {what}")))
        }
    }

    fn matrix(&mut self, open: &Token) -> Result<Table> {
        let mut rows = Vec::new();
        let mut row = Vec::new();
        loop {
            let t = self.bump().ok_or_else(|| self.eof_error())?;
            match t.tok {
                Tok::Num(v) => row.push(v),
                Tok::Ident(ref w) => row.push(match w.as_str() {
                    "Inf" | "inf" => f64::INFINITY,
                    "NaN" | "nan" => f64::NAN,
                    _ => return Err(syntax(t.line, t.column, format!("unexpected `{w}` in matrix"))),
                }),
                Tok::Other('-') if matches!(self.peek().map(|t| &t.tok), Some(Tok::Ident(w)) if w == "Inf" || w == "inf") => {
                    self.bump();
                    row.push(f64::NEG_INFINITY);
                }
                Tok::Comma => {}
                Tok::Semi | Tok::Newline => {
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                    }
                }
                Tok::RBracket => {
                    if !row.is_empty() {
                        rows.push(row);
                    }
                    return Ok(Table {
                        rows,
                        line: open.line,
                        column: open.column,
                    });
                }
                _ => return Err(syntax(t.line, t.column, "unexpected token in matrix literal")),
            }
        }
    }

    fn skip_group(&mut self, open: Tok, close: Tok) -> Result<()> {
        let mut depth = 1;
        while depth > 0 {
            let t = self.bump().ok_or_else(|| self.eof_error())?;
            if t.tok == open {
                depth += 1;
            } else if t.tok == close {
                depth -= 1;
            }
        }
        Ok(())
    }

    fn value(&mut self) -> Result<Value> {
        let t = self.bump().ok_or_else(|| self.eof_error())?;
        let v = match t.tok {
            Tok::LBracket => Value::Matrix(self.matrix(&t)?),
            Tok::LBrace => {
                self.skip_group(Tok::LBrace, Tok::RBrace)?;
                Value::Ignored
            }
            Tok::Num(v) => Value::Scalar(v),
            Tok::Str => Value::Ignored,
            _ => {
                self.skip_statement();
                return Ok(Value::Ignored);
            }
        };
        // optional terminator
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Semi)) {
            self.bump();
        }
        Ok(v)
    }
}

struct Assignments {
    name: Option<String>,
    fields: HashMap<String, Value>,
    warnings: Vec<String>,
}

fn collect(text: &str) -> Result<Assignments> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let mut out = Assignments {
        name: None,
        fields: HashMap::new(),
        warnings: Vec::new(),
    };
    while let Some(t) = p.peek().cloned() {
        match &t.tok {
            Tok::Newline | Tok::Semi | Tok::Comma => {
                p.bump();
            }
            Tok::Ident(w) if w == "function" => {
                // function mpc = NAME
                p.bump();
                let mut last = None;
                while let Some(t) = p.bump() {
                    match t.tok {
                        Tok::Newline | Tok::Semi => break,
                        Tok::Ident(w) => last = Some(w),
                        _ => {}
                    }
                }
                out.name = last;
            }
            Tok::Ident(w) if w == "mpc" => {
                p.bump();
                p.expect(Tok::Dot, "`.` after `mpc`")?;
                let field = match p.bump() {
                    Some(Token { tok: Tok::Ident(f), .. }) => f,
                    Some(t) => return Err(syntax(t.line, t.column, "expected field name")),
                    None => return Err(p.eof_error()),
                };
                p.expect(Tok::Eq, "`=`")?;
                let value = p.value()?;
                match field.as_str() {
                    "version" | "baseMVA" | "bus" | "gen" | "branch" => {}
                    other => out.warnings.push(format!("ignored mpc.{other}")),
                }
                out.fields.insert(field, value);
            }
            _ => {
                out.warnings.push(format!(
                    "skipped statement at line {}, column {}",
                    t.line, t.column
                ));
                p.skip_statement();
            }
        }
    }
    Ok(out)
}

fn table<'a>(fields: &'a HashMap<String, Value>, name: &str, min_cols: usize) -> Result<&'a Table> {
    match fields.get(name) {
        Some(Value::Matrix(t)) => {
            if let Some(short) = t.rows.iter().position(|r| r.len() < min_cols) {
                return Err(syntax(
                    t.line + short,
                    t.column,
                    format!("mpc.{name} row {} has fewer than {min_cols} columns", short + 1),
                ));
            }
            Ok(t)
        }
        _ => Err(Error::MissingTable(name.to_string())),
    }
}

fn as_id(v: f64, line: usize, column: usize) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(syntax(line, column, format!("`{v}` is not a bus number")))
    }
}

pub fn parse_matpower(text: &str) -> Result<CaseDocument> {
    let mut a = collect(text)?;
    let base_mva = match a.fields.get("baseMVA") {
        Some(Value::Scalar(v)) => *v,
        _ => return Err(Error::MissingTable("baseMVA".into())),
    };
    let bus_t = table(&a.fields, "bus", 13)?;
    let gen_t = table(&a.fields, "gen", 10)?;
    let br_t = table(&a.fields, "branch", 11)?;

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    for (k, r) in bus_t.rows.iter().enumerate() {
        let id = as_id(r[0], bus_t.line + k, bus_t.column)?;
        let bus_type = match r[1] as i64 {
            _ if r[1].fract() != 0.0 => return Err(Error::BadBusType { bus: id, code: r[1] }),
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            _ => return Err(Error::BadBusType { bus: id, code: r[1] }),
        };
        buses.push(Bus {
            id,
            bus_type,
            pd: r[2] / base_mva,
            qd: r[3] / base_mva,
            gs: r[4] / base_mva,
            bs: r[5] / base_mva,
            vm: r[7],
            va: r[8].to_radians(),
            base_kv: r[9],
        });
    }
    if !buses.iter().any(|b| b.bus_type == BusType::Slack) {
        return Err(Error::NoSlack);
    }

    let mut generators = Vec::with_capacity(gen_t.rows.len());
    for (k, r) in gen_t.rows.iter().enumerate() {
        generators.push(Generator {
            bus: as_id(r[0], gen_t.line + k, gen_t.column)?,
            pg: r[1] / base_mva,
            qg: r[2] / base_mva,
            qmax: r[3] / base_mva,
            qmin: r[4] / base_mva,
            vg: r[5],
            in_service: r[7] > 0.0,
            pmax: r[8] / base_mva,
            pmin: r[9] / base_mva,
        });
    }

    let mut branches = Vec::with_capacity(br_t.rows.len());
    for (k, r) in br_t.rows.iter().enumerate() {
        branches.push(Branch {
            from: as_id(r[0], br_t.line + k, br_t.column)?,
            to: as_id(r[1], br_t.line + k, br_t.column)?,
            r: r[2],
            x: r[3],
            b: r[4],
            tau: r[8],
            shift: r[9].to_radians(),
            in_service: r[10] > 0.0,
        });
    }

    let extra_cols = gen_t.rows.iter().any(|r| r.len() > 10) || br_t.rows.iter().any(|r| r.len() > 11);
    if extra_cols {
        a.warnings.push("ignored extra gen/branch columns".into());
    }

    let grid = Grid {
        name: a.name.unwrap_or_else(|| "case".into()),
        base_mva,
        buses,
        generators,
        branches,
    };
    let violations = validate(&grid);
    if !violations.is_empty() {
        return Err(Error::InvalidGrid(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    Ok(CaseDocument {
        source_format: SourceFormat::MatpowerM,
        grid,
        warnings: a.warnings,
    })
}
