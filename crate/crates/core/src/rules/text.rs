//! Clause text: `name op value (AND name op value)*`.

use thiserror::Error;

use super::{ClassLabel, Clause, Condition, Op, Rule, Schema, SchemaError, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("at position {position}: {source}")]
    Schema {
        position: usize,
        #[source]
        source: SchemaError,
    },
}

impl ParseError {
    /// Byte offset into the input where the problem was found.
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { position, .. } | ParseError::Schema { position, .. } => *position,
        }
    }

    fn syntax(position: usize, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            position,
            message: message.into(),
        }
    }
}

/// Two decimals when that is exact, otherwise the shortest round-trip form.
pub fn format_number(v: f64) -> String {
    let fixed = format!("{v:.2}");
    if fixed.parse::<f64>().ok() == Some(v) {
        fixed
    } else {
        format!("{v}")
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        if ch == '"' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('"');
    out
}

pub fn format_clause(clause: &Clause) -> String {
    clause
        .conditions()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" AND ")
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_spaces(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }
}

const OPERATOR_CHARS: [char; 4] = ['=', '!', '<', '>'];

/// Parses clause text against a schema. The empty string is rejected.
pub fn parse_clause(text: &str, schema: &Schema) -> Result<Clause, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::syntax(0, "empty clause"));
    }
    let mut cur = Cursor { text, pos: 0 };
    let mut conditions: Vec<Condition> = Vec::new();
    loop {
        cur.skip_spaces();
        let (name_at, condition) = parse_condition(&mut cur, schema)?;
        if conditions
            .iter()
            .any(|c| c.variable() == condition.variable())
        {
            return Err(ParseError::Schema {
                position: name_at,
                source: SchemaError::DuplicateVariable(condition.variable().to_string()),
            });
        }
        conditions.push(condition);
        cur.skip_spaces();
        if cur.at_end() {
            break;
        }
        let and_at = cur.pos;
        let rest = cur.rest();
        let joined = rest.starts_with("AND")
            && rest[3..].chars().next().is_some_and(char::is_whitespace);
        if !joined {
            return Err(ParseError::syntax(and_at, "expected `AND`"));
        }
        cur.pos += 3;
    }
    Clause::new(conditions).map_err(|source| ParseError::Schema {
        position: 0,
        source,
    })
}

fn parse_condition(cur: &mut Cursor<'_>, schema: &Schema) -> Result<(usize, Condition), ParseError> {
    let name_at = cur.pos;
    let op_offset = cur
        .rest()
        .find(|c: char| OPERATOR_CHARS.contains(&c) || c == '"')
        .filter(|&i| !cur.rest()[i..].starts_with('"'))
        .ok_or_else(|| ParseError::syntax(name_at, "expected comparison operator"))?;
    let name = cur.rest()[..op_offset].trim();
    if name.is_empty() {
        return Err(ParseError::syntax(name_at, "expected feature name"));
    }
    cur.pos += op_offset;

    let op_at = cur.pos;
    let rest = cur.rest();
    let (op, width) = if rest.starts_with("==") {
        (Op::Eq, 2)
    } else if rest.starts_with("!=") {
        (Op::Neq, 2)
    } else if rest.starts_with(">=") {
        (Op::Geq, 2)
    } else if rest.starts_with("<=") {
        (Op::Leq, 2)
    } else if rest.starts_with('>') {
        (Op::Gt, 1)
    } else if rest.starts_with('<') {
        (Op::Lt, 1)
    } else {
        return Err(ParseError::syntax(op_at, "invalid operator"));
    };
    cur.pos += width;
    if cur.peek().is_some_and(|c| OPERATOR_CHARS.contains(&c)) {
        return Err(ParseError::syntax(op_at, "invalid operator"));
    }
    cur.skip_spaces();

    let value_at = cur.pos;
    let value = match cur.peek() {
        None => return Err(ParseError::syntax(value_at, "expected value")),
        Some('"') => Value::Category(parse_string(cur)?),
        Some(_) => {
            let token_len = cur
                .rest()
                .find(char::is_whitespace)
                .unwrap_or(cur.rest().len());
            let token = &cur.rest()[..token_len];
            let valid = token
                .chars()
                .all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'));
            let number = token
                .parse::<f64>()
                .ok()
                .filter(|v| valid && v.is_finite())
                .ok_or_else(|| {
                    ParseError::syntax(value_at, format!("expected number or quoted label, found `{token}`"))
                })?;
            cur.pos += token_len;
            Value::Number(number)
        }
    };
    let condition = Condition::new(schema, name, op, value).map_err(|source| ParseError::Schema {
        position: name_at,
        source,
    })?;
    Ok((name_at, condition))
}

fn parse_string(cur: &mut Cursor<'_>) -> Result<String, ParseError> {
    let start = cur.pos;
    let mut out = String::new();
    let mut chars = cur.rest().char_indices().skip(1);
    while let Some((i, ch)) = chars.next() {
        match ch {
            '"' => {
                cur.pos += i + 1;
                return Ok(out);
            }
            '\\' => match chars.next() {
                Some((_, escaped)) => out.push(escaped),
                None => break,
            },
            other => out.push(other),
        }
    }
    Err(ParseError::syntax(start, "unterminated string"))
}

/// Parses a rule given as clause text plus a label display name.
/// The empty string stands for the empty clause here.
pub fn parse_rule(clause: &str, label: &str, schema: &Schema) -> Result<Rule, ParseError> {
    let clause = if clause.trim().is_empty() {
        Clause::empty()
    } else {
        parse_clause(clause, schema)?
    };
    let label: ClassLabel = schema
        .parse_label(label)
        .map_err(|source| ParseError::Schema {
            position: 0,
            source,
        })?;
    Ok(Rule::new(clause, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::Feature;

    fn bank() -> Schema {
        Schema::with_labels(
            vec![
                Feature::numeric("duration"),
                Feature::numeric("nr.employed"),
                Feature::numeric("pdays"),
                Feature::numeric("euribor3m"),
                Feature::numeric("cons.price.idx"),
                Feature::categorical("poutcome", ["failure", "nonexistent", "success"]),
                Feature::categorical("month", ["mar", "may", "oct"]),
                Feature::categorical("contact", ["cellular", "telephone"]),
            ],
            "no",
            "yes",
        )
        .unwrap()
    }

    fn banknote() -> Schema {
        Schema::with_labels(
            vec![
                Feature::numeric("variance"),
                Feature::numeric("skewness"),
                Feature::numeric("curtosis"),
                Feature::numeric("entropy"),
            ],
            "0",
            "1",
        )
        .unwrap()
    }

    fn tictactoe() -> Schema {
        let cells = ["tl", "tm", "tr", "ml", "mm", "mr", "bl", "bm", "br"];
        Schema::with_labels(
            cells
                .iter()
                .map(|c| Feature::categorical(*c, ["b", "o", "x"]))
                .collect(),
            "negative",
            "positive",
        )
        .unwrap()
    }

    #[test]
    fn canonical_corpus_round_trips() {
        let corpus: &[(&str, Schema)] = &[
            ("poutcome != \"success\" AND duration <= 368.00", bank()),
            ("nr.employed > 5076.20", bank()),
            ("duration > 368.00 AND nr.employed <= 5076.20", bank()),
            ("pdays <= 12.00 AND duration > 161.00", bank()),
            ("month == \"oct\" AND contact == \"cellular\"", bank()),
            ("euribor3m > 1.05 AND cons.price.idx <= 93.92", bank()),
            ("duration > 548.00", bank()),
            ("variance > -3.33 AND skewness > 5.80", banknote()),
            ("variance > -3.31 AND skewness > 5.82", banknote()),
            ("tr == \"x\" AND br != \"o\" AND bl != \"o\"", tictactoe()),
            ("tr == \"x\" AND mr == \"x\" AND br == \"x\"", tictactoe()),
        ];
        for (text, schema) in corpus {
            let clause = parse_clause(text, schema).unwrap();
            assert_eq!(format_clause(&clause), *text);
            assert_eq!(parse_clause(&format_clause(&clause), schema).unwrap(), clause);
        }
    }

    #[test]
    fn whitespace_is_normalized() {
        let s = banknote();
        let clause = parse_clause("  variance>-3.33   AND skewness >  5.8 ", &s).unwrap();
        assert_eq!(format_clause(&clause), "variance > -3.33 AND skewness > 5.80");
    }

    #[test]
    fn names_with_spaces_and_dashes() {
        let s = Schema::with_labels(vec![Feature::numeric("concave points-worst")], "B", "M")
            .unwrap();
        let clause = parse_clause("concave points-worst <= 0.1358", &s).unwrap();
        assert_eq!(clause.conditions()[0].variable(), "concave points-worst");
        assert_eq!(format_clause(&clause), "concave points-worst <= 0.1358");
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let s = Schema::with_labels(vec![Feature::numeric("age")], "no", "yes").unwrap();
        let err = parse_clause("age >> 26", &s).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { position: 4, .. }), "{err:?}");
        let err = parse_clause("age > 26 AN age < 3", &s).unwrap_err();
        assert_eq!(err.position(), 9);
        assert!(parse_clause("age > ", &s).is_err());
        assert!(parse_clause("age > nan", &s).is_err());
        assert!(parse_clause("", &s).is_err());
        assert!(parse_clause("> 3", &s).is_err());
        let err = parse_clause("age > 1 AND age < 3", &s).unwrap_err();
        assert!(matches!(
            err,
            ParseError::Schema { position: 12, source: SchemaError::DuplicateVariable(_) }
        ));
        let err = parse_clause("age > 1 AND height < 3", &s).unwrap_err();
        assert!(matches!(
            err,
            ParseError::Schema { source: SchemaError::UnknownFeature(_), .. }
        ));
    }

    #[test]
    fn quoted_labels_may_contain_keywords() {
        let s = Schema::with_labels(
            vec![Feature::categorical("m", ["Never-married", "Married AND \"Happy\""])],
            "no",
            "yes",
        )
        .unwrap();
        let text = "m == \"Married AND \\\"Happy\\\"\"";
        let clause = parse_clause(text, &s).unwrap();
        assert_eq!(
            clause.conditions()[0].value().as_category(),
            Some("Married AND \"Happy\"")
        );
        assert_eq!(format_clause(&clause), text);
        assert!(parse_clause("m == \"Never-married", &s).is_err());
        assert!(parse_clause("m == Never-married", &s).is_err());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(368.0), "368.00");
        assert_eq!(format_number(-3.33), "-3.33");
        assert_eq!(format_number(0.1358), "0.1358");
        assert_eq!(format_number(1.0 / 3.0), "0.3333333333333333");
    }

    #[test]
    fn rules_accept_empty_clause_text() {
        let s = banknote();
        let rule = parse_rule("", "1", &s).unwrap();
        assert!(rule.clause.is_empty());
        assert_eq!(rule.label, ClassLabel::Positive);
        assert!(parse_rule("variance > 0", "2", &s).is_err());
    }
}
