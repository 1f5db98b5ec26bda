//! Transformation rules: a fixed-length token pattern paired with a replacer.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::resources::{self, ResourceTables, SubstitutionTable};
use super::Alphabet;
use crate::error::{Error, Result};

/// A token class resolved against [`ResourceTables`], remembered by name for printing.
#[derive(Debug, Clone)]
pub struct NamedClass {
    pub name: String,
    pub tokens: Arc<BTreeSet<String>>,
}

/// A substitution table resolved against [`ResourceTables`], remembered by name for printing.
#[derive(Debug, Clone)]
pub struct NamedTable {
    pub name: String,
    pub table: Arc<SubstitutionTable>,
}

impl PartialEq for NamedClass {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.tokens == other.tokens
    }
}

impl PartialEq for NamedTable {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.table == other.table
    }
}

/// Predicate over a single token position.
#[derive(Debug, Clone, PartialEq)]
pub enum TokenPredicate {
    AnyToken,
    TokenInSet(BTreeSet<String>),
    /// Token belongs to a named class (vowels, stop words, ...).
    TokenClass(NamedClass),
    /// Token is a key of the named table (e.g. has a keyboard-adjacency entry).
    TableKey(NamedTable),
}

impl TokenPredicate {
    pub fn accepts(&self, token: &str) -> bool {
        match self {
            TokenPredicate::AnyToken => true,
            TokenPredicate::TokenInSet(set) => set.contains(token),
            TokenPredicate::TokenClass(c) => c.tokens.contains(token),
            TokenPredicate::TableKey(t) => t.table.contains_key(token),
        }
    }

    /// Parses the predicate notation used in spec files:
    /// `*`, `class:NAME`, `key:TABLE`, `in:a,b,c`, or a bare literal token.
    pub fn parse(text: &str, resources: &ResourceTables) -> Result<Self> {
        if text == "*" {
            Ok(TokenPredicate::AnyToken)
        } else if let Some(name) = text.strip_prefix("class:") {
            Ok(TokenPredicate::TokenClass(NamedClass {
                name: name.to_owned(),
                tokens: resources.class(name)?,
            }))
        } else if let Some(name) = text.strip_prefix("key:") {
            Ok(TokenPredicate::TableKey(NamedTable {
                name: name.to_owned(),
                table: resources.table(name)?,
            }))
        } else if let Some(list) = text.strip_prefix("in:") {
            let set: BTreeSet<String> = list
                .split(',')
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect();
            if set.is_empty() {
                return Err(Error::InvalidSpec(format!("empty token set in `{text}`")));
            }
            Ok(TokenPredicate::TokenInSet(set))
        } else if text.is_empty() {
            Err(Error::InvalidSpec("empty pattern element".into()))
        } else {
            Ok(TokenPredicate::TokenInSet(BTreeSet::from([text.to_owned()])))
        }
    }
}

impl fmt::Display for TokenPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenPredicate::AnyToken => f.write_str("*"),
            TokenPredicate::TokenClass(c) => write!(f, "class:{}", c.name),
            TokenPredicate::TableKey(t) => write!(f, "key:{}", t.name),
            TokenPredicate::TokenInSet(set) => {
                let single = set.len() == 1 && {
                    let tok = set.iter().next().unwrap();
                    tok != "*"
                        && !tok.contains(':')
                        && !tok.is_empty()
                };
                if single {
                    f.write_str(set.iter().next().unwrap())
                } else {
                    let items: Vec<&str> = set.iter().map(String::as_str).collect();
                    write!(f, "in:{}", items.join(","))
                }
            }
        }
    }
}

/// A fixed-length sequence of per-position predicates. Never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenPattern {
    positions: Vec<TokenPredicate>,
}

impl TokenPattern {
    pub fn new(positions: Vec<TokenPredicate>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidSpec("pattern must have at least one position".into()));
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn positions(&self) -> &[TokenPredicate] {
        &self.positions
    }

    pub fn matches(&self, span: &[String]) -> bool {
        span.len() == self.positions.len()
            && self.positions.iter().zip(span).all(|(p, t)| p.accepts(t))
    }
}

/// How a matched span is rewritten.
#[derive(Debug, Clone, PartialEq)]
pub enum Replacer {
    /// Replaces the span with the empty string.
    Delete,
    /// Reverses a two-token span.
    Swap,
    /// Replaces the span by each table entry for the span's surface form.
    SubstituteFromTable(NamedTable),
    /// Repeats the span twice.
    DuplicateToken,
    /// Keeps the span and appends each table entry for it on the right.
    InsertFromTable(NamedTable),
}

impl Replacer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Replacer::Delete => "delete",
            Replacer::Swap => "swap",
            Replacer::SubstituteFromTable(_) => "substitute",
            Replacer::DuplicateToken => "duplicate",
            Replacer::InsertFromTable(_) => "insert",
        }
    }

    pub fn table(&self) -> Option<&NamedTable> {
        match self {
            Replacer::SubstituteFromTable(t) | Replacer::InsertFromTable(t) => Some(t),
            _ => None,
        }
    }

    /// All replacement token sequences for `span`, without duplicates, in table order.
    pub fn apply(&self, span: &[String], alphabet: Alphabet) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = Vec::new();
        let mut push = |v: Vec<String>| {
            if !out.contains(&v) {
                out.push(v);
            }
        };
        match self {
            Replacer::Delete => push(Vec::new()),
            Replacer::Swap => {
                if span.len() == 2 {
                    push(vec![span[1].clone(), span[0].clone()]);
                }
            }
            Replacer::DuplicateToken => push(span.iter().chain(span).cloned().collect()),
            Replacer::SubstituteFromTable(t) => {
                if let Some(values) = t.table.get(&alphabet.join(span)) {
                    for v in values {
                        push(alphabet.tokenize(v).into_vec());
                    }
                }
            }
            Replacer::InsertFromTable(t) => {
                if let Some(values) = t.table.get(&alphabet.join(span)) {
                    for v in values {
                        let mut toks = span.to_vec();
                        toks.extend(alphabet.tokenize(v).into_vec());
                        push(toks);
                    }
                }
            }
        }
        out
    }
}

/// The seven transformations shipped as built-ins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    SwapPair,
    Del,
    InsAdj,
    SubAdj,
    DelStop,
    Dup,
    SubSyn,
}

impl Builtin {
    pub const ALL: [Builtin; 7] = [
        Builtin::SwapPair,
        Builtin::Del,
        Builtin::InsAdj,
        Builtin::SubAdj,
        Builtin::DelStop,
        Builtin::Dup,
        Builtin::SubSyn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::SwapPair => "SwapPair",
            Builtin::Del => "Del",
            Builtin::InsAdj => "InsAdj",
            Builtin::SubAdj => "SubAdj",
            Builtin::DelStop => "DelStop",
            Builtin::Dup => "Dup",
            Builtin::SubSyn => "SubSyn",
        }
    }

    pub fn alphabet(self) -> Alphabet {
        match self {
            Builtin::SwapPair | Builtin::Del | Builtin::InsAdj | Builtin::SubAdj => Alphabet::Char,
            Builtin::DelStop | Builtin::Dup | Builtin::SubSyn => Alphabet::Word,
        }
    }

    /// Resource the built-in reads, if any, as `(kind, default name)`.
    pub fn default_resource(self) -> Option<(&'static str, &'static str)> {
        match self {
            Builtin::InsAdj | Builtin::SubAdj => Some(("table", resources::QWERTY)),
            Builtin::DelStop => Some(("class", resources::STOP_WORDS)),
            Builtin::SubSyn => Some(("table", resources::SYNONYMS)),
            _ => None,
        }
    }

    /// Builds the rule with the default resource name.
    pub fn rule(self, resources: &ResourceTables) -> Result<TransformRule> {
        self.rule_with(resources, None)
    }

    /// Builds the rule, reading its table or class from `resource` instead of the default name.
    pub fn rule_with(self, resources: &ResourceTables, resource: Option<&str>) -> Result<TransformRule> {
        let res_name = resource
            .map(str::to_owned)
            .or_else(|| self.default_resource().map(|(_, n)| n.to_owned()));
        let table = |name: &str| -> Result<NamedTable> {
            Ok(NamedTable {
                name: name.to_owned(),
                table: resources.table(name)?,
            })
        };
        let (pattern, replacer) = match self {
            Builtin::SwapPair => (
                vec![TokenPredicate::AnyToken, TokenPredicate::AnyToken],
                Replacer::Swap,
            ),
            Builtin::Del => (vec![TokenPredicate::AnyToken], Replacer::Delete),
            Builtin::Dup => (vec![TokenPredicate::AnyToken], Replacer::DuplicateToken),
            Builtin::InsAdj => {
                let t = table(res_name.as_deref().unwrap())?;
                (vec![TokenPredicate::TableKey(t.clone())], Replacer::InsertFromTable(t))
            }
            Builtin::SubAdj | Builtin::SubSyn => {
                let t = table(res_name.as_deref().unwrap())?;
                (
                    vec![TokenPredicate::TableKey(t.clone())],
                    Replacer::SubstituteFromTable(t),
                )
            }
            Builtin::DelStop => {
                let name = res_name.unwrap();
                let class = NamedClass {
                    tokens: resources.class(&name)?,
                    name,
                };
                (vec![TokenPredicate::TokenClass(class)], Replacer::Delete)
            }
        };
        Ok(TransformRule {
            name: self.name().to_owned(),
            alphabet: self.alphabet(),
            pattern: TokenPattern::new(pattern)?,
            replacer,
            builtin: Some(self),
        })
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownResource {
                kind: "builtin transformation",
                name: s.to_owned(),
            })
    }
}

/// A string transformation: which spans it applies to and what they may become.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformRule {
    pub name: String,
    pub alphabet: Alphabet,
    pub pattern: TokenPattern,
    pub replacer: Replacer,
    /// Set when the rule was produced by [`Builtin::rule`]; used when printing.
    pub builtin: Option<Builtin>,
}

impl TransformRule {
    pub fn custom(
        name: impl Into<String>,
        alphabet: Alphabet,
        pattern: TokenPattern,
        replacer: Replacer,
    ) -> Result<Self> {
        let rule = Self {
            name: name.into(),
            alphabet,
            pattern,
            replacer,
            builtin: None,
        };
        rule.check_shape()?;
        Ok(rule)
    }

    fn check_shape(&self) -> Result<()> {
        if matches!(self.replacer, Replacer::Swap) && self.pattern.len() != 2 {
            return Err(Error::InvalidSpec(format!(
                "rule `{}`: swap requires a pattern of length 2",
                self.name
            )));
        }
        Ok(())
    }

    /// Replacements for `span`, or nothing when the pattern does not accept it.
    pub fn replacements(&self, span: &[String]) -> Vec<Vec<String>> {
        if self.pattern.matches(span) {
            self.replacer.apply(span, self.alphabet)
        } else {
            Vec::new()
        }
    }

    /// True iff every replacement the rule can emit has the length of its matched span.
    pub fn is_length_preserving(&self) -> bool {
        let width = self.pattern.len();
        match &self.replacer {
            Replacer::Delete | Replacer::DuplicateToken | Replacer::InsertFromTable(_) => false,
            Replacer::Swap => true,
            Replacer::SubstituteFromTable(t) => t.table.iter().all(|(key, values)| {
                self.alphabet.tokenize(key).len() != width
                    || values.iter().all(|v| self.alphabet.tokenize(v).len() == width)
            }),
        }
    }
}

/// Free-function form of [`TransformRule::is_length_preserving`].
pub fn is_length_preserving(rule: &TransformRule) -> bool {
    rule.is_length_preserving()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn delstop_on_stop_word_yields_empty() {
        let r = ResourceTables::shipped();
        let rule = Builtin::DelStop.rule_with(&r, Some(resources::STOP_WORDS_EXAMPLE)).unwrap();
        assert_eq!(rule.replacements(&toks(&["are"])), vec![Vec::<String>::new()]);
        assert!(rule.replacements(&toks(&["school"])).is_empty());
    }

    #[test]
    fn dup_repeats_token() {
        let rule = Builtin::Dup.rule(&ResourceTables::new()).unwrap();
        assert_eq!(rule.replacements(&toks(&["nice"])), vec![toks(&["nice", "nice"])]);
    }

    #[test]
    fn subadj_reads_qwerty_row() {
        let r = ResourceTables::shipped();
        let rule = Builtin::SubAdj.rule(&r).unwrap();
        let table = r.table(resources::QWERTY).unwrap();
        let expected: Vec<Vec<String>> = table
            .get("a")
            .unwrap()
            .iter()
            .map(|v| vec![v.clone()])
            .collect();
        assert_eq!(rule.replacements(&toks(&["a"])), expected);
        assert!(expected.contains(&toks(&["q"])));
        assert!(expected.contains(&toks(&["s"])));
        assert!(expected.contains(&toks(&["z"])));
    }

    #[test]
    fn insadj_appends_to_the_right() {
        let r = ResourceTables::shipped();
        let rule = Builtin::InsAdj.rule(&r).unwrap();
        let out = rule.replacements(&toks(&["a"]));
        assert!(out.contains(&toks(&["a", "q"])));
        assert!(out.iter().all(|o| o.len() == 2 && o[0] == "a"));
    }

    #[test]
    fn swap_reverses_pair() {
        let rule = Builtin::SwapPair.rule(&ResourceTables::new()).unwrap();
        assert_eq!(rule.replacements(&toks(&["o", "u"])), vec![toks(&["u", "o"])]);
    }

    #[test]
    fn length_preservation_of_builtins() {
        let mut r = ResourceTables::shipped();
        let mut syn = SubstitutionTable::new();
        syn.insert("good", ["fine", "great"]);
        r.add_table(resources::SYNONYMS, syn);
        let lp = |b: Builtin| b.rule(&r).unwrap().is_length_preserving();
        assert!(lp(Builtin::SubAdj));
        assert!(lp(Builtin::SwapPair));
        assert!(lp(Builtin::SubSyn));
        assert!(!lp(Builtin::Del));
        assert!(!lp(Builtin::InsAdj));
        assert!(!lp(Builtin::Dup));
        assert!(!lp(Builtin::DelStop));
    }

    #[test]
    fn subsyn_with_phrase_entry_is_not_length_preserving() {
        let mut r = ResourceTables::new();
        let mut syn = SubstitutionTable::new();
        syn.insert("good", ["fine"]);
        syn.insert("movie", ["motion picture"]);
        r.add_table(resources::SYNONYMS, syn);
        assert!(!Builtin::SubSyn.rule(&r).unwrap().is_length_preserving());
    }

    #[test]
    fn missing_resource_is_reported() {
        let err = Builtin::SubSyn.rule(&ResourceTables::shipped()).unwrap_err();
        assert!(matches!(err, Error::UnknownResource { kind: "table", .. }));
    }

    #[test]
    fn swap_needs_two_positions() {
        let p = TokenPattern::new(vec![TokenPredicate::AnyToken]).unwrap();
        assert!(TransformRule::custom("s", Alphabet::Char, p, Replacer::Swap).is_err());
    }

    #[test]
    fn predicate_notation_round_trips() {
        let r = ResourceTables::shipped();
        for text in ["*", "class:vowel", "key:qwerty", "in:a,b", "nice"] {
            let p = TokenPredicate::parse(text, &r).unwrap();
            assert_eq!(p.to_string(), text);
        }
    }
}
