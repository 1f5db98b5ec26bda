//! The perturbation specification language.
//!
//! A [`TransformSpec`] is a list of [`TransformRule`]s, each with a budget: the number of
//! times the rule may be applied to non-overlapping spans of an input string. Specs are written
//! as TOML:
//!
//! ```toml
//! alphabet = "char"
//!
//! [[rules]]
//! name = "SwapPair"
//! builtin = "SwapPair"
//! delta = 2
//!
//! [[rules]]
//! name = "swap_vowels"
//! delta = 1
//! custom = { pattern = ["class:vowel", "class:vowel"], replacer = "swap" }
//! ```

mod resources;
mod rule;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::Deref;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use resources::{
    ResourceTables, SubstitutionTable, QWERTY, STOP_WORDS, STOP_WORDS_EXAMPLE, SYNONYMS, VOWELS,
};
pub use rule::{
    is_length_preserving, Builtin, NamedClass, NamedTable, Replacer, TokenPattern, TokenPredicate,
    TransformRule,
};

/// Whether strings are sequences of characters or of whitespace-separated words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    Char,
    Word,
}

impl Alphabet {
    /// Char mode: lower-cased Unicode scalar values. Word mode: whitespace split, punctuation kept.
    pub fn tokenize(self, text: &str) -> TokenString {
        match self {
            Alphabet::Char => text
                .chars()
                .flat_map(char::to_lowercase)
                .map(String::from)
                .collect(),
            Alphabet::Word => text.split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn separator(self) -> &'static str {
        match self {
            Alphabet::Char => "",
            Alphabet::Word => " ",
        }
    }

    pub fn join<S: AsRef<str>>(self, tokens: &[S]) -> String {
        let parts: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        parts.join(self.separator())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Alphabet::Char => "char",
            Alphabet::Word => "word",
        }
    }
}

impl FromStr for Alphabet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(Alphabet::Char),
            "word" => Ok(Alphabet::Word),
            other => Err(Error::InvalidSpec(format!(
                "alphabet must be \"char\" or \"word\", got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A string over the alphabet, held as surface tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenString(Vec<String>);

impl TokenString {
    pub fn new(tokens: Vec<String>) -> Self {
        Self(tokens)
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }

    pub fn to_text(&self, alphabet: Alphabet) -> String {
        alphabet.join(&self.0)
    }

    pub fn truncated(&self, max_len: usize) -> TokenString {
        TokenString(self.0.iter().take(max_len).cloned().collect())
    }
}

impl Deref for TokenString {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl From<Vec<String>> for TokenString {
    fn from(v: Vec<String>) -> Self {
        Self(v)
    }
}

impl<'a> From<Vec<&'a str>> for TokenString {
    fn from(v: Vec<&'a str>) -> Self {
        Self(v.into_iter().map(str::to_owned).collect())
    }
}

impl FromIterator<String> for TokenString {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// A rule together with its budget δ.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBudget {
    pub rule: TransformRule,
    pub delta: usize,
}

/// A perturbation specification `{(T1, δ1), ..., (Tn, δn)}`.
///
/// Parsed specs always hold at least one rule. Programmatic specs may be empty; the
/// training split produces empty halves when every rule goes to one side.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    alphabet: Alphabet,
    rules: Vec<RuleBudget>,
    /// Restricts matches to spans ending within the first `prefix_len` tokens.
    prefix_len: Option<usize>,
}

impl TransformSpec {
    pub fn new(alphabet: Alphabet, rules: Vec<RuleBudget>) -> Result<Self> {
        let mut seen = HashSet::new();
        for rb in &rules {
            if !seen.insert(rb.rule.name.as_str()) {
                return Err(Error::InvalidSpec(format!("duplicate rule name `{}`", rb.rule.name)));
            }
            if rb.rule.alphabet != alphabet {
                return Err(Error::InvalidSpec(format!(
                    "mixed alphabet modes: rule `{}` is {}-level in a {}-level spec",
                    rb.rule.name, rb.rule.alphabet, alphabet
                )));
            }
        }
        Ok(Self {
            alphabet,
            rules,
            prefix_len: None,
        })
    }

    pub fn empty(alphabet: Alphabet) -> Self {
        Self {
            alphabet,
            rules: Vec::new(),
            prefix_len: None,
        }
    }

    /// Convenience constructor from `(rule, δ)` pairs.
    pub fn from_rules(alphabet: Alphabet, rules: impl IntoIterator<Item = (TransformRule, usize)>) -> Result<Self> {
        Self::new(
            alphabet,
            rules
                .into_iter()
                .map(|(rule, delta)| RuleBudget { rule, delta })
                .collect(),
        )
    }

    pub fn with_prefix_len(mut self, prefix_len: Option<usize>) -> Self {
        self.prefix_len = prefix_len;
        self
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn rules(&self) -> &[RuleBudget] {
        &self.rules
    }

    pub fn prefix_len(&self) -> Option<usize> {
        self.prefix_len
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn total_budget(&self) -> usize {
        self.rules.iter().map(|r| r.delta).sum()
    }

    pub fn rule_index(&self, name: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.rule.name == name)
    }

    /// The same rules with every budget replaced by `f(index, δ)`.
    pub fn map_budgets(&self, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let mut out = self.clone();
        for (i, rb) in out.rules.iter_mut().enumerate() {
            rb.delta = f(i, rb.delta);
        }
        out
    }

    /// A spec holding only the rules selected by `keep`, budgets and prefix unchanged.
    pub fn subset(&self, mut keep: impl FnMut(usize, &RuleBudget) -> bool) -> Self {
        Self {
            alphabet: self.alphabet,
            rules: self
                .rules
                .iter()
                .enumerate()
                .filter(|(i, rb)| keep(*i, rb))
                .map(|(_, rb)| rb.clone())
                .collect(),
            prefix_len: self.prefix_len,
        }
    }

    /// True iff every rule is length-preserving.
    pub fn is_length_preserving(&self) -> bool {
        self.rules.iter().all(|r| r.rule.is_length_preserving())
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    alphabet: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prefix_len: Option<usize>,
    #[serde(default, skip_serializing_if = "ResourcePaths::is_empty")]
    resources: ResourcePaths,
    #[serde(default)]
    rules: Vec<RuleEntry>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResourcePaths {
    #[serde(default)]
    tables: BTreeMap<String, String>,
    #[serde(default)]
    classes: BTreeMap<String, String>,
}

impl ResourcePaths {
    fn is_empty(&self) -> bool {
        self.tables.is_empty() && self.classes.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    name: String,
    delta: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alphabet: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    /// Overrides the table a built-in reads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<String>,
    /// Overrides the class a built-in reads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    custom: Option<CustomEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomEntry {
    pattern: Vec<String>,
    replacer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<String>,
}

fn syntax_error(text: &str, err: toml::de::Error) -> Error {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (Some(line), Some(column))
        }
        None => (None, None),
    };
    Error::Syntax {
        line,
        column,
        message: err.message().to_owned(),
    }
}

/// Parses spec-file text against already-loaded resources.
///
/// The `[resources]` section's paths are not read here; use [`load_spec_file`] to have them
/// loaded relative to the spec file.
pub fn parse_spec(text: &str, resources: &ResourceTables) -> Result<TransformSpec> {
    let file: SpecFile = toml::from_str(text).map_err(|e| syntax_error(text, e))?;
    build_spec(file, resources)
}

fn build_spec(file: SpecFile, resources: &ResourceTables) -> Result<TransformSpec> {
    let alphabet: Alphabet = file.alphabet.parse()?;
    if file.rules.is_empty() {
        return Err(Error::InvalidSpec("a specification needs at least one rule".into()));
    }
    let mut rules = Vec::with_capacity(file.rules.len());
    for entry in file.rules {
        if entry.delta < 0 {
            return Err(Error::InvalidSpec(format!(
                "rule `{}`: budget must be non-negative, got {}",
                entry.name, entry.delta
            )));
        }
        if let Some(a) = &entry.alphabet {
            if a.parse::<Alphabet>()? != alphabet {
                return Err(Error::InvalidSpec(format!(
                    "mixed alphabet modes: rule `{}` declares {a} in a {alphabet}-level spec",
                    entry.name
                )));
            }
        }
        let mut rule = match (&entry.builtin, &entry.custom) {
            (Some(b), None) => {
                let builtin: Builtin = b.parse()?;
                let resource = match builtin.default_resource() {
                    Some(("table", _)) => {
                        if entry.class.is_some() {
                            return Err(Error::InvalidSpec(format!(
                                "rule `{}`: {b} reads a table, not a class",
                                entry.name
                            )));
                        }
                        entry.table.as_deref()
                    }
                    Some(_) => {
                        if entry.table.is_some() {
                            return Err(Error::InvalidSpec(format!(
                                "rule `{}`: {b} reads a class, not a table",
                                entry.name
                            )));
                        }
                        entry.class.as_deref()
                    }
                    None => {
                        if entry.table.is_some() || entry.class.is_some() {
                            return Err(Error::InvalidSpec(format!(
                                "rule `{}`: {b} takes no resource",
                                entry.name
                            )));
                        }
                        None
                    }
                };
                builtin.rule_with(resources, resource)?
            }
            (None, Some(c)) => {
                if entry.table.is_some() || entry.class.is_some() {
                    return Err(Error::InvalidSpec(format!(
                        "rule `{}`: put the table inside `custom`",
                        entry.name
                    )));
                }
                custom_rule(&entry.name, alphabet, c, resources)?
            }
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "rule `{}` needs exactly one of `builtin` or `custom`",
                    entry.name
                )))
            }
        };
        rule.name = entry.name;
        rules.push(RuleBudget {
            rule,
            delta: entry.delta as usize,
        });
    }
    Ok(TransformSpec::new(alphabet, rules)?.with_prefix_len(file.prefix_len))
}

fn custom_rule(
    name: &str,
    alphabet: Alphabet,
    entry: &CustomEntry,
    resources: &ResourceTables,
) -> Result<TransformRule> {
    let pattern = TokenPattern::new(
        entry
            .pattern
            .iter()
            .map(|p| TokenPredicate::parse(p, resources))
            .collect::<Result<_>>()?,
    )?;
    let table = || -> Result<NamedTable> {
        let tname = entry.table.as_deref().ok_or_else(|| {
            Error::InvalidSpec(format!("rule `{name}`: replacer `{}` needs a table", entry.replacer))
        })?;
        Ok(NamedTable {
            name: tname.to_owned(),
            table: resources.table(tname)?,
        })
    };
    let replacer = match entry.replacer.as_str() {
        "delete" => Replacer::Delete,
        "swap" => Replacer::Swap,
        "duplicate" => Replacer::DuplicateToken,
        "substitute" => Replacer::SubstituteFromTable(table()?),
        "insert" => Replacer::InsertFromTable(table()?),
        other => {
            return Err(Error::InvalidSpec(format!(
                "rule `{name}`: unknown replacer `{other}`"
            )))
        }
    };
    if replacer.table().is_none() && entry.table.is_some() {
        return Err(Error::InvalidSpec(format!(
            "rule `{name}`: replacer `{}` takes no table",
            entry.replacer
        )));
    }
    TransformRule::custom(name, alphabet, pattern, replacer)
}

/// Renders a spec back to spec-file text. `parse_spec(print_spec(s), r)` reproduces `s`.
pub fn print_spec(spec: &TransformSpec) -> String {
    let rules = spec
        .rules
        .iter()
        .map(|rb| {
            let rule = &rb.rule;
            let mut entry = RuleEntry {
                name: rule.name.clone(),
                delta: rb.delta as i64,
                alphabet: None,
                builtin: None,
                table: None,
                class: None,
                custom: None,
            };
            match rule.builtin {
                Some(b) => {
                    entry.builtin = Some(b.name().to_owned());
                    match (&rule.replacer, rule.pattern.positions().first()) {
                        (Replacer::SubstituteFromTable(t) | Replacer::InsertFromTable(t), _) => {
                            entry.table = Some(t.name.clone())
                        }
                        (_, Some(TokenPredicate::TokenClass(c))) => entry.class = Some(c.name.clone()),
                        _ => {}
                    }
                }
                None => {
                    entry.custom = Some(CustomEntry {
                        pattern: rule.pattern.positions().iter().map(|p| p.to_string()).collect(),
                        replacer: rule.replacer.kind_name().to_owned(),
                        table: rule.replacer.table().map(|t| t.name.clone()),
                    })
                }
            }
            entry
        })
        .collect();
    let file = SpecFile {
        alphabet: spec.alphabet.as_str().to_owned(),
        prefix_len: spec.prefix_len,
        resources: ResourcePaths::default(),
        rules,
    };
    toml::to_string(&file).expect("spec serializes")
}

/// Reads a spec file, loading its `[resources]` paths (relative to the file) on top of `base`.
pub fn load_spec_file(path: impl AsRef<Path>, base: &ResourceTables) -> Result<(TransformSpec, ResourceTables)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SpecFile = toml::from_str(&text).map_err(|e| syntax_error(&text, e))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut resources = base.clone();
    for (name, p) in &file.resources.tables {
        resources.load_table(name.clone(), dir.join(p))?;
    }
    for (name, p) in &file.resources.classes {
        resources.load_class(name.clone(), dir.join(p))?;
    }
    let spec = build_spec(file, &resources)?;
    Ok((spec, resources))
}
