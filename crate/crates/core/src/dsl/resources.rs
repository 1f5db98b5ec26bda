//! Substitution tables and token classes referenced by transformation rules.
//!
//! Table files hold one entry per line, `key<TAB>value1,value2,...`. Class files hold one
//! token per line. Blank lines and lines starting with `#` are ignored in both.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Name of the shipped QWERTY adjacency table used by `InsAdj` and `SubAdj`.
pub const QWERTY: &str = "qwerty";
/// Name of the shipped stop-word class `{and, the, a, to, of}` used by `DelStop`.
pub const STOP_WORDS: &str = "stop";
/// A wider stop-word class that also contains `are`, `at` and `is`.
pub const STOP_WORDS_EXAMPLE: &str = "stop_example";
/// Lower-case vowels.
pub const VOWELS: &str = "vowel";
/// Default name of the synonym table used by `SubSyn`. Not shipped.
pub const SYNONYMS: &str = "synonyms";

const QWERTY_TSV: &str = include_str!("../../resources/qwerty.tsv");
const STOP_WORDS_TXT: &str = include_str!("../../resources/stop_words.txt");
const STOP_WORDS_EXAMPLE_TXT: &str = include_str!("../../resources/stop_words_example.txt");
const VOWELS_TXT: &str = include_str!("../../resources/vowels.txt");

/// A token → replacement-set table. Keys absent from the table simply produce no replacements.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubstitutionTable {
    entries: BTreeMap<String, Vec<String>>,
}

impl SubstitutionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `values` to the entry for `key`, dropping duplicates while keeping first-seen order.
    pub fn insert<I, S>(&mut self, key: impl Into<String>, values: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entry = self.entries.entry(key.into()).or_default();
        for v in values {
            let v = v.into();
            if !entry.contains(&v) {
                entry.push(v);
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut table = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, values)) = line.split_once('\t') else {
                return Err(Error::data(origin, idx + 1, "expected `key<TAB>value,...`"));
            };
            if key.is_empty() {
                return Err(Error::data(origin, idx + 1, "empty key"));
            }
            table.insert(
                key,
                values.split(',').map(str::trim).filter(|v| !v.is_empty()),
            );
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

pub(crate) fn parse_class(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

/// Named tables and classes available to a specification. Immutable once handed to the parser.
#[derive(Debug, Clone, Default)]
pub struct ResourceTables {
    tables: BTreeMap<String, Arc<SubstitutionTable>>,
    classes: BTreeMap<String, Arc<BTreeSet<String>>>,
}

impl ResourceTables {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped resources: QWERTY adjacency, both stop-word classes and the vowel class.
    pub fn shipped() -> Self {
        let mut r = Self::new();
        r.add_table(
            QWERTY,
            SubstitutionTable::parse(QWERTY_TSV, Path::new("qwerty.tsv"))
                .expect("shipped qwerty table parses"),
        );
        r.add_class(STOP_WORDS, parse_class(STOP_WORDS_TXT));
        r.add_class(STOP_WORDS_EXAMPLE, parse_class(STOP_WORDS_EXAMPLE_TXT));
        r.add_class(VOWELS, parse_class(VOWELS_TXT));
        r
    }

    pub fn add_table(&mut self, name: impl Into<String>, table: SubstitutionTable) -> &mut Self {
        self.tables.insert(name.into(), Arc::new(table));
        self
    }

    pub fn add_class<I, S>(&mut self, name: impl Into<String>, tokens: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.classes.insert(
            name.into(),
            Arc::new(tokens.into_iter().map(Into::into).collect()),
        );
        self
    }

    pub fn load_table(&mut self, name: impl Into<String>, path: impl AsRef<Path>) -> Result<&mut Self> {
        let table = SubstitutionTable::load(path)?;
        Ok(self.add_table(name, table))
    }

    pub fn load_class(&mut self, name: impl Into<String>, path: impl AsRef<Path>) -> Result<&mut Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(self.add_class(name, parse_class(&text)))
    }

    /// Loads every `*.tsv` in `dir` as a table and every `*.txt` as a class, named by file stem.
    pub fn load_dir(&mut self, dir: impl AsRef<Path>) -> Result<&mut Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        paths.sort();
        for path in paths {
            let (Some(stem), Some(ext)) = (path.file_stem(), path.extension()) else {
                continue;
            };
            let stem = stem.to_string_lossy().into_owned();
            match ext.to_str() {
                Some("tsv") => {
                    self.load_table(stem, &path)?;
                }
                Some("txt") => {
                    self.load_class(stem, &path)?;
                }
                _ => {}
            }
        }
        Ok(self)
    }

    pub fn table(&self, name: &str) -> Result<Arc<SubstitutionTable>> {
        self.tables.get(name).cloned().ok_or_else(|| Error::UnknownResource {
            kind: "table",
            name: name.to_owned(),
        })
    }

    pub fn class(&self, name: &str) -> Result<Arc<BTreeSet<String>>> {
        self.classes.get(name).cloned().ok_or_else(|| Error::UnknownResource {
            kind: "class",
            name: name.to_owned(),
        })
    }
}
