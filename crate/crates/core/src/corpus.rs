//! Extraction of `{x'=e, ... & constraint}` fragments from model files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::parser::{self, OdeSystem};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Simple,
    Complex,
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Simple => "simple",
            Class::Complex => "complex",
        })
    }
}

/// Complex when any right-hand side has an operator other than unary minus.
pub fn classify(sys: &OdeSystem) -> Class {
    if operator_count(sys) >= 1 {
        Class::Complex
    } else {
        Class::Simple
    }
}

pub fn operator_count(sys: &OdeSystem) -> usize {
    sys.equations().iter().map(|(_, e)| e.count_operators()).sum()
}

/// Equations sorted by state variable, printed with normalised spacing.
pub fn canonical_key(sys: &OdeSystem) -> String {
    let mut eqs: Vec<String> = sys
        .equations()
        .iter()
        .map(|(v, e)| format!("{v}' = {e}"))
        .collect();
    eqs.sort();
    eqs.join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub source_file: PathBuf,
    /// 1-based.
    pub line: usize,
    pub system: OdeSystem,
    pub canonical_key: String,
    /// Evolution-domain constraint stripped from the fragment.
    pub constraint: Option<String>,
    /// Number of raw fragments merged into this entry.
    pub occurrences: usize,
}

impl CorpusEntry {
    pub fn class(&self) -> Class {
        classify(&self.system)
    }
}

/// Machine-readable form of an entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryDoc {
    pub file: String,
    pub line: usize,
    pub system: String,
    pub key: String,
    pub class: Class,
    pub operators: usize,
    pub occurrences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<String>,
}

impl From<&CorpusEntry> for EntryDoc {
    fn from(e: &CorpusEntry) -> Self {
        EntryDoc {
            file: e.source_file.display().to_string(),
            line: e.line,
            system: e
                .system
                .equations()
                .iter()
                .map(|(v, x)| format!("{v}' = {x}"))
                .collect::<Vec<_>>()
                .join(", "),
            key: e.canonical_key.clone(),
            class: e.class(),
            operators: operator_count(&e.system),
            occurrences: e.occurrences,
            constraint: e.constraint.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    /// Unique systems in order of first appearance.
    pub entries: Vec<CorpusEntry>,
    /// Fragments that parsed as systems, before merging.
    pub raw: usize,
    /// Fragments that looked like systems but did not parse.
    pub skipped: usize,
}

impl Corpus {
    pub fn unique(&self) -> usize {
        self.entries.len()
    }

    pub fn duplicates(&self) -> usize {
        self.raw - self.entries.len()
    }

    pub fn count(&self, class: Class) -> usize {
        self.entries.iter().filter(|e| e.class() == class).count()
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} systems found, {} duplicates, {} unique ({} simple, {} complex), {} skipped",
            self.raw,
            self.duplicates(),
            self.unique(),
            self.count(Class::Simple),
            self.count(Class::Complex),
            self.skipped
        )
    }
}

/// One fragment as found in a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub line: usize,
    pub text: String,
}

/// Innermost balanced `{...}` interiors on each line.
pub fn fragments(text: &str) -> Vec<Fragment> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut stack: Vec<(usize, bool)> = Vec::new();
        for (pos, ch) in line.char_indices() {
            match ch {
                '{' => {
                    if let Some(top) = stack.last_mut() {
                        top.1 = true;
                    }
                    stack.push((pos, false));
                }
                '}' => {
                    if let Some((start, nested)) = stack.pop() {
                        if !nested {
                            out.push(Fragment {
                                line: i + 1,
                                text: line[start + 1..pos].to_string(),
                            });
                        }
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Parses a fragment interior. `None` when it is not an ODE at all,
/// `Some(Err)` when it looks like one but does not parse.
pub fn parse_fragment(
    text: &str,
) -> Option<Result<(OdeSystem, Option<String>), parser::ParseError>> {
    let (eqs, constraint) = match text.split_once('&') {
        Some((e, c)) => (e, Some(c.trim().to_string())),
        None => (text, None),
    };
    if !eqs.contains('\'') || !eqs.contains('=') {
        return None;
    }
    // A clock `t'=1` is the independent variable itself.
    let clauses: Vec<&str> = eqs
        .split(',')
        .filter(|c| {
            let compact: String = c.chars().filter(|ch| !ch.is_whitespace()).collect();
            compact != "t'=1"
        })
        .collect();
    if clauses.is_empty() {
        return None;
    }
    Some(parser::parse_system(&clauses.join(",")).map(|s| (s, constraint)))
}

/// Scans every file under `root` (sorted by path) and merges fragments with
/// equal canonical keys.
pub fn extract_corpus(root: &Path) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let walker = WalkDir::new(root).sort_by_file_name();
    for item in walker {
        let item = item.map_err(|e| CorpusError::Io {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf()),
            source: e
                .into_io_error()
                .unwrap_or_else(|| std::io::Error::other("directory loop")),
        })?;
        if !item.file_type().is_file() {
            continue;
        }
        let path = item.path();
        let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = String::from_utf8_lossy(&bytes);
        for frag in fragments(&text) {
            let Some(parsed) = parse_fragment(&frag.text) else {
                continue;
            };
            let (system, constraint) = match parsed {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("{}:{}: skipping `{}`: {e}", path.display(), frag.line, frag.text);
                    corpus.skipped += 1;
                    continue;
                }
            };
            corpus.raw += 1;
            let key = canonical_key(&system);
            if let Some(&i) = index.get(&key) {
                corpus.entries[i].occurrences += 1;
                continue;
            }
            index.insert(key.clone(), corpus.entries.len());
            corpus.entries.push(CorpusEntry {
                source_file: path.to_path_buf(),
                line: frag.line,
                system,
                canonical_key: key,
                constraint,
                occurrences: 1,
            });
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_system;

    #[test]
    fn classification() {
        assert_eq!(classify(&parse_system("h' = v, v' = -g").unwrap()), Class::Simple);
        assert_eq!(classify(&parse_system("x' = t").unwrap()), Class::Simple);
        let force = parse_system("qx' = fx*(K_qx/D), qy' = fy*(K_qy/D), fx' = fxp, fy' = fyp")
            .unwrap();
        assert_eq!(operator_count(&force), 4);
        assert_eq!(classify(&force), Class::Complex);
    }

    #[test]
    fn keys_ignore_order_and_spacing() {
        let a = parse_system("h'=v, v'=-g").unwrap();
        let b = parse_system("v' = -g,   h' = v").unwrap();
        assert_eq!(canonical_key(&a), canonical_key(&b));
        let renamed = parse_system("x'=v, v'=-g").unwrap();
        assert_ne!(canonical_key(&a), canonical_key(&renamed));
    }

    #[test]
    fn fragment_scanning() {
        let text = "ode {x'=v & v>=0} then {{y'=1}} and {not an ode}\n{h'=v, v'=-g}";
        let f = fragments(text);
        let texts: Vec<&str> = f.iter().map(|f| f.text.as_str()).collect();
        assert_eq!(texts, vec!["x'=v & v>=0", "y'=1", "not an ode", "h'=v, v'=-g"]);
        assert_eq!(f[3].line, 2);
        let (sys, c) = parse_fragment("x'=v & v>=0").unwrap().unwrap();
        assert_eq!(canonical_key(&sys), "x' = v");
        assert_eq!(c.as_deref(), Some("v>=0"));
        assert!(parse_fragment("not an ode").is_none());
        let (sys, _) = parse_fragment("x'=c+b*(u-x), t'=1").unwrap().unwrap();
        assert_eq!(sys.dim(), 1);
    }
}
