//! Probe templates of the form `[MASK] <VERB> <DET> <PROFESSION>.` and the
//! prior-estimation template in which the profession slot is itself masked.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read profession list {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("merged profession list is empty")]
    EmptyList,
    #[error("no verbs selected")]
    NoVerbs,
    #[error("profession '{0}' contains a mask token")]
    ContainsMask(String),
    #[error("override lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("unknown verb '{0}' (expected \"is\" or \"works as\")")]
    UnknownVerb(String),
}

pub type Result<T, E = TemplateError> = std::result::Result<T, E>;

/// Surface forms that count as a mask token in profession names.
pub const MASK_TOKENS: [&str; 2] = ["[MASK]", "<mask>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verb {
    #[serde(rename = "is")]
    Is,
    #[serde(rename = "works as")]
    WorksAs,
}

impl Verb {
    pub const ALL: [Verb; 2] = [Verb::Is, Verb::WorksAs];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Is => "is",
            Verb::WorksAs => "works as",
        }
    }

    /// Path-safe spelling used for output directories.
    pub fn slug(self) -> &'static str {
        match self {
            Verb::Is => "is",
            Verb::WorksAs => "works_as",
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verb {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "is" => Ok(Verb::Is),
            "works as" | "works_as" => Ok(Verb::WorksAs),
            other => Err(TemplateError::UnknownVerb(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Determiner {
    A,
    An,
}

impl Determiner {
    pub fn as_str(self) -> &'static str {
        match self {
            Determiner::A => "a",
            Determiner::An => "an",
        }
    }
}

impl fmt::Display for Determiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which input list(s) a profession came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfessionSource {
    StereotypeList,
    WikiList,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profession {
    pub name: String,
    pub source: ProfessionSource,
}

/// Ordered, deduplicated professions. The position of a profession is its
/// column index in every score matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfessionList {
    items: Vec<Profession>,
}

impl ProfessionList {
    /// Builds a list from names in order, keeping the first of any repeats.
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list = ProfessionList::default();
        let mut seen = HashMap::new();
        for name in names {
            let name = name.into();
            validate_name(&name)?;
            if seen.contains_key(&name) {
                continue;
            }
            seen.insert(name.clone(), list.items.len());
            list.items.push(Profession {
                name,
                source: ProfessionSource::StereotypeList,
            });
        }
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Profession] {
        &self.items
    }

    pub fn get(&self, index: usize) -> Option<&Profession> {
        self.items.get(index)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|p| p.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.items.iter().position(|p| p.name == name)
    }

    /// Name to column index lookup.
    pub fn index_map(&self) -> HashMap<&str, usize> {
        self.names().enumerate().map(|(i, n)| (n, i)).collect()
    }
}

fn validate_name(name: &str) -> Result<()> {
    if MASK_TOKENS.iter().any(|m| name.contains(m)) {
        return Err(TemplateError::ContainsMask(name.to_owned()));
    }
    Ok(())
}

/// Parses a newline-delimited list. Blank lines are skipped, surrounding
/// whitespace trimmed, and repeats within the same list dropped with a warning.
pub fn parse_profession_list(text: &str, origin: &str) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for line in text.lines() {
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        validate_name(name)?;
        if out.iter().any(|n| n == name) {
            log::warn!("duplicate profession '{name}' in {origin}; keeping the first occurrence");
            continue;
        }
        out.push(name.to_owned());
    }
    Ok(out)
}

/// Merges profession lists in the given order. The first file is treated as
/// the stereotype list and any later files as wiki lists; a name seen in both
/// keeps its first position and is marked [`ProfessionSource::Both`].
pub fn load_professions<P: AsRef<Path>>(list_paths: &[P]) -> Result<ProfessionList> {
    let mut lists = Vec::with_capacity(list_paths.len());
    for path in list_paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        lists.push(parse_profession_list(&text, &path.display().to_string())?);
    }
    merge_lists(&lists)
}

pub fn merge_lists(lists: &[Vec<String>]) -> Result<ProfessionList> {
    let mut items: Vec<Profession> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, list) in lists.iter().enumerate() {
        let source = if i == 0 {
            ProfessionSource::StereotypeList
        } else {
            ProfessionSource::WikiList
        };
        for name in list {
            match index.get(name) {
                Some(&at) => {
                    if items[at].source != source {
                        items[at].source = ProfessionSource::Both;
                    }
                }
                None => {
                    index.insert(name.clone(), items.len());
                    items.push(Profession {
                        name: name.clone(),
                        source,
                    });
                }
            }
        }
    }
    if items.is_empty() {
        return Err(TemplateError::EmptyList);
    }
    Ok(ProfessionList { items })
}

/// Phoneme/letter mismatches for the determiner heuristic.
///
/// Keys are matched case-insensitively against the profession name. A key
/// ending in `-` matches as a prefix; otherwise it must equal the first word.
/// The longest matching key wins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeterminerOverrides {
    exact: HashMap<String, Determiner>,
    prefixes: Vec<(String, Determiner)>,
}

const DEFAULT_OVERRIDES: &str = include_str!("../data/determiner_overrides.tsv");

impl DeterminerOverrides {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses `name<TAB>a|an` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let (key, det) = line
                .split_once('\t')
                .ok_or_else(|| TemplateError::Lexicon {
                    line: i + 1,
                    message: "expected name<TAB>a|an".to_owned(),
                })?;
            let det = match det.trim() {
                "a" => Determiner::A,
                "an" => Determiner::An,
                other => {
                    return Err(TemplateError::Lexicon {
                        line: i + 1,
                        message: format!("determiner must be 'a' or 'an', got '{other}'"),
                    })
                }
            };
            out.insert(key.trim(), det);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, key: &str, det: Determiner) {
        let key = key.to_lowercase();
        match key.strip_suffix('-') {
            Some(prefix) => {
                self.prefixes.retain(|(p, _)| p != prefix);
                self.prefixes.push((prefix.to_owned(), det));
                self.prefixes
                    .sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
            }
            None => {
                self.exact.insert(key, det);
            }
        }
    }

    /// Layers `other` on top of `self`; its entries win on equal keys.
    pub fn extend(&mut self, other: &DeterminerOverrides) {
        for (k, d) in &other.exact {
            self.exact.insert(k.clone(), *d);
        }
        for (p, d) in &other.prefixes {
            self.insert(&format!("{p}-"), *d);
        }
    }

    pub fn lookup(&self, name: &str) -> Option<Determiner> {
        let lower = name.to_lowercase();
        let first_word = lower.split_whitespace().next().unwrap_or("");
        let exact = self.exact.get(first_word).map(|d| (first_word.len(), *d));
        let prefix = self
            .prefixes
            .iter()
            .find(|(p, _)| lower.starts_with(p.as_str()))
            .map(|(p, d)| (p.len(), *d));
        match (exact, prefix) {
            (Some((el, ed)), Some((pl, pd))) => Some(if el >= pl { ed } else { pd }),
            (Some((_, d)), None) | (None, Some((_, d))) => Some(d),
            (None, None) => None,
        }
    }
}

impl DeterminerOverrides {
    /// The lexicon bundled with the crate.
    pub fn shipped() -> &'static DeterminerOverrides {
        static SHIPPED: std::sync::OnceLock<DeterminerOverrides> = std::sync::OnceLock::new();
        SHIPPED.get_or_init(|| {
            DeterminerOverrides::parse(DEFAULT_OVERRIDES).expect("shipped override lexicon parses")
        })
    }
}

/// `an` before a vowel sound, `a` otherwise: vowel-letter heuristic corrected
/// by the override lexicon.
pub fn choose_determiner(profession: &str, overrides: &DeterminerOverrides) -> Determiner {
    if let Some(det) = overrides.lookup(profession) {
        return det;
    }
    match profession.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => Determiner::An,
        _ => Determiner::A,
    }
}

/// The profession slot of a template.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Profession(String),
    /// Profession replaced by the mask token, for prior estimation.
    PriorMask,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub verb: Verb,
    pub determiner: Determiner,
    pub slot: Slot,
    pub rendered: String,
}

impl TemplateSpec {
    pub fn is_prior(&self) -> bool {
        matches!(self.slot, Slot::PriorMask)
    }

    /// The value written in the profession column of manifests and score
    /// tables: the name, or the mask token for the prior template.
    pub fn profession_field<'a>(&'a self, mask_token: &'a str) -> &'a str {
        match &self.slot {
            Slot::Profession(name) => name,
            Slot::PriorMask => mask_token,
        }
    }
}

pub fn render_template(
    verb: Verb,
    slot: &Slot,
    mask_token: &str,
    overrides: &DeterminerOverrides,
) -> TemplateSpec {
    let (determiner, filler) = match slot {
        Slot::Profession(name) => (choose_determiner(name, overrides), name.as_str()),
        Slot::PriorMask => (Determiner::A, mask_token),
    };
    TemplateSpec {
        verb,
        determiner,
        slot: slot.clone(),
        rendered: format!("{mask_token} {verb} {determiner} {filler}."),
    }
}

/// Every (verb, profession) template followed, per verb, by the prior template.
pub fn enumerate_probe_set(
    professions: &ProfessionList,
    verbs: &[Verb],
    mask_token: &str,
    overrides: &DeterminerOverrides,
) -> Result<Vec<TemplateSpec>> {
    if professions.is_empty() {
        return Err(TemplateError::EmptyList);
    }
    if verbs.is_empty() {
        return Err(TemplateError::NoVerbs);
    }
    let mut specs = Vec::with_capacity(verbs.len() * (professions.len() + 1));
    for &verb in verbs {
        for p in professions.items() {
            specs.push(render_template(
                verb,
                &Slot::Profession(p.name.clone()),
                mask_token,
                overrides,
            ));
        }
        specs.push(render_template(
            verb,
            &Slot::PriorMask,
            mask_token,
            overrides,
        ));
    }
    Ok(specs)
}

/// Recovers the verb and profession slot from a rendered template.
pub fn parse_template(rendered: &str, mask_token: &str) -> Option<(Verb, Determiner, Slot)> {
    let rest = rendered.strip_prefix(mask_token)?.strip_prefix(' ')?;
    let rest = rest.strip_suffix('.')?;
    let (verb, rest) = match rest.strip_prefix("works as ") {
        Some(r) => (Verb::WorksAs, r),
        None => (Verb::Is, rest.strip_prefix("is ")?),
    };
    let (det, filler) = match rest.strip_prefix("an ") {
        Some(r) => (Determiner::An, r),
        None => (Determiner::A, rest.strip_prefix("a ")?),
    };
    if filler.is_empty() {
        return None;
    }
    let slot = if filler == mask_token {
        Slot::PriorMask
    } else {
        Slot::Profession(filler.to_owned())
    };
    Some((verb, det, slot))
}

/// Writes the probe manifest consumed by the scoring adapter:
/// CSV with columns `verb,profession,template`.
pub fn write_manifest<W: std::io::Write>(
    writer: W,
    specs: &[TemplateSpec],
    mask_token: &str,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["verb", "profession", "template"])?;
    for spec in specs {
        w.write_record([
            spec.verb.as_str(),
            spec.profession_field(mask_token),
            spec.rendered.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
