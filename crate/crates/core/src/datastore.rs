//! Score tables in the released row format and their assembly into
//! per-(model, seed, verb) matrices.
//!
//! The canonical on-disk form is a UTF-8 CSV with a header and these columns,
//! in order:
//!
//! ```text
//! pronoun,score,profession,template,full_sentence,model,seed_index,checkpoint
//! ```
//!
//! An empty `checkpoint` field marks the single public checkpoint. `NaN` and
//! integral floats such as `20000.0` are accepted on input.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ModelProfile, ProfileRegistry};
use crate::metrics::{self, MetricsError};
use crate::templates::{parse_template, ProfessionList, Slot, Verb};

pub const COLUMNS: [&str; 8] = [
    "pronoun",
    "score",
    "profession",
    "template",
    "full_sentence",
    "model",
    "seed_index",
    "checkpoint",
];

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: score {score} out of range [0, 1]")]
    ScoreOutOfRange { line: u64, score: f64 },
    #[error("line {line}: unknown pronoun '{pronoun}' for model {model}")]
    UnknownPronoun {
        line: u64,
        pronoun: String,
        model: String,
    },
    #[error("line {line}: unknown seed index {seed}")]
    UnknownSeed { line: u64, seed: i64 },
    #[error("line {line}: unknown model '{model}' (no profile)")]
    UnknownModel { line: u64, model: String },
    #[error("line {line}: checkpoint is absent but seed index is {seed} (only -1 may lack a checkpoint)")]
    AbsentCheckpoint { line: u64, seed: i32 },
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("template '{template}' does not follow the probe grammar for mask token {mask}")]
    BadTemplate { template: String, mask: String },
    #[error("no records for model {model}, seed {seed}, verb '{verb}'")]
    NoRecords {
        model: String,
        seed: i32,
        verb: Verb,
    },
    #[error("profession '{0}' is not in the profession list")]
    UnknownProfession(String),
    #[error("duplicate {pronoun} score for step {step}, profession '{profession}'")]
    DuplicateCell {
        step: u64,
        profession: String,
        pronoun: String,
    },
    #[error("missing {pronoun} score for step {step}, profession '{profession}'")]
    MissingCell {
        step: u64,
        profession: String,
        pronoun: String,
    },
    #[error("missing {pronoun} prior-template score for step {step}")]
    MissingPrior { step: u64, pronoun: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T, E = DatastoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub pronoun: String,
    pub score: f64,
    /// Profession name, or the model's mask token for the prior template.
    pub profession: String,
    pub template: String,
    pub full_sentence: String,
    pub model: String,
    pub seed_index: i32,
    /// Pre-training step; `None` for the public checkpoint.
    pub checkpoint: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PronounClass {
    He,
    She,
}

fn pronoun_class(profile: &ModelProfile, pronoun: &str) -> Option<PronounClass> {
    if pronoun == profile.pronoun_casing.he() {
        Some(PronounClass::He)
    } else if pronoun == profile.pronoun_casing.she() {
        Some(PronounClass::She)
    } else {
        None
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    pronoun: String,
    score: String,
    profession: String,
    template: String,
    full_sentence: String,
    model: String,
    seed_index: String,
    checkpoint: String,
}

fn parse_checkpoint(field: &str, line: u64) -> Result<Option<u64>> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    if let Ok(step) = field.parse::<u64>() {
        return Ok(Some(step));
    }
    match field.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 => Ok(Some(x as u64)),
        _ => Err(DatastoreError::Malformed {
            line,
            message: format!("checkpoint '{field}' is not a step count"),
        }),
    }
}

fn parse_seed(field: &str, line: u64) -> Result<i32> {
    let field = field.trim();
    let seed: i64 = match field.parse::<i64>() {
        Ok(s) => s,
        Err(_) => match field.parse::<f64>() {
            Ok(x) if x.fract() == 0.0 => x as i64,
            _ => {
                return Err(DatastoreError::Malformed {
                    line,
                    message: format!("seed index '{field}' is not an integer"),
                })
            }
        },
    };
    if !(-1..=4).contains(&seed) {
        return Err(DatastoreError::UnknownSeed { line, seed });
    }
    Ok(seed as i32)
}

fn validate_row(raw: RawRow, line: u64, profiles: &ProfileRegistry) -> Result<ScoreRecord> {
    let score: f64 = raw
        .score
        .trim()
        .parse()
        .map_err(|_| DatastoreError::Malformed {
            line,
            message: format!("score '{}' is not a number", raw.score),
        })?;
    if !(0.0..=1.0).contains(&score) {
        return Err(DatastoreError::ScoreOutOfRange { line, score });
    }
    let profile = profiles
        .get(&raw.model)
        .ok_or_else(|| DatastoreError::UnknownModel {
            line,
            model: raw.model.clone(),
        })?;
    if pronoun_class(profile, &raw.pronoun).is_none() {
        return Err(DatastoreError::UnknownPronoun {
            line,
            pronoun: raw.pronoun,
            model: raw.model,
        });
    }
    let seed_index = parse_seed(&raw.seed_index, line)?;
    let checkpoint = parse_checkpoint(&raw.checkpoint, line)?;
    if checkpoint.is_none() && seed_index != -1 {
        return Err(DatastoreError::AbsentCheckpoint {
            line,
            seed: seed_index,
        });
    }
    Ok(ScoreRecord {
        pronoun: raw.pronoun,
        score,
        profession: raw.profession,
        template: raw.template,
        full_sentence: raw.full_sentence,
        model: raw.model,
        seed_index,
        checkpoint,
    })
}

/// Streams and validates a score table. Line numbers in errors count the
/// header as line 1.
pub fn parse_score_table<R: Read>(
    reader: R,
    profiles: &ProfileRegistry,
) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(DatastoreError::Header {
            expected: COLUMNS.iter().map(|s| s.to_string()).collect(),
            found: header,
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<RawRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            DatastoreError::Malformed {
                line,
                message: e.to_string(),
            }
        })?;
        let line = out.len() as u64 + 2;
        out.push(validate_row(row, line, profiles)?);
    }
    Ok(out)
}

pub fn write_score_table<W: Write>(writer: W, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for r in records {
        let score = r.score.to_string();
        let seed = r.seed_index.to_string();
        let checkpoint = r.checkpoint.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([
            r.pronoun.as_str(),
            &score,
            &r.profession,
            &r.template,
            &r.full_sentence,
            &r.model,
            &seed,
            &checkpoint,
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Aligned `steps × professions` matrices for one (model, seed, verb).
///
/// Immutable once assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrixSet {
    pub model: String,
    pub seed_index: i32,
    pub verb: Verb,
    /// Strictly increasing checkpoint steps, one per row.
    pub steps: Vec<u64>,
    pub professions: ProfessionList,
    pub p_he: Array2<f64>,
    pub p_she: Array2<f64>,
    /// `P(he) / P(she)`
    pub ratio: Array2<f64>,
    /// Ratio rescaled by the per-step prior ratio.
    pub normalized: Array2<f64>,
    /// `P(he) + P(she)`
    pub certainty: Array2<f64>,
    pub prior_he: Vec<f64>,
    pub prior_she: Vec<f64>,
}

impl ScoreMatrixSet {
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn num_professions(&self) -> usize {
        self.professions.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_steps(), self.num_professions())
    }

    /// Builds the derived matrices from raw probabilities.
    #[allow(clippy::too_many_arguments)]
    pub fn from_probabilities(
        model: impl Into<String>,
        seed_index: i32,
        verb: Verb,
        steps: Vec<u64>,
        professions: ProfessionList,
        p_he: Array2<f64>,
        p_she: Array2<f64>,
        prior_he: Vec<f64>,
        prior_she: Vec<f64>,
    ) -> Result<Self> {
        let (b, p) = p_he.dim();
        assert_eq!(p_she.dim(), (b, p), "P(he) and P(she) shapes differ");
        assert_eq!(steps.len(), b, "one step per row");
        assert_eq!(professions.len(), p, "one profession per column");
        assert_eq!(prior_he.len(), b);
        assert_eq!(prior_she.len(), b);
        assert!(
            steps.windows(2).all(|w| w[0] < w[1]),
            "steps must be strictly increasing"
        );

        let mut ratio = Array2::zeros((b, p));
        let mut normalized = Array2::zeros((b, p));
        let mut certainty = Array2::zeros((b, p));
        for m in 0..b {
            for (t, name) in professions.names().enumerate() {
                let context = format!("step {}, profession '{name}'", steps[m]);
                let r = metrics::bias_ratio_at(p_he[[m, t]], p_she[[m, t]], &context)?;
                ratio[[m, t]] = r;
                normalized[[m, t]] = metrics::normalized_ratio_at(
                    r,
                    prior_he[m],
                    prior_she[m],
                    &format!("prior template, step {}", steps[m]),
                )?;
                certainty[[m, t]] = metrics::certainty_at(p_he[[m, t]], p_she[[m, t]], &context)?;
            }
        }
        Ok(Self {
            model: model.into(),
            seed_index,
            verb,
            steps,
            professions,
            p_he,
            p_she,
            ratio,
            normalized,
            certainty,
            prior_he,
            prior_she,
        })
    }
}

#[derive(Default, Clone, Copy)]
struct Pair {
    he: Option<f64>,
    she: Option<f64>,
}

impl Pair {
    fn set(&mut self, class: PronounClass, score: f64) -> bool {
        let slot = match class {
            PronounClass::He => &mut self.he,
            PronounClass::She => &mut self.she,
        };
        if slot.is_some() {
            return false;
        }
        *slot = Some(score);
        true
    }
}

/// Collects the records of one (model, seed, verb) into matrices.
///
/// Records for other models, seeds, verbs, or without a checkpoint step are
/// ignored. Every (step, profession) cell and every step's prior template
/// must have exactly one `he`-class and one `she`-class score.
pub fn assemble_matrices(
    records: &[ScoreRecord],
    profile: &ModelProfile,
    seed_index: i32,
    verb: Verb,
    professions: &ProfessionList,
) -> Result<ScoreMatrixSet> {
    let columns = professions.index_map();
    let mut cells: HashMap<(u64, usize), Pair> = HashMap::new();
    let mut priors: HashMap<u64, Pair> = HashMap::new();
    let mut steps = BTreeSet::new();

    for rec in records {
        if rec.model != profile.name || rec.seed_index != seed_index {
            continue;
        }
        let Some(step) = rec.checkpoint else { continue };
        let (rec_verb, _, slot) =
            parse_template(&rec.template, &profile.mask_token).ok_or_else(|| {
                DatastoreError::BadTemplate {
                    template: rec.template.clone(),
                    mask: profile.mask_token.clone(),
                }
            })?;
        if rec_verb != verb {
            continue;
        }
        let class =
            pronoun_class(profile, &rec.pronoun).ok_or_else(|| DatastoreError::UnknownPronoun {
                line: 0,
                pronoun: rec.pronoun.clone(),
                model: rec.model.clone(),
            })?;
        steps.insert(step);
        let is_prior = matches!(slot, Slot::PriorMask) || rec.profession == profile.mask_token;
        let fresh = if is_prior {
            priors.entry(step).or_default().set(class, rec.score)
        } else {
            let col = *columns
                .get(rec.profession.as_str())
                .ok_or_else(|| DatastoreError::UnknownProfession(rec.profession.clone()))?;
            cells.entry((step, col)).or_default().set(class, rec.score)
        };
        if !fresh {
            return Err(DatastoreError::DuplicateCell {
                step,
                profession: rec.profession.clone(),
                pronoun: rec.pronoun.clone(),
            });
        }
    }

    if steps.is_empty() {
        return Err(DatastoreError::NoRecords {
            model: profile.name.clone(),
            seed: seed_index,
            verb,
        });
    }
    let steps: Vec<u64> = steps.into_iter().collect();
    let (b, p) = (steps.len(), professions.len());
    let mut p_he = Array2::zeros((b, p));
    let mut p_she = Array2::zeros((b, p));
    let mut prior_he = Vec::with_capacity(b);
    let mut prior_she = Vec::with_capacity(b);
    let casing = profile.pronoun_casing;

    for (m, &step) in steps.iter().enumerate() {
        let prior = priors.get(&step).copied().unwrap_or_default();
        prior_he.push(prior.he.ok_or_else(|| DatastoreError::MissingPrior {
            step,
            pronoun: casing.he().to_owned(),
        })?);
        prior_she.push(prior.she.ok_or_else(|| DatastoreError::MissingPrior {
            step,
            pronoun: casing.she().to_owned(),
        })?);
        for (t, name) in professions.names().enumerate() {
            let cell = cells.get(&(step, t)).copied().unwrap_or_default();
            let missing = |pronoun: &str| DatastoreError::MissingCell {
                step,
                profession: name.to_owned(),
                pronoun: pronoun.to_owned(),
            };
            p_he[[m, t]] = cell.he.ok_or_else(|| missing(casing.he()))?;
            p_she[[m, t]] = cell.she.ok_or_else(|| missing(casing.she()))?;
        }
    }

    ScoreMatrixSet::from_probabilities(
        profile.name.clone(),
        seed_index,
        verb,
        steps,
        professions.clone(),
        p_he,
        p_she,
        prior_he,
        prior_she,
    )
}
