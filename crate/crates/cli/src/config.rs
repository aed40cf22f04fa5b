//! Run configuration: one TOML document with a section per pipeline stage.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Command-line flags override individual fields via [`Overrides`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ckbias_core::config::{ModelProfile, ProfileRegistry};
use ckbias_core::frequency::DEFAULT_CORPUS;
use ckbias_core::metrics::RatioSource;
use ckbias_core::report::figures::HEATMAP_FLOOR;
use ckbias_core::templates::Verb;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub templates: TemplatesSection,
    #[serde(default)]
    pub datastore: DatastoreSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub frequency: FrequencySection,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatesSection {
    /// Profession lists in merge order; the first is the stereotype list.
    #[serde(default)]
    pub profession_lists: Vec<PathBuf>,
    /// Extra `name<TAB>a|an` entries layered over the shipped lexicon.
    pub determiner_overrides: Option<PathBuf>,
    #[serde(default = "default_verbs")]
    pub verbs: Vec<Verb>,
}

impl Default for TemplatesSection {
    fn default() -> Self {
        Self {
            profession_lists: Vec::new(),
            determiner_overrides: None,
            verbs: default_verbs(),
        }
    }
}

fn default_verbs() -> Vec<Verb> {
    Verb::ALL.to_vec()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatastoreSection {
    /// Model profile file; the built-in profiles are used when unset.
    pub profiles: Option<PathBuf>,
    /// Models to process; defaults to every profile.
    #[serde(default)]
    pub models: Vec<String>,
    /// Score table path pattern with `{model}` and `{seed}` placeholders.
    pub score_table: Option<String>,
    /// Per-model seed selection; defaults to the profile's seeds.
    #[serde(default)]
    pub seeds: BTreeMap<String, Vec<i32>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "default_sources")]
    pub sources: Vec<RatioSource>,
    /// Per-model plateau starts replacing the profile's defaults.
    #[serde(default)]
    pub plateau_k: BTreeMap<String, Vec<usize>>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            sources: default_sources(),
            plateau_k: BTreeMap::new(),
        }
    }
}

fn default_sources() -> Vec<RatioSource> {
    RatioSource::ALL.to_vec()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Professions traced in trajectory plots next to the prior template.
    /// Empty means the first profession of the list.
    #[serde(default)]
    pub trajectory_professions: Vec<String>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            histogram_bins: default_bins(),
            trajectory_professions: Vec::new(),
        }
    }
}

fn default_bins() -> usize {
    ckbias_core::analysis::DEFAULT_HISTOGRAM_BINS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySection {
    /// `year,tokens` CSV of yearly corpus sizes.
    pub corpus_sizes: Option<PathBuf>,
    #[serde(default = "default_corpus")]
    pub corpus: String,
    /// Series cache; the `CKBIAS_NGRAM_CACHE` variable takes precedence.
    pub cache_dir: Option<PathBuf>,
    /// Raw API responses served instead of the network.
    pub fixture_dir: Option<PathBuf>,
    #[serde(default)]
    pub offline: bool,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    /// Where `freq` writes and `analyze` reads frequency tables.
    /// Defaults to `<out>/freq`.
    pub table_dir: Option<PathBuf>,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
}

impl Default for FrequencySection {
    fn default() -> Self {
        Self {
            corpus_sizes: None,
            corpus: default_corpus(),
            cache_dir: None,
            fixture_dir: None,
            offline: false,
            requests_per_minute: default_rpm(),
            max_attempts: default_attempts(),
            table_dir: None,
            top_n: default_top_n(),
        }
    }
}

fn default_corpus() -> String {
    DEFAULT_CORPUS.to_owned()
}

fn default_rpm() -> u32 {
    20
}

fn default_attempts() -> u32 {
    4
}

fn default_top_n() -> usize {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_floor")]
    pub heatmap_floor: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            out: default_out(),
            heatmap_floor: default_floor(),
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_floor() -> f64 {
    HEATMAP_FLOOR
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub offline: bool,
    pub k: Option<usize>,
    pub verb: Option<Verb>,
    pub source: Option<RatioSource>,
    pub out: Option<PathBuf>,
}

/// A loaded configuration with paths resolved and profiles attached.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub profiles: ProfileRegistry,
    /// Global plateau start from `--k`, applied to every model.
    pub k_override: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, resolves relative paths against its directory and
    /// applies `overrides`.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Resolved> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config =
            Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base, overrides)
    }

    pub fn resolve(mut self, base: &Path, overrides: &Overrides) -> Result<Resolved> {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.templates.profession_lists.iter_mut().for_each(join);
        self.templates
            .determiner_overrides
            .iter_mut()
            .for_each(join);
        self.datastore.profiles.iter_mut().for_each(join);
        if let Some(pattern) = &mut self.datastore.score_table {
            if Path::new(pattern.as_str()).is_relative() {
                *pattern = base.join(pattern.as_str()).to_string_lossy().into_owned();
            }
        }
        self.frequency.corpus_sizes.iter_mut().for_each(join);
        self.frequency.cache_dir.iter_mut().for_each(join);
        self.frequency.fixture_dir.iter_mut().for_each(join);
        self.frequency.table_dir.iter_mut().for_each(join);
        join(&mut self.report.out);

        if let Some(out) = &overrides.out {
            self.report.out = out.clone();
        }
        if overrides.offline {
            self.frequency.offline = true;
        }
        if let Some(verb) = overrides.verb {
            self.templates.verbs = vec![verb];
        }
        if let Some(source) = overrides.source {
            self.metrics.sources = vec![source];
        }

        let profiles = match &self.datastore.profiles {
            Some(p) => ProfileRegistry::load(p)
                .with_context(|| format!("loading model profiles {}", p.display()))?,
            None => ProfileRegistry::paper_defaults(),
        };
        let resolved = Resolved {
            config: self,
            profiles,
            k_override: overrides.k,
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

impl Resolved {
    fn validate(&self) -> Result<()> {
        let c = &self.config;
        ensure!(!c.templates.verbs.is_empty(), "[templates] verbs is empty");
        ensure!(!c.metrics.sources.is_empty(), "[metrics] sources is empty");
        ensure!(
            c.analysis.histogram_bins > 0,
            "[analysis] histogram_bins must be positive"
        );
        ensure!(
            (-1.0..=1.0).contains(&c.report.heatmap_floor),
            "[report] heatmap_floor {} outside [-1, 1]",
            c.report.heatmap_floor
        );
        for p in &c.templates.profession_lists {
            ensure!(
                p.is_file(),
                "profession list {} does not exist",
                p.display()
            );
        }
        if let Some(p) = &c.templates.determiner_overrides {
            ensure!(
                p.is_file(),
                "determiner overrides {} do not exist",
                p.display()
            );
        }
        for name in c
            .datastore
            .models
            .iter()
            .chain(c.datastore.seeds.keys())
            .chain(c.metrics.plateau_k.keys())
        {
            if self.profiles.get(name).is_none() {
                bail!("unknown model '{name}' in config");
            }
        }
        for profile in self.models()? {
            for k in self.plateau_starts(profile) {
                if let Some(b) = profile.expected_steps {
                    ensure!(
                        k < b,
                        "plateau start k={k} is not below the {b} checkpoints of model '{}'",
                        profile.name
                    );
                }
            }
            for s in self.seeds(profile) {
                ensure!(
                    (0..=4).contains(&s),
                    "model '{}': seed {s} has no checkpoint series",
                    profile.name
                );
            }
        }
        Ok(())
    }

    /// Profiles selected for processing, in config order.
    pub fn models(&self) -> Result<Vec<&ModelProfile>> {
        let names = &self.config.datastore.models;
        if names.is_empty() {
            return Ok(self.profiles.models().iter().collect());
        }
        names
            .iter()
            .map(|n| {
                self.profiles
                    .get(n)
                    .with_context(|| format!("unknown model '{n}'"))
            })
            .collect()
    }

    pub fn seeds(&self, profile: &ModelProfile) -> Vec<i32> {
        self.config
            .datastore
            .seeds
            .get(&profile.name)
            .cloned()
            .unwrap_or_else(|| profile.seeds.clone())
    }

    pub fn plateau_starts(&self, profile: &ModelProfile) -> Vec<usize> {
        if let Some(k) = self.k_override {
            return vec![k];
        }
        self.config
            .metrics
            .plateau_k
            .get(&profile.name)
            .cloned()
            .unwrap_or_else(|| profile.plateau_starts())
    }

    pub fn score_table(&self, model: &str, seed: i32) -> Result<PathBuf> {
        let pattern = self
            .config
            .datastore
            .score_table
            .as_deref()
            .context("[datastore] score_table is not set")?;
        Ok(PathBuf::from(
            pattern
                .replace("{model}", model)
                .replace("{seed}", &seed.to_string()),
        ))
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.report.out
    }

    pub fn table_dir(&self) -> PathBuf {
        self.config
            .frequency
            .table_dir
            .clone()
            .unwrap_or_else(|| self.out_dir().join("freq"))
    }
}
