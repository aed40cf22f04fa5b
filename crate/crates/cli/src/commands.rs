use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use ckbias_core::analysis::{self, CorrelationMatrix};
use ckbias_core::config::ModelProfile;
use ckbias_core::datastore::{self, ScoreMatrixSet, ScoreRecord};
use ckbias_core::frequency::{
    self, CaseMode, CorpusSizes, FixtureTransport, FrequencyError, FrequencyTable, HttpTransport,
    NgramClient, NgramQuery, NgramTransport, RetryPolicy, SeriesCache, TransportError,
};
use ckbias_core::metrics::{self, FluctuationSummary, PlateauConfig, RatioSource};
use ckbias_core::report::figures::{self as figs, TrajectorySelection};
use ckbias_core::report::{self, atomic_write, AnalysisEntry, Report, ReportMetadata, RunParams};
use ckbias_core::templates::{self, DeterminerOverrides, ProfessionList};

use crate::config::Resolved;

/// Case modes estimated by `freq`.
pub const FREQ_CASE_MODES: [CaseMode; 2] = [CaseMode::Lowercase, CaseMode::CaseInsensitive];

pub fn frequency_table_path(dir: &Path, mode: CaseMode) -> PathBuf {
    dir.join(format!("frequency_{mode}.csv"))
}

fn load_professions(cfg: &Resolved) -> Result<ProfessionList> {
    let lists = &cfg.config.templates.profession_lists;
    if lists.is_empty() {
        bail!("[templates] profession_lists is empty");
    }
    templates::load_professions(lists).context("loading profession lists")
}

fn load_overrides(cfg: &Resolved) -> Result<DeterminerOverrides> {
    let mut overrides = DeterminerOverrides::shipped().clone();
    if let Some(path) = &cfg.config.templates.determiner_overrides {
        let extra = DeterminerOverrides::load(path)
            .with_context(|| format!("loading determiner overrides {}", path.display()))?;
        overrides.extend(&extra);
    }
    Ok(overrides)
}

/// Writes `templates/<model>.csv` for every selected model; returns the
/// manifest paths.
pub fn cmd_templates(cfg: &Resolved) -> Result<Vec<PathBuf>> {
    let professions = load_professions(cfg)?;
    let overrides = load_overrides(cfg)?;
    let verbs = &cfg.config.templates.verbs;
    let mut written = Vec::new();
    for profile in cfg.models()? {
        let specs =
            templates::enumerate_probe_set(&professions, verbs, &profile.mask_token, &overrides)
                .with_context(|| format!("enumerating templates for {}", profile.name))?;
        let mut buf = Vec::new();
        templates::write_manifest(&mut buf, &specs, &profile.mask_token)?;
        let path = cfg
            .out_dir()
            .join("templates")
            .join(format!("{}.csv", profile.name));
        atomic_write(&path, &buf)?;
        log::info!(
            "{}: {} professions, {} templates -> {}",
            profile.name,
            professions.len(),
            specs.len(),
            path.display()
        );
        written.push(path);
    }
    Ok(written)
}

/// Offline transport without fixtures: every uncached term is a miss.
struct CacheOnly {
    cache_dir: PathBuf,
}

impl NgramTransport for CacheOnly {
    fn get(&self, query: &NgramQuery) -> Result<String, TransportError> {
        Err(TransportError {
            message: format!("offline: '{}' not cached", query.term),
            retryable: false,
        })
    }

    fn is_live(&self) -> bool {
        false
    }

    fn offline_miss(&self, query: &NgramQuery) -> Option<FrequencyError> {
        Some(FrequencyError::OfflineMiss {
            term: query.term.clone(),
            case_mode: query.case_mode,
            path: self.cache_dir.join(format!("{}.json", query.key())),
        })
    }
}

fn ngram_client(cfg: &Resolved) -> Result<NgramClient> {
    let f = &cfg.config.frequency;
    let fallback = f
        .cache_dir
        .clone()
        .unwrap_or_else(|| cfg.out_dir().join("ngram-cache"));
    let cache = SeriesCache::from_env_or(fallback);
    let transport: Box<dyn NgramTransport> = match (&f.fixture_dir, f.offline) {
        (Some(dir), _) => Box::new(FixtureTransport::new(dir)),
        (None, true) => Box::new(CacheOnly {
            cache_dir: cache.dir().to_path_buf(),
        }),
        (None, false) => Box::new(
            HttpTransport::new(Duration::from_secs(30))
                .map_err(|e| anyhow::anyhow!("building HTTP client: {e}"))?,
        ),
    };
    Ok(NgramClient::new(transport)
        .with_cache(cache)
        .with_rate_limit(f.requests_per_minute)
        .with_retry(RetryPolicy {
            max_attempts: f.max_attempts,
            ..RetryPolicy::default()
        })
        .with_corpus(f.corpus.clone()))
}

/// Estimates frequencies in both case modes; writes each table and its top-N
/// ranking. Returns the tables.
pub fn cmd_freq(cfg: &Resolved) -> Result<Vec<FrequencyTable>> {
    let professions = load_professions(cfg)?;
    let sizes_path = cfg
        .config
        .frequency
        .corpus_sizes
        .as_ref()
        .context("[frequency] corpus_sizes is not set")?;
    let sizes = CorpusSizes::load(sizes_path)
        .with_context(|| format!("loading corpus sizes {}", sizes_path.display()))?;
    let client = ngram_client(cfg)?;
    let dir = cfg.table_dir();
    let top_n = cfg.config.frequency.top_n;
    let mut tables = Vec::new();
    for mode in FREQ_CASE_MODES {
        let table = frequency::estimate_frequencies(&professions, mode, &client, &sizes)
            .with_context(|| format!("estimating {mode} frequencies"))?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        atomic_write(&frequency_table_path(&dir, mode), &buf)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "profession", "frequency"])?;
        for (i, (name, f)) in frequency::rank_professions(&table, top_n)
            .into_iter()
            .enumerate()
        {
            w.write_record([(i + 1).to_string(), name, f.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?;
        atomic_write(&dir.join(format!("top{top_n}_{mode}.csv")), &bytes)?;
        tables.push(table);
    }
    Ok(tables)
}

fn load_frequency_table(cfg: &Resolved, mode: CaseMode) -> Result<Option<FrequencyTable>> {
    let path = frequency_table_path(&cfg.table_dir(), mode);
    if !path.exists() {
        if cfg.config.frequency.table_dir.is_some() {
            bail!(
                "frequency table {} not found; run `ckbias freq` first",
                path.display()
            );
        }
        log::info!(
            "no {mode} frequency table at {}; skipping frequency correlation",
            path.display()
        );
        return Ok(None);
    }
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let table = FrequencyTable::read_csv(BufReader::new(file), mode)
        .with_context(|| format!("reading frequency table {}", path.display()))?;
    Ok(Some(table))
}

fn load_scores(cfg: &Resolved, profile: &ModelProfile, seed: i32) -> Result<Vec<ScoreRecord>> {
    let path = cfg.score_table(&profile.name, seed)?;
    let file = File::open(&path).with_context(|| {
        format!(
            "score table for model '{}' seed {seed}: {}",
            profile.name,
            path.display()
        )
    })?;
    datastore::parse_score_table(BufReader::new(file), &cfg.profiles).with_context(|| {
        format!(
            "parsing score table {} (model '{}', seed {seed})",
            path.display(),
            profile.name
        )
    })
}

fn trajectory_selection(
    cfg: &Resolved,
    professions: &ProfessionList,
) -> Result<Vec<TrajectorySelection>> {
    let mut sel = vec![TrajectorySelection::Prior];
    let names = &cfg.config.analysis.trajectory_professions;
    if names.is_empty() {
        sel.push(TrajectorySelection::Profession(0));
    }
    for name in names {
        let t = professions.index_of(name).with_context(|| {
            format!("trajectory profession '{name}' is not in the profession list")
        })?;
        sel.push(TrajectorySelection::Profession(t));
    }
    Ok(sel)
}

/// Runs every analysis for one (model, seed, verb) and returns the summaries
/// keyed by (source, k) for the cross-seed step.
fn analyze_run(
    cfg: &Resolved,
    profile: &ModelProfile,
    mset: &ScoreMatrixSet,
    freq: Option<&FrequencyTable>,
    selection: &[TrajectorySelection],
    report: &mut Report,
) -> Result<BTreeMap<(RatioSource, usize), FluctuationSummary>> {
    let seed = mset.seed_index;
    let verb = mset.verb;
    let b = mset.num_steps();
    let ctx = || format!("model '{}' seed {seed} verb '{verb}'", profile.name);
    if let Some(expected) = profile.expected_steps {
        if expected != b {
            log::warn!(
                "{}: {b} checkpoints found, profile expects {expected}",
                ctx()
            );
        }
    }
    let params = |source: Option<RatioSource>, k: Option<usize>| RunParams {
        model: profile.name.clone(),
        seed: Some(seed),
        verb,
        source,
        k,
    };

    report.push(AnalysisEntry::Trajectory {
        params: params(None, None),
        steps: mset.steps.clone(),
        series: figs::trajectory_series(
            mset,
            selection,
            profile.pronoun_casing.he(),
            profile.pronoun_casing.she(),
        )
        .with_context(ctx)?,
    });

    let mut summaries = BTreeMap::new();
    for &source in &cfg.config.metrics.sources {
        let matrix = analysis::rq4_checkpoint_correlations(mset, source)
            .with_context(|| format!("checkpoint correlations, {source}, {}", ctx()))?;
        report.push(AnalysisEntry::Rq4 {
            params: params(Some(source), None),
            matrix,
        });
        for k in cfg.plateau_starts(profile) {
            let plateau =
                PlateauConfig::new(k, b).with_context(|| format!("plateau k={k}, {}", ctx()))?;
            let summary = metrics::fluctuation_summary(mset, plateau, source)
                .with_context(|| format!("fluctuation, {source}, k={k}, {}", ctx()))?;
            let prior_point = match source {
                RatioSource::Unnormalized => Some(
                    metrics::prior_point(mset, plateau)
                        .with_context(|| format!("prior point, k={k}, {}", ctx()))?,
                ),
                RatioSource::Normalized => None,
            };
            let p = params(Some(source), Some(k));
            report.push(AnalysisEntry::Fluctuation {
                params: p.clone(),
                steps: b,
                professions: summary.professions.clone(),
                v: summary.v.clone(),
                mean_certainty: summary.mean_certainty.clone(),
                mean_normalized: summary.mean_normalized.clone(),
                mean_unnormalized: summary.mean_unnormalized.clone(),
                prior_point,
            });
            let stats = analysis::rq1_stats(&summary, cfg.config.analysis.histogram_bins)
                .with_context(|| format!("fluctuation range, {source}, k={k}, {}", ctx()))?;
            report.push(AnalysisEntry::Rq1 {
                params: p.clone(),
                stats,
            });
            let pearson = analysis::rq2_certainty_correlation(&summary)
                .with_context(|| format!("certainty correlation, {source}, k={k}, {}", ctx()))?;
            report.push(AnalysisEntry::Rq2 {
                params: p.clone(),
                pearson,
            });
            if let Some(table) = freq {
                let pearson =
                    analysis::rq3_frequency_correlation(&summary, table).with_context(|| {
                        format!("frequency correlation, {source}, k={k}, {}", ctx())
                    })?;
                report.push(AnalysisEntry::Rq3 {
                    params: p,
                    case_mode: table.case_mode,
                    pearson,
                });
            }
            summaries.insert((source, k), summary);
        }
    }
    Ok(summaries)
}

/// Full pipeline: score tables to report bundle and figures. Returns the
/// report that was written.
pub fn cmd_analyze(cfg: &Resolved) -> Result<Report> {
    let professions = load_professions(cfg)?;
    let selection = trajectory_selection(cfg, &professions)?;
    let mut freq_tables = BTreeMap::new();
    for mode in FREQ_CASE_MODES {
        if let Some(t) = load_frequency_table(cfg, mode)? {
            freq_tables.insert(mode, t);
        }
    }

    let metadata = ReportMetadata {
        histogram_bins: cfg.config.analysis.histogram_bins,
        heatmap_floor: cfg.config.report.heatmap_floor,
        ngram_corpus: (!freq_tables.is_empty()).then(|| cfg.config.frequency.corpus.clone()),
        ..ReportMetadata::default()
    };
    let mut report = Report::new(metadata);
    for (mode, table) in &freq_tables {
        let ranked = frequency::rank_professions(table, table.professions.len());
        report.push(AnalysisEntry::FrequencyRank {
            case_mode: *mode,
            professions: ranked.iter().map(|(n, _)| n.clone()).collect(),
            frequencies: ranked.iter().map(|(_, f)| *f).collect(),
        });
    }

    for profile in cfg.models()? {
        let seeds = cfg.seeds(profile);
        if seeds.is_empty() {
            log::warn!("model '{}' has no seeds configured; skipping", profile.name);
            continue;
        }
        let records: Vec<(i32, Vec<ScoreRecord>)> = seeds
            .iter()
            .map(|&s| load_scores(cfg, profile, s).map(|r| (s, r)))
            .collect::<Result<_>>()?;
        let freq = freq_tables.get(&profile.case_mode);
        for &verb in &cfg.config.templates.verbs {
            let mut by_key: BTreeMap<(RatioSource, usize), BTreeMap<i32, FluctuationSummary>> =
                BTreeMap::new();
            for (seed, recs) in &records {
                let mset = datastore::assemble_matrices(recs, profile, *seed, verb, &professions)
                    .with_context(|| {
                    format!(
                        "assembling model '{}' seed {seed} verb '{verb}'",
                        profile.name
                    )
                })?;
                for (key, summary) in
                    analyze_run(cfg, profile, &mset, freq, &selection, &mut report)?
                {
                    by_key.entry(key).or_default().insert(*seed, summary);
                }
            }
            if seeds.len() < 2 {
                continue;
            }
            for ((source, k), per_seed) in &by_key {
                let matrix: CorrelationMatrix = analysis::rq5_seed_correlations(per_seed, *source)
                    .with_context(|| {
                        format!(
                            "seed correlations for '{}' verb '{verb}' {source} k={k}",
                            profile.name
                        )
                    })?;
                report.push(AnalysisEntry::Rq5 {
                    params: RunParams {
                        model: profile.name.clone(),
                        seed: None,
                        verb,
                        source: Some(*source),
                        k: Some(*k),
                    },
                    matrix,
                });
            }
        }
    }

    let out = cfg.out_dir();
    report::export_report(&report, out).context("writing report bundle")?;
    report::render_figures(&report, out).context("rendering figures")?;
    Ok(report)
}

/// Re-renders figures from an existing `report/report.json`.
pub fn cmd_report(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let path = out_dir.join("report").join("report.json");
    let report = Report::load(&path).with_context(|| format!("loading {}", path.display()))?;
    report::render_figures(&report, out_dir).context("rendering figures")
}
