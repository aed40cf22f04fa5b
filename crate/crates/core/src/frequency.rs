//! Corpus frequency estimates for professions.
//!
//! The estimate for a term is the inner product of the yearly corpus sizes
//! with the term's yearly relative frequencies, both over 1700–2000.
//! Relative frequencies come from the Google Books Ngram JSON endpoint,
//! either live or from an offline fixture store, and are cached on disk as
//! one JSON file per (term, case mode).

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::templates::ProfessionList;

pub const FIRST_YEAR: i32 = 1700;
pub const LAST_YEAR: i32 = 2000;
pub const NUM_YEARS: usize = (LAST_YEAR - FIRST_YEAR + 1) as usize;

pub const DEFAULT_CORPUS: &str = "en";
pub const NGRAM_ENDPOINT: &str = "https://books.google.com/ngrams/json";
/// Environment variable overriding the series cache directory.
pub const CACHE_DIR_ENV: &str = "CKBIAS_NGRAM_CACHE";

#[derive(Debug, Error)]
pub enum FrequencyError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("request for '{term}' failed after {attempts} attempt(s): {message}")]
    Network {
        term: String,
        attempts: u32,
        message: String,
    },
    #[error("malformed ngram response for '{term}': {message}")]
    Malformed { term: String, message: String },
    #[error("year axes differ: series starts {left_start} with {left_len} years, sizes start {right_start} with {right_len} years")]
    YearAxisMismatch {
        left_start: i32,
        left_len: usize,
        right_start: i32,
        right_len: usize,
    },
    #[error("no offline fixture for '{term}' ({case_mode}) at {path}")]
    OfflineMiss {
        term: String,
        case_mode: CaseMode,
        path: PathBuf,
    },
    #[error("corpus sizes, line {line}: {message}")]
    Sizes { line: usize, message: String },
    #[error("frequency table: {0}")]
    Table(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = FrequencyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseMode {
    /// Query the lowercased term only.
    Lowercase,
    /// Sum over every casing of the term.
    CaseInsensitive,
    /// Query the term exactly as written.
    AsIs,
}

impl CaseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseMode::Lowercase => "lowercase",
            CaseMode::CaseInsensitive => "case-insensitive",
            CaseMode::AsIs => "as-is",
        }
    }
}

impl fmt::Display for CaseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CaseMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lowercase" => Ok(CaseMode::Lowercase),
            "case-insensitive" => Ok(CaseMode::CaseInsensitive),
            "as-is" => Ok(CaseMode::AsIs),
            other => Err(format!("unknown case mode '{other}'")),
        }
    }
}

/// Relative frequency of a term per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearlySeries {
    pub term: String,
    pub case_mode: CaseMode,
    pub first_year: i32,
    pub values: Vec<f64>,
}

impl YearlySeries {
    pub fn zeros(term: impl Into<String>, case_mode: CaseMode) -> Self {
        Self {
            term: term.into(),
            case_mode,
            first_year: FIRST_YEAR,
            values: vec![0.0; NUM_YEARS],
        }
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.values.len() as i32 - 1
    }
}

/// Token count per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSizes {
    pub first_year: i32,
    pub sizes: Vec<f64>,
}

impl CorpusSizes {
    /// Reads a `year,tokens` CSV and keeps the 1700–2000 window, which must be
    /// complete. Years outside the window are ignored.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        Self::from_csv_range(reader, FIRST_YEAR, LAST_YEAR)
    }

    pub fn from_csv_range<R: Read>(reader: R, first: i32, last: i32) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != ["year", "tokens"] {
            return Err(FrequencyError::Sizes {
                line: 1,
                message: format!("expected header 'year,tokens', found {header:?}"),
            });
        }
        let n = (last - first + 1) as usize;
        let mut sizes: Vec<Option<f64>> = vec![None; n];
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row?;
            let bad = |message: String| FrequencyError::Sizes { line, message };
            let year: i32 = row[0]
                .parse()
                .map_err(|_| bad(format!("bad year '{}'", &row[0])))?;
            let tokens: f64 = row[1]
                .parse()
                .map_err(|_| bad(format!("bad token count '{}'", &row[1])))?;
            if !(tokens >= 0.0 && tokens.is_finite()) {
                return Err(bad(format!(
                    "token count must be non-negative, got {tokens}"
                )));
            }
            if !(first..=last).contains(&year) {
                continue;
            }
            let slot = &mut sizes[(year - first) as usize];
            if slot.is_some() {
                return Err(bad(format!("year {year} listed twice")));
            }
            *slot = Some(tokens);
        }
        let sizes = sizes
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| FrequencyError::Sizes {
                    line: 0,
                    message: format!("year {} missing", first + i as i32),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            first_year: first,
            sizes,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| FrequencyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv(file)
    }
}

/// `Σ_year sizes[year] · series[year]`.
pub fn total_frequency(series: &YearlySeries, sizes: &CorpusSizes) -> Result<f64> {
    if series.first_year != sizes.first_year || series.values.len() != sizes.sizes.len() {
        return Err(FrequencyError::YearAxisMismatch {
            left_start: series.first_year,
            left_len: series.values.len(),
            right_start: sizes.first_year,
            right_len: sizes.sizes.len(),
        });
    }
    Ok(series
        .values
        .iter()
        .zip(&sizes.sizes)
        .map(|(y, s)| y * s)
        .sum())
}

/// Estimated corpus frequency for each profession, in profession-list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub professions: Vec<String>,
    pub f: Vec<f64>,
    pub case_mode: CaseMode,
}

impl FrequencyTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["profession", "frequency"])?;
        for (p, f) in self.professions.iter().zip(&self.f) {
            w.write_record([p.as_str(), &f.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, case_mode: CaseMode) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut professions = Vec::new();
        let mut f = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != 2 {
                return Err(FrequencyError::Table(format!(
                    "line {}: expected 2 fields",
                    i + 2
                )));
            }
            let value: f64 = row[1].parse().map_err(|_| {
                FrequencyError::Table(format!("line {}: bad frequency '{}'", i + 2, &row[1]))
            })?;
            if !(value >= 0.0) {
                return Err(FrequencyError::Table(format!(
                    "line {}: negative frequency",
                    i + 2
                )));
            }
            professions.push(row[0].to_owned());
            f.push(value);
        }
        Ok(Self {
            professions,
            f,
            case_mode,
        })
    }

    /// Frequencies reordered to match `professions`; fails on any gap.
    pub fn aligned_to(&self, professions: &[String]) -> Result<Vec<f64>> {
        let lookup: std::collections::HashMap<&str, f64> = self
            .professions
            .iter()
            .map(String::as_str)
            .zip(self.f.iter().copied())
            .collect();
        professions
            .iter()
            .map(|p| {
                lookup.get(p.as_str()).copied().ok_or_else(|| {
                    FrequencyError::Table(format!("no frequency for profession '{p}'"))
                })
            })
            .collect()
    }
}

/// Professions by descending frequency; ties keep profession-list order.
pub fn rank_professions(table: &FrequencyTable, top_n: usize) -> Vec<(String, f64)> {
    let mut order: Vec<usize> = (0..table.f.len()).collect();
    order.sort_by(|&a, &b| table.f[b].total_cmp(&table.f[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(top_n)
        .map(|i| (table.professions[i].clone(), table.f[i]))
        .collect()
}

/// One request to the Ngram endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramQuery {
    pub term: String,
    pub case_mode: CaseMode,
    pub corpus: String,
    pub year_start: i32,
    pub year_end: i32,
}

impl NgramQuery {
    pub fn new(term: &str, case_mode: CaseMode, corpus: &str) -> Self {
        Self {
            term: term.to_owned(),
            case_mode,
            corpus: corpus.to_owned(),
            year_start: FIRST_YEAR,
            year_end: LAST_YEAR,
        }
    }

    /// The phrase actually sent to the API.
    pub fn content(&self) -> String {
        match self.case_mode {
            CaseMode::Lowercase => self.term.to_lowercase(),
            CaseMode::CaseInsensitive | CaseMode::AsIs => self.term.clone(),
        }
    }

    pub fn url(&self, endpoint: &str) -> std::result::Result<reqwest::Url, String> {
        let mut params = vec![
            ("content", self.content()),
            ("year_start", self.year_start.to_string()),
            ("year_end", self.year_end.to_string()),
            ("corpus", self.corpus.clone()),
            ("smoothing", "0".to_owned()),
        ];
        if self.case_mode == CaseMode::CaseInsensitive {
            params.push(("case_insensitive", "true".to_owned()));
        }
        reqwest::Url::parse_with_params(endpoint, &params).map_err(|e| e.to_string())
    }

    /// Stable file stem for caches and fixtures.
    pub fn key(&self) -> String {
        cache_key(&self.term, self.case_mode)
    }
}

/// `<mode>__<slug>_<hash>`: readable and collision-free across casings.
pub fn cache_key(term: &str, case_mode: CaseMode) -> String {
    let slug: String = term
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .take(48)
        .collect();
    let digest = Sha256::digest(term.as_bytes());
    let hash: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("{}__{slug}_{hash}", case_mode.as_str())
}

/// Failure from a transport: `retryable` errors are retried with backoff.
#[derive(Debug, Clone)]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

/// Source of raw Ngram JSON responses.
pub trait NgramTransport: Send + Sync {
    fn get(&self, query: &NgramQuery) -> Result<String, TransportError>;

    /// Whether calls reach the network (and so are rate limited).
    fn is_live(&self) -> bool;

    /// Offline transports report a missing fixture as this error.
    fn offline_miss(&self, _query: &NgramQuery) -> Option<FrequencyError> {
        None
    }
}

/// Blocking HTTP client for the public endpoint.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> std::result::Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("ckbias/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            client,
            endpoint: NGRAM_ENDPOINT.to_owned(),
        })
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }
}

impl NgramTransport for HttpTransport {
    fn get(&self, query: &NgramQuery) -> Result<String, TransportError> {
        let url = query
            .url(&self.endpoint)
            .map_err(|message| TransportError {
                message,
                retryable: false,
            })?;
        let resp = self.client.get(url).send().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError {
                message: format!("HTTP {status}"),
                retryable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        resp.text().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })
    }

    fn is_live(&self) -> bool {
        true
    }
}

/// Reads raw API responses from `<dir>/<key>.json`.
pub struct FixtureTransport {
    dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, query: &NgramQuery) -> PathBuf {
        self.dir.join(format!("{}.json", query.key()))
    }
}

impl NgramTransport for FixtureTransport {
    fn get(&self, query: &NgramQuery) -> Result<String, TransportError> {
        std::fs::read_to_string(self.path_for(query)).map_err(|e| TransportError {
            message: e.to_string(),
            retryable: false,
        })
    }

    fn is_live(&self) -> bool {
        false
    }

    fn offline_miss(&self, query: &NgramQuery) -> Option<FrequencyError> {
        let path = self.path_for(query);
        (!path.exists()).then(|| FrequencyError::OfflineMiss {
            term: query.term.clone(),
            case_mode: query.case_mode,
            path,
        })
    }
}

#[derive(Debug, Deserialize)]
struct NgramEntry {
    ngram: String,
    #[serde(default, rename = "type")]
    kind: Option<String>,
    timeseries: Vec<f64>,
}

/// Extracts the yearly series for `query` from a raw API response.
///
/// An empty response means the term is absent from the corpus and yields an
/// all-zero series. Case-insensitive queries sum the per-casing expansions
/// (falling back to the aggregate entry, then to every entry that matches
/// the term case-insensitively).
pub fn parse_ngram_response(body: &str, query: &NgramQuery) -> Result<YearlySeries> {
    let malformed = |message: String| FrequencyError::Malformed {
        term: query.term.clone(),
        message,
    };
    let entries: Vec<NgramEntry> =
        serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
    let n = (query.year_end - query.year_start + 1) as usize;
    for e in &entries {
        if e.timeseries.len() != n {
            return Err(malformed(format!(
                "'{}' has {} yearly values, expected {n}",
                e.ngram,
                e.timeseries.len()
            )));
        }
        if e.timeseries.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(malformed(format!(
                "'{}' has negative or non-finite values",
                e.ngram
            )));
        }
    }

    let kind_is = |e: &NgramEntry, k: &str| e.kind.as_deref() == Some(k);
    let content = query.content();
    let selected: Vec<&NgramEntry> = match query.case_mode {
        CaseMode::CaseInsensitive => {
            let expansions: Vec<_> = entries
                .iter()
                .filter(|e| kind_is(e, "CASE_INSENSITIVE_EXPANSION"))
                .collect();
            if !expansions.is_empty() {
                expansions
            } else if let Some(agg) = entries.iter().find(|e| kind_is(e, "CASE_INSENSITIVE")) {
                vec![agg]
            } else {
                let lower = content.to_lowercase();
                entries
                    .iter()
                    .filter(|e| e.ngram.to_lowercase() == lower)
                    .collect()
            }
        }
        CaseMode::Lowercase | CaseMode::AsIs => entries
            .iter()
            .filter(|e| e.ngram == content && !kind_is(e, "CASE_INSENSITIVE"))
            .take(1)
            .collect(),
    };

    let mut values = vec![0.0; n];
    for e in selected {
        for (acc, v) in values.iter_mut().zip(&e.timeseries) {
            *acc += v;
        }
    }
    Ok(YearlySeries {
        term: query.term.clone(),
        case_mode: query.case_mode,
        first_year: query.year_start,
        values,
    })
}

/// On-disk cache of parsed series, one JSON file per (term, case mode).
#[derive(Debug, Clone)]
pub struct SeriesCache {
    dir: PathBuf,
}

impl SeriesCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Uses [`CACHE_DIR_ENV`] when set, else `fallback`.
    pub fn from_env_or(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(fallback),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, term: &str, case_mode: CaseMode) -> PathBuf {
        self.dir
            .join(format!("{}.json", cache_key(term, case_mode)))
    }

    pub fn get(&self, term: &str, case_mode: CaseMode) -> Result<Option<YearlySeries>> {
        let path = self.path_for(term, case_mode);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(FrequencyError::Io { path, source }),
        };
        let series: YearlySeries =
            serde_json::from_slice(&bytes).map_err(|e| FrequencyError::Malformed {
                term: term.to_owned(),
                message: format!("cache file {}: {e}", path.display()),
            })?;
        Ok(Some(series))
    }

    /// Writes through a temporary file so readers never see partial JSON.
    pub fn put(&self, series: &YearlySeries) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| FrequencyError::Io { path, source }
        };
        std::fs::create_dir_all(&self.dir).map_err(io(&self.dir))?;
        let path = self.path_for(&series.term, series.case_mode);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec(series).expect("series serializes");
        std::fs::write(&tmp, body).map_err(io(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io(&path))?;
        Ok(())
    }
}

/// Spaces successive live requests at least `interval` apart. Holding the
/// lock across the request serializes all live fetches.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let interval = if requests == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / requests as f64)
        };
        Self {
            interval,
            last: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.interval {
                std::thread::sleep(self.interval - elapsed);
            }
        }
        let out = f();
        *last = Some(Instant::now());
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_secs(2),
        }
    }
}

/// Cached, rate-limited access to yearly series.
pub struct NgramClient {
    transport: Box<dyn NgramTransport>,
    cache: Option<SeriesCache>,
    limiter: RateLimiter,
    retry: RetryPolicy,
    corpus: String,
}

impl NgramClient {
    pub fn new(transport: Box<dyn NgramTransport>) -> Self {
        Self {
            transport,
            cache: None,
            limiter: RateLimiter::per_minute(30),
            retry: RetryPolicy::default(),
            corpus: DEFAULT_CORPUS.to_owned(),
        }
    }

    pub fn with_cache(mut self, cache: SeriesCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = RateLimiter::per_minute(requests_per_minute);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_corpus(mut self, corpus: impl Into<String>) -> Self {
        self.corpus = corpus.into();
        self
    }

    pub fn corpus(&self) -> &str {
        &self.corpus
    }

    pub fn fetch_yearly_series(&self, term: &str, case_mode: CaseMode) -> Result<YearlySeries> {
        if let Some(cache) = &self.cache {
            if let Some(series) = cache.get(term, case_mode)? {
                return Ok(series);
            }
        }
        let query = NgramQuery::new(term, case_mode, &self.corpus);
        if let Some(err) = self.transport.offline_miss(&query) {
            return Err(err);
        }
        let body = self.get_with_retry(&query)?;
        let series = parse_ngram_response(&body, &query)?;
        if let Some(cache) = &self.cache {
            cache.put(&series)?;
        }
        Ok(series)
    }

    fn get_with_retry(&self, query: &NgramQuery) -> Result<String> {
        let attempts = self.retry.max_attempts.max(1);
        let mut delay = self.retry.base_delay;
        let mut last = String::new();
        for attempt in 1..=attempts {
            let result = if self.transport.is_live() {
                self.limiter.run(|| self.transport.get(query))
            } else {
                self.transport.get(query)
            };
            match result {
                Ok(body) => return Ok(body),
                Err(err) => {
                    last = err.message;
                    if !err.retryable {
                        return Err(FrequencyError::Network {
                            term: query.term.clone(),
                            attempts: attempt,
                            message: last,
                        });
                    }
                    if attempt < attempts {
                        log::warn!(
                            "ngram request for '{}' failed ({last}); retrying in {delay:?}",
                            query.term
                        );
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(FrequencyError::Network {
            term: query.term.clone(),
            attempts,
            message: last,
        })
    }
}

/// Frequency of every profession under one case mode.
pub fn estimate_frequencies(
    professions: &ProfessionList,
    case_mode: CaseMode,
    client: &NgramClient,
    sizes: &CorpusSizes,
) -> Result<FrequencyTable> {
    let mut f = Vec::with_capacity(professions.len());
    for name in professions.names() {
        let series = client.fetch_yearly_series(name, case_mode)?;
        f.push(total_frequency(&series, sizes)?);
    }
    Ok(FrequencyTable {
        professions: professions.names().map(str::to_owned).collect(),
        f,
        case_mode,
    })
}
