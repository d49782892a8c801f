//! Metadata download from a paginated image-archive API.
//!
//! The archive answers `GET <endpoint>?limit=N&<filter>` with
//! `{"next": <url|null>, "results": [...]}`. Pages are fetched one after
//! another by following `next` and each raw page is cached as
//! `page_00000.json`, `page_00001.json`, ... under a directory keyed by the
//! request. A rerun replays cached pages and resumes at the first missing
//! one; a fully cached request never touches the network.

use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use serde_json::Value;

use domshift_core::metadata::{write_catalog, Catalog, Diagnosis, MetadataRecord, Origin, Sex};

use crate::error::{CliError, Result};
use crate::report::{sha256_hex, write_atomic};

pub const DEFAULT_ENDPOINT: &str = "https://api.isic-archive.com/api/v2/images/";

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub endpoint: String,
    /// Extra query parameters, e.g. `collections=66`.
    pub filter: Vec<(String, String)>,
    pub page_size: usize,
    pub cache_dir: PathBuf,
    /// Assigned to every record instead of deriving origin from attribution.
    pub origin: Option<Origin>,
    pub retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub timeout: Duration,
}

impl FetchOptions {
    pub fn new(endpoint: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        FetchOptions {
            endpoint: endpoint.into(),
            filter: Vec::new(),
            page_size: 100,
            cache_dir: cache_dir.into(),
            origin: None,
            retries: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
            timeout: Duration::from_secs(60),
        }
    }

    fn first_url(&self) -> String {
        let mut url = format!("{}?limit={}", self.endpoint, self.page_size);
        for (k, v) in &self.filter {
            url.push('&');
            url.push_str(k);
            url.push('=');
            url.push_str(v);
        }
        url
    }

    /// Cache directory of this request.
    pub fn request_dir(&self) -> PathBuf {
        let key = sha256_hex(self.first_url().as_bytes());
        self.cache_dir.join(&key[..16])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchSummary {
    pub pages: usize,
    pub cached_pages: usize,
    pub records: usize,
}

fn delay_for(attempt: u32, opts: &FetchOptions) -> Duration {
    let factor = 2u32.saturating_pow(attempt);
    opts.base_delay.saturating_mul(factor).min(opts.max_delay)
}

fn get_with_retry(agent: &ureq::Agent, url: &str, opts: &FetchOptions) -> Result<String> {
    let mut last = String::new();
    for attempt in 0..=opts.retries {
        if attempt > 0 {
            let d = delay_for(attempt - 1, opts);
            warn!("retrying {url} in {d:?} ({last})");
            std::thread::sleep(d);
        }
        match agent.get(url).call() {
            Ok(mut resp) => match resp.body_mut().read_to_string() {
                Ok(body) => return Ok(body),
                Err(e) => last = e.to_string(),
            },
            Err(e) => last = e.to_string(),
        }
    }
    Err(CliError::Network(format!("{url}: {last} after {} attempts", opts.retries + 1)))
}

/// The parts of a page the client relies on.
struct Page {
    next: Option<String>,
    results: Vec<Value>,
}

fn parse_page(body: &str) -> Result<Page> {
    let v: Value = serde_json::from_str(body).map_err(|e| CliError::SchemaDrift(format!("page is not JSON: {e}")))?;
    let results = v
        .get("results")
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::SchemaDrift("page has no `results` array".into()))?
        .clone();
    let next = match v.get("next") {
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(Value::Null) | Some(Value::String(_)) => None,
        _ => return Err(CliError::SchemaDrift("page has no `next` field".into())),
    };
    Ok(Page { next, results })
}

fn field<'a>(v: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(v, |cur, k| cur.get(k))
}

fn text(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Older metadata has one `diagnosis`; newer has a hierarchy whose most
/// specific level is tried first.
fn diagnosis_of(clinical: &Value) -> Diagnosis {
    for key in ["diagnosis", "diagnosis_3", "diagnosis_2", "diagnosis_1"] {
        if let Some(raw) = text(clinical.get(key)) {
            let lower = raw.to_ascii_lowercase();
            if lower.contains("melanoma") {
                return Diagnosis::Melanoma;
            }
            if lower.contains("nevus") || lower.contains("naevus") {
                return Diagnosis::Nevus;
            }
        }
    }
    Diagnosis::Other
}

pub fn origin_from_attribution(attribution: &str) -> Origin {
    let a = attribution.to_ascii_lowercase();
    if a.contains("barcelona") {
        Origin::Bcn
    } else if a.contains("vienna") || a.contains("vidir") || a.contains("ham10000") {
        Origin::Ham
    } else if a.contains("sloan") || a.contains("mskcc") {
        Origin::Msk
    } else {
        Origin::Other(attribution.trim().to_string())
    }
}

/// Converts one archive record, failing on missing required fields.
pub fn record_from_json(v: &Value, origin: Option<&Origin>) -> Result<MetadataRecord> {
    let image_id = text(v.get("isic_id"))
        .ok_or_else(|| CliError::SchemaDrift("record without `isic_id`".into()))?;
    let clinical = field(v, &["metadata", "clinical"])
        .filter(|c| c.is_object())
        .ok_or_else(|| CliError::SchemaDrift(format!("{image_id}: no `metadata.clinical` object")))?;
    let age_years = match clinical.get("age_approx") {
        Some(Value::Number(n)) => n.as_f64().filter(|a| *a >= 0.0 && a.fract() == 0.0).map(|a| a as u16),
        _ => None,
    };
    let sex = text(clinical.get("sex")).and_then(|s| match s.to_ascii_lowercase().as_str() {
        "male" => Some(Sex::Male),
        "female" => Some(Sex::Female),
        _ => None,
    });
    let origin = match origin {
        Some(o) => o.clone(),
        None => origin_from_attribution(&text(v.get("attribution")).unwrap_or_default()),
    };
    Ok(MetadataRecord {
        image_id,
        lesion_id: text(clinical.get("lesion_id")),
        diagnosis: diagnosis_of(clinical),
        age_years,
        localization_raw: text(clinical.get("anatom_site_general")).unwrap_or_default(),
        origin,
        sex,
    })
}

fn page_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("page_{k:05}.json"))
}

/// Downloads (or replays) every page and writes a canonical catalog CSV sorted by image id.
pub fn fetch_catalog(opts: &FetchOptions, out: &Path) -> Result<FetchSummary> {
    let dir = opts.request_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(opts.timeout))
        .build()
        .into();

    let mut records = Vec::new();
    let mut url = Some(opts.first_url());
    let (mut pages, mut cached_pages) = (0, 0);
    while let Some(u) = url {
        let path = page_path(&dir, pages);
        let body = if path.exists() {
            cached_pages += 1;
            std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?
        } else {
            let body = get_with_retry(&agent, &u, opts)?;
            // validate before caching so a drifted page is never replayed
            parse_page(&body)?;
            write_atomic(&path, body.as_bytes())?;
            body
        };
        let page = parse_page(&body)?;
        for r in &page.results {
            records.push(record_from_json(r, opts.origin.as_ref())?);
        }
        pages += 1;
        url = page.next;
    }
    info!("{pages} pages ({cached_pages} from cache), {} records", records.len());

    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let before = records.len();
    records.dedup_by(|a, b| a.image_id == b.image_id);
    if records.len() != before {
        warn!("dropped {} repeated records", before - records.len());
    }
    let catalog = Catalog::new(records, "archive")?;
    write_atomic(out, &write_catalog(&catalog))?;
    Ok(FetchSummary {
        pages,
        cached_pages,
        records: catalog.len(),
    })
}
