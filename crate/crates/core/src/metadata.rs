//! Catalog parsing, localization bucketing and lesion-level duplicate detection.
//!
//! A catalog is a CSV file with the columns
//! `image_id,lesion_id,diagnosis,age_years,localization,origin,sex`.
//! Only `image_id` and `diagnosis` are required; an empty cell means the
//! optional field is absent.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column order used when writing catalogs.
pub const CATALOG_HEADER: [&str; 7] = [
    "image_id",
    "lesion_id",
    "diagnosis",
    "age_years",
    "localization",
    "origin",
    "sex",
];

pub const MAX_AGE_YEARS: u16 = 120;

const DEFAULT_LOCALIZATION_MAP: &str = include_str!("../resources/localization_map.csv");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetadataError {
    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: u64, reason: String },
    #[error("duplicate image ids: {0:?}")]
    DuplicateImageId(Vec<String>),
    #[error("missing required column `{0}`")]
    MissingRequiredColumn(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnosis {
    Melanoma,
    Nevus,
    Other,
}

impl Diagnosis {
    /// Case-insensitive exact match on `melanoma` / `nevus`; anything else is `Other`.
    pub fn parse(raw: &str) -> Self {
        let s = raw.trim();
        if s.eq_ignore_ascii_case("melanoma") {
            Diagnosis::Melanoma
        } else if s.eq_ignore_ascii_case("nevus") {
            Diagnosis::Nevus
        } else {
            Diagnosis::Other
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Diagnosis::Melanoma => "melanoma",
            Diagnosis::Nevus => "nevus",
            Diagnosis::Other => "other",
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The two diagnosis classes every analysis is keyed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionClass {
    Melanoma,
    Nevus,
}

impl LesionClass {
    pub const ALL: [LesionClass; 2] = [LesionClass::Melanoma, LesionClass::Nevus];

    pub fn from_diagnosis(d: Diagnosis) -> Option<Self> {
        match d {
            Diagnosis::Melanoma => Some(LesionClass::Melanoma),
            Diagnosis::Nevus => Some(LesionClass::Nevus),
            Diagnosis::Other => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LesionClass::Melanoma => "melanoma",
            LesionClass::Nevus => "nevus",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        Self::from_diagnosis(Diagnosis::parse(raw))
    }
}

impl fmt::Display for LesionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Acquisition origin of an image. Serialized as its name (`HAM`, `BCN`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Origin {
    Ham,
    Bcn,
    Msk,
    Other(String),
}

impl Origin {
    pub fn parse(raw: &str) -> Self {
        let s = raw.trim();
        match s.to_ascii_uppercase().as_str() {
            "HAM" => Origin::Ham,
            "BCN" => Origin::Bcn,
            "MSK" => Origin::Msk,
            _ => Origin::Other(s.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Origin::Ham => "HAM",
            Origin::Bcn => "BCN",
            Origin::Msk => "MSK",
            Origin::Other(s) => s,
        }
    }

    /// Leading letter of grouped-dataset abbreviations (`H`, `B`, `M`, ...).
    pub fn abbrev_prefix(&self) -> String {
        match self {
            Origin::Ham => "H".into(),
            Origin::Bcn => "B".into(),
            Origin::Msk => "M".into(),
            Origin::Other(s) => s
                .chars()
                .find(|c| c.is_alphanumeric())
                .map(|c| c.to_ascii_uppercase().to_string())
                .unwrap_or_else(|| "X".into()),
        }
    }
}

impl From<String> for Origin {
    fn from(s: String) -> Self {
        Origin::parse(&s)
    }
}

impl From<Origin> for String {
    fn from(o: Origin) -> Self {
        o.name().to_string()
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    fn parse(raw: &str) -> Option<Self> {
        let s = raw.trim();
        if s.eq_ignore_ascii_case("male") {
            Some(Sex::Male)
        } else if s.eq_ignore_ascii_case("female") {
            Some(Sex::Female)
        } else {
            None
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub image_id: String,
    pub lesion_id: Option<String>,
    pub diagnosis: Diagnosis,
    pub age_years: Option<u16>,
    pub localization_raw: String,
    pub origin: Origin,
    /// Carried through for provenance; never used for grouping.
    pub sex: Option<Sex>,
}

impl MetadataRecord {
    pub fn class(&self) -> Option<LesionClass> {
        LesionClass::from_diagnosis(self.diagnosis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocalizationBucket {
    Body,
    HeadNeck,
    PalmsSoles,
    OralGenital,
    Unknown,
}

impl LocalizationBucket {
    pub const ALL: [LocalizationBucket; 5] = [
        LocalizationBucket::Body,
        LocalizationBucket::HeadNeck,
        LocalizationBucket::PalmsSoles,
        LocalizationBucket::OralGenital,
        LocalizationBucket::Unknown,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            LocalizationBucket::Body => "body",
            LocalizationBucket::HeadNeck => "head_neck",
            LocalizationBucket::PalmsSoles => "palms_soles",
            LocalizationBucket::OralGenital => "oral_genital",
            LocalizationBucket::Unknown => "unknown",
        }
    }

    pub fn from_token(raw: &str) -> Option<Self> {
        let norm: String = raw
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match norm.as_str() {
            "body" => Some(LocalizationBucket::Body),
            "headneck" => Some(LocalizationBucket::HeadNeck),
            "palmssoles" => Some(LocalizationBucket::PalmsSoles),
            "oralgenital" => Some(LocalizationBucket::OralGenital),
            "unknown" => Some(LocalizationBucket::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for LocalizationBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Raw localization string to bucket lookup. Keys are trimmed and lowercased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalizationMap {
    entries: HashMap<String, LocalizationBucket>,
}

fn normalize_key(raw: &str) -> String {
    raw.trim().to_lowercase()
}

impl LocalizationMap {
    pub fn new() -> Self {
        LocalizationMap {
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, raw: &str, bucket: LocalizationBucket) {
        self.entries.insert(normalize_key(raw), bucket);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses a `raw,bucket` CSV.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, MetadataError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let headers = reader.headers().map_err(|e| malformed(0, e))?.clone();
        let raw_idx = column_index(&headers, "raw")
            .ok_or_else(|| MetadataError::MissingRequiredColumn("raw".into()))?;
        let bucket_idx = column_index(&headers, "bucket")
            .ok_or_else(|| MetadataError::MissingRequiredColumn("bucket".into()))?;
        let mut map = LocalizationMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| malformed(0, e))?;
            let line = line_of(&row);
            let raw = row.get(raw_idx).unwrap_or_default();
            let bucket_raw = row.get(bucket_idx).unwrap_or_default();
            let bucket = LocalizationBucket::from_token(bucket_raw).ok_or_else(|| {
                MetadataError::MalformedCsv {
                    line,
                    reason: format!("unknown bucket `{bucket_raw}`"),
                }
            })?;
            map.insert(raw, bucket);
        }
        Ok(map)
    }

    /// The bundled map covering the archive's anatomical-site vocabulary.
    pub fn default_map() -> Self {
        Self::from_csv(DEFAULT_LOCALIZATION_MAP.as_bytes())
            .expect("bundled localization map is valid")
    }

    /// Total lookup; misses resolve to `Unknown` with a warning.
    pub fn map_localization(&self, raw: &str) -> LocalizationBucket {
        match self.lookup(raw) {
            Some(b) => b,
            None => {
                if !raw.trim().is_empty() {
                    log::warn!("unmapped localization `{}` -> unknown", raw.trim());
                }
                LocalizationBucket::Unknown
            }
        }
    }

    /// Like [`map_localization`](Self::map_localization) but without logging.
    pub fn lookup(&self, raw: &str) -> Option<LocalizationBucket> {
        self.entries.get(&normalize_key(raw)).copied()
    }

    pub fn buckets(&self) -> impl Iterator<Item = LocalizationBucket> + '_ {
        self.entries.values().copied()
    }
}

impl Default for LocalizationMap {
    fn default() -> Self {
        Self::default_map()
    }
}

/// Free-function form of [`LocalizationMap::map_localization`].
pub fn map_localization(raw: &str, map: &LocalizationMap) -> LocalizationBucket {
    map.map_localization(raw)
}

/// An ordered, id-unique list of metadata records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    records: Vec<MetadataRecord>,
    source_name: String,
    index: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(
        records: Vec<MetadataRecord>,
        source_name: impl Into<String>,
    ) -> Result<Self, MetadataError> {
        let mut index = HashMap::with_capacity(records.len());
        let mut dups = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.image_id.clone(), i).is_some() && !dups.contains(&r.image_id) {
                dups.push(r.image_id.clone());
            }
        }
        if !dups.is_empty() {
            return Err(MetadataError::DuplicateImageId(dups));
        }
        Ok(Catalog {
            records,
            source_name: source_name.into(),
            index,
        })
    }

    pub fn records(&self) -> &[MetadataRecord] {
        &self.records
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&MetadataRecord> {
        self.index.get(image_id).map(|&i| &self.records[i])
    }

    /// Concatenates catalogs, failing on ids shared between them.
    pub fn merge(
        catalogs: impl IntoIterator<Item = Catalog>,
        source_name: impl Into<String>,
    ) -> Result<Self, MetadataError> {
        let records = catalogs.into_iter().flat_map(|c| c.records).collect();
        Catalog::new(records, source_name)
    }
}

fn malformed(line: u64, e: impl fmt::Display) -> MetadataError {
    MetadataError::MalformedCsv {
        line,
        reason: e.to_string(),
    }
}

fn line_of(row: &csv::StringRecord) -> u64 {
    row.position().map(|p| p.line()).unwrap_or(0)
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
}

fn non_empty(s: Option<&str>) -> Option<String> {
    s.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

fn parse_age(raw: &str, line: u64) -> Result<Option<u16>, MetadataError> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let bad = || MetadataError::MalformedCsv {
        line,
        reason: format!("invalid age `{s}`"),
    };
    // Some archives export ages as floats ("45.0").
    let value: f64 = s.parse().map_err(|_| bad())?;
    if value.fract() != 0.0 || !(0.0..=MAX_AGE_YEARS as f64).contains(&value) {
        return Err(bad());
    }
    Ok(Some(value as u16))
}

/// Parses a catalog CSV. Any unreadable row rejects the whole file.
pub fn parse_catalog(bytes: &[u8], source_name: &str) -> Result<Catalog, MetadataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let headers = reader.headers().map_err(|e| malformed(1, e))?.clone();
    let col = |name: &str| column_index(&headers, name);
    let id_idx =
        col("image_id").ok_or_else(|| MetadataError::MissingRequiredColumn("image_id".into()))?;
    let diag_idx =
        col("diagnosis").ok_or_else(|| MetadataError::MissingRequiredColumn("diagnosis".into()))?;
    let lesion_idx = col("lesion_id");
    let age_idx = col("age_years");
    let loc_idx = col("localization");
    let origin_idx = col("origin");
    let sex_idx = col("sex");

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = match e.position() {
                Some(p) => p.line(),
                None => 0,
            };
            malformed(line, e)
        })?;
        let line = line_of(&row);
        let field = |idx: Option<usize>| idx.and_then(|i| row.get(i));
        let image_id = non_empty(field(Some(id_idx))).ok_or(MetadataError::MalformedCsv {
            line,
            reason: "empty image_id".into(),
        })?;
        let diagnosis = Diagnosis::parse(field(Some(diag_idx)).unwrap_or_default());
        let age_years = parse_age(field(age_idx).unwrap_or_default(), line)?;
        let origin = match non_empty(field(origin_idx)) {
            Some(o) => Origin::parse(&o),
            None => Origin::Other(source_name.to_string()),
        };
        records.push(MetadataRecord {
            image_id,
            lesion_id: non_empty(field(lesion_idx)),
            diagnosis,
            age_years,
            localization_raw: field(loc_idx).unwrap_or_default().trim().to_string(),
            origin,
            sex: field(sex_idx).and_then(Sex::parse),
        });
    }
    Catalog::new(records, source_name)
}

/// Writes a catalog in canonical column order.
pub fn write_catalog(catalog: &Catalog) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(CATALOG_HEADER)
        .expect("writing to memory");
    for r in catalog.records() {
        let age = r.age_years.map(|a| a.to_string()).unwrap_or_default();
        writer
            .write_record([
                r.image_id.as_str(),
                r.lesion_id.as_deref().unwrap_or(""),
                r.diagnosis.as_str(),
                age.as_str(),
                r.localization_raw.as_str(),
                r.origin.name(),
                r.sex.map(|s| s.as_str()).unwrap_or(""),
            ])
            .expect("writing to memory");
    }
    writer.into_inner().expect("flushing to memory")
}

/// Images that share a lesion id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DuplicateGroup {
    pub lesion_id: String,
    pub image_ids: Vec<String>,
}

/// Groups of two or more records sharing a lesion id, sorted by lesion id.
pub fn detect_duplicates(catalog: &Catalog) -> Vec<DuplicateGroup> {
    let mut by_lesion: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for r in catalog.records() {
        if let Some(l) = r.lesion_id.as_deref() {
            by_lesion.entry(l).or_default().push(r.image_id.clone());
        }
    }
    by_lesion
        .into_iter()
        .filter(|(_, ids)| ids.len() >= 2)
        .map(|(l, image_ids)| DuplicateGroup {
            lesion_id: l.to_string(),
            image_ids,
        })
        .collect()
}

/// Set of lesion ids that occur in `ids`, resolved through `catalog`.
pub(crate) fn lesion_ids_of<'a>(
    catalog: &'a Catalog,
    ids: impl IntoIterator<Item = &'a String>,
) -> HashSet<&'a str> {
    ids.into_iter()
        .filter_map(|id| catalog.get(id))
        .filter_map(|r| r.lesion_id.as_deref())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
image_id,lesion_id,diagnosis,age_years,localization,origin,sex
ISIC_1,L1,nevus,45,anterior torso,HAM,male
ISIC_2,,Nevus,,head/neck,BCN,
ISIC_3,L2,MELANOMA,70.0,palms/soles,MSK,female
";

    #[test]
    fn parses_three_row_fixture() {
        let cat = parse_catalog(FIXTURE.as_bytes(), "fixture").unwrap();
        assert_eq!(cat.len(), 3);
        let r = &cat.records()[0];
        assert_eq!(r.image_id, "ISIC_1");
        assert_eq!(r.lesion_id.as_deref(), Some("L1"));
        assert_eq!(r.diagnosis, Diagnosis::Nevus);
        assert_eq!(r.age_years, Some(45));
        assert_eq!(r.origin, Origin::Ham);
        assert_eq!(r.sex, Some(Sex::Male));

        let r = &cat.records()[1];
        assert_eq!(r.lesion_id, None);
        assert_eq!(r.diagnosis, Diagnosis::Nevus);
        assert_eq!(r.age_years, None);
        assert_eq!(r.origin, Origin::Bcn);
        assert_eq!(r.sex, None);

        let r = &cat.records()[2];
        assert_eq!(r.diagnosis, Diagnosis::Melanoma);
        assert_eq!(r.age_years, Some(70));
        assert_eq!(r.origin, Origin::Msk);
        assert_eq!(r.localization_raw, "palms/soles");
    }

    #[test]
    fn header_only_is_empty() {
        let cat = parse_catalog(b"image_id,diagnosis\n", "x").unwrap();
        assert!(cat.is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let csv = "image_id,diagnosis\nX,nevus\nY,nevus\nX,melanoma\n";
        assert_eq!(
            parse_catalog(csv.as_bytes(), "x").unwrap_err(),
            MetadataError::DuplicateImageId(vec!["X".into()])
        );
    }

    #[test]
    fn missing_diagnosis_column() {
        let err = parse_catalog(b"image_id,age_years\nA,3\n", "x").unwrap_err();
        assert_eq!(err, MetadataError::MissingRequiredColumn("diagnosis".into()));
    }

    #[test]
    fn ragged_row_rejects_file_with_line() {
        let csv = "image_id,diagnosis\nA,nevus\nB,nevus,extra\n";
        match parse_catalog(csv.as_bytes(), "x").unwrap_err() {
            MetadataError::MalformedCsv { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn out_of_range_age_rejected() {
        let csv = "image_id,diagnosis,age_years\nA,nevus,121\n";
        assert!(matches!(
            parse_catalog(csv.as_bytes(), "x"),
            Err(MetadataError::MalformedCsv { line: 2, .. })
        ));
        let csv = "image_id,diagnosis,age_years\nA,nevus,4.5\n";
        assert!(parse_catalog(csv.as_bytes(), "x").is_err());
    }

    #[test]
    fn other_diagnoses_map_to_other() {
        let csv = "image_id,diagnosis\nA,basal cell carcinoma\nB,nevus \nC,melanoma metastasis\n";
        let cat = parse_catalog(csv.as_bytes(), "x").unwrap();
        let d: Vec<_> = cat.records().iter().map(|r| r.diagnosis).collect();
        assert_eq!(d, [Diagnosis::Other, Diagnosis::Nevus, Diagnosis::Other]);
    }

    #[test]
    fn default_map_examples() {
        let map = LocalizationMap::default_map();
        assert_eq!(map.map_localization("head/neck"), LocalizationBucket::HeadNeck);
        assert_eq!(map.map_localization("anterior torso"), LocalizationBucket::Body);
        assert_eq!(map.map_localization("  Anterior Torso "), LocalizationBucket::Body);
        assert_eq!(
            map.map_localization("zzz-unknown-site"),
            LocalizationBucket::Unknown
        );
    }

    #[test]
    fn default_map_reaches_every_known_bucket() {
        let map = LocalizationMap::default_map();
        let reached: HashSet<_> = map.buckets().collect();
        for b in LocalizationBucket::ALL {
            if b != LocalizationBucket::Unknown {
                assert!(reached.contains(&b), "{b} unreachable");
            }
        }
    }

    #[test]
    fn map_rejects_unknown_bucket_token() {
        assert!(LocalizationMap::from_csv(b"raw,bucket\nfoo,elbow\n").is_err());
    }

    fn rec(id: &str, lesion: Option<&str>) -> MetadataRecord {
        MetadataRecord {
            image_id: id.into(),
            lesion_id: lesion.map(Into::into),
            diagnosis: Diagnosis::Nevus,
            age_years: None,
            localization_raw: String::new(),
            origin: Origin::Ham,
            sex: None,
        }
    }

    #[test]
    fn duplicates_by_lesion() {
        let cat = Catalog::new(vec![rec("a", Some("L1")), rec("b", Some("L1"))], "t").unwrap();
        assert_eq!(
            detect_duplicates(&cat),
            vec![DuplicateGroup {
                lesion_id: "L1".into(),
                image_ids: vec!["a".into(), "b".into()]
            }]
        );

        let cat = Catalog::new(vec![rec("a", None), rec("b", None)], "t").unwrap();
        assert!(detect_duplicates(&cat).is_empty());

        let cat = Catalog::new(
            vec![
                rec("a", Some("L1")),
                rec("b", Some("L1")),
                rec("c", Some("L1")),
                rec("d", Some("L2")),
                rec("e", None),
            ],
            "t",
        )
        .unwrap();
        let groups = detect_duplicates(&cat);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].lesion_id, "L1");
        assert_eq!(groups[0].image_ids.len(), 3);
    }
}
