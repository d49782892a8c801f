//! Metadata rule tree that turns a catalog into domain-shifted datasets.
//!
//! Per origin, every melanoma/nevus record with a known age and a mapped
//! localization falls into exactly one of five candidate groups:
//!
//! | suffix | rule                          |
//! |--------|-------------------------------|
//! | (none) | age > 30, body (default)      |
//! | `A`    | age <= 30, any localization   |
//! | `LH`   | age > 30, head/neck           |
//! | `LP`   | age > 30, palms/soles         |
//! | `LO`   | age > 30, oral/genital        |
//!
//! The abbreviation is the origin letter followed by the suffix (`H`, `BLH`, ...).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metadata::{
    lesion_ids_of, Catalog, LesionClass, LocalizationBucket, LocalizationMap, Origin,
};
use crate::rng::keyed_hash;

/// Age threshold separating the young group from everyone else.
pub const AGE_SPLIT_YEARS: u16 = 30;
pub const DEFAULT_MIN_TOTAL: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum GroupingError {
    #[error("source origin `{0}` not present in catalog")]
    UnknownOrigin(String),
    #[error("class {class} of group {group} has {count} members, need at least 2")]
    ClassTooSmall {
        group: String,
        class: LesionClass,
        count: usize,
    },
    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("image `{0}` not found in catalog")]
    UnknownImage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeCondition {
    AtMost30,
    Over30,
}

impl AgeCondition {
    pub fn matches(&self, age: u16) -> bool {
        match self {
            AgeCondition::AtMost30 => age <= AGE_SPLIT_YEARS,
            AgeCondition::Over30 => age > AGE_SPLIT_YEARS,
        }
    }
}

/// Leaf of the rule tree. `bucket == None` means all known localizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupRule {
    pub age_cond: AgeCondition,
    pub bucket: Option<LocalizationBucket>,
}

impl GroupRule {
    pub const DEFAULT: GroupRule = GroupRule {
        age_cond: AgeCondition::Over30,
        bucket: Some(LocalizationBucket::Body),
    };

    /// Leaves in table order.
    pub const LEAVES: [GroupRule; 5] = [
        GroupRule::DEFAULT,
        GroupRule {
            age_cond: AgeCondition::AtMost30,
            bucket: None,
        },
        GroupRule {
            age_cond: AgeCondition::Over30,
            bucket: Some(LocalizationBucket::HeadNeck),
        },
        GroupRule {
            age_cond: AgeCondition::Over30,
            bucket: Some(LocalizationBucket::PalmsSoles),
        },
        GroupRule {
            age_cond: AgeCondition::Over30,
            bucket: Some(LocalizationBucket::OralGenital),
        },
    ];

    /// Walks the tree: young first, then localization among the older.
    pub fn classify(age: Option<u16>, bucket: LocalizationBucket) -> Option<GroupRule> {
        let age = age?;
        if bucket == LocalizationBucket::Unknown {
            return None;
        }
        if AgeCondition::AtMost30.matches(age) {
            return Some(GroupRule::LEAVES[1]);
        }
        Some(GroupRule {
            age_cond: AgeCondition::Over30,
            bucket: Some(bucket),
        })
    }

    pub fn suffix(&self) -> &'static str {
        match (self.age_cond, self.bucket) {
            (AgeCondition::AtMost30, _) => "A",
            (AgeCondition::Over30, Some(LocalizationBucket::Body)) => "",
            (AgeCondition::Over30, Some(LocalizationBucket::HeadNeck)) => "LH",
            (AgeCondition::Over30, Some(LocalizationBucket::PalmsSoles)) => "LP",
            (AgeCondition::Over30, Some(LocalizationBucket::OralGenital)) => "LO",
            (AgeCondition::Over30, _) => "LU",
        }
    }

    pub fn is_default(&self) -> bool {
        *self == GroupRule::DEFAULT
    }
}

impl fmt::Display for GroupRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let age = match self.age_cond {
            AgeCondition::AtMost30 => "age <= 30",
            AgeCondition::Over30 => "age > 30",
        };
        match self.bucket {
            Some(b) => write!(f, "{age}, loc = {b}"),
            None => write!(f, "{age}, all localizations"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub melanoma: usize,
    pub nevus: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.melanoma + self.nevus
    }

    pub fn get(&self, class: LesionClass) -> usize {
        match class {
            LesionClass::Melanoma => self.melanoma,
            LesionClass::Nevus => self.nevus,
        }
    }

    fn bump(&mut self, class: LesionClass) {
        match class {
            LesionClass::Melanoma => self.melanoma += 1,
            LesionClass::Nevus => self.nevus += 1,
        }
    }
}

impl fmt::Display for ClassCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : {} ({})", self.melanoma, self.nevus, self.total())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftFlags {
    pub biological_shift: bool,
    pub technical_shift: bool,
}

impl ShiftFlags {
    pub fn derive(rule: &GroupRule, origin: &Origin, source_origin: &Origin) -> Self {
        ShiftFlags {
            biological_shift: !rule.is_default(),
            technical_shift: origin != source_origin,
        }
    }
}

/// A named domain: members of one origin selected by one rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupedDataset {
    pub abbrev: String,
    pub origin: Origin,
    pub rule: GroupRule,
    pub flags: ShiftFlags,
    pub class_counts: ClassCounts,
    pub member_ids: Vec<String>,
}

impl GroupedDataset {
    pub fn total(&self) -> usize {
        self.member_ids.len()
    }

    /// Member ids of one class, in member order.
    pub fn members_of<'a>(
        &'a self,
        catalog: &'a Catalog,
        class: LesionClass,
    ) -> impl Iterator<Item = &'a String> + 'a {
        self.member_ids
            .iter()
            .filter(move |id| catalog.get(id).and_then(|r| r.class()) == Some(class))
    }

    fn with_members(&self, abbrev: String, members: Vec<String>, catalog: &Catalog) -> Self {
        let mut counts = ClassCounts::default();
        for id in &members {
            if let Some(c) = catalog.get(id).and_then(|r| r.class()) {
                counts.bump(c);
            }
        }
        GroupedDataset {
            abbrev,
            origin: self.origin.clone(),
            rule: self.rule,
            flags: self.flags,
            class_counts: counts,
            member_ids: members,
        }
    }
}

/// Applies the rule tree to every origin in the catalog.
///
/// Groups come out ordered by origin (source first, then HAM, BCN, MSK,
/// others) and within an origin in [`GroupRule::LEAVES`] order. All five
/// leaves are emitted even when empty.
pub fn apply_grouping(
    catalog: &Catalog,
    source_origin: &Origin,
    map: &LocalizationMap,
) -> Result<Vec<GroupedDataset>, GroupingError> {
    let mut origins: BTreeSet<Origin> = catalog.records().iter().map(|r| r.origin.clone()).collect();
    if !catalog.is_empty() && !origins.contains(source_origin) {
        return Err(GroupingError::UnknownOrigin(source_origin.to_string()));
    }
    origins.insert(source_origin.clone());
    let mut ordered: Vec<Origin> = vec![source_origin.clone()];
    ordered.extend(origins.into_iter().filter(|o| o != source_origin));

    let mut groups: BTreeMap<(usize, usize), GroupedDataset> = BTreeMap::new();
    for (oi, origin) in ordered.iter().enumerate() {
        for (li, rule) in GroupRule::LEAVES.iter().enumerate() {
            groups.insert(
                (oi, li),
                GroupedDataset {
                    abbrev: format!("{}{}", origin.abbrev_prefix(), rule.suffix()),
                    origin: origin.clone(),
                    rule: *rule,
                    flags: ShiftFlags::derive(rule, origin, source_origin),
                    class_counts: ClassCounts::default(),
                    member_ids: Vec::new(),
                },
            );
        }
    }

    for r in catalog.records() {
        let Some(class) = r.class() else { continue };
        let bucket = map.map_localization(&r.localization_raw);
        let Some(rule) = GroupRule::classify(r.age_years, bucket) else {
            continue;
        };
        let oi = ordered.iter().position(|o| *o == r.origin).expect("origin collected");
        let li = GroupRule::LEAVES
            .iter()
            .position(|l| *l == rule)
            .expect("classify returns a leaf");
        let g = groups.get_mut(&(oi, li)).expect("group pre-created");
        g.member_ids.push(r.image_id.clone());
        g.class_counts.bump(class);
    }
    Ok(groups.into_values().collect())
}

/// Splits groups into those large enough to keep and those with `total <= min_total`.
pub fn exclude_small(
    groups: Vec<GroupedDataset>,
    min_total: usize,
) -> (Vec<GroupedDataset>, Vec<GroupedDataset>) {
    groups.into_iter().partition(|g| g.total() > min_total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Keep all images of one lesion on the same side.
    pub lesion_aware: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
            lesion_aware: true,
        }
    }
}

/// Per-class train quota: `floor(fraction * n)`.
pub fn train_quota(n: usize, fraction: f64) -> usize {
    // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Class-stratified split with `floor(fraction * n)` of each class in train.
///
/// Units are single images, or whole lesion clusters in lesion-aware mode.
/// Units are ordered by a seeded hash of their key and assigned greedily to
/// train while they fit the per-class quota; everything else goes to holdout.
pub fn stratified_split(
    group: &GroupedDataset,
    spec: &SplitSpec,
    catalog: &Catalog,
) -> Result<(GroupedDataset, GroupedDataset), GroupingError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(GroupingError::InvalidFraction(spec.train_fraction));
    }
    for class in LesionClass::ALL {
        let count = group.class_counts.get(class);
        if count < 2 {
            return Err(GroupingError::ClassTooSmall {
                group: group.abbrev.clone(),
                class,
                count,
            });
        }
    }

    // unit key -> (members, class counts)
    let mut units: BTreeMap<String, (Vec<&String>, ClassCounts)> = BTreeMap::new();
    for id in &group.member_ids {
        let rec = catalog
            .get(id)
            .ok_or_else(|| GroupingError::UnknownImage(id.clone()))?;
        let Some(class) = rec.class() else { continue };
        let key = match (&rec.lesion_id, spec.lesion_aware) {
            (Some(l), true) => format!("lesion:{l}"),
            _ => format!("image:{id}"),
        };
        let unit = units.entry(key).or_default();
        unit.0.push(id);
        unit.1.bump(class);
    }

    let mut order: Vec<(u64, &String)> = units
        .keys()
        .map(|k| (keyed_hash(spec.seed, k), k))
        .collect();
    order.sort();

    let quota = ClassCounts {
        melanoma: train_quota(group.class_counts.melanoma, spec.train_fraction),
        nevus: train_quota(group.class_counts.nevus, spec.train_fraction),
    };
    let mut filled = ClassCounts::default();
    let mut train_set: HashSet<&String> = HashSet::new();
    for (_, key) in order {
        let (members, counts) = &units[key];
        if filled.melanoma + counts.melanoma <= quota.melanoma
            && filled.nevus + counts.nevus <= quota.nevus
        {
            filled.melanoma += counts.melanoma;
            filled.nevus += counts.nevus;
            train_set.extend(members.iter().copied());
        }
    }

    let (train, holdout): (Vec<String>, Vec<String>) = group
        .member_ids
        .iter()
        .cloned()
        .partition(|id| train_set.contains(id));
    Ok((
        group.with_members(format!("{}_train", group.abbrev), train, catalog),
        group.with_members(format!("{}_holdout", group.abbrev), holdout, catalog),
    ))
}

/// Lesion ids with images on both sides, sorted.
pub fn leakage_guard(
    train: &GroupedDataset,
    test: &GroupedDataset,
    catalog: &Catalog,
) -> Vec<String> {
    let a = lesion_ids_of(catalog, &train.member_ids);
    let b = lesion_ids_of(catalog, &test.member_ids);
    let mut shared: Vec<String> = a.intersection(&b).map(|s| s.to_string()).collect();
    shared.sort();
    shared
}

/// Group manifest consumed by every downstream stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupManifest {
    pub source_origin: Origin,
    pub min_total: usize,
    pub groups: Vec<GroupedDataset>,
    pub removed: Vec<GroupedDataset>,
}

impl GroupManifest {
    pub fn build(
        catalog: &Catalog,
        source_origin: &Origin,
        map: &LocalizationMap,
        min_total: usize,
    ) -> Result<Self, GroupingError> {
        let all = apply_grouping(catalog, source_origin, map)?;
        let (groups, removed) = exclude_small(all, min_total);
        Ok(GroupManifest {
            source_origin: source_origin.clone(),
            min_total,
            groups,
            removed,
        })
    }

    pub fn get(&self, abbrev: &str) -> Option<&GroupedDataset> {
        self.groups.iter().find(|g| g.abbrev == abbrev)
    }
}
