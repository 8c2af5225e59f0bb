//! Morphometric cohort tables: data model, CSV ingestion, cleaning and splitting.
//!
//! A table holds one row per subject with a left and a right hemisphere vector.
//! Both vectors follow the same [`Schema`]: `measures.len() * regions.len()`
//! values laid out measure-major, so feature `index = measure * R + region`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SeededRng, Stream};

/// The seven shape measures, in column order.
pub const MEASURES: [&str; 7] = [
    "surface_area",
    "travel_depth",
    "geodesic_depth",
    "mean_curvature",
    "convexity",
    "thickness",
    "volume",
];

/// Cortical labels used by the default schema and the synthetic generator.
pub const DEFAULT_REGIONS: [&str; 25] = [
    "caudal_anterior_cingulate",
    "caudal_middle_frontal",
    "cuneus",
    "entorhinal",
    "fusiform",
    "inferior_parietal",
    "inferior_temporal",
    "isthmus_cingulate",
    "lateral_occipital",
    "lateral_orbitofrontal",
    "lingual",
    "medial_orbitofrontal",
    "middle_temporal",
    "parahippocampal",
    "paracentral",
    "pars_opercularis",
    "pars_triangularis",
    "posterior_cingulate",
    "precentral",
    "precuneus",
    "rostral_middle_frontal",
    "superior_frontal",
    "superior_parietal",
    "superior_temporal",
    "supramarginal",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Diagnosis {
    CN,
    MCI,
    AD,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 3] = [Diagnosis::CN, Diagnosis::MCI, Diagnosis::AD];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::CN => "CN",
            Diagnosis::MCI => "MCI",
            Diagnosis::AD => "AD",
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Diagnosis {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "CN" => Ok(Diagnosis::CN),
            "MCI" => Ok(Diagnosis::MCI),
            "AD" => Ok(Diagnosis::AD),
            _ => Err(()),
        }
    }
}

/// A two-group task. The more severe diagnosis is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "cn-mci")]
    CnVsMci,
    #[serde(rename = "cn-ad")]
    CnVsAd,
    #[serde(rename = "mci-ad")]
    MciVsAd,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [Comparison::CnVsMci, Comparison::CnVsAd, Comparison::MciVsAd];

    pub fn negative(self) -> Diagnosis {
        match self {
            Comparison::CnVsMci | Comparison::CnVsAd => Diagnosis::CN,
            Comparison::MciVsAd => Diagnosis::MCI,
        }
    }

    pub fn positive(self) -> Diagnosis {
        match self {
            Comparison::CnVsMci => Diagnosis::MCI,
            Comparison::CnVsAd | Comparison::MciVsAd => Diagnosis::AD,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::CnVsMci => "cn-mci",
            Comparison::CnVsAd => "cn-ad",
            Comparison::MciVsAd => "mci-ad",
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Comparison {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Comparison::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown comparison {s:?} (expected cn-mci, cn-ad or mci-ad)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hemisphere {
    Left,
    Right,
}

impl Hemisphere {
    pub const BOTH: [Hemisphere; 2] = [Hemisphere::Left, Hemisphere::Right];

    pub fn prefix(self) -> &'static str {
        match self {
            Hemisphere::Left => "L",
            Hemisphere::Right => "R",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub hemisphere: Hemisphere,
    pub region: String,
    pub measure: String,
    pub index: usize,
}

impl FeatureDescriptor {
    /// CSV column name, `<hemi>.<region>.<measure>`.
    pub fn name(&self) -> String {
        format!("{}.{}.{}", self.hemisphere.prefix(), self.region, self.measure)
    }
}

/// Per-hemisphere layout shared by both hemispheres.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub measures: Vec<String>,
    pub regions: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            measures: MEASURES.iter().map(|s| s.to_string()).collect(),
            regions: DEFAULT_REGIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Schema {
    /// Features per hemisphere.
    pub fn len(&self) -> usize {
        self.measures.len() * self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, measure: usize, region: usize) -> usize {
        measure * self.regions.len() + region
    }

    pub fn descriptor(&self, hemisphere: Hemisphere, index: usize) -> FeatureDescriptor {
        let r = self.regions.len();
        FeatureDescriptor {
            hemisphere,
            region: self.regions[index % r].clone(),
            measure: self.measures[index / r].clone(),
            index,
        }
    }

    pub fn descriptors(&self, hemisphere: Hemisphere) -> Vec<FeatureDescriptor> {
        (0..self.len()).map(|i| self.descriptor(hemisphere, i)).collect()
    }

    pub fn column_name(&self, hemisphere: Hemisphere, index: usize) -> String {
        self.descriptor(hemisphere, index).name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub diagnosis: Diagnosis,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl SubjectRecord {
    pub fn values(&self, hemisphere: Hemisphere) -> &[f64] {
        match hemisphere {
            Hemisphere::Left => &self.left,
            Hemisphere::Right => &self.right,
        }
    }
}

/// One line of the cleaning log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningEntry {
    pub subject_id: String,
    pub reason: String,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub cleaning_log: Vec<CleaningEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    schema: Schema,
    subjects: Vec<SubjectRecord>,
    pub provenance: Provenance,
}

impl FeatureTable {
    /// Validates ids, vector lengths and finiteness.
    pub fn new(schema: Schema, subjects: Vec<SubjectRecord>) -> Result<Self> {
        let width = schema.len();
        let mut seen = HashSet::with_capacity(subjects.len());
        for s in &subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::DuplicateSubjectId(s.subject_id.clone()));
            }
            for (hemi, v) in [(Hemisphere::Left, &s.left), (Hemisphere::Right, &s.right)] {
                if v.len() != width {
                    return Err(Error::SchemaMismatch(format!(
                        "subject {} has {} {:?} values, schema has {width}",
                        s.subject_id,
                        v.len(),
                        hemi
                    )));
                }
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::SchemaMismatch(format!(
                        "subject {} has non-finite {}",
                        s.subject_id,
                        schema.column_name(hemi, i)
                    )));
                }
            }
        }
        Ok(FeatureTable {
            schema,
            subjects,
            provenance: Provenance::default(),
        })
    }

    fn derived(&self, subjects: Vec<SubjectRecord>) -> Self {
        FeatureTable {
            schema: self.schema.clone(),
            subjects,
            provenance: self.provenance.clone(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn class_counts(&self) -> BTreeMap<Diagnosis, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.subjects {
            *counts.entry(s.diagnosis).or_insert(0) += 1;
        }
        counts
    }

    /// Diagnoses present, in severity order.
    pub fn classes(&self) -> Vec<Diagnosis> {
        self.class_counts().into_keys().collect()
    }

    /// The (negative, positive) pair of a two-class table.
    pub fn binary_classes(&self) -> Result<(Diagnosis, Diagnosis)> {
        match self.classes().as_slice() {
            [neg, pos] => Ok((*neg, *pos)),
            other => Err(Error::NotBinary(other.to_vec())),
        }
    }

    pub fn subject_ids(&self) -> impl Iterator<Item = &str> {
        self.subjects.iter().map(|s| s.subject_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaMode {
    /// Seven canonical measures by 25 regions per hemisphere.
    #[serde(rename = "strict_175")]
    Strict175,
    /// Any complete measure-by-region grid.
    Infer,
}

pub fn load_csv(path: impl AsRef<Path>, mode: SchemaMode) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = read_csv(file, mode)?;
    table.provenance.source = Some(path.display().to_string());
    Ok(table)
}

/// Reads the cohort CSV dialect. Row numbers in errors are 1-based file lines
/// (the header is line 1); column numbers are 1-based.
pub fn read_csv<R: Read>(reader: R, mode: SchemaMode) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::MissingHeader),
        Some(h) => h?,
    };
    if header.len() < 2 || &header[0] != "subject_id" || &header[1] != "diagnosis" {
        return Err(Error::MissingHeader);
    }
    let columns: Vec<&str> = header.iter().skip(2).collect();
    let schema = parse_header(&columns, mode)?;
    let width = schema.len();

    let mut subjects = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let row = i + 2;
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateSubjectId(id));
        }
        let diagnosis = rec[1]
            .parse::<Diagnosis>()
            .map_err(|_| Error::UnknownDiagnosisLabel {
                row,
                label: rec[1].to_string(),
            })?;
        let mut values = Vec::with_capacity(2 * width);
        for (j, cell) in rec.iter().enumerate().skip(2) {
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericCell {
                    row,
                    col: j + 1,
                    value: cell.to_string(),
                })?;
            values.push(v);
        }
        let right = values.split_off(width);
        subjects.push(SubjectRecord {
            subject_id: id,
            diagnosis,
            left: values,
            right,
        });
    }
    FeatureTable::new(schema, subjects)
}

fn split_column(name: &str) -> Option<(&str, &str, &str)> {
    let (hemi, rest) = name.split_once('.')?;
    let (region, measure) = rest.rsplit_once('.')?;
    if region.is_empty() || measure.is_empty() {
        return None;
    }
    Some((hemi, region, measure))
}

fn parse_header(columns: &[&str], mode: SchemaMode) -> Result<Schema> {
    if columns.is_empty() || !columns.len().is_multiple_of(2) {
        return Err(Error::SchemaMismatch(format!(
            "expected an even, non-zero number of feature columns, found {}",
            columns.len()
        )));
    }
    let half = columns.len() / 2;
    let mut parsed = Vec::with_capacity(columns.len());
    for (i, c) in columns.iter().enumerate() {
        let (hemi, region, measure) = split_column(c)
            .ok_or_else(|| Error::SchemaMismatch(format!("malformed feature column {c:?}")))?;
        let expected = if i < half { "L" } else { "R" };
        if hemi != expected {
            return Err(Error::SchemaMismatch(format!(
                "column {c:?}: all L columns must precede all R columns, equal in number"
            )));
        }
        parsed.push((region, measure));
    }

    let mut measures: Vec<String> = Vec::new();
    for (_, m) in &parsed[..half] {
        if measures.last().map(String::as_str) != Some(*m) {
            if measures.iter().any(|x| x == m) {
                return Err(Error::SchemaMismatch(format!(
                    "measure {m:?} is not contiguous; columns must be measure-major"
                )));
            }
            measures.push(m.to_string());
        }
    }
    if !half.is_multiple_of(measures.len()) {
        return Err(Error::SchemaMismatch(
            "left hemisphere columns do not form a measure-by-region grid".into(),
        ));
    }
    let n_regions = half / measures.len();
    let regions: Vec<String> = parsed[..n_regions].iter().map(|(r, _)| r.to_string()).collect();
    let schema = Schema { measures, regions };

    for hemi in Hemisphere::BOTH {
        let offset = if hemi == Hemisphere::Left { 0 } else { half };
        for i in 0..half {
            let d = schema.descriptor(hemi, i);
            let (region, measure) = parsed[offset + i];
            if region != d.region || measure != d.measure {
                return Err(Error::SchemaMismatch(format!(
                    "column {:?} out of order, expected {:?}",
                    columns[offset + i],
                    d.name()
                )));
            }
        }
    }

    if mode == SchemaMode::Strict175 {
        if half != 175 {
            return Err(Error::SchemaMismatch(format!(
                "strict mode needs 175 columns per hemisphere, found {half}"
            )));
        }
        if schema.measures.iter().map(String::as_str).ne(MEASURES) {
            return Err(Error::SchemaMismatch(format!(
                "strict mode needs measures {MEASURES:?}, found {:?}",
                schema.measures
            )));
        }
    }
    Ok(schema)
}

/// Writes the cohort CSV dialect. Values use the shortest decimal form that
/// parses back to the same `f64`.
pub fn write_csv_to<W: Write>(table: &FeatureTable, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let schema = table.schema();
    let mut header = vec!["subject_id".to_string(), "diagnosis".to_string()];
    for hemi in Hemisphere::BOTH {
        header.extend((0..schema.len()).map(|i| schema.column_name(hemi, i)));
    }
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for s in table.subjects() {
        row.clear();
        row.push(s.subject_id.clone());
        row.push(s.diagnosis.to_string());
        row.extend(s.left.iter().chain(&s.right).map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_csv(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(table, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum CleanPolicy {
    /// Drop any subject with a value within `tolerance` of zero (exact zero by default).
    DropZeroSubjects { tolerance: f64 },
    KeepAll,
}

impl Default for CleanPolicy {
    fn default() -> Self {
        CleanPolicy::DropZeroSubjects { tolerance: 0.0 }
    }
}

/// Removes subjects carrying the abnormal zero sentinel in either hemisphere.
/// The removals are appended to the returned table's cleaning log.
pub fn clean(table: &FeatureTable, policy: CleanPolicy) -> Result<(FeatureTable, Vec<String>)> {
    let tolerance = match policy {
        CleanPolicy::KeepAll => return Ok((table.clone(), Vec::new())),
        CleanPolicy::DropZeroSubjects { tolerance } => tolerance,
    };
    let schema = table.schema();
    let mut kept = Vec::with_capacity(table.len());
    let mut log = Vec::new();
    for s in table.subjects() {
        let features: Vec<String> = Hemisphere::BOTH
            .into_iter()
            .flat_map(|h| {
                s.values(h)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() <= tolerance)
                    .map(move |(i, _)| schema.column_name(h, i))
            })
            .collect();
        if features.is_empty() {
            kept.push(s.clone());
        } else {
            log.push(CleaningEntry {
                subject_id: s.subject_id.clone(),
                reason: "zero_value".into(),
                features,
            });
        }
    }
    if kept.is_empty() && !table.is_empty() {
        return Err(Error::AllSubjectsRemoved("the table".into()));
    }
    let mut out = table.derived(kept);
    let after = out.class_counts();
    for class in table.classes() {
        if !after.contains_key(&class) {
            return Err(Error::AllSubjectsRemoved(format!("class {class}")));
        }
    }
    let removed = log.iter().map(|e| e.subject_id.clone()).collect();
    out.provenance.cleaning_log.extend(log);
    Ok((out, removed))
}

/// Per-class test count: round-half-up of `fraction * n`, at least one, and
/// leaving at least one subject for training.
pub fn holdout_count(fraction: f64, class_size: usize) -> usize {
    let raw = (fraction * class_size as f64 + 0.5).floor() as usize;
    raw.max(1).min(class_size.saturating_sub(1))
}

/// Stratified holdout split. Each class is shuffled on its own stream, so
/// splitting commutes with [`subset_pair`].
pub fn split_holdout(
    table: &FeatureTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(FeatureTable, FeatureTable)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut is_test = vec![false; table.len()];
    for (class, n) in table.class_counts() {
        if n < 2 {
            return Err(Error::ClassTooSmall {
                class,
                have: n,
                need: 2,
            });
        }
        let mut members: Vec<usize> = table
            .subjects()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.diagnosis == class)
            .map(|(i, _)| i)
            .collect();
        let mut rng = SeededRng::new(seed, Stream::Holdout, class.ordinal() as u64);
        rng.shuffle(&mut members);
        for &i in &members[..holdout_count(test_fraction, n)] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = table
        .subjects()
        .iter()
        .zip(&is_test)
        .partition(|(_, t)| **t);
    let unzip = |v: Vec<(&SubjectRecord, &bool)>| v.into_iter().map(|(s, _)| s.clone()).collect();
    Ok((table.derived(unzip(train)), table.derived(unzip(test))))
}

/// Keeps only the two diagnoses of `comparison`.
pub fn subset_pair(table: &FeatureTable, comparison: Comparison) -> Result<FeatureTable> {
    let counts = table.class_counts();
    for class in [comparison.negative(), comparison.positive()] {
        if !counts.contains_key(&class) {
            return Err(Error::EmptyClass(class));
        }
    }
    let keep = table
        .subjects()
        .iter()
        .filter(|s| s.diagnosis == comparison.negative() || s.diagnosis == comparison.positive())
        .cloned()
        .collect();
    Ok(table.derived(keep))
}
