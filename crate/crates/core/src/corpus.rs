//! Loading and indexing of the rated-comment corpus.
//!
//! The input is one row per (comment, annotator) pair carrying that
//! annotator's ten ordinal ratings, their demographics and the comment's
//! continuous hate score. Rows that fail validation are rejected with their
//! 1-based data row number; the rest are indexed by comment and annotator.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{Attribute, PerAttribute, N_ATTRIBUTES};

/// Cut point on the continuous hate score; strictly above is hate speech.
pub const HATE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("corpus is empty")]
    Empty,
    #[error("no valid rows: {0}")]
    NoValidRows(ValidationReport),
    #[error("unknown comment `{0}`")]
    UnknownComment(String),
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("hate score {0} is not finite")]
    NonFiniteScore(f64),
}

/// Maps logical fields onto the column names of the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub comment_id: String,
    pub annotator_id: String,
    pub text: String,
    pub hate_score: String,
    /// Column per attribute, keyed by attribute name.
    pub attributes: BTreeMap<Attribute, String>,
    pub gender: String,
    pub age: String,
    /// Optional explicit old/young column. When the file lacks it the
    /// category is derived from `age` and `young_below_age`.
    pub age_category: String,
    pub race: String,
    pub religion: String,
    pub ideology: String,
    /// Ages strictly below this are `young`.
    pub young_below_age: u32,
    pub delimiter: char,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            comment_id: "comment_id".into(),
            annotator_id: "annotator_id".into(),
            text: "text".into(),
            hate_score: "hate_speech_score".into(),
            attributes: Attribute::ALL.iter().map(|a| (*a, a.name().to_string())).collect(),
            gender: "annotator_gender".into(),
            age: "annotator_age".into(),
            age_category: "annotator_age_category".into(),
            race: "annotator_race".into(),
            religion: "annotator_religion".into(),
            ideology: "annotator_ideology".into(),
            young_below_age: 40,
            delimiter: ',',
        }
    }
}

impl Schema {
    fn attribute_column(&self, attribute: Attribute) -> String {
        self.attributes
            .get(&attribute)
            .cloned()
            .unwrap_or_else(|| attribute.name().to_string())
    }

    /// Default column order, used when writing corpus files.
    pub fn header(&self) -> Vec<String> {
        let mut cols = vec![self.comment_id.clone(), self.annotator_id.clone(), self.text.clone()];
        cols.extend(Attribute::ALL.iter().map(|a| self.attribute_column(*a)));
        cols.push(self.hate_score.clone());
        cols.extend([
            self.gender.clone(),
            self.age.clone(),
            self.age_category.clone(),
            self.race.clone(),
            self.religion.clone(),
            self.ideology.clone(),
        ]);
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeCategory {
    Old,
    Young,
}

impl fmt::Display for AgeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgeCategory::Old => "old",
            AgeCategory::Young => "young",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator_id: String,
    pub gender: Option<String>,
    pub age: Option<u32>,
    pub age_category: Option<AgeCategory>,
    pub race: Option<String>,
    pub religion: Option<String>,
    pub ideology: Option<String>,
}

impl AnnotatorProfile {
    /// All five demographic fields present. Incomplete profiles can only be
    /// used in the vanilla condition.
    pub fn is_complete(&self) -> bool {
        self.gender.is_some()
            && self.age.is_some()
            && self.age_category.is_some()
            && self.race.is_some()
            && self.religion.is_some()
            && self.ideology.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HumanRating<'a> {
    pub comment_id: &'a str,
    pub annotator_id: &'a str,
    pub attribute: Attribute,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: String,
    pub text: String,
    /// Ratings per annotator id; a `None` cell means the attribute was not rated.
    pub ratings: BTreeMap<String, PerAttribute<Option<u8>>>,
    pub hate_score: f64,
}

impl CommentRecord {
    pub fn human_ratings(&self) -> impl Iterator<Item = HumanRating<'_>> {
        self.ratings.iter().flat_map(move |(annotator, values)| {
            Attribute::ALL.into_iter().filter_map(move |a| {
                values[a.index()].map(|value| HumanRating {
                    comment_id: &self.comment_id,
                    annotator_id: annotator,
                    attribute: a,
                    value,
                })
            })
        })
    }

    /// Per-attribute arithmetic mean over this comment's annotators.
    pub fn mean_ratings(&self) -> PerAttribute<Option<f64>> {
        let mut sums = [0.0f64; N_ATTRIBUTES];
        let mut counts = [0usize; N_ATTRIBUTES];
        for values in self.ratings.values() {
            for (i, v) in values.iter().enumerate() {
                if let Some(v) = v {
                    sums[i] += f64::from(*v);
                    counts[i] += 1;
                }
            }
        }
        std::array::from_fn(|i| (counts[i] > 0).then(|| sums[i] / counts[i] as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub reason: String,
}

/// Outcome of validating an input file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total_rows: usize,
    pub accepted_rows: usize,
    pub rejected: Vec<RowRejection>,
    /// Rejection count per error kind.
    pub tallies: BTreeMap<String, usize>,
    pub comments: usize,
    pub annotators: usize,
    pub incomplete_profiles: usize,
}

impl ValidationReport {
    fn reject(&mut self, row: usize, kind: &str, reason: String) {
        *self.tallies.entry(kind.to_string()).or_default() += 1;
        self.rejected.push(RowRejection { row, reason });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows: {}", self.total_rows)?;
        writeln!(f, "accepted: {}", self.accepted_rows)?;
        writeln!(f, "rejected: {}", self.rejected.len())?;
        for (kind, n) in &self.tallies {
            writeln!(f, "  {kind}: {n}")?;
        }
        writeln!(f, "comments: {}", self.comments)?;
        writeln!(f, "annotators: {}", self.annotators)?;
        write!(f, "incomplete_profiles: {}", self.incomplete_profiles)
    }
}

/// Orders ids numerically when both are integers, lexicographically otherwise.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

struct Columns {
    comment_id: usize,
    annotator_id: usize,
    text: usize,
    hate_score: usize,
    attributes: PerAttribute<usize>,
    gender: usize,
    age: usize,
    age_category: Option<usize>,
    race: usize,
    religion: usize,
    ideology: usize,
}

impl Columns {
    fn resolve(header: &csv::StringRecord, schema: &Schema) -> Result<Self, CorpusError> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let need = |name: &str| find(name).ok_or_else(|| CorpusError::MissingColumn(name.to_string()));
        let comment_id = need(&schema.comment_id)?;
        let annotator_id = need(&schema.annotator_id)?;
        let text = need(&schema.text)?;
        let hate_score = need(&schema.hate_score)?;
        let mut attributes = [0usize; N_ATTRIBUTES];
        for a in Attribute::ALL {
            attributes[a.index()] = need(&schema.attribute_column(a))?;
        }
        Ok(Columns {
            comment_id,
            annotator_id,
            text,
            hate_score,
            attributes,
            gender: need(&schema.gender)?,
            age: need(&schema.age)?,
            age_category: find(&schema.age_category),
            race: need(&schema.race)?,
            religion: need(&schema.religion)?,
            ideology: need(&schema.ideology)?,
        })
    }
}

enum RowError {
    Parse(String),
    OutOfRange(String),
    Duplicate(String),
    Inconsistent(String),
}

struct ParsedRow {
    comment_id: String,
    annotator_id: String,
    text: String,
    values: PerAttribute<Option<u8>>,
    hate_score: f64,
    profile: AnnotatorProfile,
}

fn non_empty(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn parse_rating(cell: &str, attribute: Attribute) -> Result<Option<u8>, RowError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let value: f64 = cell
        .parse()
        .map_err(|_| RowError::Parse(format!("{attribute}: `{cell}` is not a number")))?;
    if !value.is_finite() || value.fract() != 0.0 {
        return Err(RowError::Parse(format!("{attribute}: `{cell}` is not an integer")));
    }
    if value < 0.0 || value > f64::from(attribute.scale_max()) {
        return Err(RowError::OutOfRange(format!(
            "{attribute}: {cell} outside 0..={}",
            attribute.scale_max()
        )));
    }
    Ok(Some(value as u8))
}

fn parse_row(record: &csv::StringRecord, cols: &Columns, schema: &Schema) -> Result<ParsedRow, RowError> {
    let get = |i: usize| record.get(i).unwrap_or("");
    let comment_id =
        non_empty(get(cols.comment_id)).ok_or_else(|| RowError::Parse("empty comment id".into()))?;
    let annotator_id =
        non_empty(get(cols.annotator_id)).ok_or_else(|| RowError::Parse("empty annotator id".into()))?;
    let score_cell = get(cols.hate_score).trim();
    let hate_score: f64 = score_cell
        .parse()
        .map_err(|_| RowError::Parse(format!("hate score `{score_cell}` is not a number")))?;
    if !hate_score.is_finite() {
        return Err(RowError::Parse(format!("hate score `{score_cell}` is not finite")));
    }
    let mut values = [None; N_ATTRIBUTES];
    for a in Attribute::ALL {
        values[a.index()] = parse_rating(get(cols.attributes[a.index()]), a)?;
    }
    if values.iter().all(Option::is_none) {
        return Err(RowError::Parse("row has no attribute ratings".into()));
    }

    let age = non_empty(get(cols.age)).and_then(|s| s.parse::<f64>().ok()).and_then(|v| {
        (v.is_finite() && v >= 0.0).then_some(v.round() as u32)
    });
    let age_category = match cols.age_category.map(|i| get(i).trim().to_ascii_lowercase()) {
        Some(c) if c == "old" => Some(AgeCategory::Old),
        Some(c) if c == "young" => Some(AgeCategory::Young),
        _ => age.map(|a| if a < schema.young_below_age { AgeCategory::Young } else { AgeCategory::Old }),
    };
    let profile = AnnotatorProfile {
        annotator_id: annotator_id.clone(),
        gender: non_empty(get(cols.gender)),
        age,
        age_category,
        race: non_empty(get(cols.race)),
        religion: non_empty(get(cols.religion)),
        ideology: non_empty(get(cols.ideology)),
    };
    Ok(ParsedRow {
        comment_id,
        annotator_id,
        text: get(cols.text).to_string(),
        values,
        hate_score,
        profile,
    })
}

/// An immutable, indexed corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    header: csv::StringRecord,
    delimiter: u8,
    accepted: Vec<csv::StringRecord>,
    comments: Vec<CommentRecord>,
    comment_index: HashMap<String, usize>,
    annotators: BTreeMap<String, AnnotatorProfile>,
    report: ValidationReport,
}

impl Corpus {
    pub fn load(path: impl AsRef<Path>, schema: &Schema) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, schema)
    }

    pub fn from_reader<R: Read>(reader: R, schema: &Schema) -> Result<Self, CorpusError> {
        let delimiter = u8::try_from(schema.delimiter).unwrap_or(b',');
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
            return Err(CorpusError::Empty);
        }
        let cols = Columns::resolve(&header, schema)?;

        let mut report = ValidationReport::default();
        let mut accepted = Vec::new();
        let mut comments: HashMap<String, CommentRecord> = HashMap::new();
        let mut annotators: BTreeMap<String, AnnotatorProfile> = BTreeMap::new();

        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            report.total_rows += 1;
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    report.reject(row, "parse", e.to_string());
                    continue;
                }
            };
            let parsed = parse_row(&record, &cols, schema).and_then(|p| {
                if let Some(existing) = comments.get(&p.comment_id) {
                    if existing.ratings.contains_key(&p.annotator_id) {
                        return Err(RowError::Duplicate(format!(
                            "duplicate rating row for comment {} by annotator {}",
                            p.comment_id, p.annotator_id
                        )));
                    }
                    if existing.hate_score != p.hate_score {
                        return Err(RowError::Inconsistent(format!(
                            "hate score {} differs from {} seen earlier for comment {}",
                            p.hate_score, existing.hate_score, p.comment_id
                        )));
                    }
                }
                Ok(p)
            });
            let parsed = match parsed {
                Ok(p) => p,
                Err(RowError::Parse(m)) => {
                    report.reject(row, "parse", m);
                    continue;
                }
                Err(RowError::OutOfRange(m)) => {
                    report.reject(row, "out_of_range", m);
                    continue;
                }
                Err(RowError::Duplicate(m)) => {
                    report.reject(row, "duplicate", m);
                    continue;
                }
                Err(RowError::Inconsistent(m)) => {
                    report.reject(row, "inconsistent_score", m);
                    continue;
                }
            };

            let entry = comments.entry(parsed.comment_id.clone()).or_insert_with(|| CommentRecord {
                comment_id: parsed.comment_id.clone(),
                text: parsed.text.clone(),
                ratings: BTreeMap::new(),
                hate_score: parsed.hate_score,
            });
            entry.ratings.insert(parsed.annotator_id.clone(), parsed.values);
            annotators.entry(parsed.annotator_id).or_insert(parsed.profile);
            accepted.push(record);
        }

        if report.total_rows == 0 {
            return Err(CorpusError::Empty);
        }
        report.accepted_rows = accepted.len();
        report.comments = comments.len();
        report.annotators = annotators.len();
        report.incomplete_profiles = annotators.values().filter(|p| !p.is_complete()).count();
        if accepted.is_empty() {
            return Err(CorpusError::NoValidRows(report));
        }
        if !report.rejected.is_empty() {
            log::warn!("rejected {} of {} corpus rows", report.rejected.len(), report.total_rows);
        }

        let mut comments: Vec<CommentRecord> = comments.into_values().collect();
        comments.sort_by(|a, b| compare_ids(&a.comment_id, &b.comment_id));
        let comment_index = comments
            .iter()
            .enumerate()
            .map(|(i, c)| (c.comment_id.clone(), i))
            .collect();

        Ok(Corpus {
            header,
            delimiter,
            accepted,
            comments,
            comment_index,
            annotators,
            report,
        })
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn n_comments(&self) -> usize {
        self.comments.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.annotators.len()
    }

    /// Comments in stable comment-id order.
    pub fn comments(&self) -> &[CommentRecord] {
        &self.comments
    }

    pub fn comment(&self, comment_id: &str) -> Result<&CommentRecord, CorpusError> {
        self.comment_index
            .get(comment_id)
            .map(|&i| &self.comments[i])
            .ok_or_else(|| CorpusError::UnknownComment(comment_id.to_string()))
    }

    pub fn annotator(&self, annotator_id: &str) -> Result<&AnnotatorProfile, CorpusError> {
        self.annotators
            .get(annotator_id)
            .ok_or_else(|| CorpusError::UnknownAnnotator(annotator_id.to_string()))
    }

    pub fn annotators(&self) -> impl Iterator<Item = &AnnotatorProfile> {
        self.annotators.values()
    }

    pub fn mean_human_ratings(&self, comment_id: &str) -> Result<BTreeMap<Attribute, f64>, CorpusError> {
        let means = self.comment(comment_id)?.mean_ratings();
        Ok(Attribute::ALL
            .into_iter()
            .filter_map(|a| means[a.index()].map(|m| (a, m)))
            .collect())
    }

    /// Writes the header and every accepted row, byte-for-byte as read.
    pub fn write_accepted<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut wtr = csv::WriterBuilder::new()
            .delimiter(self.delimiter)
            .flexible(true)
            .from_writer(writer);
        wtr.write_record(&self.header)?;
        for record in &self.accepted {
            wtr.write_record(record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Binary hate label of a continuous score.
pub fn binary_ground_truth(hate_score: f64) -> Result<bool, CorpusError> {
    if !hate_score.is_finite() {
        return Err(CorpusError::NonFiniteScore(hate_score));
    }
    Ok(hate_score > HATE_THRESHOLD)
}

/// One row of a corpus file, for writers such as the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRow {
    pub comment_id: String,
    pub annotator_id: String,
    pub text: String,
    pub values: PerAttribute<Option<u8>>,
    pub hate_score: f64,
    pub profile: AnnotatorProfile,
}

/// Writes rows in the layout described by `schema.header()`.
pub fn write_rows<'a, W: Write>(
    writer: W,
    schema: &Schema,
    rows: impl IntoIterator<Item = &'a CorpusRow>,
) -> Result<(), CorpusError> {
    let delimiter = u8::try_from(schema.delimiter).unwrap_or(b',');
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    wtr.write_record(schema.header())?;
    let opt = |v: &Option<String>| v.clone().unwrap_or_default();
    for row in rows {
        let mut rec = vec![row.comment_id.clone(), row.annotator_id.clone(), row.text.clone()];
        rec.extend(row.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        rec.push(row.hate_score.to_string());
        rec.push(opt(&row.profile.gender));
        rec.push(row.profile.age.map(|a| a.to_string()).unwrap_or_default());
        rec.push(row.profile.age_category.map(|c| c.to_string()).unwrap_or_default());
        rec.push(opt(&row.profile.race));
        rec.push(opt(&row.profile.religion));
        rec.push(opt(&row.profile.ideology));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "comment_id,annotator_id,text,sentiment,hatespeech,insult,humiliate,dehumanize,violence,genocide,status,respect,attack_defend,hate_speech_score,annotator_gender,annotator_age,annotator_race,annotator_religion,annotator_ideology";

    fn load(body: &str) -> Result<Corpus, CorpusError> {
        Corpus::from_reader(format!("{HEADER}\n{body}").as_bytes(), &Schema::default())
    }

    #[test]
    fn minimal_corpus() {
        let c = load("1,a1,hello,0,0,0,0,0,0,0,0,0,0,-1.5,female,34,white,none,liberal\n").unwrap();
        assert_eq!((c.n_comments(), c.n_annotators()), (1, 1));
        let p = c.annotator("a1").unwrap();
        assert!(p.is_complete());
        assert_eq!(p.age_category, Some(AgeCategory::Young));
    }

    #[test]
    fn rejects_out_of_range_hatespeech() {
        let c = load(concat!(
            "1,a1,x,0,3,0,0,0,0,0,0,0,0,0.1,f,30,w,n,l\n",
            "2,a1,y,0,2,0,0,0,0,0,0,0,0,0.1,f,30,w,n,l\n",
        ))
        .unwrap();
        assert_eq!(c.n_comments(), 1);
        assert_eq!(c.report().rejected.len(), 1);
        assert_eq!(c.report().rejected[0].row, 1);
        assert_eq!(c.report().tallies["out_of_range"], 1);
    }

    #[test]
    fn missing_column_is_named() {
        let err = Corpus::from_reader("comment_id,text\n1,x\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(c) if c == "annotator_id"));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(Corpus::from_reader("".as_bytes(), &Schema::default()), Err(CorpusError::Empty)));
        assert!(matches!(load(""), Err(CorpusError::Empty)));
    }

    #[test]
    fn all_rows_bad_reports_counts() {
        match load("1,a1,x,zz,0,0,0,0,0,0,0,0,0,0.1,f,30,w,n,l\n") {
            Err(CorpusError::NoValidRows(r)) => assert_eq!(r.tallies["parse"], 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mean_ratings() {
        let c = load(concat!(
            "7,a,t,0,0,3,0,0,0,0,0,0,0,1.0,f,30,w,n,l\n",
            "7,b,t,0,0,2,0,0,0,0,0,0,1,1.0,f,30,w,n,l\n",
            "7,c,t,0,0,,0,0,0,0,0,0,0,1.0,f,30,w,n,l\n",
            "7,d,t,0,0,,0,0,0,0,0,0,0,1.0,f,30,w,n,l\n",
        ))
        .unwrap();
        let m = c.mean_human_ratings("7").unwrap();
        assert_eq!(m[&Attribute::Insult], 2.5);
        assert_eq!(m[&Attribute::AttackDefend], 0.25);
        assert!(matches!(c.mean_human_ratings("8"), Err(CorpusError::UnknownComment(_))));
    }

    #[test]
    fn threshold_is_strict() {
        assert!(binary_ground_truth(6.30).unwrap());
        assert!(!binary_ground_truth(-8.34).unwrap());
        assert!(!binary_ground_truth(0.5).unwrap());
        assert!(binary_ground_truth(f64::NAN).is_err());
    }

    #[test]
    fn incomplete_profile_is_flagged() {
        let c = load("1,a1,x,0,0,0,0,0,0,0,0,0,0,0.1,,30,w,n,l\n").unwrap();
        assert_eq!(c.report().incomplete_profiles, 1);
        assert!(!c.annotator("a1").unwrap().is_complete());
    }

    #[test]
    fn inconsistent_score_and_duplicates_rejected() {
        let c = load(concat!(
            "1,a,x,0,0,0,0,0,0,0,0,0,0,0.1,f,30,w,n,l\n",
            "1,b,x,0,0,0,0,0,0,0,0,0,0,0.2,f,30,w,n,l\n",
            "1,a,x,0,0,0,0,0,0,0,0,0,0,0.1,f,30,w,n,l\n",
        ))
        .unwrap();
        assert_eq!(c.report().tallies["inconsistent_score"], 1);
        assert_eq!(c.report().tallies["duplicate"], 1);
    }

    #[test]
    fn numeric_id_order() {
        let c = load(concat!(
            "10,a,x,0,0,0,0,0,0,0,0,0,0,0.1,f,30,w,n,l\n",
            "9,a,x,0,0,0,0,0,0,0,0,0,0,0.1,f,30,w,n,l\n",
        ))
        .unwrap();
        let ids: Vec<_> = c.comments().iter().map(|c| c.comment_id.as_str()).collect();
        assert_eq!(ids, ["9", "10"]);
    }
}
