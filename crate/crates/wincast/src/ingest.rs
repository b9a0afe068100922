//! Opportunity record model, CSV parsing/serialization and the train/test
//! split.
//!
//! The CSV schema is fixed: 21 named columns (order-insensitive header), one
//! row per opportunity. Categorical fields are free-form strings where the
//! empty string marks a missing value; `segment` is restricted to the three
//! market segments; booleans are `true`/`false`; `status` is
//! `won`/`lost`/`open`; numeric fields may be empty (missing). Records with
//! missing fields survive parsing and are removed by [`drop_missing`].

use std::collections::HashMap;
use std::fmt;
use std::io;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Market segment of an opportunity. The only categorical field with a closed
/// value domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    Healthcare,
    Energy,
    Finance,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Healthcare, Segment::Energy, Segment::Finance];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Healthcare => "Healthcare",
            Segment::Energy => "Energy",
            Segment::Finance => "Finance",
        }
    }

    /// Case-insensitive parse; canonical form is written back on
    /// serialization.
    pub fn parse(s: &str) -> Option<Segment> {
        Segment::ALL
            .into_iter()
            .find(|seg| s.eq_ignore_ascii_case(seg.as_str()))
    }

    /// Dense index used wherever per-segment arrays are kept.
    pub fn index(self) -> usize {
        match self {
            Segment::Healthcare => 0,
            Segment::Energy => 1,
            Segment::Finance => 2,
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lifecycle state of an opportunity. Only closed records (`won`/`lost`)
/// carry an outcome label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Won,
    Lost,
    Open,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Won => "won",
            Status::Lost => "lost",
            Status::Open => "open",
        }
    }

    pub fn parse(s: &str) -> Option<Status> {
        match s {
            "won" => Some(Status::Won),
            "lost" => Some(Status::Lost),
            "open" => Some(Status::Open),
            _ => None,
        }
    }
}

/// The thirteen categorical features, in canonical (schema) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CatFeature {
    BusinessUnit,
    OpportunityType,
    ProjectLocation,
    GeneralNow,
    DetailedNow,
    Account,
    AccountLocation,
    SalesLead,
    EngagementManager,
    SubPractice,
    Practice,
    GroupPractice,
    Segment,
}

impl CatFeature {
    pub const ALL: [CatFeature; 13] = [
        CatFeature::BusinessUnit,
        CatFeature::OpportunityType,
        CatFeature::ProjectLocation,
        CatFeature::GeneralNow,
        CatFeature::DetailedNow,
        CatFeature::Account,
        CatFeature::AccountLocation,
        CatFeature::SalesLead,
        CatFeature::EngagementManager,
        CatFeature::SubPractice,
        CatFeature::Practice,
        CatFeature::GroupPractice,
        CatFeature::Segment,
    ];

    /// Column name in the CSV schema.
    pub fn as_str(self) -> &'static str {
        match self {
            CatFeature::BusinessUnit => "business_unit",
            CatFeature::OpportunityType => "opportunity_type",
            CatFeature::ProjectLocation => "project_location",
            CatFeature::GeneralNow => "general_now",
            CatFeature::DetailedNow => "detailed_now",
            CatFeature::Account => "account",
            CatFeature::AccountLocation => "account_location",
            CatFeature::SalesLead => "sales_lead",
            CatFeature::EngagementManager => "engagement_manager",
            CatFeature::SubPractice => "sub_practice",
            CatFeature::Practice => "practice",
            CatFeature::GroupPractice => "group_practice",
            CatFeature::Segment => "segment",
        }
    }
}

impl fmt::Display for CatFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// CSV column names in canonical order.
pub const COLUMNS: [&str; 21] = [
    "opportunity_id",
    "business_unit",
    "opportunity_type",
    "project_location",
    "general_now",
    "detailed_now",
    "account",
    "account_location",
    "sales_lead",
    "engagement_manager",
    "sub_practice",
    "practice",
    "group_practice",
    "segment",
    "key_account_energy",
    "key_account_healthcare",
    "key_account_finance",
    "status",
    "user_probability",
    "project_duration",
    "total_contract_value",
];

/// One CRM opportunity.
///
/// Missing values are representable: the empty string for free-form
/// categoricals and `None` for typed fields. [`drop_missing`] removes records
/// with any missing field; downstream stages require complete records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpportunityRecord {
    pub opportunity_id: String,
    pub business_unit: String,
    pub opportunity_type: String,
    pub project_location: String,
    pub general_now: String,
    pub detailed_now: String,
    pub account: String,
    pub account_location: String,
    pub sales_lead: String,
    pub engagement_manager: String,
    pub sub_practice: String,
    pub practice: String,
    pub group_practice: String,
    pub segment: Option<Segment>,
    pub key_account_energy: Option<bool>,
    pub key_account_healthcare: Option<bool>,
    pub key_account_finance: Option<bool>,
    pub status: Option<Status>,
    /// Salesperson's own win estimate, in `[0, 1]`.
    pub user_probability: Option<f64>,
    /// Expected project duration in days, `> 0`.
    pub project_duration: Option<f64>,
    /// Monetary value of the contract, `>= 0`.
    pub total_contract_value: Option<f64>,
}

impl OpportunityRecord {
    /// Value of a categorical feature; `None` when missing.
    pub fn categorical(&self, feature: CatFeature) -> Option<&str> {
        let s = match feature {
            CatFeature::BusinessUnit => &self.business_unit,
            CatFeature::OpportunityType => &self.opportunity_type,
            CatFeature::ProjectLocation => &self.project_location,
            CatFeature::GeneralNow => &self.general_now,
            CatFeature::DetailedNow => &self.detailed_now,
            CatFeature::Account => &self.account,
            CatFeature::AccountLocation => &self.account_location,
            CatFeature::SalesLead => &self.sales_lead,
            CatFeature::EngagementManager => &self.engagement_manager,
            CatFeature::SubPractice => &self.sub_practice,
            CatFeature::Practice => &self.practice,
            CatFeature::GroupPractice => &self.group_practice,
            CatFeature::Segment => return self.segment.map(Segment::as_str),
        };
        if s.is_empty() {
            None
        } else {
            Some(s)
        }
    }

    /// Names of all missing fields, in schema order.
    pub fn missing_fields(&self) -> Vec<&'static str> {
        let mut missing = Vec::new();
        if self.opportunity_id.is_empty() {
            missing.push("opportunity_id");
        }
        for feature in CatFeature::ALL {
            if self.categorical(feature).is_none() {
                missing.push(feature.as_str());
            }
        }
        if self.key_account_energy.is_none() {
            missing.push("key_account_energy");
        }
        if self.key_account_healthcare.is_none() {
            missing.push("key_account_healthcare");
        }
        if self.key_account_finance.is_none() {
            missing.push("key_account_finance");
        }
        if self.status.is_none() {
            missing.push("status");
        }
        if self.user_probability.is_none() {
            missing.push("user_probability");
        }
        if self.project_duration.is_none() {
            missing.push("project_duration");
        }
        if self.total_contract_value.is_none() {
            missing.push("total_contract_value");
        }
        missing
    }

    /// `true` when every field is present.
    pub fn is_complete(&self) -> bool {
        self.missing_fields().is_empty()
    }

    /// `true` for records with a final outcome (`won` or `lost`).
    pub fn is_closed(&self) -> bool {
        matches!(self.status, Some(Status::Won) | Some(Status::Lost))
    }

    /// Outcome label: 1.0 for won, 0.0 for lost, `None` otherwise.
    pub fn label(&self) -> Option<f64> {
        match self.status {
            Some(Status::Won) => Some(1.0),
            Some(Status::Lost) => Some(0.0),
            _ => None,
        }
    }
}

/// A parsed batch of records plus where it came from (file path or
/// `synthetic:<seed>`), carried along for reports and artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    pub records: Vec<OpportunityRecord>,
    pub provenance: String,
}

impl RecordSet {
    pub fn new(records: Vec<OpportunityRecord>, provenance: impl Into<String>) -> Self {
        RecordSet {
            records,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn row_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Row {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn parse_bool(raw: &str, row: usize, column: &str) -> Result<Option<bool>> {
    match raw {
        "" => Ok(None),
        "true" => Ok(Some(true)),
        "false" => Ok(Some(false)),
        other => Err(row_err(
            row,
            column,
            format!("expected `true` or `false`, got `{other}`"),
        )),
    }
}

fn parse_float(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if raw.is_empty() {
        return Ok(None);
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| row_err(row, column, format!("invalid number `{raw}`")))?;
    if value.is_nan() {
        // NaN counts as absent, same as an empty cell.
        return Ok(None);
    }
    if value.is_infinite() {
        return Err(row_err(row, column, "number must be finite"));
    }
    Ok(Some(value))
}

/// Parse opportunity records from CSV bytes.
///
/// The header is validated against the schema (order-insensitive); every data
/// row must parse and satisfy the field domains (`segment` in its closed set,
/// `user_probability` in `[0, 1]`, `project_duration > 0`,
/// `total_contract_value >= 0`, unique `opportunity_id`). Rows with *missing*
/// fields are accepted here and filtered later by [`drop_missing`].
pub fn parse_records<R: io::Read>(source: R, provenance: &str) -> Result<RecordSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema {
            missing: COLUMNS.iter().map(|c| c.to_string()).collect(),
            extra: vec![format!("unreadable header: {e}")],
        })?
        .clone();

    // Map each schema column to its position; report missing/extra by name.
    let mut index_of: HashMap<&str, usize> = HashMap::new();
    let mut extra = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        if COLUMNS.contains(&name) {
            if index_of.insert_unique(name, i).is_err() {
                extra.push(format!("{name} (duplicate)"));
            }
        } else {
            extra.push(name.to_string());
        }
    }
    let missing: Vec<String> = COLUMNS
        .iter()
        .filter(|c| !index_of.contains_key(**c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Schema { missing, extra });
    }
    let col = |name: &str| index_of[name];

    let mut records = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1; // 1-based data-row index
        let row = row.map_err(|e| row_err(row_no, "<row>", e.to_string()))?;
        let field = |name: &str| row.get(col(name)).unwrap_or("");

        let segment = match field("segment") {
            "" => None,
            raw => Some(Segment::parse(raw).ok_or_else(|| {
                row_err(
                    row_no,
                    "segment",
                    format!("unknown segment `{raw}` (expected Healthcare, Energy or Finance)"),
                )
            })?),
        };
        let status = match field("status") {
            "" => None,
            raw => Some(Status::parse(raw).ok_or_else(|| {
                row_err(
                    row_no,
                    "status",
                    format!("unknown status `{raw}` (expected won, lost or open)"),
                )
            })?),
        };

        let user_probability = parse_float(field("user_probability"), row_no, "user_probability")?;
        if let Some(p) = user_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(row_err(
                    row_no,
                    "user_probability",
                    format!("probability {p} out of [0, 1]"),
                ));
            }
        }
        let project_duration = parse_float(field("project_duration"), row_no, "project_duration")?;
        if let Some(d) = project_duration {
            if d <= 0.0 {
                return Err(row_err(
                    row_no,
                    "project_duration",
                    format!("duration {d} must be > 0 days"),
                ));
            }
        }
        let total_contract_value =
            parse_float(field("total_contract_value"), row_no, "total_contract_value")?;
        if let Some(v) = total_contract_value {
            if v < 0.0 {
                return Err(row_err(
                    row_no,
                    "total_contract_value",
                    format!("contract value {v} must be >= 0"),
                ));
            }
        }

        let record = OpportunityRecord {
            opportunity_id: field("opportunity_id").to_string(),
            business_unit: field("business_unit").to_string(),
            opportunity_type: field("opportunity_type").to_string(),
            project_location: field("project_location").to_string(),
            general_now: field("general_now").to_string(),
            detailed_now: field("detailed_now").to_string(),
            account: field("account").to_string(),
            account_location: field("account_location").to_string(),
            sales_lead: field("sales_lead").to_string(),
            engagement_manager: field("engagement_manager").to_string(),
            sub_practice: field("sub_practice").to_string(),
            practice: field("practice").to_string(),
            group_practice: field("group_practice").to_string(),
            segment,
            key_account_energy: parse_bool(field("key_account_energy"), row_no, "key_account_energy")?,
            key_account_healthcare: parse_bool(
                field("key_account_healthcare"),
                row_no,
                "key_account_healthcare",
            )?,
            key_account_finance: parse_bool(
                field("key_account_finance"),
                row_no,
                "key_account_finance",
            )?,
            status,
            user_probability,
            project_duration,
            total_contract_value,
        };

        // Uniqueness applies to present ids; a blank id is a missing field.
        if !record.opportunity_id.is_empty() {
            if let Some(_first) = seen_ids.insert(record.opportunity_id.clone(), row_no) {
                return Err(Error::DuplicateId {
                    id: record.opportunity_id,
                    row: row_no,
                });
            }
        }
        records.push(record);
    }

    Ok(RecordSet::new(records, provenance))
}

/// Parse a CSV file from disk; provenance is the path itself.
pub fn parse_records_path(path: &std::path::Path) -> Result<RecordSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_records(io::BufReader::new(file), &path.display().to_string())
}

/// Serialize records back to the canonical CSV schema.
///
/// Output is deterministic: canonical column order, canonical enum spellings
/// and shortest round-trip float formatting, so equal record sets produce
/// byte-identical CSV.
pub fn write_records<W: io::Write>(rs: &RecordSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::io("<csv output>", io::Error::other(e));
    w.write_record(COLUMNS).map_err(io_err)?;
    let fmt_float = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in &rs.records {
        w.write_record([
            r.opportunity_id.as_str(),
            r.business_unit.as_str(),
            r.opportunity_type.as_str(),
            r.project_location.as_str(),
            r.general_now.as_str(),
            r.detailed_now.as_str(),
            r.account.as_str(),
            r.account_location.as_str(),
            r.sales_lead.as_str(),
            r.engagement_manager.as_str(),
            r.sub_practice.as_str(),
            r.practice.as_str(),
            r.group_practice.as_str(),
            r.segment.map(Segment::as_str).unwrap_or(""),
            r.key_account_energy.map(bool_str).unwrap_or(""),
            r.key_account_healthcare.map(bool_str).unwrap_or(""),
            r.key_account_finance.map(bool_str).unwrap_or(""),
            r.status.map(Status::as_str).unwrap_or(""),
            &fmt_float(r.user_probability),
            &fmt_float(r.project_duration),
            &fmt_float(r.total_contract_value),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// Serialize records to an in-memory CSV string.
pub fn records_to_csv(rs: &RecordSet) -> String {
    let mut buf = Vec::new();
    write_records(rs, &mut buf).expect("in-memory CSV write cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

/// Write records to a CSV file on disk.
pub fn write_records_path(rs: &RecordSet, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(rs, io::BufWriter::new(file))
}

/// Remove records with any missing field. Returns the surviving records and
/// how many were dropped. Idempotent.
pub fn drop_missing(rs: &RecordSet) -> (RecordSet, usize) {
    let kept: Vec<OpportunityRecord> = rs
        .records
        .iter()
        .filter(|r| r.is_complete())
        .cloned()
        .collect();
    let dropped = rs.records.len() - kept.len();
    (RecordSet::new(kept, rs.provenance.clone()), dropped)
}

/// Number of training records for an `n`-record set: `fraction * n` rounded
/// half-up.
pub fn train_size(n: usize, fraction: f64) -> usize {
    (fraction * n as f64 + 0.5).floor() as usize
}

/// Deterministic random train/test partition of closed records.
///
/// The training side receives [`train_size`] records chosen by a seeded
/// shuffle; both sides keep the input's relative record order. The partition
/// is disjoint and exhaustive, and identical seeds reproduce it exactly.
pub fn split_train_test(
    rs: &RecordSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(RecordSet, RecordSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if let Some(open) = rs.records.iter().find(|r| !r.is_closed()) {
        return Err(Error::Record {
            id: open.opportunity_id.clone(),
            message: "train/test split requires closed records only".to_string(),
        });
    }

    let n = rs.records.len();
    let n_train = train_size(n, train_fraction);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let mut train_idx: Vec<usize> = indices[..n_train].to_vec();
    let mut test_idx: Vec<usize> = indices[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let pick = |idx: &[usize], tag: &str| {
        RecordSet::new(
            idx.iter().map(|&i| rs.records[i].clone()).collect(),
            format!("{} [{} split, seed {}]", rs.provenance, tag, seed),
        )
    };
    Ok((pick(&train_idx, "train"), pick(&test_idx, "test")))
}

/// `HashMap::try_insert` is unstable; tiny stand-in that reports collisions.
trait InsertUnique<K, V> {
    fn insert_unique(&mut self, key: K, value: V) -> Result<(), ()>;
}

impl<K: Eq + std::hash::Hash, V> InsertUnique<K, V> for HashMap<K, V> {
    fn insert_unique(&mut self, key: K, value: V) -> Result<(), ()> {
        use std::collections::hash_map::Entry;
        match self.entry(key) {
            Entry::Occupied(_) => Err(()),
            Entry::Vacant(slot) => {
                slot.insert(value);
                Ok(())
            }
        }
    }
}
