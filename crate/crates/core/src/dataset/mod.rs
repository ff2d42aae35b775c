//! Interaction logs, attribute tables, the leave-one-out split and evaluation
//! negative sampling.

mod synthetic;

pub use synthetic::{item_block, planted_blocks, user_block, BlockDatasetConfig};

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::math::RandomStream;

/// Users need a test item, a validation item and at least one training item.
pub const MIN_INTERACTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionRecord {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`, no header (MovieLens `u.data`).
    TsvRating,
}

/// Dense row-major table of per-entity attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl AttributeTable {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidArgument("attribute tables need at least one column".into()));
        }
        crate::error::check_dims("attribute table", rows * cols, values.len())?;
        crate::math::ensure_finite("attribute table", &values)?;
        Ok(Self { rows, cols, values })
    }

    /// Degenerate single-column table of ones, used when no attributes exist.
    pub fn ones(rows: usize) -> Self {
        Self {
            rows,
            cols: 1,
            values: vec![1.0; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Bidirectional map between original identifiers and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    to_dense: HashMap<String, usize>,
    to_original: Vec<String>,
}

impl IdMap {
    fn intern(&mut self, original: &str) -> usize {
        if let Some(&id) = self.to_dense.get(original) {
            return id;
        }
        let id = self.to_original.len();
        self.to_original.push(original.to_owned());
        self.to_dense.insert(original.to_owned(), id);
        id
    }

    pub fn dense(&self, original: &str) -> Option<usize> {
        self.to_dense.get(original).copied()
    }

    pub fn original(&self, dense: usize) -> Option<&str> {
        self.to_original.get(dense).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.to_original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_original.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub n_users: usize,
    pub n_items: usize,
    pub interactions: Vec<InteractionRecord>,
    pub user_attributes: Option<AttributeTable>,
    pub item_attributes: Option<AttributeTable>,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
    /// Users removed by the minimum-history filter.
    pub dropped_users: usize,
}

/// One line of an interaction log before id remapping.
#[derive(Debug, Clone)]
pub struct RawInteraction {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: i64,
}

impl Dataset {
    /// Builds a dataset from raw records in file order.
    ///
    /// Users with fewer than [`MIN_INTERACTIONS`] records are dropped, and the
    /// remaining users and items are densified in first-appearance order.
    pub fn from_raw(raw: &[RawInteraction]) -> Result<Self> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for r in raw {
            *counts.entry(r.user.as_str()).or_default() += 1;
        }
        let dropped_users = counts.values().filter(|&&c| c < MIN_INTERACTIONS).count();
        if dropped_users > 0 {
            log::info!("dropping {dropped_users} users with fewer than {MIN_INTERACTIONS} interactions");
        }

        let mut user_ids = IdMap::default();
        let mut item_ids = IdMap::default();
        let mut interactions = Vec::with_capacity(raw.len());
        for r in raw.iter().filter(|r| counts[r.user.as_str()] >= MIN_INTERACTIONS) {
            interactions.push(InteractionRecord {
                user: user_ids.intern(&r.user),
                item: item_ids.intern(&r.item),
                rating: r.rating,
                timestamp: r.timestamp,
            });
        }
        if interactions.is_empty() {
            return Err(Error::InvalidArgument(
                "no user has enough interactions for a leave-one-out split".into(),
            ));
        }
        Ok(Self {
            n_users: user_ids.len(),
            n_items: item_ids.len(),
            interactions,
            user_attributes: None,
            item_attributes: None,
            user_ids,
            item_ids,
            dropped_users,
        })
    }

    pub fn with_user_attributes(mut self, table: AttributeTable) -> Result<Self> {
        crate::error::check_dims("user attribute rows", self.n_users, table.rows())?;
        self.user_attributes = Some(table);
        Ok(self)
    }

    pub fn with_item_attributes(mut self, table: AttributeTable) -> Result<Self> {
        crate::error::check_dims("item attribute rows", self.n_items, table.rows())?;
        self.item_attributes = Some(table);
        Ok(self)
    }

    /// User attributes, or the all-ones fallback when none were supplied.
    pub fn user_attributes_or_ones(&self) -> AttributeTable {
        self.user_attributes
            .clone()
            .unwrap_or_else(|| AttributeTable::ones(self.n_users))
    }

    pub fn item_attributes_or_ones(&self) -> AttributeTable {
        self.item_attributes
            .clone()
            .unwrap_or_else(|| AttributeTable::ones(self.n_items))
    }
}

/// Reads an interaction log.
pub fn load_interactions(path: impl AsRef<Path>, format: InteractionFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw = match format {
        InteractionFormat::TsvRating => parse_tsv_ratings(path, &text)?,
    };
    if raw.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    Dataset::from_raw(&raw)
}

fn parse_tsv_ratings(path: &Path, text: &str) -> Result<Vec<RawInteraction>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid rating {:?}", fields[2])))?;
        if !rating.is_finite() {
            return Err(bad(format!("non-finite rating {:?}", fields[2])));
        }
        let timestamp: i64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid timestamp {:?}", fields[3])))?;
        if timestamp < 0 {
            return Err(bad(format!("negative timestamp {timestamp}")));
        }
        let user = fields[0].trim();
        let item = fields[1].trim();
        if user.is_empty() || item.is_empty() {
            return Err(bad("empty user or item id".into()));
        }
        out.push(RawInteraction {
            user: user.to_owned(),
            item: item.to_owned(),
            rating,
            timestamp,
        });
    }
    Ok(out)
}

/// Reads a headerless CSV of floats whose row `i` describes dense id `i`.
pub fn load_attributes(path: impl AsRef<Path>, expected_rows: usize) -> Result<AttributeTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut cols = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(bad(format!("expected {c} columns, found {}", record.len())))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("invalid number {field:?}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != expected_rows {
        return Err(Error::RowCount {
            path: path.to_path_buf(),
            expected: expected_rows,
            found: rows,
        });
    }
    AttributeTable::new(rows, cols.unwrap_or(0), values)
}

/// Reads a headerless CSV whose first column is an original id from `ids`
/// and whose remaining columns are features. Rows for unknown ids (such as
/// filtered users) are ignored; every id in `ids` needs a row.
pub fn load_keyed_attributes(path: impl AsRef<Path>, ids: &IdMap) -> Result<AttributeTable> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; ids.len()];
    let mut cols = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        if record.len() < 2 {
            return Err(bad("expected an id followed by at least one value".into()));
        }
        match cols {
            None => cols = Some(record.len() - 1),
            Some(c) if c != record.len() - 1 => {
                return Err(bad(format!("expected {c} values, found {}", record.len() - 1)))
            }
            _ => {}
        }
        let Some(dense) = ids.dense(&record[0]) else {
            continue;
        };
        let values = record
            .iter()
            .skip(1)
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("invalid number {f:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if rows[dense].replace(values).is_some() {
            return Err(bad(format!("duplicate id {:?}", &record[0])));
        }
    }
    let found = rows.iter().filter(|r| r.is_some()).count();
    if found != ids.len() {
        return Err(Error::RowCount {
            path: path.to_path_buf(),
            expected: ids.len(),
            found,
        });
    }
    let cols = cols.unwrap_or(0);
    AttributeTable::new(ids.len(), cols, rows.into_iter().flatten().flatten().collect())
}

/// Per-user leave-one-out partition.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    n_items: usize,
    train: Vec<Vec<InteractionRecord>>,
    validation: Vec<InteractionRecord>,
    test: Vec<InteractionRecord>,
}

impl SplitDataset {
    pub fn n_users(&self) -> usize {
        self.train.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn train(&self, user: usize) -> &[InteractionRecord] {
        &self.train[user]
    }

    pub fn validation(&self, user: usize) -> &InteractionRecord {
        &self.validation[user]
    }

    pub fn test(&self, user: usize) -> &InteractionRecord {
        &self.test[user]
    }

    /// Every item the user interacted with across all three partitions.
    pub fn history_items(&self, user: usize) -> HashSet<usize> {
        self.train[user]
            .iter()
            .chain([&self.validation[user], &self.test[user]])
            .map(|r| r.item)
            .collect()
    }

    /// The training-only view handed to learners.
    pub fn training_data(&self) -> TrainingData {
        let items = self
            .train
            .iter()
            .map(|records| {
                let mut seen = HashSet::new();
                records
                    .iter()
                    .map(|r| r.item)
                    .filter(|i| seen.insert(*i))
                    .collect()
            })
            .collect();
        TrainingData {
            n_items: self.n_items,
            items,
            counts: self.train.iter().map(Vec::len).collect(),
        }
    }
}

/// Training interactions only; validation and test items are unreachable
/// through this type.
#[derive(Debug, Clone)]
pub struct TrainingData {
    n_items: usize,
    items: Vec<Vec<usize>>,
    counts: Vec<usize>,
}

impl TrainingData {
    pub fn n_users(&self) -> usize {
        self.items.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Distinct training items of `user` in chronological order.
    pub fn items(&self, user: usize) -> &[usize] {
        &self.items[user]
    }

    /// Number of training interactions, including repeats.
    pub fn interaction_count(&self, user: usize) -> usize {
        self.counts[user]
    }
}

/// Chronological leave-one-out: last interaction to test, second-to-last to
/// validation, the rest to train. Equal timestamps keep file order.
pub fn leave_one_out_split(d: &Dataset) -> Result<SplitDataset> {
    let mut per_user: Vec<Vec<InteractionRecord>> = vec![Vec::new(); d.n_users];
    for r in &d.interactions {
        per_user[r.user].push(*r);
    }
    let mut train = Vec::with_capacity(d.n_users);
    let mut validation = Vec::with_capacity(d.n_users);
    let mut test = Vec::with_capacity(d.n_users);
    for (user, mut history) in per_user.into_iter().enumerate() {
        if history.len() < MIN_INTERACTIONS {
            return Err(Error::InsufficientHistory {
                user,
                count: history.len(),
            });
        }
        // Stable sort keeps file order among equal timestamps.
        history.sort_by_key(|r| r.timestamp);
        test.push(history.pop().expect("non-empty"));
        validation.push(history.pop().expect("non-empty"));
        train.push(history);
    }
    Ok(SplitDataset {
        n_items: d.n_items,
        train,
        validation,
        test,
    })
}

/// Samples `n` distinct items the user never interacted with.
pub fn sample_eval_negatives(
    user: usize,
    split: &SplitDataset,
    n: usize,
    rng: &mut RandomStream,
) -> Result<Vec<usize>> {
    let history = split.history_items(user);
    let candidates: Vec<usize> = (0..split.n_items).filter(|i| !history.contains(i)).collect();
    if candidates.len() < n {
        return Err(Error::InsufficientNegatives {
            user,
            requested: n,
            available: candidates.len(),
        });
    }
    Ok(index::sample(rng, candidates.len(), n)
        .into_iter()
        .map(|i| candidates[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn raw(user: &str, item: &str, ts: i64) -> RawInteraction {
        RawInteraction {
            user: user.into(),
            item: item.into(),
            rating: 1.0,
            timestamp: ts,
        }
    }

    #[test]
    fn toy_file_single_user() {
        let f = write_tmp("7\t10\t5\t1\n7\t11\t3\t2\n7\t12\t4\t3\n");
        let d = load_interactions(f.path(), InteractionFormat::TsvRating).unwrap();
        assert_eq!((d.n_users, d.n_items), (1, 3));
        assert_eq!(d.item_ids.original(2), Some("12"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("1\t2\t3\t4\n1\t2\tthree\t4\n");
        match load_interactions(f.path(), InteractionFormat::TsvRating).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        let f = write_tmp("1\t2\t3\n");
        assert!(matches!(
            load_interactions(f.path(), InteractionFormat::TsvRating),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("");
        assert!(matches!(
            load_interactions(f.path(), InteractionFormat::TsvRating),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn short_history_user_and_exclusive_items_are_dropped() {
        // user b has two interactions; item z is only used by b.
        let records = vec![
            raw("a", "x", 1),
            raw("b", "z", 1),
            raw("a", "y", 2),
            raw("b", "x", 2),
            raw("a", "w", 3),
        ];
        // Independent filter: keep users with >= 3 records, then count the
        // distinct items they touch.
        let mut per_user: HashMap<&str, usize> = HashMap::new();
        for r in &records {
            *per_user.entry(&r.user).or_default() += 1;
        }
        let kept: Vec<&RawInteraction> = records.iter().filter(|r| per_user[r.user.as_str()] >= 3).collect();
        let kept_users: HashSet<&str> = kept.iter().map(|r| r.user.as_str()).collect();
        let kept_items: HashSet<&str> = kept.iter().map(|r| r.item.as_str()).collect();

        let d = Dataset::from_raw(&records).unwrap();
        assert_eq!(d.n_users, kept_users.len());
        assert_eq!(d.n_items, kept_items.len());
        assert_eq!(d.dropped_users, 1);
        assert_eq!(d.item_ids.dense("z"), None);
        assert_eq!(d.interactions.len(), kept.len());
    }

    #[test]
    fn id_maps_round_trip() {
        let records: Vec<_> = (0..12).map(|i| raw(&format!("u{}", i % 3), &format!("i{}", i % 5), i)).collect();
        let d = Dataset::from_raw(&records).unwrap();
        for u in 0..d.n_users {
            let orig = d.user_ids.original(u).unwrap();
            assert_eq!(d.user_ids.dense(orig), Some(u));
        }
        for r in &records {
            let dense = d.item_ids.dense(&r.item).unwrap();
            assert_eq!(d.item_ids.original(dense), Some(r.item.as_str()));
        }
    }

    #[test]
    fn attributes_load_and_validate_rows() {
        let f = write_tmp("1.0,2.0\n3.0,4.0\n");
        let t = load_attributes(f.path(), 2).unwrap();
        assert_eq!((t.rows(), t.cols()), (2, 2));
        assert_eq!(t.row(1), &[3.0, 4.0]);
        assert!(matches!(
            load_attributes(f.path(), 3),
            Err(Error::RowCount { expected: 3, found: 2, .. })
        ));
        let ones = AttributeTable::ones(4);
        assert_eq!((ones.rows(), ones.cols()), (4, 1));
        assert!(ones.row(3) == [1.0]);
    }

    #[test]
    fn split_uses_timestamps_then_file_order() {
        let records = vec![raw("u", "c", 30), raw("u", "a", 10), raw("u", "b", 20)];
        let d = Dataset::from_raw(&records).unwrap();
        let s = leave_one_out_split(&d).unwrap();
        let name = |i: usize| d.item_ids.original(i).unwrap().to_owned();
        assert_eq!(name(s.test(0).item), "c");
        assert_eq!(name(s.validation(0).item), "b");
        assert_eq!(s.train(0).len(), 1);
        assert_eq!(name(s.train(0)[0].item), "a");

        let ties = vec![raw("u", "p", 5), raw("u", "q", 5), raw("u", "r", 5), raw("u", "s", 5)];
        let d = Dataset::from_raw(&ties).unwrap();
        let s = leave_one_out_split(&d).unwrap();
        assert_eq!(d.item_ids.original(s.test(0).item), Some("s"));
        assert_eq!(d.item_ids.original(s.validation(0).item), Some("r"));
    }

    #[test]
    fn split_rejects_short_histories() {
        let d = Dataset {
            n_users: 1,
            n_items: 2,
            interactions: vec![
                InteractionRecord { user: 0, item: 0, rating: 1.0, timestamp: 0 },
                InteractionRecord { user: 0, item: 1, rating: 1.0, timestamp: 1 },
            ],
            user_attributes: None,
            item_attributes: None,
            user_ids: IdMap::default(),
            item_ids: IdMap::default(),
            dropped_users: 0,
        };
        assert!(matches!(leave_one_out_split(&d), Err(Error::InsufficientHistory { user: 0, count: 2 })));
    }

    fn toy_split() -> SplitDataset {
        let mut records = Vec::new();
        for u in 0..4 {
            for k in 0..5 {
                records.push(raw(&format!("u{u}"), &format!("i{}", (u * 3 + k) % 12), k as i64));
            }
        }
        leave_one_out_split(&Dataset::from_raw(&records).unwrap()).unwrap()
    }

    #[test]
    fn negatives_are_pure_distinct_and_seeded() {
        let s = toy_split();
        for u in 0..s.n_users() {
            let history = s.history_items(u);
            let n = s.n_items() - history.len();
            let a = sample_eval_negatives(u, &s, n, &mut RandomStream::new(5)).unwrap();
            let b = sample_eval_negatives(u, &s, n, &mut RandomStream::new(5)).unwrap();
            assert_eq!(a, b);
            let set: HashSet<usize> = a.iter().copied().collect();
            assert_eq!(set.len(), n);
            let complement: HashSet<usize> = (0..s.n_items()).filter(|i| !history.contains(i)).collect();
            assert_eq!(set, complement);
            assert!(matches!(
                sample_eval_negatives(u, &s, n + 1, &mut RandomStream::new(5)),
                Err(Error::InsufficientNegatives { .. })
            ));
        }
    }

    #[test]
    fn split_partitions_every_history() {
        let s = toy_split();
        let d_records: usize = (0..s.n_users()).map(|u| s.train(u).len() + 2).sum();
        assert_eq!(d_records, 20);
        let t = s.training_data();
        for u in 0..s.n_users() {
            assert!(!t.items(u).contains(&s.test(u).item));
            assert_eq!(t.interaction_count(u), 3);
        }
    }
    #[test]
    fn keyed_attributes_follow_dense_ids() {
        let d = Dataset::from_raw(&[
            raw("b", "x", 1),
            raw("b", "y", 2),
            raw("b", "z", 3),
            raw("a", "x", 1),
            raw("a", "y", 2),
            raw("a", "z", 3),
        ])
        .unwrap();
        let f = write_tmp("a,1,2\nb,3,4\nghost,0,0\n");
        let t = load_keyed_attributes(f.path(), &d.user_ids).unwrap();
        assert_eq!(t.row(d.user_ids.dense("b").unwrap()), &[3.0, 4.0]);
        assert_eq!(t.row(d.user_ids.dense("a").unwrap()), &[1.0, 2.0]);

        let missing = write_tmp("a,1,2\n");
        assert!(matches!(
            load_keyed_attributes(missing.path(), &d.user_ids),
            Err(Error::RowCount { expected: 2, found: 1, .. })
        ));
        let dup = write_tmp("a,1,2\na,1,2\nb,0,0\n");
        assert!(matches!(load_keyed_attributes(dup.path(), &d.user_ids), Err(Error::Parse { line: 2, .. })));
    }

}
