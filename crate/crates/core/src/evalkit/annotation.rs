use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Low = 0,
    Mid = 1,
    High = 2,
}

#[derive(Debug, Deserialize)]
struct Row {
    item_id: String,
    annotator_id: String,
    rating: u8,
}

/// Integer Likert ratings keyed by item and annotator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationTable {
    ratings: BTreeMap<String, BTreeMap<String, u8>>,
}

impl AnnotationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item: &str, annotator: &str, rating: u8) -> Result<()> {
        if !(MIN_RATING..=MAX_RATING).contains(&rating) {
            return Err(Error::usage(format!(
                "rating {rating} for item {item:?} outside {MIN_RATING}..={MAX_RATING}"
            )));
        }
        let previous = self
            .ratings
            .entry(item.to_string())
            .or_default()
            .insert(annotator.to_string(), rating);
        if previous.is_some() {
            return Err(Error::usage(format!(
                "annotator {annotator:?} rated item {item:?} twice"
            )));
        }
        Ok(())
    }

    /// Reads `item_id,annotator_id,rating` rows with a header line.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut table = Self::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
            table
                .insert(&row.item_id, &row.annotator_id, row.rating)
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                })?;
        }
        Ok(table)
    }

    pub fn annotators(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self
            .ratings
            .values()
            .flat_map(|m| m.keys().map(String::as_str))
            .collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    pub fn items(&self) -> usize {
        self.ratings.len()
    }

    pub fn collapse(rating: u8) -> Bucket {
        match rating {
            0..=2 => Bucket::Low,
            3 => Bucket::Mid,
            _ => Bucket::High,
        }
    }

    /// Rating pairs of items rated by both annotators, in item order.
    pub fn paired(&self) -> Result<Vec<(u8, u8)>> {
        let names = self.annotators();
        if names.len() != 2 {
            return Err(Error::usage(format!(
                "kappa needs exactly two annotators, found {}",
                names.len()
            )));
        }
        let pairs: Vec<(u8, u8)> = self
            .ratings
            .values()
            .filter_map(|m| Some((*m.get(names[0])?, *m.get(names[1])?)))
            .collect();
        if pairs.is_empty() {
            return Err(Error::usage("no item was rated by both annotators"));
        }
        Ok(pairs)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}
