use serde::{Deserialize, Serialize};

use super::annotation::AnnotationTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

impl std::str::FromStr for CorrelationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(CorrelationKind::Pearson),
            "spearman" => Ok(CorrelationKind::Spearman),
            other => Err(Error::usage(format!("unknown correlation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub kind: CorrelationKind,
    pub r: f64,
    pub n: usize,
    pub note: String,
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Undefined("correlation of a constant series".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn correlate(a: &[f64], b: &[f64], kind: CorrelationKind) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "series lengths differ: {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::usage("correlation needs at least 3 points"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::usage("correlation inputs must be finite"));
    }
    let (r, note) = match kind {
        CorrelationKind::Pearson => (pearson(a, b)?, format!("pearson over {} points", a.len())),
        CorrelationKind::Spearman => {
            let (ra, rb) = (average_ranks(a), average_ranks(b));
            let ties = ra.iter().chain(&rb).any(|r| r.fract() != 0.0);
            let note = format!(
                "spearman over {} points{}",
                a.len(),
                if ties { ", ties given average ranks" } else { "" }
            );
            (pearson(&ra, &rb)?, note)
        }
    };
    Ok(Correlation {
        kind,
        r,
        n: a.len(),
        note,
    })
}

/// Kappa from a square confusion matrix of counts (rows: first annotator).
pub fn kappa_from_confusion(matrix: &[Vec<u64>]) -> Result<f64> {
    let k = matrix.len();
    if k == 0 || matrix.iter().any(|row| row.len() != k) {
        return Err(Error::usage("confusion matrix must be square and non-empty"));
    }
    let total: u64 = matrix.iter().flatten().sum();
    if total == 0 {
        return Err(Error::usage("confusion matrix has no items"));
    }
    let n = total as f64;
    let observed = (0..k).map(|i| matrix[i][i]).sum::<u64>() as f64 / n;
    let expected: f64 = (0..k)
        .map(|i| {
            let row: u64 = matrix[i].iter().sum();
            let col: u64 = matrix.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if (1.0 - expected).abs() < 1e-12 {
        return Err(Error::Undefined("kappa with chance agreement 1".into()));
    }
    Ok((observed - expected) / (1.0 - expected))
}

/// Cohen's kappa between the two annotators of `table`, over items both
/// rated. With `collapsed`, ratings are first bucketed into low, mid and high.
pub fn cohen_kappa(table: &AnnotationTable, collapsed: bool) -> Result<f64> {
    let pairs = table.paired()?;
    let (k, bucket): (usize, fn(u8) -> usize) = if collapsed {
        (3, |r| AnnotationTable::collapse(r) as usize)
    } else {
        (5, |r| (r - 1) as usize)
    };
    let mut matrix = vec![vec![0u64; k]; k];
    for (a, b) in pairs {
        matrix[bucket(a)][bucket(b)] += 1;
    }
    kappa_from_confusion(&matrix)
}
