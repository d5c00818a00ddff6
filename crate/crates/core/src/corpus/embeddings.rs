use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::vocab::{Vocab, PAD};
use crate::error::{Error, Result};
use crate::numerics::{xavier, Rng, Tensor};

/// Builds a `|V| x dim` embedding matrix. Every row starts Xavier-initialized
/// over the whole matrix shape, rows for tokens found in `path` are then
/// overwritten with the file vectors, and the PAD row is zeroed.
///
/// The file holds one `token v1 ... vd` line per word, optionally preceded by
/// a `count dim` header line.
pub fn load_pretrained_embeddings(path: Option<&Path>, vocab: &Vocab, dim: usize, rng: &mut Rng) -> Result<Tensor> {
    let mut table: Tensor = xavier(&[vocab.len(), dim], rng)?;
    let mut copied = 0usize;
    if let Some(path) = path {
        let reader = BufReader::new(File::open(path)?);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if i == 0 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
                let file_dim: usize = rest[0].parse().unwrap();
                if file_dim != dim {
                    return Err(Error::usage(format!(
                        "embedding file {} has dimension {file_dim}, configured {dim}",
                        path.display()
                    )));
                }
                continue;
            }
            if rest.len() != dim {
                return Err(Error::usage(format!(
                    "embedding file {} line {}: expected {dim} values, found {}",
                    path.display(),
                    i + 1,
                    rest.len()
                )));
            }
            if !vocab.contains(token) {
                continue;
            }
            let id = vocab.id(token);
            let row = &mut table.data_mut()[id * dim..(id + 1) * dim];
            for (slot, field) in row.iter_mut().zip(&rest) {
                *slot = field.parse().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("bad float {field:?}: {e}"),
                })?;
            }
            copied += 1;
        }
    }
    table.data_mut()[PAD * dim..(PAD + 1) * dim].fill(0.0);
    log::info!("embeddings: {copied} of {} rows pretrained", vocab.len());
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::xavier_bound;
    use std::io::Write;

    fn vocab() -> Vocab {
        let words = ["thanks", "sir", "idiot"];
        Vocab::build([&words[..]], 100)
    }

    #[test]
    fn empty_file_gives_xavier_rows_and_zero_pad() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let v = vocab();
        let e = load_pretrained_embeddings(Some(f.path()), &v, 4, &mut Rng::seed(1)).unwrap();
        assert_eq!(e.shape(), &[v.len(), 4]);
        assert!(e.row_slice(PAD).iter().all(|&x| x == 0.0));
        let bound = xavier_bound(v.len(), 4) as f32;
        for r in 1..v.len() {
            assert!(e.row_slice(r).iter().all(|x| x.abs() <= bound));
            assert!(e.row_slice(r).iter().any(|&x| x != 0.0));
        }
    }

    #[test]
    fn file_row_is_copied() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "2 3\nsir 0.5 -1 2\nunrelated 1 1 1").unwrap();
        let v = vocab();
        let e = load_pretrained_embeddings(Some(f.path()), &v, 3, &mut Rng::seed(1)).unwrap();
        assert_eq!(e.row_slice(v.id("sir")), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "sir 0.5 -1").unwrap();
        let r = load_pretrained_embeddings(Some(f.path()), &vocab(), 3, &mut Rng::seed(1));
        assert!(matches!(r, Err(Error::Usage(_))));
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "5 2").unwrap();
        let r = load_pretrained_embeddings(Some(f.path()), &vocab(), 3, &mut Rng::seed(1));
        assert!(matches!(r, Err(Error::Usage(_))));
    }
}
