use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::pairs::WordPair;
use crate::error::{Error, Result};
use crate::exec::{map_collect, Execution};
use crate::nn::Matrix;

/// Word vectors of one fixed dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f32>>,
    duplicates: usize,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            ..Default::default()
        }
    }

    /// Inserts a vector. A word already present keeps its first vector and bumps the
    /// duplicate counter; the return value says whether the entry was inserted.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f32>) -> Result<bool> {
        if vector.len() != self.dimension {
            return Err(Error::invalid(format!(
                "vector of length {} in a table of dimension {}",
                vector.len(),
                self.dimension
            )));
        }
        let word = word.into();
        if self.entries.contains_key(&word) {
            self.duplicates += 1;
            return Ok(false);
        }
        self.entries.insert(word, vector);
        Ok(true)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of skipped duplicate entries seen while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Words in lexicographic order.
    pub fn words(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        words.sort_unstable();
        words
    }

    fn lookup(&self, word: &str) -> Result<&[f32]> {
        self.get(word).ok_or_else(|| Error::OutOfVocabulary(word.to_string()))
    }
}

/// Parses GloVe-style text: a word followed by whitespace-separated reals on each line.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let vector = fields
            .map(|f| {
                f.parse::<f32>()
                    .map_err(|_| Error::format(line_no, format!("non-numeric value {f:?}")))
            })
            .collect::<Result<Vec<f32>>>()?;
        if vector.is_empty() {
            return Err(Error::format(line_no, format!("no values for word {word:?}")));
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        if vector.len() != table.dimension {
            return Err(Error::format(
                line_no,
                format!("expected {} values, found {}", table.dimension, vector.len()),
            ));
        }
        table.insert(word, vector)?;
    }
    let table = table.unwrap_or_default();
    if table.duplicates > 0 {
        log::warn!("embedding source contains {} duplicate words", table.duplicates);
    }
    Ok(table)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    read_embeddings(BufReader::new(File::open(path)?))
}

/// Writes the table in lexicographic word order.
pub fn write_embeddings<W: Write>(mut writer: W, table: &EmbeddingTable) -> Result<()> {
    for word in table.words() {
        write!(writer, "{word}")?;
        for v in table.lookup(word)? {
            write!(writer, " {v}")?;
        }
        writeln!(writer)?;
    }
    writer.flush()?;
    Ok(())
}

/// `x ⊕ y`: the vector of `x` followed by the vector of `y`, without normalisation.
pub fn encode_pair(table: &EmbeddingTable, pair: &WordPair) -> Result<Vec<f64>> {
    let x = table.lookup(&pair.x)?;
    let y = table.lookup(&pair.y)?;
    Ok(x.iter().chain(y).map(|&v| f64::from(v)).collect())
}

/// Encodes every pair into one row of a `(pairs, 2 * dimension)` matrix.
pub fn encode_pairs<P>(table: &EmbeddingTable, pairs: &[P]) -> Result<Matrix>
where
    P: std::borrow::Borrow<WordPair> + Sync,
{
    encode_pairs_with(table, pairs, Execution::default())
}

pub fn encode_pairs_with<P>(table: &EmbeddingTable, pairs: &[P], exec: Execution) -> Result<Matrix>
where
    P: std::borrow::Borrow<WordPair> + Sync,
{
    let rows = map_collect(exec, pairs, |p| encode_pair(table, p.borrow()));
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, 2 * table.dimension()));
    }
    Matrix::from_rows(&rows)
}

/// Keeps the pairs whose two words both have vectors; returns them with the dropped count.
pub fn filter_known(table: &EmbeddingTable, pairs: Vec<WordPair>) -> (Vec<WordPair>, usize) {
    let before = pairs.len();
    let kept: Vec<WordPair> = pairs
        .into_iter()
        .filter(|p| table.contains(&p.x) && table.contains(&p.y))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Relation;

    #[test]
    fn minimal_file() {
        let t = read_embeddings("a 1.0 2.0\nb 3.0 4.0\n".as_bytes()).unwrap();
        assert_eq!(t.dimension(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b"), Some(&[3.0f32, 4.0][..]));
        assert_eq!(t.get("zzz"), None);
    }

    #[test]
    fn inconsistent_dimension_names_line() {
        let first = (0..300).map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        let second = (0..299).map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        let text = format!("a {first}\nb {second}\n");
        match read_embeddings(text.as_bytes()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field() {
        assert!(matches!(
            read_embeddings("a 1.0 x\n".as_bytes()),
            Err(Error::Format { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_keeps_first() {
        let t = read_embeddings("a 1 2\nb 3 4\na 5 6\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.duplicates(), 1);
        assert_eq!(t.get("a"), Some(&[1.0f32, 2.0][..]));
    }

    #[test]
    fn encode_is_ordered_concatenation() {
        let t = read_embeddings("x 1 2\ny 3 4\n".as_bytes()).unwrap();
        let xy = WordPair::new("x", "y", Relation::Hypernym).unwrap();
        let yx = WordPair::new("y", "x", Relation::Hypernym).unwrap();
        assert_eq!(encode_pair(&t, &xy).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_ne!(encode_pair(&t, &xy).unwrap(), encode_pair(&t, &yx).unwrap());
        let oov = WordPair::new("x", "nope", Relation::Random).unwrap();
        match encode_pair(&t, &oov) {
            Err(Error::OutOfVocabulary(w)) => assert_eq!(w, "nope"),
            other => panic!("unexpected {other:?}"),
        }
        let (kept, dropped) = filter_known(&t, vec![xy.clone(), oov]);
        assert_eq!((kept, dropped), (vec![xy.clone()], 1));
        let m = encode_pairs(&t, &[xy.clone(), yx]).unwrap();
        assert_eq!(m.shape(), (2, 4));
        assert_eq!(m.row(1), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn write_then_read() {
        let t = read_embeddings("b 0.25 -1e-3\na 1.5 2\n".as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &t).unwrap();
        let back = read_embeddings(buf.as_slice()).unwrap();
        assert_eq!(back.words(), vec!["a", "b"]);
        assert_eq!(back.get("b"), t.get("b"));
    }
}
