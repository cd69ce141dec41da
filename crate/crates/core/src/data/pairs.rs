use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Relation tag of a word pair. The derived order is the canonical alphabet order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Cohyponym,
    Hypernym,
    Synonym,
    Meronym,
    Random,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::Cohyponym,
        Relation::Hypernym,
        Relation::Synonym,
        Relation::Meronym,
        Relation::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Cohyponym => "cohyponym",
            Relation::Hypernym => "hypernym",
            Relation::Synonym => "synonym",
            Relation::Meronym => "meronym",
            Relation::Random => "random",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    /// Accepts the canonical names plus the tags used by common benchmark files
    /// (`coord`, `hyper`, `mero`, `syn`, `random-n`, ...), case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let rel = match lower.as_str() {
            "cohyponym" | "co-hyponym" | "cohypo" | "coord" | "cohyponymy" => Relation::Cohyponym,
            "hypernym" | "hyper" | "hypernymy" => Relation::Hypernym,
            "synonym" | "syn" | "synonymy" => Relation::Synonym,
            "meronym" | "mero" | "meronymy" | "partof" | "part_of" => Relation::Meronym,
            s if s == "random" || s.starts_with("random-") || s == "rand" => Relation::Random,
            _ => return Err(Error::invalid(format!("unknown relation label {s:?}"))),
        };
        Ok(rel)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordPair {
    pub x: String,
    pub y: String,
    pub label: Relation,
}

impl WordPair {
    pub fn new(x: impl Into<String>, y: impl Into<String>, label: Relation) -> Result<Self> {
        let (x, y) = (x.into(), y.into());
        if x == y {
            return Err(Error::invalid(format!("pair words must differ, got {x:?} twice")));
        }
        Ok(WordPair { x, y, label })
    }

    pub fn words(&self) -> [&str; 2] {
        [&self.x, &self.y]
    }
}

/// A sequence of pairs together with the label alphabet they use.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub pairs: Vec<WordPair>,
    pub alphabet: Vec<Relation>,
}

impl PairDataset {
    pub fn new(pairs: Vec<WordPair>) -> Self {
        let mut alphabet: Vec<Relation> = pairs.iter().map(|p| p.label).collect();
        alphabet.sort();
        alphabet.dedup();
        PairDataset { pairs, alphabet }
    }

    pub fn count(&self, rel: Relation) -> usize {
        self.pairs.iter().filter(|p| p.label == rel).count()
    }
}

/// A binary "relation vs. random" task. Class 0 is `random`, class 1 is the relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskSpec {
    pub relation: Relation,
}

impl TaskSpec {
    pub fn new(relation: Relation) -> Result<Self> {
        if relation == Relation::Random {
            return Err(Error::invalid("a task cannot oppose random to itself"));
        }
        Ok(TaskSpec { relation })
    }

    pub fn name(&self) -> String {
        format!("{}_vs_random", self.relation)
    }

    pub const CLASS_COUNT: usize = 2;

    pub fn classes(&self) -> [Relation; 2] {
        [Relation::Random, self.relation]
    }

    pub fn class_of(&self, label: Relation) -> Option<usize> {
        if label == Relation::Random {
            Some(0)
        } else if label == self.relation {
            Some(1)
        } else {
            None
        }
    }

    /// Pairs belonging to this task with their class indices, in input order.
    pub fn select<'a>(&self, pairs: &'a [WordPair]) -> Vec<(&'a WordPair, usize)> {
        pairs
            .iter()
            .filter_map(|p| self.class_of(p.label).map(|c| (p, c)))
            .collect()
    }
}

impl FromStr for TaskSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rel = s.trim().strip_suffix("_vs_random").unwrap_or(s.trim());
        TaskSpec::new(rel.parse()?)
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Reads `x<TAB>y<TAB>label` lines. Lines starting with `#` and blank lines are skipped.
pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<WordPair>> {
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::format(
                line_no,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let label = cols[2]
            .parse::<Relation>()
            .map_err(|e| Error::format(line_no, e.to_string()))?;
        let pair = WordPair::new(cols[0], cols[1], label).map_err(|e| Error::format(line_no, e.to_string()))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_pairs<W: Write>(mut writer: W, pairs: &[WordPair]) -> Result<()> {
    for p in pairs {
        for w in p.words() {
            if w.is_empty() || w.contains(['\t', '\n', '\r']) {
                return Err(Error::invalid(format!("word {w:?} cannot be written to a pair file")));
            }
        }
        if p.x.starts_with('#') {
            return Err(Error::invalid(format!("word {:?} would be read back as a comment", p.x)));
        }
        writeln!(writer, "{}\t{}\t{}", p.x, p.y, p.label)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<WordPair>> {
    read_pairs(BufReader::new(File::open(path)?))
}

pub fn save_pairs(path: impl AsRef<Path>, pairs: &[WordPair]) -> Result<()> {
    write_pairs(BufWriter::new(File::create(path)?), pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_a_single_line() {
        let pairs = read_pairs("bike\ttandem\thypernym\n".as_bytes()).unwrap();
        assert_eq!(pairs, vec![WordPair::new("bike", "tandem", Relation::Hypernym).unwrap()]);
    }

    #[test]
    fn comments_and_aliases() {
        let text = "# header\nbike\tscooter\tCOORD\n\ncar\twheel\tmero\ncar\tsky\trandom-n\n";
        let pairs = read_pairs(text.as_bytes()).unwrap();
        let labels: Vec<_> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(labels, vec![Relation::Cohyponym, Relation::Meronym, Relation::Random]);
    }

    #[test]
    fn wrong_column_count_names_line() {
        match read_pairs("bike\ttandem\n".as_bytes()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match read_pairs("a\tb\trandom\nbike\tbike\trandom\n".as_bytes()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn task_classes() {
        let t: TaskSpec = "hypernym_vs_random".parse().unwrap();
        assert_eq!(t.relation, Relation::Hypernym);
        assert_eq!(t.class_of(Relation::Random), Some(0));
        assert_eq!(t.class_of(Relation::Hypernym), Some(1));
        assert_eq!(t.class_of(Relation::Synonym), None);
        assert!("random".parse::<TaskSpec>().is_err());
        assert_eq!(t.to_string().parse::<TaskSpec>().unwrap(), t);
    }

    fn pair_strategy() -> impl Strategy<Value = WordPair> {
        ("[a-z][a-z_-]{0,8}", "[A-Z][a-z ]{0,8}", 0usize..5).prop_map(|(x, y, l)| WordPair {
            x,
            y,
            label: Relation::ALL[l],
        })
    }

    proptest! {
        #[test]
        fn save_then_load_is_identity(pairs in prop::collection::vec(pair_strategy(), 0..1000)) {
            let mut buf = Vec::new();
            write_pairs(&mut buf, &pairs).unwrap();
            prop_assert_eq!(read_pairs(buf.as_slice()).unwrap(), pairs);
        }
    }
}
