//! Hypernym taxonomies and RUMEN-style pair sampling.
//!
//! The taxonomy is read from a two-section TSV export:
//!
//! ```text
//! [edges]
//! dog.n.01    canine.n.02
//! [lemmas]
//! dog.n.01    dog
//! dog.n.01    domestic_dog
//! ```
//!
//! Edge lines are `child<TAB>parent`; lemma lines are `synset<TAB>lemma`. Blank lines and lines
//! starting with `#` are ignored. The graph must be acyclic with exactly one parentless synset.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{PairDataset, Relation, WordPair};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

/// Default minimum path distance for random pairs.
pub const MIN_RANDOM_DISTANCE: usize = 7;

#[derive(Debug, Clone)]
pub struct TaxonomyGraph {
    /// Synset ids in ascending order; a synset's index is its position here.
    ids: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    lemmas: Vec<Vec<String>>,
    senses: HashMap<String, Vec<usize>>,
    depths: Vec<usize>,
    root: usize,
}

impl TaxonomyGraph {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn root(&self) -> &str {
        &self.ids[self.root]
    }

    pub fn contains(&self, synset: &str) -> bool {
        self.index.contains_key(synset)
    }

    pub fn synsets(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    fn id(&self, synset: &str) -> Result<usize> {
        self.index
            .get(synset)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown synset {synset:?}")))
    }

    /// Length of the shortest hypernym path to the root.
    pub fn depth(&self, synset: &str) -> Result<usize> {
        Ok(self.depths[self.id(synset)?])
    }

    pub fn parents(&self, synset: &str) -> Result<Vec<&str>> {
        Ok(self.parents[self.id(synset)?].iter().map(|&p| self.ids[p].as_str()).collect())
    }

    pub fn lemmas(&self, synset: &str) -> Result<&[String]> {
        Ok(&self.lemmas[self.id(synset)?])
    }

    /// Synsets a lemma belongs to, in id order.
    pub fn senses(&self, lemma: &str) -> Vec<&str> {
        self.senses
            .get(lemma)
            .map(|ids| ids.iter().map(|&i| self.ids[i].as_str()).collect())
            .unwrap_or_default()
    }

    /// Shortest upward distance from `node` to each of its ancestors, itself included.
    fn ancestor_distances(&self, node: usize) -> HashMap<usize, usize> {
        let mut dist = HashMap::from([(node, 0)]);
        let mut queue = VecDeque::from([node]);
        while let Some(n) = queue.pop_front() {
            let d = dist[&n];
            for &p in &self.parents[n] {
                dist.entry(p).or_insert_with(|| {
                    queue.push_back(p);
                    d + 1
                });
            }
        }
        dist
    }

    fn lca_distance(&self, a: usize, b: usize) -> (usize, usize) {
        let da = self.ancestor_distances(a);
        let db = self.ancestor_distances(b);
        let lca = da
            .keys()
            .filter(|n| db.contains_key(n))
            .copied()
            .max_by(|&x, &y| self.depths[x].cmp(&self.depths[y]).then(y.cmp(&x)))
            .expect("root is a common ancestor");
        (da[&lca] + db[&lca], lca)
    }

    fn undirected_distance(&self, a: usize, b: usize) -> usize {
        let mut dist = vec![usize::MAX; self.len()];
        dist[a] = 0;
        let mut queue = VecDeque::from([a]);
        while let Some(n) = queue.pop_front() {
            if n == b {
                break;
            }
            for &m in self.parents[n].iter().chain(&self.children[n]) {
                if dist[m] == usize::MAX {
                    dist[m] = dist[n] + 1;
                    queue.push_back(m);
                }
            }
        }
        dist[b]
    }

    fn distance_ids(&self, a: usize, b: usize, mode: DistanceMode) -> (usize, usize) {
        let (d, lca) = self.lca_distance(a, b);
        match mode {
            DistanceMode::Lca => (d, lca),
            DistanceMode::Undirected => (self.undirected_distance(a, b), lca),
        }
    }

    /// True when `ancestor` is reachable from `synset` by one or more hypernym edges.
    pub fn is_strict_ancestor(&self, synset: &str, ancestor: &str) -> Result<bool> {
        let (s, a) = (self.id(synset)?, self.id(ancestor)?);
        Ok(s != a && self.ancestor_distances(s).contains_key(&a))
    }
}

/// How the distance between two synsets is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DistanceMode {
    /// Sum of the shortest upward paths to the deepest common ancestor.
    #[default]
    Lca,
    /// Shortest path ignoring edge direction.
    Undirected,
}

impl std::str::FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lca" => Ok(DistanceMode::Lca),
            "undirected" => Ok(DistanceMode::Undirected),
            _ => Err(Error::invalid(format!("unknown distance mode {s:?}"))),
        }
    }
}

/// Distance between two synsets and their deepest common ancestor.
///
/// Ties between equally deep common ancestors go to the smallest id.
pub fn path_distance<'g>(graph: &'g TaxonomyGraph, s1: &str, s2: &str) -> Result<(usize, &'g str)> {
    path_distance_with(graph, s1, s2, DistanceMode::Lca)
}

pub fn path_distance_with<'g>(
    graph: &'g TaxonomyGraph,
    s1: &str,
    s2: &str,
    mode: DistanceMode,
) -> Result<(usize, &'g str)> {
    let (a, b) = (graph.id(s1)?, graph.id(s2)?);
    let (d, lca) = graph.distance_ids(a, b, mode);
    Ok((d, graph.ids[lca].as_str()))
}

#[derive(PartialEq)]
enum Section {
    None,
    Edges,
    Lemmas,
}

pub fn read_taxonomy<R: BufRead>(reader: R) -> Result<TaxonomyGraph> {
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut lemma_lines: Vec<(String, String)> = Vec::new();
    let mut section = Section::None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match trimmed.trim() {
            "[edges]" => {
                section = Section::Edges;
                continue;
            }
            "[lemmas]" => {
                section = Section::Lemmas;
                continue;
            }
            _ => {}
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::format(lineno, "expected two non-empty tab-separated fields"));
        }
        let rec = (fields[0].to_string(), fields[1].to_string());
        match section {
            Section::Edges => edges.push(rec),
            Section::Lemmas => lemma_lines.push(rec),
            Section::None => return Err(Error::format(lineno, "record before any [edges] or [lemmas] header")),
        }
    }

    let mut ids: Vec<String> = edges
        .iter()
        .flat_map(|(c, p)| [c.clone(), p.clone()])
        .chain(lemma_lines.iter().map(|(s, _)| s.clone()))
        .collect();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::format(0, "taxonomy has no synsets"));
    }
    let index: HashMap<String, usize> = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let n = ids.len();
    let mut parents = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    for (c, p) in &edges {
        let (c, p) = (index[c], index[p]);
        if !parents[c].contains(&p) {
            parents[c].push(p);
            children[p].push(c);
        }
    }
    for list in parents.iter_mut().chain(children.iter_mut()) {
        list.sort_unstable();
    }

    if let Some(member) = find_cycle_member(&parents) {
        return Err(Error::format(0, format!("hypernym cycle through {:?}", ids[member])));
    }
    let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_empty()).collect();
    if roots.len() != 1 {
        let names: Vec<&str> = roots.iter().take(5).map(|&r| ids[r].as_str()).collect();
        return Err(Error::format(
            0,
            format!("expected exactly one root, found {} ({})", roots.len(), names.join(", ")),
        ));
    }
    let root = roots[0];

    let mut depths = vec![usize::MAX; n];
    depths[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &c in &children[v] {
            if depths[c] == usize::MAX {
                depths[c] = depths[v] + 1;
                queue.push_back(c);
            }
        }
    }

    let mut lemmas = vec![Vec::new(); n];
    let mut senses: HashMap<String, Vec<usize>> = HashMap::new();
    for (s, lemma) in lemma_lines {
        let id = index[&s];
        if !lemmas[id].contains(&lemma) {
            lemmas[id].push(lemma.clone());
            senses.entry(lemma).or_default().push(id);
        }
    }
    for list in senses.values_mut() {
        list.sort_unstable();
    }

    Ok(TaxonomyGraph {
        ids,
        index,
        parents,
        children,
        lemmas,
        senses,
        depths,
        root,
    })
}

/// Returns some node on a cycle, if there is one.
fn find_cycle_member(parents: &[Vec<usize>]) -> Option<usize> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; parents.len()];
    for start in 0..parents.len() {
        if state[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        state[start] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&p) = parents[node].get(*next) {
                *next += 1;
                match state[p] {
                    0 => {
                        state[p] = 1;
                        stack.push((p, 0));
                    }
                    1 => return Some(p),
                    _ => {}
                }
            } else {
                state[node] = 2;
                stack.pop();
            }
        }
    }
    None
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<TaxonomyGraph> {
    let file = std::fs::File::open(path)?;
    read_taxonomy(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpec {
    pub hypernym: usize,
    pub synonym: usize,
    pub cohyponym: usize,
    pub random: usize,
    pub min_random_distance: usize,
    pub distance_mode: DistanceMode,
    /// Draws allowed per requested pair before giving up on a relation.
    pub attempts_per_pair: usize,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            hypernym: 0,
            synonym: 0,
            cohyponym: 0,
            random: 0,
            min_random_distance: MIN_RANDOM_DISTANCE,
            distance_mode: DistanceMode::Lca,
            attempts_per_pair: 200,
            seed: 0,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_random_distance == 0 {
            return Err(Error::invalid("min_random_distance must be at least 1"));
        }
        if self.attempts_per_pair == 0 {
            return Err(Error::invalid("attempts_per_pair must be at least 1"));
        }
        Ok(())
    }

    pub fn requested(&self, rel: Relation) -> usize {
        match rel {
            Relation::Hypernym => self.hypernym,
            Relation::Synonym => self.synonym,
            Relation::Cohyponym => self.cohyponym,
            Relation::Random => self.random,
            Relation::Meronym => 0,
        }
    }
}

/// Pairs sampled for each relation plus the relations that fell short.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub dataset: PairDataset,
    /// Relation to the number of missing pairs.
    pub shortfall: BTreeMap<Relation, usize>,
}

impl SampleOutcome {
    pub fn is_complete(&self) -> bool {
        self.shortfall.is_empty()
    }
}

const SAMPLED: [Relation; 4] = [Relation::Hypernym, Relation::Synonym, Relation::Cohyponym, Relation::Random];

/// Samples a RUMEN-style dataset.
///
/// Every relation draws synsets first and surfaces one lemma of each: hypernym pairs join a
/// synset with one of its strict ancestors, synonym pairs two lemmas of one synset, co-hyponym
/// pairs two children of one parent whose lemmas share no synset, and random pairs two synsets
/// whose deepest common ancestor is the root and whose distance reaches `min_random_distance`.
/// Unordered word pairs are unique across the whole output. A relation that cannot be filled
/// within its draw budget is reported in the shortfall and logged as a warning.
pub fn sample_pairs(graph: &TaxonomyGraph, spec: &SampleSpec) -> Result<SampleOutcome> {
    spec.validate()?;
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut pairs = Vec::new();
    let mut shortfall = BTreeMap::new();
    let with_lemmas: Vec<usize> = (0..graph.len()).filter(|&i| !graph.lemmas[i].is_empty()).collect();

    for rel in SAMPLED {
        let want = spec.requested(rel);
        if want == 0 {
            continue;
        }
        let mut rng = rng_from_seed(derive_seed(spec.seed, &format!("sample/{}", rel.as_str())));
        let sampler = RelationSampler::new(graph, rel, &with_lemmas, spec);
        let budget = want.saturating_mul(spec.attempts_per_pair);
        let mut got = 0;
        let mut draws = 0;
        while got < want && draws < budget && !sampler.hopeless() {
            draws += 1;
            let Some((x, y)) = sampler.draw(&mut rng) else { continue };
            if x == y {
                continue;
            }
            let key = if x < y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
            if !seen.insert(key) {
                continue;
            }
            pairs.push(WordPair::new(x, y, rel)?);
            got += 1;
        }
        if got < want {
            log::warn!("sampled {got} of {want} {rel} pairs");
            shortfall.insert(rel, want - got);
        }
    }
    Ok(SampleOutcome {
        dataset: PairDataset::new(pairs),
        shortfall,
    })
}

struct RelationSampler<'g> {
    graph: &'g TaxonomyGraph,
    rel: Relation,
    pool: Vec<usize>,
    lemma_synsets: &'g [usize],
    min_distance: usize,
    mode: DistanceMode,
}

impl<'g> RelationSampler<'g> {
    fn new(graph: &'g TaxonomyGraph, rel: Relation, with_lemmas: &'g [usize], spec: &SampleSpec) -> Self {
        let pool = match rel {
            Relation::Hypernym => with_lemmas.iter().copied().filter(|&s| graph.depths[s] >= 1).collect(),
            Relation::Synonym => with_lemmas.iter().copied().filter(|&s| graph.lemmas[s].len() >= 2).collect(),
            Relation::Cohyponym => (0..graph.len())
                .filter(|&p| graph.children[p].iter().filter(|&&c| !graph.lemmas[c].is_empty()).count() >= 2)
                .collect(),
            _ => with_lemmas.to_vec(),
        };
        RelationSampler {
            graph,
            rel,
            pool,
            lemma_synsets: with_lemmas,
            min_distance: spec.min_random_distance,
            mode: spec.distance_mode,
        }
    }

    fn hopeless(&self) -> bool {
        match self.rel {
            Relation::Random => self.pool.len() < 2,
            _ => self.pool.is_empty(),
        }
    }

    fn lemma<R: Rng>(&self, synset: usize, rng: &mut R) -> String {
        self.graph.lemmas[synset].choose(rng).expect("synset has lemmas").clone()
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Option<(String, String)> {
        let g = self.graph;
        match self.rel {
            Relation::Hypernym => {
                let s = *self.pool.choose(rng)?;
                let mut ancestors: Vec<usize> = g
                    .ancestor_distances(s)
                    .into_keys()
                    .filter(|&a| a != s && !g.lemmas[a].is_empty())
                    .collect();
                ancestors.sort_unstable();
                let a = *ancestors.choose(rng)?;
                Some((self.lemma(s, rng), self.lemma(a, rng)))
            }
            Relation::Synonym => {
                let s = *self.pool.choose(rng)?;
                let mut two = g.lemmas[s].choose_multiple(rng, 2);
                Some((two.next()?.clone(), two.next()?.clone()))
            }
            Relation::Cohyponym => {
                let p = *self.pool.choose(rng)?;
                let kids: Vec<usize> = g.children[p].iter().copied().filter(|&c| !g.lemmas[c].is_empty()).collect();
                let mut two = kids.choose_multiple(rng, 2);
                let (a, b) = (*two.next()?, *two.next()?);
                let (x, y) = (self.lemma(a, rng), self.lemma(b, rng));
                let shared = g.senses[&x].iter().any(|s| g.senses[&y].contains(s));
                (!shared).then_some((x, y))
            }
            _ => {
                let a = *self.lemma_synsets.choose(rng)?;
                let b = *self.lemma_synsets.choose(rng)?;
                if a == b {
                    return None;
                }
                let (d, lca) = g.distance_ids(a, b, self.mode);
                (lca == g.root && d >= self.min_distance).then(|| (self.lemma(a, rng), self.lemma(b, rng)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(text: &str) -> Result<TaxonomyGraph> {
        read_taxonomy(text.as_bytes())
    }

    #[test]
    fn chain_depths() {
        let g = graph("[edges]\nc\tb\nb\ta\n").unwrap();
        assert_eq!(g.root(), "a");
        assert_eq!(g.depth("a").unwrap(), 0);
        assert_eq!(g.depth("b").unwrap(), 1);
        assert_eq!(g.depth("c").unwrap(), 2);
    }

    #[test]
    fn cycle_and_roots_are_rejected() {
        let err = graph("[edges]\na\tb\nb\ta\n").unwrap_err().to_string();
        assert!(err.contains("cycle"), "{err}");
        let err = graph("[edges]\nb\ta\nd\tc\n").unwrap_err().to_string();
        assert!(err.contains("root"), "{err}");
        assert!(graph("x\ty\n").is_err());
    }

    #[test]
    fn distances() {
        let g = graph("[edges]\nb\ta\nc\ta\nd\tb\n").unwrap();
        assert_eq!(path_distance(&g, "b", "b").unwrap(), (0, "b"));
        assert_eq!(path_distance(&g, "d", "a").unwrap(), (2, "a"));
        assert_eq!(path_distance(&g, "b", "c").unwrap(), (2, "a"));
        assert_eq!(path_distance(&g, "d", "c").unwrap(), (3, "a"));
        assert!(path_distance(&g, "d", "zz").is_err());
    }

    #[test]
    fn lca_ties_go_to_smallest_id() {
        // x and y both sit under p and q, which are equally deep.
        let g = graph("[edges]\np\tr\nq\tr\nx\tp\nx\tq\ny\tp\ny\tq\n").unwrap();
        assert_eq!(path_distance(&g, "x", "y").unwrap(), (2, "p"));
    }

    #[test]
    fn undirected_mode_can_be_shorter() {
        // d reaches root r directly and through a long branch; e hangs under d's deep parent.
        let g = graph("[edges]\nm\tr\nn\tm\nd\tn\nd\tr\ne\tn\n").unwrap();
        let (lca_d, lca) = path_distance(&g, "d", "e").unwrap();
        assert_eq!((lca_d, lca), (2, "n"));
        let (und, _) = path_distance_with(&g, "d", "e", DistanceMode::Undirected).unwrap();
        assert_eq!(und, 2);
    }

    #[test]
    fn multi_parent_depth_is_shortest() {
        let g = graph("[edges]\nb\ta\nc\tb\nd\tc\nd\ta\n").unwrap();
        assert_eq!(g.depth("d").unwrap(), 1);
    }

    #[test]
    fn unsatisfiable_random_distance() {
        // Depth 3 on both sides of the root gives at most 6.
        let mut text = String::from("[edges]\n");
        for side in ["l", "r"] {
            text += &format!("{side}1\troot\n{side}2\t{side}1\n{side}3\t{side}2\n");
        }
        text += "[lemmas]\n";
        for s in ["l1", "l2", "l3", "r1", "r2", "r3"] {
            text += &format!("{s}\tw_{s}\n");
        }
        let g = graph(&text).unwrap();
        let spec = SampleSpec {
            random: 5,
            ..Default::default()
        };
        let out = sample_pairs(&g, &spec).unwrap();
        assert!(out.dataset.pairs.is_empty());
        assert_eq!(out.shortfall.get(&Relation::Random), Some(&5));

        let spec = SampleSpec {
            random: 3,
            min_random_distance: 6,
            ..Default::default()
        };
        let out = sample_pairs(&g, &spec).unwrap();
        assert_eq!(out.dataset.count(Relation::Random), 1);
        let p = &out.dataset.pairs[0];
        let mut words = [p.x.as_str(), p.y.as_str()];
        words.sort();
        assert_eq!(words, ["w_l3", "w_r3"]);
    }

    #[test]
    fn lemma_lookup() {
        let g = graph("[edges]\nb\ta\n[lemmas]\nb\tbank\na\tbank\na\tthing\n").unwrap();
        assert_eq!(g.senses("bank"), vec!["a", "b"]);
        assert_eq!(g.lemmas("a").unwrap(), ["bank".to_string(), "thing".to_string()]);
        assert!(g.senses("nothing").is_empty());
    }
}
