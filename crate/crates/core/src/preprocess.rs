//! POI-name text cleaning and near-duplicate clustering.
//!
//! Users misspell names in many small ways; each spelling splits the users of
//! one name into tiny groups. Cleaning folds cosmetic differences, and
//! clustering collapses spellings within a normalized edit distance into one
//! canonical name.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// Default normalized edit distance under which two names are merged.
pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.2;

/// Deletion neighbourhoods larger than this fall back to direct comparison.
const MAX_DELETION_VARIANTS: usize = 4096;

const CJK_PUNCTUATION: &[char] = &['，', '。', '！', '？', '、', '（', '）', '【', '】'];

/// Normalizes a raw POI name: folds full-width forms to half-width, removes
/// all whitespace and the fixed punctuation set, and lower-cases Latin
/// letters. Digits and CJK ideographs are kept verbatim.
pub fn clean_text(raw: &str) -> String {
    raw.chars()
        .map(fold_width)
        .filter(|c| !c.is_whitespace() && !c.is_ascii_punctuation() && !CJK_PUNCTUATION.contains(c))
        .flat_map(|c| {
            let latin = c.is_alphabetic() && (c as u32) < 0x250;
            let lowered: Vec<char> = if latin { c.to_lowercase().collect() } else { vec![c] };
            lowered
        })
        .collect()
}

fn fold_width(c: char) -> char {
    match c as u32 {
        0xFF01..=0xFF5E => char::from_u32(c as u32 - 0xFEE0).unwrap_or(c),
        0x3000 => ' ',
        _ => c,
    }
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    strsim::levenshtein(a, b)
}

/// Levenshtein distance divided by the longer length; zero for two empty
/// strings.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    edit_distance(a, b) as f64 / longest as f64
}

/// Raw (already cleaned) name → canonical name, plus cluster sizes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalMap {
    pub mapping: BTreeMap<String, String>,
    pub cluster_sizes: BTreeMap<String, usize>,
}

impl CanonicalMap {
    /// Canonical form of a cleaned name; unseen names map to themselves.
    pub fn canonical<'a>(&'a self, cleaned: &'a str) -> &'a str {
        self.mapping.get(cleaned).map_or(cleaned, String::as_str)
    }

    /// Cleans `raw` and resolves it. Returns `None` when cleaning leaves
    /// nothing.
    pub fn resolve(&self, raw: &str) -> Option<String> {
        let cleaned = clean_text(raw);
        if cleaned.is_empty() {
            return None;
        }
        Some(self.canonical(&cleaned).to_owned())
    }

    pub fn canonical_names(&self) -> impl Iterator<Item = &str> {
        self.cluster_sizes.keys().map(String::as_str)
    }
}

/// Single-linkage clustering of names under normalized edit distance.
///
/// Two names share a cluster iff a chain of pairs each within `threshold`
/// connects them. A cluster's canonical name is its most frequent member,
/// ties going to the lexicographically smallest. Duplicate input names have
/// their frequencies summed. The result does not depend on input order.
pub fn cluster_near_duplicates(names: &[(String, u64)], threshold: f64) -> CanonicalMap {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for (name, f) in names {
        *freq.entry(name.as_str()).or_default() += f;
    }
    let entries: Vec<(&str, u64)> = freq.into_iter().collect();
    let chars: Vec<Vec<char>> = entries.iter().map(|(n, _)| n.chars().collect()).collect();

    let mut sets = DisjointSet::new(entries.len());
    for (i, j) in candidate_pairs(&chars, threshold) {
        if sets.find(i) != sets.find(j) && within_threshold(&chars[i], &chars[j], threshold) {
            sets.union(i, j);
        }
    }

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..entries.len() {
        members.entry(sets.find(i)).or_default().push(i);
    }

    let mut map = CanonicalMap::default();
    for group in members.values() {
        let &best = group
            .iter()
            .max_by(|&&a, &&b| entries[a].1.cmp(&entries[b].1).then_with(|| entries[b].0.cmp(entries[a].0)))
            .expect("groups are non-empty");
        let canonical = entries[best].0.to_owned();
        for &i in group {
            map.mapping.insert(entries[i].0.to_owned(), canonical.clone());
        }
        map.cluster_sizes.insert(canonical, group.len());
    }
    map
}

fn within_threshold(a: &Vec<char>, b: &Vec<char>, threshold: f64) -> bool {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return true;
    }
    let gap = a.len().abs_diff(b.len());
    if gap as f64 / longest as f64 > threshold {
        return false;
    }
    strsim::generic_levenshtein(a, b) as f64 / longest as f64 <= threshold
}

/// Largest edit count `d` that can still satisfy `d / max_len <= threshold`
/// for a partner of any length, given this name has `len` chars. From
/// `d <= threshold * (min_len + d)` it follows `d <= threshold * len / (1 - threshold)`.
fn edit_budget(len: usize, threshold: f64) -> usize {
    if threshold >= 1.0 {
        return usize::MAX;
    }
    (threshold * len as f64 / (1.0 - threshold) + 1e-9).floor() as usize
}

/// Pairs that might be within `threshold`, superset of the true pairs.
///
/// If `lev(a, b) <= d`, deleting at most `d` characters from each yields a
/// common string, so names sharing a deletion variant are candidates. Names
/// whose neighbourhood would be too large are compared against everyone.
fn candidate_pairs(chars: &[Vec<char>], threshold: f64) -> Vec<(usize, usize)> {
    let mut by_variant: HashMap<Vec<char>, Vec<usize>> = HashMap::new();
    let mut broad = Vec::new();
    for (i, name) in chars.iter().enumerate() {
        match deletion_variants(name, edit_budget(name.len(), threshold)) {
            Some(variants) => {
                for v in variants {
                    by_variant.entry(v).or_default().push(i);
                }
            }
            None => broad.push(i),
        }
    }

    let mut pairs: HashSet<(usize, usize)> = HashSet::new();
    for ids in by_variant.values() {
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    for &i in &broad {
        for j in 0..chars.len() {
            if i != j {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.sort_unstable();
    pairs
}

fn deletion_variants(name: &[char], budget: usize) -> Option<HashSet<Vec<char>>> {
    let mut all: HashSet<Vec<char>> = HashSet::new();
    all.insert(name.to_vec());
    let mut frontier = vec![name.to_vec()];
    for _ in 0..budget.min(name.len()) {
        let mut next = Vec::new();
        for s in &frontier {
            for k in 0..s.len() {
                let mut t = s.clone();
                t.remove(k);
                if all.insert(t.clone()) {
                    next.push(t);
                }
            }
        }
        if all.len() > MAX_DELETION_VARIANTS {
            return None;
        }
        frontier = next;
    }
    Some(all)
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}
