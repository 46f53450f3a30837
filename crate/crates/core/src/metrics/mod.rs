//! Per-sequence similarity scores: BLEU-1..4 with the length-ratio brevity
//! penalty, and METEOR with a chunk-based fragmentation penalty.
//!
//! All functions are generic over the token type so they work on raw cell ids
//! as well as on small test alphabets. Callers strip virtual tokens first.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

/// Largest number of subset combinations searched exhaustively when picking
/// which repeated tokens to align. Beyond this a coordinate search is used.
const EXACT_ALIGN_LIMIT: u64 = 20_000;

/// Clipped n-gram precision: each n-gram of `cand` counts at most as often as
/// it occurs in `reference`, divided by the number of n-grams in `cand`.
/// Zero when `cand` has fewer than `n` tokens.
pub fn modified_precision<T: Eq + Hash>(cand: &[T], reference: &[T], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    if cand.len() < n {
        return 0.0;
    }
    let mut ref_counts: HashMap<&[T], usize> = HashMap::new();
    for w in reference.windows(n) {
        *ref_counts.entry(w).or_default() += 1;
    }
    let mut cand_counts: HashMap<&[T], usize> = HashMap::new();
    for w in cand.windows(n) {
        *cand_counts.entry(w).or_default() += 1;
    }
    let clipped: usize = cand_counts
        .iter()
        .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    clipped as f64 / (cand.len() - n + 1) as f64
}

/// `min(1, |cand| / |ref|) * (P_1 ... P_n)^(1/n)`, with no smoothing.
pub fn bleu_n<T: Eq + Hash>(cand: &[T], reference: &[T], n: usize) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut prod = 1.0;
    for i in 1..=n {
        let p = modified_precision(cand, reference, i);
        if p == 0.0 {
            return 0.0;
        }
        prod *= p;
    }
    let bp = (cand.len() as f64 / reference.len() as f64).min(1.0);
    bp * prod.powf(1.0 / n as f64)
}

/// A one-to-one mapping between equal tokens of a candidate and a reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `(candidate index, reference index)` sorted by candidate index.
    pub mappings: Vec<(usize, usize)>,
    pub crossings: usize,
    pub chunks: usize,
}

impl Alignment {
    fn from_pairs(mut mappings: Vec<(usize, usize)>) -> Self {
        mappings.sort_unstable();
        let crossings = count_crossings(&mappings);
        let chunks = count_chunks(&mappings);
        Self {
            mappings,
            crossings,
            chunks,
        }
    }
}

/// Pairs `(i1, j1), (i2, j2)` with `i1 < i2` and `j1 > j2`. Input sorted by `i`.
pub fn count_crossings(sorted: &[(usize, usize)]) -> usize {
    let mut n = 0;
    for (a, &(_, ja)) in sorted.iter().enumerate() {
        n += sorted[a + 1..].iter().filter(|&&(_, jb)| jb < ja).count();
    }
    n
}

/// Maximal runs of mappings at consecutive candidate positions whose reference
/// positions are also adjacent. Input sorted by candidate index.
pub fn count_chunks(sorted: &[(usize, usize)]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1.abs_diff(w[0].1) == 1))
        .count()
}

/// Tie-break key: earlier candidate positions mapped, and to smaller reference
/// positions, sort first.
fn leftmost_key(sorted: &[(usize, usize)], cand_len: usize) -> Vec<(u8, usize)> {
    let mut key = vec![(1u8, 0usize); cand_len];
    for &(i, j) in sorted {
        key[i] = (0, j);
    }
    key
}

struct Group {
    cand: Vec<usize>,
    reference: Vec<usize>,
}

impl Group {
    fn k(&self) -> usize {
        self.cand.len().min(self.reference.len())
    }

    /// Pairs the chosen positions of the longer side in order with the whole
    /// shorter side; pairing in order never adds crossings.
    fn pairs(&self, chosen: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
        let picked: Vec<usize> = if self.cand.len() > self.reference.len() {
            chosen.iter().map(|&c| self.cand[c]).collect()
        } else {
            chosen.iter().map(|&c| self.reference[c]).collect()
        };
        let swap = self.cand.len() > self.reference.len();
        let short: &[usize] = if swap { &self.reference } else { &self.cand };
        picked
            .into_iter()
            .zip(short.iter().copied())
            .map(move |(p, s)| if swap { (p, s) } else { (s, p) })
            .collect::<Vec<_>>()
            .into_iter()
    }

    fn long_len(&self) -> usize {
        self.cand.len().max(self.reference.len())
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| {
        acc.saturating_mul((n - i) as u64) / (i as u64 + 1)
    })
}

/// Advances `c` to the next k-subset of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn assemble(groups: &[Group], choice: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = groups
        .iter()
        .zip(choice)
        .flat_map(|(g, c)| g.pairs(c))
        .collect();
    v.sort_unstable();
    v
}

/// Maximum-cardinality alignment of equal tokens with the fewest crossing
/// pairs; remaining ties go to the leftmost mapping.
pub fn meteor_align<T: Eq + Hash>(cand: &[T], reference: &[T]) -> Alignment {
    let mut index: HashMap<&T, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for (i, t) in cand.iter().enumerate() {
        let g = *index.entry(t).or_insert_with(|| {
            groups.push(Group {
                cand: Vec::new(),
                reference: Vec::new(),
            });
            groups.len() - 1
        });
        groups[g].cand.push(i);
    }
    for (j, t) in reference.iter().enumerate() {
        if let Some(&g) = index.get(t) {
            groups[g].reference.push(j);
        }
    }
    groups.retain(|g| g.k() > 0);

    // Groups whose sides have equal size have a single in-order pairing.
    let free: Vec<usize> = (0..groups.len())
        .filter(|&g| groups[g].cand.len() != groups[g].reference.len())
        .collect();
    let mut choice: Vec<Vec<usize>> = groups.iter().map(|g| (0..g.k()).collect()).collect();
    let score = |choice: &[Vec<usize>]| {
        let pairs = assemble(&groups, choice);
        (count_crossings(&pairs), leftmost_key(&pairs, cand.len()), pairs)
    };

    let combos = free
        .iter()
        .try_fold(1u64, |acc, &g| {
            let n = binomial(groups[g].long_len(), groups[g].k());
            acc.checked_mul(n).filter(|&v| v <= EXACT_ALIGN_LIMIT)
        });

    let mut best = score(&choice);
    if combos.is_some() {
        // Odometer over every group's subsets.
        'outer: loop {
            let mut d = free.len();
            loop {
                if d == 0 {
                    break 'outer;
                }
                d -= 1;
                let g = free[d];
                if next_combination(&mut choice[g], groups[g].long_len()) {
                    break;
                }
                choice[g] = (0..groups[g].k()).collect();
            }
            let s = score(&choice);
            if (s.0, &s.1) < (best.0, &best.1) {
                best = s;
            }
        }
    } else {
        // Coordinate search: re-optimize one group at a time until stable.
        loop {
            let mut improved = false;
            for &g in &free {
                let mut c: Vec<usize> = (0..groups[g].k()).collect();
                let mut count = 0u64;
                loop {
                    let mut trial = choice.clone();
                    trial[g] = c.clone();
                    let s = score(&trial);
                    if (s.0, &s.1) < (best.0, &best.1) {
                        best = s;
                        choice = trial;
                        improved = true;
                    }
                    count += 1;
                    if count >= EXACT_ALIGN_LIMIT || !next_combination(&mut c, groups[g].long_len()) {
                        break;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    Alignment::from_pairs(best.2)
}

/// `F_mean * (1 - 0.5 (chunks / matched)^3)` with `F_mean = 10PR / (R + 9P)`.
pub fn meteor<T: Eq + Hash>(cand: &[T], reference: &[T]) -> f64 {
    let a = meteor_align(cand, reference);
    meteor_from_counts(a.mappings.len(), a.chunks, cand.len(), reference.len())
}

pub fn meteor_from_counts(matched: usize, chunks: usize, cand_len: usize, ref_len: usize) -> f64 {
    if matched == 0 {
        return 0.0;
    }
    let p = matched as f64 / cand_len as f64;
    let r = matched as f64 / ref_len as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / matched as f64).powi(3);
    f * (1.0 - penalty)
}

/// The five scores of one candidate against one reference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreVector {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub meteor: f64,
}

impl ScoreVector {
    pub const NAMES: [&'static str; 5] = ["bleu1", "bleu2", "bleu3", "bleu4", "meteor"];

    pub fn score<T: Eq + Hash>(cand: &[T], reference: &[T]) -> Self {
        Self {
            bleu1: bleu_n(cand, reference, 1),
            bleu2: bleu_n(cand, reference, 2),
            bleu3: bleu_n(cand, reference, 3),
            bleu4: bleu_n(cand, reference, 4),
            meteor: meteor(cand, reference),
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.bleu1, self.bleu2, self.bleu3, self.bleu4, self.meteor]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            bleu1: a[0],
            bleu2: a[1],
            bleu3: a[2],
            bleu4: a[3],
            meteor: a[4],
        }
    }

    /// Component-wise arithmetic mean; zero for an empty slice.
    pub fn mean(scores: &[ScoreVector]) -> Self {
        if scores.is_empty() {
            return Self::default();
        }
        let mut acc = [0.0; 5];
        for s in scores {
            acc.iter_mut().zip(s.to_array()).for_each(|(a, v)| *a += v);
        }
        Self::from_array(acc.map(|a| a / scores.len() as f64))
    }
}
