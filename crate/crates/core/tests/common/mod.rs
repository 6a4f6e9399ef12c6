//! Random tables and brute-force scanners shared by the integration tests.
//!
//! The scanners work on raw category indices, one row at a time, and share
//! no code with the library's bitset counting or probe machinery.

#![allow(dead_code)]

use std::collections::BTreeSet;

use arl::data::{Dataset, FeatureDef, Item, ItemUniverse};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Shape {
    pub max_rows: usize,
    pub min_k: usize,
    pub max_k: usize,
    pub max_card: usize,
}

pub const SMALL: Shape = Shape {
    max_rows: 500,
    min_k: 2,
    max_k: 6,
    max_card: 4,
};

/// A table where each feature copies a random earlier feature's category
/// (mod its own cardinality) with some probability, so that strong rules,
/// weak rules, unseen categories and zero-count antecedents all occur.
pub fn random_dataset(seed: u64, shape: &Shape) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(shape.min_k..=shape.max_k);
    let n = rng.gen_range(1..=shape.max_rows);
    let cards: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=shape.max_card)).collect();
    let features: Vec<FeatureDef> = cards
        .iter()
        .enumerate()
        .map(|(j, &c)| FeatureDef::new(format!("f{j}"), (0..c).map(|v| format!("v{v}"))).unwrap())
        .collect();
    let universe = ItemUniverse::new(features).unwrap();
    let parents: Vec<Option<(usize, f64)>> = (0..k)
        .map(|j| (j > 0 && rng.gen_bool(0.7)).then(|| (rng.gen_range(0..j), rng.gen_range(0.5..1.0))))
        .collect();
    // Skewed marginals: category 0 is the most common.
    let rows: Vec<Vec<u32>> = (0..n)
        .map(|_| {
            let mut row = vec![0u32; k];
            for j in 0..k {
                row[j] = match parents[j] {
                    Some((p, strength)) if rng.gen_bool(strength) => row[p] % cards[j] as u32,
                    _ => {
                        let a: usize = rng.gen_range(0..cards[j]);
                        let b: usize = rng.gen_range(0..cards[j]);
                        a.min(b) as u32
                    }
                };
            }
            row
        })
        .collect();
    Dataset::new(universe, rows).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Thresholds drawn from a grid that includes exact count ratios.
pub fn pick_threshold(rng: &mut ChaCha8Rng) -> f64 {
    const GRID: [f64; 9] = [0.0, 0.1, 0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.75, 0.9, 1.0];
    GRID[rng.gen_range(0..GRID.len())]
}

/// Every feature subset of size `1..=a`, built by recursion.
pub fn feature_subsets(k: usize, a: usize) -> Vec<Vec<usize>> {
    fn grow(start: usize, k: usize, a: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for f in start..k {
            cur.push(f);
            out.push(cur.clone());
            if cur.len() < a {
                grow(f + 1, k, a, cur, out);
            }
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(0, k, a, &mut Vec::new(), &mut out);
    out
}

/// Every assignment of one category to each feature of `s`, as items.
pub fn instantiations(u: &ItemUniverse, s: &[usize]) -> Vec<Vec<Item>> {
    let mut out = vec![Vec::new()];
    for &f in s {
        let mut next = Vec::new();
        for partial in &out {
            for c in 0..u.cardinality(f) {
                let mut x = partial.clone();
                x.push(u.item(f, c));
                next.push(x);
            }
        }
        out = next;
    }
    out
}

fn holds(d: &Dataset, r: usize, item: Item) -> bool {
    let u = d.universe();
    d.row(r)[u.feature_of(item)] as usize == u.category_of(item)
}

/// Rows containing every item of `x`.
pub fn matching_rows(d: &Dataset, x: &[Item]) -> Vec<usize> {
    (0..d.n()).filter(|&r| x.iter().all(|&i| holds(d, r, i))).collect()
}

pub fn count_in(d: &Dataset, rows: &[usize], item: Item) -> usize {
    rows.iter().filter(|&&r| holds(d, r, item)).count()
}

/// `count(x ∪ {y}) / count(x)`, `None` when `x` matches nothing.
pub fn conf_scan(d: &Dataset, x: &[Item], y: Item) -> Option<f64> {
    let rows = matching_rows(d, x);
    (!rows.is_empty()).then(|| count_in(d, &rows, y) as f64 / rows.len() as f64)
}

/// Every leave-one-feature-out conditional of `x` is defined and `≥ tau`.
pub fn antecedent_ok(d: &Dataset, x: &[Item], tau: f64) -> bool {
    (0..x.len()).all(|drop| {
        let rest: Vec<Item> = x
            .iter()
            .enumerate()
            .filter(|&(p, _)| p != drop)
            .map(|(_, &i)| i)
            .collect();
        matches!(conf_scan(d, &rest, x[drop]), Some(c) if c >= tau)
    })
}

pub type RuleKey = (Vec<Item>, Item);

/// Rules `X → y` with a valid antecedent and `conf(X → y) ≥ tau_c`, keyed
/// with the expected validity (the confidence).
pub fn rule_oracle(d: &Dataset, tau_a: f64, tau_c: f64, a: usize) -> BTreeSet<(Vec<Item>, Item, u64)> {
    let u = d.universe();
    let mut out = BTreeSet::new();
    for s in feature_subsets(u.k(), a) {
        for x in instantiations(u, &s) {
            if !antecedent_ok(d, &x, tau_a) {
                continue;
            }
            let rows = matching_rows(d, &x);
            if rows.is_empty() {
                continue;
            }
            for f in (0..u.k()).filter(|f| !s.contains(f)) {
                for c in 0..u.cardinality(f) {
                    let y = u.item(f, c);
                    let conf = count_in(d, &rows, y) as f64 / rows.len() as f64;
                    if conf >= tau_c {
                        out.insert((x.clone(), y, conf.to_bits()));
                    }
                }
            }
        }
    }
    out
}

/// Itemsets (one item per feature, size `1..=a`) whose leave-one-feature-out
/// conditionals are all defined and `≥ tau_s`.
pub fn itemset_oracle(d: &Dataset, tau_s: f64, a: usize) -> BTreeSet<Vec<Item>> {
    let u = d.universe();
    feature_subsets(u.k(), a)
        .into_iter()
        .flat_map(|s| instantiations(u, &s))
        .filter(|x| antecedent_ok(d, x, tau_s))
        .collect()
}

/// Double loop over every antecedent and consequent with support and
/// confidence thresholds.
pub fn miner_oracle(d: &Dataset, min_sup: f64, min_conf: f64, a: usize) -> BTreeSet<(Vec<Item>, Item, u64)> {
    let u = d.universe();
    let n = d.n() as f64;
    let mut out = BTreeSet::new();
    for s in feature_subsets(u.k(), a) {
        for x in instantiations(u, &s) {
            let rows = matching_rows(d, &x);
            if rows.is_empty() {
                continue;
            }
            for f in (0..u.k()).filter(|f| !s.contains(f)) {
                for c in 0..u.cardinality(f) {
                    let y = u.item(f, c);
                    let xy = count_in(d, &rows, y);
                    let conf = xy as f64 / rows.len() as f64;
                    if xy as f64 / n >= min_sup && conf >= min_conf {
                        out.insert((x.clone(), y, conf.to_bits()));
                    }
                }
            }
        }
    }
    out
}

/// Itemsets present in at least one row with support `≥ min_sup`.
pub fn frequent_oracle(d: &Dataset, min_sup: f64, max_size: usize) -> BTreeSet<(Vec<Item>, u64)> {
    let u = d.universe();
    let n = d.n() as f64;
    feature_subsets(u.k(), max_size)
        .into_iter()
        .flat_map(|s| instantiations(u, &s))
        .filter_map(|x| {
            let c = matching_rows(d, &x).len();
            let sup = c as f64 / n;
            (c > 0 && sup >= min_sup).then(|| (x, sup.to_bits()))
        })
        .collect()
}

pub struct ScanStats {
    pub support: f64,
    pub confidence: Option<f64>,
    pub zhang: Option<f64>,
    pub interestingness: Option<f64>,
}

/// Rule metrics by a single pass over the transactions.
pub fn metric_scan(d: &Dataset, x: &[Item], y: Item) -> ScanStats {
    let (mut nx, mut ny, mut nxy) = (0usize, 0usize, 0usize);
    for r in 0..d.n() {
        let in_x = x.iter().all(|&i| holds(d, r, i));
        let in_y = holds(d, r, y);
        nx += in_x as usize;
        ny += in_y as usize;
        nxy += (in_x && in_y) as usize;
    }
    let n = d.n() as f64;
    let support = nxy as f64 / n;
    let confidence = (nx > 0).then(|| nxy as f64 / nx as f64);
    let not_x = d.n() - nx;
    let conf_not = (not_x > 0).then(|| (ny - nxy) as f64 / not_x as f64);
    let zhang = match (confidence, conf_not) {
        (Some(a), Some(b)) if a.max(b) > 0.0 => Some((a - b) / a.max(b)),
        _ => None,
    };
    let interestingness = (nx > 0 && ny > 0).then(|| {
        let sxy = nxy as f64 / n;
        (nxy as f64 / nx as f64) * (sxy / (ny as f64 / n)) * (1.0 - sxy)
    });
    ScanStats {
        support,
        confidence,
        zhang,
        interestingness,
    }
}

/// Fraction of rows matched by at least one antecedent.
pub fn coverage_scan(d: &Dataset, antecedents: &[Vec<Item>]) -> f64 {
    if d.n() == 0 {
        return 0.0;
    }
    let covered = (0..d.n())
        .filter(|&r| antecedents.iter().any(|x| x.iter().all(|&i| holds(d, r, i))))
        .count();
    covered as f64 / d.n() as f64
}
