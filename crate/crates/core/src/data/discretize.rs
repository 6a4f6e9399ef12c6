use super::{DataError, Dataset, FeatureDef, ItemUniverse, MISSING};

pub const DEFAULT_BINS: usize = 10;

/// Replaces each named numeric column by equal-frequency bin labels `"[lo,hi]"`.
///
/// Cut points sit at the empirical quantiles, so bin populations differ by at
/// most one before ties are resolved. A run of equal values is never split:
/// the cut moves past the run and the whole run stays in the lower bin, which
/// may leave fewer (and unbalanced) bins. Missing cells keep their reserved
/// category. Columns whose values are already bin labels pass through.
pub fn discretize_equal_frequency(
    dataset: &Dataset,
    numeric_columns: &[String],
    bins: usize,
) -> Result<Dataset, DataError> {
    if bins == 0 {
        return Err(DataError::ZeroBins);
    }
    let universe = dataset.universe();
    let mut targets = Vec::new();
    for name in numeric_columns {
        targets.push(universe.require_feature(name)?);
    }
    targets.sort_unstable();
    targets.dedup();

    let mut rows = dataset.text_rows();
    let mut features: Vec<FeatureDef> = universe.features().to_vec();

    for &j in &targets {
        let name = &universe.feature(j).name;
        let already_binned = universe
            .feature(j)
            .categories
            .iter()
            .all(|c| c == MISSING || parse_bin_label(c).is_some());
        if already_binned {
            continue;
        }

        let mut values: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        let mut has_missing = false;
        for (r, row) in rows.iter().enumerate() {
            let cell = &row[j];
            if cell == MISSING {
                has_missing = true;
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataError::NotNumeric {
                    row: r,
                    column: name.clone(),
                    value: cell.clone(),
                })?;
            values.push((v, r));
        }
        values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let sorted: Vec<f64> = values.iter().map(|(v, _)| *v).collect();
        let bounds = bin_boundaries(&sorted, bins);
        let mut labels = Vec::with_capacity(bounds.len());
        for w in bounds.windows(2) {
            let (lo, hi) = (sorted[w[0]], sorted[w[1] - 1]);
            let label = format!("[{lo},{hi}]");
            for &(_, r) in &values[w[0]..w[1]] {
                rows[r][j] = label.clone();
            }
            labels.push(label);
        }
        if has_missing {
            labels.push(MISSING.to_string());
        }
        features[j] = FeatureDef::new(name.clone(), labels)?;
    }

    Dataset::from_text_rows_in(ItemUniverse::new(features)?, &rows)
}

/// Start offsets of each bin plus the final end offset, over sorted values.
fn bin_boundaries(sorted: &[f64], bins: usize) -> Vec<usize> {
    let n = sorted.len();
    let mut bounds = vec![0];
    if n == 0 {
        return bounds;
    }
    let b = bins.min(n);
    let (base, rem) = (n / b, n % b);
    let mut pos = 0;
    for i in 0..b - 1 {
        pos += base + usize::from(i < rem);
        let mut cut = pos.max(*bounds.last().unwrap());
        while cut < n && cut > 0 && sorted[cut - 1] == sorted[cut] {
            cut += 1;
        }
        if cut >= n {
            break;
        }
        if cut > *bounds.last().unwrap() {
            bounds.push(cut);
        }
    }
    bounds.push(n);
    bounds
}

fn parse_bin_label(s: &str) -> Option<(f64, f64)> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    let (lo, hi) = inner.split_once(',')?;
    Some((lo.parse().ok()?, hi.parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[&str]) -> Dataset {
        let rows: Vec<Vec<String>> = values.iter().map(|v| vec![v.to_string()]).collect();
        Dataset::from_text_rows(vec!["x".into()], &rows).unwrap()
    }

    fn bins_of(d: &Dataset) -> Vec<String> {
        (0..d.n()).map(|r| d.cell_text(r, 0).to_string()).collect()
    }

    /// Independent oracle: a value's bin is determined by scanning the sorted
    /// column once and closing a bin whenever the running count reaches the
    /// next quantile target at a change of value.
    fn scan_oracle(values: &[f64], bins: usize) -> Vec<Vec<f64>> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let b = bins.min(n);
        let targets: Vec<usize> = (1..b)
            .map(|i| (0..i).map(|t| n / b + usize::from(t < n % b)).sum())
            .collect();
        let mut out: Vec<Vec<f64>> = vec![vec![]];
        let mut next_target = 0;
        for (i, &v) in sorted.iter().enumerate() {
            let last = out.last().unwrap();
            let at_boundary =
                next_target < targets.len() && i >= targets[next_target] && last.last().is_some_and(|&p| p != v);
            if at_boundary {
                out.push(vec![]);
                while next_target < targets.len() && targets[next_target] <= i {
                    next_target += 1;
                }
            }
            out.last_mut().unwrap().push(v);
        }
        out
    }

    #[test]
    fn exact_split_one_to_ten() {
        let vals: Vec<String> = (1..=10).map(|v| v.to_string()).collect();
        let refs: Vec<&str> = vals.iter().map(String::as_str).collect();
        let d = discretize_equal_frequency(&column(&refs), &["x".into()], 2).unwrap();
        assert_eq!(d.universe().feature(0).categories, vec!["[1,5]", "[6,10]"]);
        assert_eq!(&bins_of(&d)[..5], &vec!["[1,5]".to_string(); 5][..]);
    }

    #[test]
    fn identical_values_collapse() {
        let d = discretize_equal_frequency(&column(&["7"; 10]), &["x".into()], 2).unwrap();
        assert_eq!(d.universe().feature(0).categories, vec!["[7,7]"]);
    }

    #[test]
    fn ties_and_quantiles_match_scan_oracle() {
        let raw = ["1", "1", "1", "2", "3", "4"];
        let d = discretize_equal_frequency(&column(&raw), &["x".into()], 2).unwrap();
        assert_eq!(d.universe().feature(0).categories, vec!["[1,1]", "[2,4]"]);
        let oracle = scan_oracle(&[1.0, 1.0, 1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(oracle, vec![vec![1.0, 1.0, 1.0], vec![2.0, 3.0, 4.0]]);

        // A tie run straddling the quantile moves to the lower bin.
        let raw = ["1", "2", "2", "2", "3", "4"];
        let d = discretize_equal_frequency(&column(&raw), &["x".into()], 2).unwrap();
        assert_eq!(d.universe().feature(0).categories, vec!["[1,2]", "[3,4]"]);
        assert_eq!(
            scan_oracle(&[1.0, 2.0, 2.0, 2.0, 3.0, 4.0], 2),
            vec![vec![1.0, 2.0, 2.0, 2.0], vec![3.0, 4.0]]
        );
    }

    #[test]
    fn randomized_columns_match_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..60);
            let bins = rng.gen_range(1..12);
            let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(0..15) as f64).collect();
            let text: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            let refs: Vec<&str> = text.iter().map(String::as_str).collect();
            let d = discretize_equal_frequency(&column(&refs), &["x".into()], bins).unwrap();
            let oracle = scan_oracle(&vals, bins);
            let expect: Vec<String> = oracle
                .iter()
                .map(|b| format!("[{},{}]", b[0], b[b.len() - 1]))
                .collect();
            assert_eq!(d.universe().feature(0).categories, expect);
            for (r, v) in vals.iter().enumerate() {
                let (lo, hi) = parse_bin_label(d.cell_text(r, 0)).unwrap();
                assert!(lo <= *v && *v <= hi);
            }
        }
    }

    #[test]
    fn idempotent_and_row_preserving() {
        let raw = ["5", "3", "9", "1", MISSING, "7", "3"];
        let once = discretize_equal_frequency(&column(&raw), &["x".into()], 3).unwrap();
        let twice = discretize_equal_frequency(&once, &["x".into()], 3).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.n(), raw.len());
        assert_eq!(once.cell_text(4, 0), MISSING);
    }

    #[test]
    fn non_numeric_cell_is_reported() {
        let err = discretize_equal_frequency(&column(&["1", "x"]), &["x".into()], 2).unwrap_err();
        assert_eq!(
            err,
            DataError::NotNumeric {
                row: 1,
                column: "x".into(),
                value: "x".into()
            }
        );
    }
}
