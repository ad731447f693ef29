use std::collections::BTreeMap;

use pathfinding::prelude::{kuhn_munkres, Matrix as Weights};

use crate::error::{Error, Result};

/// Dense relabeling to `0..k` in order of first appearance of sorted ids.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let ids: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
    let index: BTreeMap<usize, usize> = ids.keys().enumerate().map(|(i, &l)| (l, i)).collect();
    (labels.iter().map(|l| index[l]).collect(), index.len())
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Vec<Vec<u64>>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::LengthMismatch(0, 0));
    }
    let (a, ka) = compact(a);
    let (b, kb) = compact(b);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&i, &j) in a.iter().zip(&b) {
        table[i][j] += 1;
    }
    Ok(table)
}

/// Sum in ascending order, so any permutation of the terms gives the same
/// bits.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    sorted_sum(
        counts
            .filter(|&c| c > 0)
            .map(|c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .collect(),
    )
}

/// Normalised mutual information `I(A;B) / √(H(A) H(B))` in nats. When either
/// entropy is zero the score is 1 for identical partitions and 0 otherwise.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let table = contingency(a, b)?;
    let n = a.len() as f64;
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let (ha, hb) = (entropy(rows.iter().copied(), n), entropy(cols.iter().copied(), n));
    if ha == 0.0 || hb == 0.0 {
        return Ok(if ha == hb { 1.0 } else { 0.0 });
    }
    // Sorted sums make swapping the arguments or renaming labels exact.
    let mut terms: Vec<f64> = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                terms.push(c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln());
            }
        }
    }
    let mi = sorted_sum(terms);
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Best matched fraction over one-to-one maps between predicted and true
/// labels, found by optimal assignment on the contingency table.
pub fn hungarian_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let k = table.len().max(table[0].len());
    let square = Weights::from_fn(k, k, |(i, j)| {
        table.get(i).and_then(|r| r.get(j)).map_or(0i64, |&c| c as i64)
    });
    let (matched, _) = kuhn_munkres(&square);
    Ok(matched as f64 / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-15);
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmi(&[3, 3, 3], &[5, 5, 5]).unwrap(), 1.0);
        assert_eq!(nmi(&[3, 3, 3], &[0, 1, 1]).unwrap(), 0.0);
        assert!(matches!(nmi(&[0], &[0, 1]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn hungarian_examples() {
        assert_eq!(hungarian_accuracy(&[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(hungarian_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(hungarian_accuracy(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap(), 0.5);
        // More predicted clusters than classes: one cluster stays unmatched.
        assert_eq!(hungarian_accuracy(&[0, 1, 2, 2], &[0, 0, 1, 1]).unwrap(), 0.75);
    }
}
