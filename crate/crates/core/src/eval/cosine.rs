use crate::data::{encode_pgm, unit_to_byte};
use crate::error::{Error, Result};
use crate::numerics::dot;
use crate::rate::UNIT_TOL;
use crate::trainer::fmt_f64;
use crate::Matrix;

fn check_unit(z: &Matrix) -> Result<()> {
    for j in 0..z.cols() {
        let n = z.col_norm(j);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnitNorm { column: j, norm: n });
        }
    }
    Ok(())
}

/// `|zᵢᵀzⱼ|` for every ordered pair, in column order, clipped to 1 against
/// rounding.
fn abs_cosines(z: &Matrix) -> Result<Matrix> {
    check_unit(z)?;
    let cols: Vec<Vec<f64>> = (0..z.cols()).map(|j| z.col(j)).collect();
    let n = cols.len();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let c = dot(&cols[i], &cols[j]).abs().min(1.0);
            g[(i, j)] = c;
            g[(j, i)] = c;
        }
    }
    Ok(g)
}

/// Mean |cos| within and across classes for one class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMargin {
    pub class: usize,
    pub count: usize,
    pub within: f64,
    pub cross: f64,
}

/// Mean |cos| over same-label ordered pairs (self-pairs included) minus the
/// mean over different-label pairs, plus the per-class breakdown.
pub fn cosine_margin(z: &Matrix, labels: &[usize]) -> Result<(f64, Vec<ClassMargin>)> {
    if z.cols() != labels.len() {
        return Err(Error::LengthMismatch(z.cols(), labels.len()));
    }
    let g = abs_cosines(z)?;
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sums = vec![(0.0, 0usize, 0.0, 0usize); k];
    for (i, &a) in labels.iter().enumerate() {
        for (j, &b) in labels.iter().enumerate() {
            let s = &mut sums[a];
            if a == b {
                s.0 += g[(i, j)];
                s.1 += 1;
            } else {
                s.2 += g[(i, j)];
                s.3 += 1;
            }
        }
    }
    let (within_sum, within_n, cross_sum, cross_n) = sums
        .iter()
        .fold((0.0, 0, 0.0, 0), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2, acc.3 + s.3));
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let per_class = sums
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1 > 0)
        .map(|(class, s)| ClassMargin {
            class,
            count: labels.iter().filter(|&&l| l == class).count(),
            within: mean(s.0, s.1),
            cross: mean(s.2, s.3),
        })
        .collect();
    Ok((mean(within_sum, within_n) - mean(cross_sum, cross_n), per_class))
}

/// Stable sort of sample indices by `keys`.
pub fn order_by(keys: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by_key(|&i| keys[i]);
    idx
}

/// `|ZᵀZ|` with rows and columns reordered by a stable sort on `keys`.
pub fn cosine_heatmap(z: &Matrix, keys: &[usize]) -> Result<Matrix> {
    if z.cols() != keys.len() {
        return Err(Error::LengthMismatch(z.cols(), keys.len()));
    }
    check_unit(z)?;
    abs_cosines(&z.select_cols(&order_by(keys)))
}

pub fn heatmap_csv(h: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..h.rows() {
        let row: Vec<String> = h.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// 8-bit grey image with value `round(255·|cos|)`.
pub fn heatmap_pgm(h: &Matrix) -> Result<Vec<u8>> {
    let pixels: Vec<u8> = h.as_slice().iter().map(|&v| unit_to_byte(v)).collect();
    encode_pgm(h.cols(), h.rows(), &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_gives_identity() {
        let z = Matrix::identity(3);
        assert_eq!(cosine_heatmap(&z, &[0, 1, 2]).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn duplicate_columns_form_block() {
        let z = Matrix::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let h = cosine_heatmap(&z, &[0, 1, 0]).unwrap();
        assert_eq!(h.cols_range(0, 2).row(0), &[1.0, 1.0]);
        assert_eq!(h.cols_range(0, 2).row(1), &[1.0, 1.0]);
        assert_eq!(h[(2, 2)], 1.0);
        assert_eq!(h[(0, 2)], 0.0);
    }

    #[test]
    fn rejects_non_unit() {
        let z = Matrix::from_columns(&[vec![2.0, 0.0]]).unwrap();
        assert!(matches!(cosine_heatmap(&z, &[0]), Err(Error::NotUnitNorm { column: 0, .. })));
    }

    #[test]
    fn pgm_is_square() {
        let h = Matrix::identity(4);
        let img = heatmap_pgm(&h).unwrap();
        assert!(img.starts_with(b"P5\n4 4\n255\n"));
        assert_eq!(img.len(), b"P5\n4 4\n255\n".len() + 16);
    }
}
