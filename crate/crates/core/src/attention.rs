//! Scaled dot-product attention for a single query, exact and restricted to
//! a selected token set, plus the recall and fidelity metrics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor::{dot, MatRef};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub out: Vec<f32>,
    /// Softmax probability of each attended row, in attended order.
    pub weights: Vec<f64>,
}

/// Softmax of `q·k / sqrt(d)` over `rows`, then the weighted sum of values.
fn attend(q: &[f32], keys: MatRef<'_>, values: MatRef<'_>, rows: impl Iterator<Item = usize> + Clone) -> AttentionOutput {
    let d = keys.cols();
    let scale = 1.0 / (d as f64).sqrt();
    let logits: Vec<f64> = rows.clone().map(|i| dot(q, keys.row(i)) * scale).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut acc = vec![0.0f64; values.cols()];
    for (w, i) in weights.iter().zip(rows) {
        for (a, &v) in acc.iter_mut().zip(values.row(i)) {
            *a += w * f64::from(v);
        }
    }
    AttentionOutput {
        out: acc.into_iter().map(|x| x as f32).collect(),
        weights,
    }
}

pub fn full_attention(q: &[f32], keys: MatRef<'_>, values: MatRef<'_>) -> Result<AttentionOutput> {
    if keys.rows() == 0 || keys.rows() != values.rows() || keys.cols() != q.len() {
        return Err(invalid("full attention needs L >= 1 keys matching values and query width"));
    }
    Ok(attend(q, keys, values, 0..keys.rows()))
}

/// Attention restricted to the rows in `ids`.
pub fn approx_attention(q: &[f32], keys: MatRef<'_>, values: MatRef<'_>, ids: &[usize]) -> Result<AttentionOutput> {
    if ids.is_empty() {
        return Err(invalid("selected token set is empty"));
    }
    if keys.rows() != values.rows() || keys.cols() != q.len() {
        return Err(invalid("keys, values and query disagree on shape"));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= keys.rows()) {
        return Err(invalid(format!("token id {bad} out of range for {} keys", keys.rows())));
    }
    Ok(attend(q, keys, values, ids.iter().copied()))
}

/// `|selected ∩ truth| / |truth|`. Both slices must be ascending.
pub fn recall_rate(selected: &[usize], truth: &[usize]) -> f64 {
    assert!(!truth.is_empty(), "recall is undefined for an empty ground truth");
    let (mut i, mut j, mut hit) = (0, 0, 0usize);
    while i < selected.len() && j < truth.len() {
        match selected[i].cmp(&truth[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                hit += 1;
                i += 1;
                j += 1;
            }
        }
    }
    hit as f64 / truth.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputError {
    /// `‖approx − exact‖ / ‖exact‖`, or the absolute norm when `relative` is false.
    pub l2_rel: f64,
    pub cos_sim: f64,
    /// False when the exact output had zero norm.
    pub relative: bool,
}

pub fn output_error(approx: &AttentionOutput, exact: &AttentionOutput) -> OutputError {
    assert_eq!(approx.out.len(), exact.out.len(), "outputs differ in width");
    let (mut diff, mut ee, mut aa, mut ae) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (&a, &e) in approx.out.iter().zip(&exact.out) {
        let (a, e) = (f64::from(a), f64::from(e));
        diff += (a - e) * (a - e);
        ee += e * e;
        aa += a * a;
        ae += a * e;
    }
    let (diff, ne, na) = (diff.sqrt(), ee.sqrt(), aa.sqrt());
    let relative = ne > 0.0;
    let cos_sim = if ne > 0.0 && na > 0.0 {
        ae / (ne * na)
    } else if ne == na {
        1.0
    } else {
        0.0
    };
    OutputError {
        l2_rel: if relative { diff / ne } else { diff },
        cos_sim,
        relative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    #[test]
    fn single_row_returns_its_value() {
        let k = Matrix::from_rows(&[[0.3, -2.0]]).unwrap();
        let v = Matrix::from_rows(&[[5.0, 7.0]]).unwrap();
        let o = full_attention(&[1.0, 1.0], k.view(), v.view()).unwrap();
        assert_eq!(o.out, vec![5.0, 7.0]);
        assert_eq!(o.weights, vec![1.0]);
    }

    #[test]
    fn equal_logits_are_uniform() {
        let k = Matrix::from_rows(&[[1.0, 0.0]; 4]).unwrap();
        let v = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]).unwrap();
        let o = full_attention(&[0.5, 9.0], k.view(), v.view()).unwrap();
        assert!(o.weights.iter().all(|w| (w - 0.25).abs() < 1e-12));
        assert!((o.out[0] - 2.5).abs() < 1e-6);
    }

    #[test]
    fn approx_over_everything_matches_full() {
        let k = Matrix::from_rows(&[[0.1, 0.9], [1.5, -0.2], [-0.7, 0.4]]).unwrap();
        let v = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]).unwrap();
        let q = [0.4, -1.1];
        let full = full_attention(&q, k.view(), v.view()).unwrap();
        let approx = approx_attention(&q, k.view(), v.view(), &[0, 1, 2]).unwrap();
        assert_eq!(full, approx);
        let single = approx_attention(&q, k.view(), v.view(), &[2]).unwrap();
        assert_eq!(single.out, vec![2.0, 2.0]);
    }

    #[test]
    fn approx_rejects_empty_and_out_of_range() {
        let k = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(approx_attention(&[1.0], k.view(), k.view(), &[]).is_err());
        assert!(approx_attention(&[1.0], k.view(), k.view(), &[1]).is_err());
    }

    #[test]
    fn recall_arithmetic() {
        let truth = [1, 2, 3, 4, 5, 6, 7, 8];
        assert_eq!(recall_rate(&truth, &truth), 1.0);
        assert_eq!(recall_rate(&[9, 10], &truth), 0.0);
        assert_eq!(recall_rate(&[0, 1, 2, 3, 4, 5, 6, 20], &truth), 0.75);
    }

    #[test]
    fn output_error_reference_cases() {
        let e = AttentionOutput {
            out: vec![1.0, -2.0, 0.5],
            weights: vec![],
        };
        let same = output_error(&e, &e);
        assert_eq!(same.l2_rel, 0.0);
        assert!((same.cos_sim - 1.0).abs() < 1e-12);
        let double = AttentionOutput {
            out: e.out.iter().map(|x| 2.0 * x).collect(),
            weights: vec![],
        };
        let err = output_error(&double, &e);
        assert!((err.l2_rel - 1.0).abs() < 1e-12);
        assert!((err.cos_sim - 1.0).abs() < 1e-12);

        let zero = AttentionOutput {
            out: vec![0.0; 3],
            weights: vec![],
        };
        let err = output_error(&e, &zero);
        assert!(!err.relative);
        assert!((err.l2_rel - 5.25f64.sqrt()).abs() < 1e-6);
    }
}
