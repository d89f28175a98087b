//! Reference implementations of the scalar sparse envelope (singleton
//! groups, unit weights) computed by sorting. They share no code with
//! [`crate::envelope`] and serve as cross-checks for it.

/// Scalar sparse envelope `S_k(x)` from the sorted closed form
///
/// ```text
/// S_k(x) = 1/2 sum_{i <= r} a_i^2 + (sum_{i > r} a_i)^2 / (2 (k - r))
/// ```
///
/// where `a` is `|x|` sorted descending and `r < k` is the unique index with
/// `a_r > (sum_{i > r} a_i) / (k - r) >= a_{r+1}`.
pub fn sef_value(x: &[f64], k: usize) -> f64 {
    assert!(k >= 1);
    let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    a.sort_by(|p, q| q.partial_cmp(p).unwrap());
    let nnz = a.iter().filter(|&&v| v > 0.0).count();
    if nnz <= k {
        return 0.5 * a.iter().map(|v| v * v).sum::<f64>();
    }
    let mut head_sq = 0.0;
    let mut tail: f64 = a.iter().sum();
    for r in 0..k {
        let level = tail / (k - r) as f64;
        let above = r == 0 || a[r - 1] > level;
        if above && level >= a[r] {
            return 0.5 * head_sq + 0.5 * tail * tail / (k - r) as f64;
        }
        head_sq += a[r] * a[r];
        tail -= a[r];
    }
    unreachable!("sparse envelope split index must exist when nnz > k")
}

/// `prox_{lambda S_k}(t)`: the multiplier is found by scanning the sorted
/// breakpoints of `eta -> sum_i clamp(eta |t_i| - lambda, 0, 1)`.
pub fn sef_prox(t: &[f64], k: usize, lambda: f64) -> Vec<f64> {
    let a: Vec<f64> = t.iter().map(|v| v.abs()).collect();
    let nnz = a.iter().filter(|&&v| v > 0.0).count();
    if lambda == 0.0 {
        return t.to_vec();
    }
    let u: Vec<f64> = if nnz <= k {
        a.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
    } else {
        let mass = |eta: f64| -> f64 {
            a.iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| (eta * v - lambda).clamp(0.0, 1.0))
                .sum::<f64>()
        };
        let mut bps: Vec<f64> = a
            .iter()
            .filter(|&&v| v > 0.0)
            .flat_map(|&v| [lambda / v, (lambda + 1.0) / v])
            .collect();
        bps.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let target = k as f64;
        let mut eta = *bps.last().unwrap();
        for w in bps.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (glo, ghi) = (mass(lo), mass(hi));
            if glo < target && ghi >= target {
                eta = lo + (target - glo) * (hi - lo) / (ghi - glo);
                break;
            }
        }
        a.iter()
            .map(|&v| if v > 0.0 { (eta * v - lambda).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    };
    t.iter()
        .zip(&u)
        .map(|(&ti, &ui)| if ui > 0.0 { ui * ti / (lambda + ui) } else { 0.0 })
        .collect()
}

/// `gs_k(theta)`: weighted ridge if at most `k` groups are nonzero, else infinity.
pub fn gs_k(groups: &[Vec<usize>], weights: &[f64], theta: &[f64], k: usize) -> f64 {
    let mut nonzero = 0;
    let mut acc = 0.0;
    for (g, &d) in groups.iter().zip(weights) {
        let s: f64 = g.iter().map(|&i| theta[i] * theta[i]).sum();
        if s > 0.0 {
            nonzero += 1;
        }
        acc += 0.5 * d * s;
    }
    if nonzero <= k {
        acc
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sef_value_hand_cases() {
        assert_eq!(sef_value(&[3.0, 1.0], 1), 8.0);
        assert_eq!(sef_value(&[3.0, 0.0], 1), 4.5);
        assert_eq!(sef_value(&[-3.0, 1.0], 2), 5.0);
        // a = (10, 1, 1), k = 2: r = 1, tail 2 -> 1/2 (100 + 4)
        assert_eq!(sef_value(&[1.0, -10.0, 1.0], 2), 52.0);
    }

    #[test]
    fn sef_prox_hand_cases() {
        let v = sef_prox(&[3.0, 1.0], 1, 1.0);
        assert!((v[0] - 1.5).abs() < 1e-15 && v[1] == 0.0);
        assert_eq!(sef_prox(&[2.0, 0.0], 1, 1.0), vec![1.0, 0.0]);
    }
}
