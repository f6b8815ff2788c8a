//! Small dense real matrices stored row-major.

pub fn mat_mul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for t in 0..k {
            let x = a[i * k + t];
            if x != 0.0 {
                for j in 0..c {
                    out[i * c + j] += x * b[t * c + j];
                }
            }
        }
    }
    out
}

/// Determinant by LU with partial pivoting.
pub fn det(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut d = 1.0;
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs())).unwrap();
        if m[piv * n + k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            d = -d;
        }
        let p = m[k * n + k];
        d *= p;
        for i in k + 1..n {
            let f = m[i * n + k] / p;
            if f != 0.0 {
                for j in k..n {
                    m[i * n + j] -= f * m[k * n + j];
                }
            }
        }
    }
    d
}

/// Inverse by Gauss-Jordan with partial pivoting; `None` when singular.
pub fn inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let w = 2 * n;
    let mut m = vec![0.0; n * w];
    for i in 0..n {
        m[i * w..i * w + n].copy_from_slice(&a[i * n..(i + 1) * n]);
        m[i * w + n + i] = 1.0;
    }
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[i * w + k].abs().total_cmp(&m[j * w + k].abs())).unwrap();
        if m[piv * w + k] == 0.0 {
            return None;
        }
        for j in 0..w {
            m.swap(k * w + j, piv * w + j);
        }
        let p = m[k * w + k];
        for j in 0..w {
            m[k * w + j] /= p;
        }
        for i in 0..n {
            if i != k {
                let f = m[i * w + k];
                if f != 0.0 {
                    for j in 0..w {
                        m[i * w + j] -= f * m[k * w + j];
                    }
                }
            }
        }
    }
    Some((0..n).flat_map(|i| m[i * w + n..i * w + w].to_vec()).collect())
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
