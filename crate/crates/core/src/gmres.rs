//! Restart-free GMRES for matrix-free operators, zero initial guess.

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    /// Estimated ‖b − A·x‖ from the Givens-rotated least-squares problem.
    pub residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves A·x = b with at most `kmax` Arnoldi steps. `apply(v, out)` writes A·v.
/// kmax = 0 returns x = 0.
pub fn gmres<F>(mut apply: F, b: &[f64], kmax: usize) -> GmresOutcome
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let beta = norm(b);
    let mut x = vec![0.0; n];
    if kmax == 0 || beta == 0.0 {
        return GmresOutcome { x, residual: beta, iterations: 0 };
    }
    let kmax = kmax.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(kmax + 1);
    basis.push(b.iter().map(|v| v / beta).collect());
    // column-major Hessenberg, h[j] holds column j (length j + 2)
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(kmax);
    let mut cs: Vec<f64> = Vec::with_capacity(kmax);
    let mut sn: Vec<f64> = Vec::with_capacity(kmax);
    let mut g = vec![0.0; kmax + 1];
    g[0] = beta;
    let mut w = vec![0.0; n];
    let mut k = 0;
    while k < kmax {
        apply(&basis[k], &mut w);
        let mut col = vec![0.0; k + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij = dot(&w, v);
            col[i] = hij;
            for (wj, vj) in w.iter_mut().zip(v) {
                *wj -= hij * vj;
            }
        }
        let wn = norm(&w);
        col[k + 1] = wn;
        for i in 0..k {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let r = col[k].hypot(col[k + 1]);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (col[k] / r, col[k + 1] / r) };
        cs.push(c);
        sn.push(s);
        col[k] = r;
        col[k + 1] = 0.0;
        g[k + 1] = -s * g[k];
        g[k] *= c;
        h.push(col);
        k += 1;
        if wn <= 1e-14 * beta || g[k].abs() <= 1e-15 * beta {
            break;
        }
        basis.push(w.iter().map(|v| v / wn).collect());
    }
    // back substitution on the k × k upper triangle
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in i + 1..k {
            acc -= h[j][i] * y[j];
        }
        y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
    }
    for (j, yj) in y.iter().enumerate() {
        for (xi, vi) in x.iter_mut().zip(&basis[j]) {
            *xi += yj * vi;
        }
    }
    GmresOutcome { x, residual: g[k].abs(), iterations: k }
}
