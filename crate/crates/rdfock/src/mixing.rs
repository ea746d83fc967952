//! Anderson-accelerated fixed-point mixing for SCF-type iterations.

/// Anderson mixer on flat coefficient vectors.
///
/// For the fixed-point map `x -> g(x)` it combines the last `depth` residuals
/// `f_k = g(x_k) - x_k` by least squares and proposes
/// `x_{k+1} = x_k + beta f_k - (dX + beta dF) gamma`. With `depth = 0` this
/// reduces to plain damped mixing with factor `beta`.
#[derive(Debug, Clone)]
pub struct AndersonMixer {
    depth: usize,
    beta: f64,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl AndersonMixer {
    pub fn new(depth: usize, beta: f64) -> Self {
        Self {
            depth,
            beta,
            xs: Vec::new(),
            fs: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        self.xs.clear();
        self.fs.clear();
    }

    /// Propose the next iterate from `x` and its image `gx = g(x)`.
    pub fn next(&mut self, x: &[f64], gx: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), gx.len());
        let f: Vec<f64> = gx.iter().zip(x).map(|(g, v)| g - v).collect();
        let m = self.xs.len().min(self.depth);
        let mut out: Vec<f64> = x.iter().zip(&f).map(|(v, r)| v + self.beta * r).collect();
        if m > 0 {
            // columns j: differences against history entry k-1-j
            let mut dxs: Vec<Vec<f64>> = Vec::with_capacity(m);
            let mut dfs: Vec<Vec<f64>> = Vec::with_capacity(m);
            for j in 0..m {
                let xs_j = &self.xs[self.xs.len() - 1 - j];
                let fs_j = &self.fs[self.fs.len() - 1 - j];
                dxs.push(x.iter().zip(xs_j).map(|(a, b)| a - b).collect());
                dfs.push(f.iter().zip(fs_j).map(|(a, b)| a - b).collect());
            }
            // normal equations with light Tikhonov regularization
            let mut ata = vec![vec![0.0f64; m]; m];
            let mut atb = vec![0.0f64; m];
            for i in 0..m {
                for j in 0..m {
                    ata[i][j] = dot(&dfs[i], &dfs[j]);
                }
                atb[i] = dot(&dfs[i], &f);
                ata[i][i] += 1e-12 * (1.0 + ata[i][i]);
            }
            if let Some(gamma) = solve_small(ata, atb) {
                let mut trial = out.clone();
                for j in 0..m {
                    let gj = gamma[j];
                    for (t, (dx, df)) in trial
                        .iter_mut()
                        .zip(dxs[j].iter().zip(dfs[j].iter()))
                    {
                        *t -= gj * (dx + self.beta * df);
                    }
                }
                if trial.iter().all(|v| v.is_finite()) {
                    out = trial;
                }
            }
        }
        self.xs.push(x.to_vec());
        self.fs.push(f);
        let keep = self.depth + 1;
        if self.xs.len() > keep {
            self.xs.drain(0..self.xs.len() - keep);
            self.fs.drain(0..self.fs.len() - keep);
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col][c] * x[c];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}
