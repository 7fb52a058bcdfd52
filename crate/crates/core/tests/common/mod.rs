//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numeric code.

#![allow(dead_code)]

pub mod checks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// −‖h + r − t‖₂
pub fn transe_oracle(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..h.len() {
        let d = h[i] + r[i] - t[i];
        s += d * d;
    }
    -s.sqrt()
}

/// Σ h·r·t
pub fn distmult_oracle(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..h.len() {
        s += h[i] * r[i] * t[i];
    }
    s
}

/// Re(Σ h·r·conj(t)) with vectors laid out as [re ; im].
pub fn complex_oracle(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let d = h.len() / 2;
    let mut s = 0.0;
    for i in 0..d {
        let (hr, hi) = (h[i], h[d + i]);
        let (rr, ri) = (r[i], r[d + i]);
        let (tr, ti) = (t[i], -t[d + i]);
        // (hr + i hi)(rr + i ri) = a + i b
        let a = hr * rr - hi * ri;
        let b = hr * ri + hi * rr;
        s += a * tr - b * ti;
    }
    s
}

/// σ(W2·relu(W1·[u⊙v ; e] + b1) + b2), spelled out loop by loop.
pub fn scorer_oracle(w1: &[Vec<f64>], b1: &[f64], w2: &[f64], b2: f64, u: &[f64], e: &[f64], v: &[f64]) -> f64 {
    let mut x: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
    x.extend_from_slice(e);
    let mut out = b2;
    for j in 0..w1.len() {
        let mut a = b1[j];
        for k in 0..x.len() {
            a += w1[j][k] * x[k];
        }
        if a > 0.0 {
            out += w2[j] * a;
        }
    }
    1.0 / (1.0 + (-out).exp())
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues in
/// descending order with unit eigenvectors as columns (`vecs[row][col]`).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let vals = order.iter().map(|&i| m[i][i]).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (vals, vecs)
}

/// Sample covariance (divisor n − 1) of row-major data.
pub fn covariance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j] / n as f64;
        }
    }
    let mut c = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n as f64 - 1.0);
            }
        }
    }
    (mean, c)
}

/// Rank by full sort: position of the target among kept candidates sorted
/// by descending score, averaged over the block of equal scores.
pub fn sort_rank(scores: &[f64], target: usize, keep: &[bool]) -> f64 {
    let mut vals: Vec<f64> = (0..scores.len()).filter(|&c| c == target || keep[c]).map(|c| scores[c]).collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let st = scores[target];
    let first = vals.iter().position(|&s| s == st).unwrap() + 1;
    let last = vals.iter().rposition(|&s| s == st).unwrap() + 1;
    (first + last) as f64 / 2.0
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 { 0.0 } else { d / (na * nb) }
}

/// Upper-tail probability of a chi-square variable, via the regularized
/// incomplete gamma series / continued fraction.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    let a = dof / 2.0;
    let z = x / 2.0;
    if z <= 0.0 {
        return 1.0;
    }
    let ln_gamma = |s: f64| -> f64 {
        // Lanczos approximation
        let g = 7.0;
        let c = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        let s = s - 1.0;
        let mut acc = c[0];
        for (i, ci) in c.iter().enumerate().skip(1) {
            acc += ci / (s + i as f64);
        }
        let t = s + g + 0.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (s + 0.5) * t.ln() - t + acc.ln()
    };
    if z < a + 1.0 {
        let (mut sum, mut term, mut k) = (1.0 / a, 1.0 / a, a);
        for _ in 0..1000 {
            k += 1.0;
            term *= z / k;
            sum += term;
            if term < sum * 1e-15 {
                break;
            }
        }
        1.0 - sum * (-z + a * z.ln() - ln_gamma(a)).exp()
    } else {
        let mut b = z + 1.0 - a;
        let mut c = 1e300;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            d = if d.abs() < 1e-300 { 1e-300 } else { d };
            c = b + an / c;
            c = if c.abs() < 1e-300 { 1e-300 } else { c };
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-15 {
                break;
            }
        }
        (-z + a * z.ln() - ln_gamma(a)).exp() * h
    }
}
