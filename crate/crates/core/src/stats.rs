//! Special functions and the hypothesis tests built on them.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 20_000;

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` given both `x` and `y = 1 - x`.
///
/// Passing `y` separately keeps full relative precision in the small tail
/// when `x` is close to one.
pub fn beta_reg_pair(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * libm::log(x) + b * libm::log(y) - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        libm::exp(ln_front) * beta_cf(a, b, x) / a
    } else {
        1.0 - libm::exp(ln_front) * beta_cf(b, a, y) / b
    }
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    beta_reg_pair(a, b, x, 1.0 - x)
}

/// Lower regularized incomplete gamma by its power series (x < a + 1).
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..CF_MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * libm::exp(-x + a * libm::log(x) - libm::lgamma(a))
}

/// Upper regularized incomplete gamma by continued fraction (x >= a + 1).
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / CF_TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=CF_MAX_ITER {
        let i = i as f64;
        let an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = b + an / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    libm::exp(-x + a * libm::log(x) - libm::lgamma(a)) * h
}

/// Regularized upper incomplete gamma `Q(a, x)`; `a > 0`, `x >= 0`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let q = if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    };
    q.clamp(0.0, 1.0)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x).clamp(0.0, 1.0)
    } else {
        (1.0 - gamma_q_cf(a, x)).clamp(0.0, 1.0)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Two-sided Student-t tail probability `P(|T| >= |t|)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let t2 = t * t;
    beta_reg_pair(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2)).clamp(0.0, 1.0)
}

/// Student-t CDF with `df > 0` degrees of freedom.
pub fn t_cdf(x: f64, df: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    if df.is_infinite() {
        return normal_cdf(x);
    }
    let tail = 0.5 * t_two_sided_p(x, df);
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleResult {
    /// `mean(a) - mean(b)`.
    pub effect: f64,
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
    /// Both groups had zero variance; `t_stat` is `0` or `±inf`.
    pub degenerate: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Welch's unequal-variance two-sample t-test (two-sided).
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TwoSampleResult> {
    let shortest = a.len().min(b.len());
    if shortest < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: shortest,
        });
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let effect = ma - mb;
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if effect == 0.0 {
            TwoSampleResult {
                effect,
                t_stat: 0.0,
                df,
                p_value: 1.0,
                degenerate: true,
            }
        } else {
            TwoSampleResult {
                effect,
                t_stat: f64::INFINITY.copysign(effect),
                df,
                p_value: 0.0,
                degenerate: true,
            }
        });
    }
    let t_stat = effect / libm::sqrt(se2);
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TwoSampleResult {
        effect,
        t_stat,
        df,
        p_value: t_two_sided_p(t_stat, df),
        degenerate: false,
    })
}

/// Benjamini–Hochberg step-up q-values, returned in input order.
pub fn bh_fdr(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::OutOfRangeP(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]).then(i.cmp(&j)));
    let mut q = alloc::vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        let scaled = (p_values[i] * m as f64 / (rank + 1) as f64).min(1.0);
        running = running.min(scaled);
        q[i] = running;
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyResult {
    pub observed: Matrix,
    pub n: f64,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    /// The upper tail underflowed; `p_value` holds `f64::MIN_POSITIVE`.
    pub p_underflow: bool,
    pub cramers_v: f64,
    pub min_expected: f64,
}

impl ContingencyResult {
    /// `sqrt(chi2 / (n * min(r, c)))`, the normalization some toolkits use.
    /// Unlike [`ContingencyResult::cramers_v`] it cannot reach 1.
    pub fn cramers_v_min_dim(&self) -> f64 {
        let q = self.observed.rows().min(self.observed.cols()) as f64;
        libm::sqrt(self.chi2 / (self.n * q))
    }
}

/// Pearson chi-square test of independence with Cramér's V.
pub fn chi_square_independence(table: &Matrix) -> Result<ContingencyResult> {
    let (r, c) = table.shape();
    if r < 2 || c < 2 {
        return Err(Error::InvalidConfig(
            "contingency table needs at least 2 rows and 2 columns",
        ));
    }
    if table
        .as_slice()
        .iter()
        .any(|&x| !(x >= 0.0) || !x.is_finite())
    {
        return Err(Error::InvalidConfig(
            "contingency counts must be finite and non-negative",
        ));
    }
    let row_tot: Vec<f64> = table.row_iter().map(|row| row.iter().sum()).collect();
    let col_tot: Vec<f64> = (0..c)
        .map(|j| (0..r).map(|i| table[(i, j)]).sum())
        .collect();
    if row_tot.iter().chain(&col_tot).any(|&t| t == 0.0) {
        return Err(Error::ZeroMarginal);
    }
    let n: f64 = row_tot.iter().sum();
    let mut chi2 = 0.0;
    let mut min_expected = f64::INFINITY;
    for i in 0..r {
        for j in 0..c {
            let e = row_tot[i] * col_tot[j] / n;
            min_expected = min_expected.min(e);
            let d = table[(i, j)] - e;
            chi2 += d * d / e;
        }
    }
    if min_expected < 5.0 {
        log::warn!("chi-square: smallest expected count {min_expected:.3} is below 5");
    }
    let dof = (r - 1) * (c - 1);
    let mut p_value = gamma_q(dof as f64 / 2.0, chi2 / 2.0);
    let p_underflow = p_value < f64::MIN_POSITIVE;
    if p_underflow {
        p_value = f64::MIN_POSITIVE;
    }
    let cramers_v = libm::sqrt(chi2 / (n * (r.min(c) - 1) as f64)).min(1.0);
    Ok(ContingencyResult {
        observed: table.clone(),
        n,
        chi2,
        dof,
        p_value,
        p_underflow,
        cramers_v,
        min_expected,
    })
}
