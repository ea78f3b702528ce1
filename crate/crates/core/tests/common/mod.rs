//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

/// Sums of squares of a balanced `[a][b][s]` design computed straight from
/// the textbook definitions: every mean is an explicit loop over the
/// observations it averages, and every sum of squares runs over all
/// `a·b·s` observations.
pub struct DirectSums {
    pub ss_a: f64,
    pub ss_b: f64,
    pub ss_ab: f64,
    pub ss_e: f64,
    pub ss_t: f64,
    pub f_a: f64,
    pub f_b: f64,
    pub f_ab: f64,
}

pub fn direct_sum_anova(y: &[Vec<Vec<f64>>]) -> DirectSums {
    let a = y.len();
    let b = y[0].len();
    let s = y[0][0].len();
    let mut grand = 0.0;
    for row in y {
        for cell in row {
            for v in cell {
                grand += v;
            }
        }
    }
    grand /= (a * b * s) as f64;

    let level_a = |i: usize| {
        let mut t = 0.0;
        for j in 0..b {
            for k in 0..s {
                t += y[i][j][k];
            }
        }
        t / (b * s) as f64
    };
    let level_b = |j: usize| {
        let mut t = 0.0;
        for i in 0..a {
            for k in 0..s {
                t += y[i][j][k];
            }
        }
        t / (a * s) as f64
    };
    let cell = |i: usize, j: usize| {
        let mut t = 0.0;
        for k in 0..s {
            t += y[i][j][k];
        }
        t / s as f64
    };

    let (mut ss_a, mut ss_b, mut ss_ab, mut ss_e, mut ss_t) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..a {
        for j in 0..b {
            for k in 0..s {
                let (ma, mb, mc) = (level_a(i), level_b(j), cell(i, j));
                ss_a += (ma - grand).powi(2);
                ss_b += (mb - grand).powi(2);
                ss_ab += (mc - ma - mb + grand).powi(2);
                ss_e += (y[i][j][k] - mc).powi(2);
                ss_t += (y[i][j][k] - grand).powi(2);
            }
        }
    }
    let ms_e = ss_e / (a * b * (s - 1)) as f64;
    DirectSums {
        ss_a,
        ss_b,
        ss_ab,
        ss_e,
        ss_t,
        f_a: ss_a / (a - 1) as f64 / ms_e,
        f_b: ss_b / (b - 1) as f64 / ms_e,
        f_ab: ss_ab / ((a - 1) * (b - 1)) as f64 / ms_e,
    }
}

/// Upper tail of the F distribution by adaptive Simpson quadrature of its
/// density over `[f, ∞)`, mapped onto `[0, 1)` with `u = f + t / (1 − t)`.
/// The normalizing constant comes from statrs' log-gamma.
pub fn quadrature_f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_norm = 0.5 * d1 * (d1 / d2).ln() + ln_gamma((d1 + d2) / 2.0)
        - ln_gamma(d1 / 2.0)
        - ln_gamma(d2 / 2.0);
    let density = |u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        (ln_norm + (d1 / 2.0 - 1.0) * u.ln() - (d1 + d2) / 2.0 * (1.0 + d1 * u / d2).ln()).exp()
    };
    let integrand = |t: f64| -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - t;
        density(f + t / w) / (w * w)
    };
    let panels = 256;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = k as f64 / panels as f64;
        let hi = (k + 1) as f64 / panels as f64;
        total += adaptive_simpson(&integrand, lo, hi, 1e-14, 40);
    }
    total
}

fn adaptive_simpson<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (g(a), g(b), g(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(g, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    g: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (g(d), g(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(g, a, c, fa, fc, fd, left, tol / 2.0, depth - 1)
        + simpson_step(g, c, b, fc, fb, fe, right, tol / 2.0, depth - 1)
}

/// Interval length by enumerating every `(δ, ε)` pair, i.e. every window of
/// consecutive labels containing index `x`, and keeping the smallest one
/// whose mass strictly exceeds `coverage`.
pub fn brute_force_interval(mass: &[f64], x: usize, coverage: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for delta in 0..=x {
        for eps in 0..mass.len() - x {
            let total: f64 = mass[x - delta..=x + eps].iter().sum();
            if total > coverage {
                let len = delta + eps + 1;
                best = Some(best.map_or(len, |b| b.min(len)));
            }
        }
    }
    best
}
