//! Independent oracles shared by the integration and acceptance suites.
//!
//! Everything here is a from-first-principles re-implementation kept
//! deliberately separate from the library code paths it checks: feature
//! formulas evaluated with plain loops, metrics counted from expanded
//! (actual, predicted) pairs, rank statistics via counting, and the
//! chi-square tail via a series / continued-fraction evaluation of the
//! regularized incomplete gamma function.

#![allow(dead_code)]

use posture_core::signal::AccelSample;

// --- feature oracle -------------------------------------------------------

fn o_mean(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in v {
        s += x;
    }
    s / v.len() as f64
}

fn o_median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn o_max(v: &[f64]) -> f64 {
    let mut m = v[0];
    for &x in v {
        if x > m {
            m = x;
        }
    }
    m
}

fn o_min(v: &[f64]) -> f64 {
    let mut m = v[0];
    for &x in v {
        if x < m {
            m = x;
        }
    }
    m
}

fn o_var(v: &[f64]) -> f64 {
    let mu = o_mean(v);
    let mut s = 0.0;
    for &x in v {
        s += (x - mu).abs().powi(2);
    }
    s / (v.len() as f64 - 1.0)
}

fn o_zcr(v: &[f64]) -> f64 {
    let mut changes = 0usize;
    for k in 1..v.len() {
        let a = v[k - 1] >= 0.0;
        let b = v[k] >= 0.0;
        if a != b {
            changes += 1;
        }
    }
    changes as f64 / (v.len() as f64 - 1.0)
}

fn o_entropy(v: &[f64]) -> f64 {
    let lo = o_min(v);
    let hi = o_max(v);
    if hi <= lo {
        return 0.0;
    }
    let mut counts = [0usize; 16];
    for &x in v {
        let mut b = ((x - lo) / (hi - lo) * 16.0) as usize;
        if b > 15 {
            b = 15;
        }
        counts[b] += 1;
    }
    let mut h = 0.0;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / v.len() as f64;
            h -= p * p.ln();
        }
    }
    h
}

fn o_skewness(v: &[f64]) -> f64 {
    let mu = o_mean(v);
    let sigma = o_var(v).sqrt();
    if sigma == 0.0 {
        return 0.0;
    }
    let mut m3 = 0.0;
    for &x in v {
        m3 += (x - mu).powi(3);
    }
    (m3 / v.len() as f64) / sigma.powi(3)
}

fn o_kurtosis(v: &[f64]) -> f64 {
    let mu = o_mean(v);
    let sigma = o_var(v).sqrt();
    if sigma == 0.0 {
        return 0.0;
    }
    let mut m4 = 0.0;
    for &x in v {
        m4 += (x - mu).powi(4);
    }
    (m4 / v.len() as f64) / sigma.powi(4)
}

fn o_mad(v: &[f64]) -> f64 {
    let mu = o_mean(v);
    let mut s = 0.0;
    for &x in v {
        s += (x - mu).abs();
    }
    s / v.len() as f64
}

/// All 48 features of a window, 1-based slot `i` stored at `[i - 1]`.
pub fn naive_features(samples: &[AccelSample]) -> [f64; 48] {
    let axes: [Vec<f64>; 3] = [
        samples.iter().map(|s| s.x).collect(),
        samples.iter().map(|s| s.y).collect(),
        samples.iter().map(|s| s.z).collect(),
    ];
    let mut out = [0.0; 48];
    for (a, v) in axes.iter().enumerate() {
        let n = v.len() as f64;
        out[a] = o_max(v) - o_mean(v); // AMP 1-3
        out[3 + a] = o_median(v); // MED 4-6
        out[6 + a] = o_mean(v); // MEAN 7-9
        out[9 + a] = o_max(v); // MAX 10-12
        out[12 + a] = o_min(v); // MIN 13-15
        out[15 + a] = o_var(v); // VAR 16-18
        out[18 + a] = o_var(v).sqrt(); // STD 19-21
        out[21 + a] = v.iter().map(|x| x * x).sum::<f64>() / n; // RMS 22-24
        out[24 + a] = o_max(v) - o_min(v); // P2P 25-27
        out[27 + a] = o_zcr(v); // ZCR 28-30
        out[30 + a] = o_entropy(v); // ENT 31-33
        out[33 + a] = o_skewness(v); // SKN 34-36
        out[36 + a] = o_kurtosis(v); // KRT 37-39
        out[41 + a] = o_max(v) - o_min(v); // RNG 42-44
        out[45 + a] = o_mad(v); // MAD 46-48
    }
    let mags: Vec<f64> = samples
        .iter()
        .map(|s| (s.x * s.x + s.y * s.y + s.z * s.z).sqrt())
        .collect();
    out[39] = o_mean(&mags); // MAG 40
    out[40] = mags.iter().map(|m| m * m).sum(); // ENG 41
    let mut ang = f64::NEG_INFINITY; // ANG 45
    for s in samples {
        let a = s.z.atan2((s.x * s.x + s.y * s.y).sqrt());
        if a > ang {
            ang = a;
        }
    }
    out[44] = ang;
    out
}

// --- metric oracle --------------------------------------------------------

pub struct NaiveMetrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Metrics from brute-force counting: the confusion matrix is expanded
/// into (actual, predicted) pairs and every per-class count is tallied by
/// iterating the pairs.
pub fn naive_metrics(counts: &[Vec<u64>]) -> NaiveMetrics {
    let l = counts.len();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (a, row) in counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            for _ in 0..c {
                pairs.push((a, p));
            }
        }
    }
    let total = pairs.len() as u64;

    let mut acc_sum = 0.0;
    let mut tpr_sum = 0.0;
    let mut tnr_sum = 0.0;
    let mut prec_sum = 0.0;
    let mut rec_sum = 0.0;
    for cls in 0..l {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut tn = 0u64;
        let mut fn_ = 0u64;
        for &(a, p) in &pairs {
            match (a == cls, p == cls) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
                (true, false) => fn_ += 1,
            }
        }
        acc_sum += (tp + tn) as f64 / total as f64;
        let pos = tp + fn_;
        let neg = total - pos;
        if pos > 0 {
            tpr_sum += tp as f64 / pos as f64;
        }
        if neg > 0 {
            tnr_sum += tn as f64 / neg as f64;
        }
        if tp + fp > 0 {
            prec_sum += tp as f64 / (tp + fp) as f64;
        }
        if pos > 0 {
            rec_sum += tp as f64 / pos as f64;
        }
    }
    let precision = prec_sum / l as f64;
    let recall = rec_sum / l as f64;
    NaiveMetrics {
        accuracy: acc_sum / l as f64,
        balanced_accuracy: (tpr_sum + tnr_sum) / (2.0 * l as f64),
        precision,
        recall,
        f1: if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        },
    }
}

// --- rank-test oracle -----------------------------------------------------

/// H statistic computed independently: mid-ranks by counting, tie
/// correction from a value-multiset census. Returns (H, degenerate).
pub fn naive_kruskal_h(groups: &[Vec<f64>]) -> (f64, bool) {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    if pooled.iter().all(|&v| v == pooled[0]) {
        return (0.0, true);
    }

    let rank_of = |v: f64| -> f64 {
        let mut less = 0usize;
        let mut equal = 0usize;
        for &o in &pooled {
            if o < v {
                less += 1;
            } else if o == v {
                equal += 1;
            }
        }
        less as f64 + (equal as f64 + 1.0) / 2.0
    };

    let mut h = 0.0;
    for g in groups {
        let mut r = 0.0;
        for &v in g {
            r += rank_of(v);
        }
        h += r * r / g.len() as f64;
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    // Tie census over distinct values.
    let mut distinct: Vec<f64> = pooled.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut tie = 0.0;
    for &v in &distinct {
        let t = pooled.iter().filter(|&&o| o == v).count() as f64;
        tie += t * t * t - t;
    }
    (h / (1.0 - tie / (n * n * n - n)), false)
}

/// Chi-square survival function via the regularized incomplete gamma
/// function: series for the lower part, Lentz continued fraction for the
/// upper part.
pub fn chi2_sf_oracle(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    reg_gamma_q(df / 2.0, x / 2.0)
}

fn ln_gamma(z: f64) -> f64 {
    // Lanczos approximation, g = 7.
    const COEF: [f64; 9] = [
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
    if z < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut a = COEF[0];
    let t = z + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

fn reg_gamma_q(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        // Q = 1 - P with the lower series.
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut k = a;
        for _ in 0..500 {
            k += 1.0;
            term *= x / k;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        1.0 - sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        // Modified Lentz continued fraction for Q.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x + a * x.ln() - ln_gamma(a)).exp() * h
    }
}
