use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Paired-correctness counts of two classifiers: `rw` = model 1 right and
/// model 2 wrong, `wr` the reverse.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub rr: u64,
    pub rw: u64,
    pub wr: u64,
    pub ww: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// p-values below this are reported as exactly 0.
pub const P_FLOOR: f64 = 1e-300;

/// Switch from the library `erfc` to the asymptotic series above this.
const ASYMPTOTIC_FROM: f64 = 6.0;

/// `erfc(z) ≈ e^{-z²}/(z√π) · Σ (−1)^n (2n−1)!! / (2z²)^n`, truncated at
/// the smallest term.
fn erfc_asymptotic(z: f64) -> f64 {
    let x2 = 2.0 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..60 {
        let next = -term * (2 * n - 1) as f64 / x2;
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
    }
    (-z * z).exp() / (z * PI.sqrt()) * sum
}

/// Upper tail of χ²(1) at `x`.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let z = (x / 2.0).sqrt();
    if z < ASYMPTOTIC_FROM {
        erfc(z)
    } else {
        erfc_asymptotic(z)
    }
}

/// Continuity-corrected McNemar test.
pub fn mcnemar(c: &Contingency) -> Result<McNemarResult> {
    let n = c.rw + c.wr;
    if n == 0 {
        return Err(Error::NoDiscordantPairs);
    }
    let diff = (c.rw as f64 - c.wr as f64).abs();
    let statistic = (diff - 1.0).max(0.0).powi(2) / n as f64;
    let mut p_value = chi2_1_sf(statistic);
    if p_value < P_FLOOR {
        p_value = 0.0;
    }
    Ok(McNemarResult { statistic, p_value })
}

pub fn build_contingency<S: AsRef<str>>(a: &[S], b: &[S], gold: &[S]) -> Result<Contingency> {
    if a.len() != gold.len() || b.len() != gold.len() {
        return Err(Error::shape(
            "build_contingency",
            format!("{} / {} predictions vs {} gold", a.len(), b.len(), gold.len()),
        ));
    }
    let mut c = Contingency::default();
    for ((x, y), g) in a.iter().zip(b).zip(gold) {
        let g = g.as_ref();
        match (x.as_ref() == g, y.as_ref() == g) {
            (true, true) => c.rr += 1,
            (true, false) => c.rw += 1,
            (false, true) => c.wr += 1,
            (false, false) => c.ww += 1,
        }
    }
    Ok(c)
}

/// Plain-text table: one row per comparison with the 2x2 counts, the
/// statistic and the p-value.
pub fn format_mcnemar_table(rows: &[(String, Contingency, McNemarResult)]) -> String {
    let width = rows.iter().map(|(n, ..)| n.len()).max().unwrap_or(0).max("comparison".len());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>10} {:>10} {:>10} {:>10}  {:>12}  {:>10}",
        "comparison", "RR", "RW", "WR", "WW", "statistic", "p-value"
    );
    for (name, c, r) in rows {
        let _ = writeln!(
            s,
            "{name:<width$}  {:>10} {:>10} {:>10} {:>10}  {:>12.2}  {:>10.3e}",
            c.rr, c.rw, c.wr, c.ww, r.statistic, r.p_value
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn disc(rw: u64, wr: u64) -> Contingency {
        Contingency { rw, wr, ..Default::default() }
    }

    #[test]
    fn consistent_table_rows() {
        for (rw, wr, want) in [
            (40882, 63702, 4978.84),
            (33036, 41029, 862.38),
            (31722, 37330, 455.29),
            (3538, 4218, 59.44),
            (3433, 4076, 54.88),
        ] {
            let r = mcnemar(&disc(rw, wr)).unwrap();
            assert!((r.statistic - want).abs() < 0.01, "{rw},{wr}: {}", r.statistic);
        }
        let p = mcnemar(&disc(33036, 41029)).unwrap().p_value;
        assert!((p.log10() - 1.5e-189f64.log10()).abs() < 1.0, "{p:e}");
        assert_eq!(mcnemar(&disc(40882, 63702)).unwrap().p_value, 0.0);
    }

    #[test]
    fn symmetric_discordance() {
        let r = mcnemar(&disc(7, 7)).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(matches!(mcnemar(&disc(0, 0)), Err(Error::NoDiscordantPairs)));
        assert_eq!(mcnemar(&disc(3, 11)).unwrap(), mcnemar(&disc(11, 3)).unwrap());
    }

    #[test]
    fn asymptotic_branch_agrees_with_library() {
        for z in [4.0, 5.0, 6.0, 8.0, 20.0] {
            let a = erfc_asymptotic(z);
            let b = erfc(z);
            assert!(((a - b) / b).abs() < 1e-6, "z={z}: {a:e} vs {b:e}");
        }
    }

    #[test]
    fn p_value_decreases_with_statistic() {
        let mut last = 1.0;
        for k in 1..200 {
            let p = chi2_1_sf(k as f64 * 0.5);
            assert!(p < last);
            last = p;
        }
        // 3.841 is the 5% critical value
        assert!((chi2_1_sf(3.841_458_820_694_124) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn contingency_counts() {
        let g = ["a", "b", "c"];
        assert_eq!(build_contingency(&g, &g, &g).unwrap(), Contingency { rr: 3, ..Default::default() });
        let gold = ["a"; 5];
        let wrong = ["b"; 5];
        assert_eq!(build_contingency(&gold, &wrong, &gold).unwrap().rw, 5);
        assert!(build_contingency(&g, &g[..2], &g).is_err());

        let mut rng = Rng::new(40);
        let labels = ["x", "y", "z"];
        let gold: Vec<&str> = (0..40).map(|_| labels[rng.index(3)]).collect();
        let a: Vec<&str> = (0..40).map(|_| labels[rng.index(3)]).collect();
        let b: Vec<&str> = (0..40).map(|_| labels[rng.index(3)]).collect();
        let mut q = [0u64; 4];
        for i in 0..40 {
            let k = (a[i] != gold[i]) as usize * 2 + (b[i] != gold[i]) as usize;
            q[k] += 1;
        }
        let c = build_contingency(&a, &b, &gold).unwrap();
        assert_eq!([c.rr, c.rw, c.wr, c.ww], q);
    }

    #[test]
    fn table_text() {
        let c = disc(33036, 41029);
        let t = format_mcnemar_table(&[("eac vs eac+kggat".into(), c, mcnemar(&c).unwrap())]);
        assert!(t.contains("862.38"));
        assert_eq!(t.lines().count(), 2);
    }
}
