use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{contract, Result};

/// Outcome of a rank correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Defined { rho: f64, p_value: f64 },
    /// One of the inputs has no variance.
    Degenerate,
}

impl Correlation {
    pub fn rho(&self) -> Option<f64> {
        match self {
            Correlation::Defined { rho, .. } => Some(*rho),
            Correlation::Degenerate => None,
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            Correlation::Defined { p_value, .. } => Some(*p_value),
            Correlation::Degenerate => None,
        }
    }
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with a two-sided p-value from the
/// `t = ρ √((n−2)/(1−ρ²))` approximation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    contract!(
        xs.len() == ys.len(),
        "spearman inputs differ in length: {} vs {}",
        xs.len(),
        ys.len()
    );
    contract!(xs.len() >= 3, "spearman needs at least 3 points, got {}", xs.len());
    contract!(
        xs.iter().chain(ys).all(|v| v.is_finite()),
        "spearman inputs must be finite"
    );
    let Some(rho) = pearson(&average_ranks(xs), &average_ranks(ys)) else {
        return Ok(Correlation::Degenerate);
    };
    let df = (xs.len() - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * dist.cdf(-t.abs())).min(1.0)
    };
    Ok(Correlation::Defined { rho, p_value })
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}
