//! Two-sided Fisher exact test for 2x2 tables.

/// p-value for the table `[[a, b], [c, d]]`: the total probability of all
/// tables with the same margins that are no more likely than the observed
/// one. A relative tolerance absorbs floating-point ties.
pub fn fisher_exact(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let row1 = a + b;
    let col1 = a + c;
    let n = a + b + c + d;
    if n == 0 {
        return 1.0;
    }
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let ln_choose = |n: u64, k: u64| ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize];
    // P(X = x) for the top-left cell under the hypergeometric law.
    let ln_p = |x: u64| ln_choose(row1, x) + ln_choose(n - row1, col1 - x) - ln_choose(n, col1);
    let lo = col1.saturating_sub(n - row1);
    let hi = row1.min(col1);
    let observed = ln_p(a);
    let threshold = observed + (1.0 + 1e-7f64).ln();
    let p: f64 = (lo..=hi).map(ln_p).filter(|&lp| lp <= threshold).map(f64::exp).sum();
    p.min(1.0)
}
