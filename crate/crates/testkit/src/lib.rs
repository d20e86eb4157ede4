//! Brute-force reference oracles, written independently of the main crates.
//!
//! Everything here trades efficiency for obviousness: exhaustive path
//! enumeration, exhaustive threshold sweeps, exhaustive sign-assignment
//! enumeration. Deliberately slow — use at test scale only.

/// Minimum total cost over *all* monotone warping paths between two
/// sequences, found by exhaustive recursion. Steps are (+1, 0), (0, +1)
/// and (+1, +1); paths run from the first sample pair to the last.
pub fn dtw_brute_force(a: &[Vec<f64>], b: &[Vec<f64>], local: fn(&[f64], &[f64]) -> f64) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());

    fn best(
        a: &[Vec<f64>],
        b: &[Vec<f64>],
        i: usize,
        j: usize,
        local: fn(&[f64], &[f64]) -> f64,
    ) -> f64 {
        let here = local(&a[i], &b[j]);
        if i == a.len() - 1 && j == b.len() - 1 {
            return here;
        }
        let mut tail = f64::INFINITY;
        if i + 1 < a.len() {
            tail = tail.min(best(a, b, i + 1, j, local));
        }
        if j + 1 < b.len() {
            tail = tail.min(best(a, b, i, j + 1, local));
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            tail = tail.min(best(a, b, i + 1, j + 1, local));
        }
        here + tail
    }

    best(a, b, 0, 0, local)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn manhattan(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Equal-error rate (as a fraction in [0, 1]) by exhaustive threshold sweep.
///
/// Acceptance is `score <= threshold`. Every distinct score is tried as a
/// threshold (plus a reject-everything sentinel), each time recounting FAR
/// and FRR from scratch. The achievable operating set also contains every
/// convex combination of two sweep points (decide a borderline case by a
/// biased coin between two thresholds), so the EER is the smallest value v
/// for which some pair of sweep points mixes to FAR = FRR = v.
pub fn eer_sweep(genuine: &[f64], impostor: &[f64]) -> f64 {
    assert!(!genuine.is_empty() && !impostor.is_empty());

    let mut points = Vec::new(); // (far, frr), fractions
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    thresholds.sort_by(|x, y| x.partial_cmp(y).unwrap());
    thresholds.dedup();
    points.push((0.0, 1.0)); // threshold below every score
    for &t in &thresholds {
        let far = impostor.iter().filter(|&&s| s <= t).count() as f64 / impostor.len() as f64;
        let frr = genuine.iter().filter(|&&s| s > t).count() as f64 / genuine.len() as f64;
        points.push((far, frr));
    }

    let mut best = f64::INFINITY;
    for &(a1, r1) in &points {
        for &(a2, r2) in &points {
            // mix (a1,r1) and (a2,r2) with weight w on the second point and
            // solve far(w) = frr(w)
            let denom = (a2 - a1) - (r2 - r1);
            if denom == 0.0 {
                if a1 == r1 {
                    best = best.min(a1.min(a2));
                }
                continue;
            }
            let w = (r1 - a1) / denom;
            if (0.0..=1.0).contains(&w) {
                best = best.min(a1 + w * (a2 - a1));
            }
        }
    }
    best
}

/// Exact two-sided Wilcoxon signed-rank p-value by enumerating all 2^n sign
/// assignments. Zero differences must already be removed. Returns
/// (w_plus, p). Ranks are computed here from scratch: ties share the average
/// of the ranks they occupy.
pub fn wilcoxon_enumerate(diffs: &[f64]) -> (f64, f64) {
    let n = diffs.len();
    assert!(n >= 1 && n <= 20, "enumeration is 2^n; keep n small");
    assert!(diffs.iter().all(|&d| d != 0.0));

    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 =
        diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| *r).sum();

    let total = 1u64 << n;
    let mut at_most = 0u64; // assignments with W+ <= observed
    let mut at_least = 0u64;
    for mask in 0..total {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= w_plus + 1e-9 {
            at_most += 1;
        }
        if w >= w_plus - 1e-9 {
            at_least += 1;
        }
    }
    let tail = (at_most.min(at_least)) as f64 / total as f64;
    (w_plus, (2.0 * tail).min(1.0))
}

/// 1-based ranks with ties replaced by the average rank of their group.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}
