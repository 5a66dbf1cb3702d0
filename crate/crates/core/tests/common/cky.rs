//! Exhaustive search over labeled binary bracketings.

/// Every full binary bracketing of `[i, j)` as a list of spans.
pub fn bracketings(i: usize, j: usize) -> Vec<Vec<(usize, usize)>> {
    if j - i == 1 {
        return vec![vec![(i, j)]];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        for left in bracketings(i, k) {
            for right in bracketings(k, j) {
                let mut v = vec![(i, j)];
                v.extend(&left);
                v.extend(&right);
                out.push(v);
            }
        }
    }
    out
}

/// Best total over all label assignments. Label choices are enumerated one
/// by one when that is cheap; otherwise each span takes its own maximum.
pub fn brute_force(n: usize, num_labels: usize, score: &dyn Fn(usize, usize, usize) -> f64, root_labeled: bool) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for spans in bracketings(0, n) {
        let choices = |s: (usize, usize)| -> Vec<usize> {
            if root_labeled && s == (0, n) {
                (1..num_labels).collect()
            } else {
                (0..num_labels).collect()
            }
        };
        let total_assignments = (num_labels as f64).powi(spans.len() as i32);
        if total_assignments <= 200_000.0 {
            let mut odometer = vec![0usize; spans.len()];
            let options: Vec<Vec<usize>> = spans.iter().map(|s| choices(*s)).collect();
            loop {
                let total: f64 = spans.iter().enumerate().map(|(p, s)| score(s.0, s.1, options[p][odometer[p]])).sum();
                best = best.max(total);
                let mut p = 0;
                while p < odometer.len() {
                    odometer[p] += 1;
                    if odometer[p] < options[p].len() {
                        break;
                    }
                    odometer[p] = 0;
                    p += 1;
                }
                if p == odometer.len() {
                    break;
                }
            }
        } else {
            let total: f64 =
                spans.iter().map(|s| choices(*s).into_iter().map(|l| score(s.0, s.1, l)).fold(f64::NEG_INFINITY, f64::max)).sum();
            best = best.max(total);
        }
    }
    best
}
