use crate::model::RankCapRule;

/// `r_big = max(1, floor(min(n, q, m_min) / divisor))`; `SizeOnly` drops `m_min`.
pub fn rank_cap(n: usize, q: usize, m_min: usize, divisor: usize, rule: RankCapRule) -> usize {
    let base = match rule {
        RankCapRule::WithMeasurements => n.min(q).min(m_min),
        RankCapRule::SizeOnly => n.min(q),
    };
    (base / divisor.max(1)).max(1)
}

/// Smallest `r` whose leading energy reaches `energy_frac` of the energy in the
/// first `r_big` singular values. An all-zero spectrum gives 1.
pub fn estimate_rank(
    singular_values: &[f64],
    m_min: usize,
    n: usize,
    q: usize,
    energy_frac: f64,
    cap_divisor: usize,
) -> usize {
    let r_big = rank_cap(n, q, m_min, cap_divisor, RankCapRule::WithMeasurements);
    rank_from_energy(singular_values, r_big, energy_frac)
}

pub(crate) fn rank_from_energy(singular_values: &[f64], r_big: usize, energy_frac: f64) -> usize {
    debug_assert!(singular_values.windows(2).all(|w| w[0] >= w[1]));
    let head = &singular_values[..r_big.min(singular_values.len())];
    let total: f64 = head.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 1;
    }
    let target = energy_frac * total;
    let mut acc = 0.0;
    for (i, s) in head.iter().enumerate() {
        acc += s * s;
        if acc >= target {
            return i + 1;
        }
    }
    head.len().max(1)
}
