use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Selector, SweepConfig, SweepError};
use crate::grid::{Contingency, DcModel};

const MAX_RESAMPLES: usize = 100;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn universe(model: &DcModel) -> Vec<usize> {
    model
        .case
        .in_service_branches()
        .filter(|&k| model.branch_ends[k].0 != model.branch_ends[k].1)
        .collect()
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// The contingencies a sweep evaluates, in a deterministic order.
pub fn select_contingencies(model: &DcModel, cfg: &SweepConfig) -> Result<Vec<Contingency>, SweepError> {
    let pool = universe(model);
    match &cfg.selector {
        Selector::Explicit(list) => {
            if list.iter().any(|c| c.k() != cfg.k) {
                log::info!("explicit contingency list mixes sizes; k = {} is ignored", cfg.k);
            }
            Ok(list.clone())
        }
        Selector::Exhaustive => {
            let count = binomial(pool.len(), cfg.k);
            if count == 0 {
                return Err(SweepError::Config(format!(
                    "k = {} exceeds the {} in-service branches",
                    cfg.k,
                    pool.len()
                )));
            }
            if count > cfg.exhaustive_cap as u128 {
                return Err(SweepError::Config(format!(
                    "exhaustive enumeration of C({}, {}) = {count} contingencies exceeds the cap of {}",
                    pool.len(),
                    cfg.k,
                    cfg.exhaustive_cap
                )));
            }
            Ok(combinations(&pool, cfg.k).into_iter().map(Contingency::branches).collect())
        }
        Selector::Random { samples, seed } => {
            if cfg.k > pool.len() {
                return Err(SweepError::Config(format!(
                    "k = {} exceeds the {} in-service branches",
                    cfg.k,
                    pool.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let topo = model.topology();
            let mut out = Vec::with_capacity(*samples);
            for _ in 0..*samples {
                let mut pick = Vec::new();
                for _ in 0..MAX_RESAMPLES {
                    pick = rand::seq::index::sample(&mut rng, pool.len(), cfg.k)
                        .into_iter()
                        .map(|i| pool[i])
                        .collect();
                    pick.sort_unstable();
                    if topo.check(&pick).is_connected() {
                        break;
                    }
                }
                out.push(Contingency::branches(pick));
            }
            Ok(out)
        }
    }
}

/// One contingency per line: 1-based branch numbers, `g<N>` for 1-based generator
/// numbers, separated by commas or whitespace. Blank lines and `#` comments are skipped.
pub fn parse_contingency_list(text: &str) -> Result<Vec<Contingency>, SweepError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut c = Contingency::default();
        for tok in line.split(|ch: char| ch == ',' || ch.is_whitespace()).filter(|t| !t.is_empty()) {
            let (target, digits) = match tok.strip_prefix(['g', 'G']) {
                Some(rest) => (&mut c.generators, rest),
                None => (&mut c.branches, tok),
            };
            match digits.parse::<usize>() {
                Ok(v) if v >= 1 => target.push(v - 1),
                _ => {
                    return Err(SweepError::Config(format!(
                        "contingency list line {}: `{tok}` is not a 1-based element number",
                        lineno + 1
                    )))
                }
            }
        }
        out.push(c);
    }
    Ok(out)
}
