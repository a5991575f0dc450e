use firewatch_core::corpus::Label;
use firewatch_core::eval::roc_auc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Share of (positive, negative) pairs ranked correctly, ties worth a half.
fn pairwise(scored: &[(f64, Label)]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for &(sp, lp) in scored {
        for &(sn, ln) in scored {
            if lp.is_positive() && !ln.is_positive() {
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

pub fn check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1_000);
    let mut worst: f64 = 0.0;
    let mut tied_sets = 0;
    for set in 0..1_000 {
        let n = rng.random_range(2..=50);
        // Half the sets draw from a coarse grid so ties are common.
        let coarse = set % 2 == 0;
        let mut scored: Vec<(f64, Label)> = (0..n)
            .map(|_| {
                let s = if coarse { rng.random_range(0..6) as f64 / 5.0 } else { rng.random::<f64>() };
                (s, if rng.random_bool(0.4) { Label::Positive } else { Label::Negative })
            })
            .collect();
        // both classes present
        scored[0].1 = Label::Positive;
        scored[1].1 = Label::Negative;

        let roc = roc_auc(&scored).map_err(|e| e.to_string())?;
        let want = pairwise(&scored);
        worst = worst.max((roc.auc - want).abs());
        ensure!((roc.auc - want).abs() <= 1e-9, "set {set}: {} vs pairwise {want}", roc.auc);

        let flipped: Vec<(f64, Label)> = scored.iter().map(|&(s, l)| (s, l.flipped())).collect();
        let back = roc_auc(&flipped).map_err(|e| e.to_string())?;
        ensure!(back.pairs == roc.pairs, "set {set}: flipping changed the pair count");
        ensure!(
            back.concordant_halves == 2 * roc.pairs - roc.concordant_halves,
            "set {set}: flipped numerator {} is not {} - {}",
            back.concordant_halves,
            2 * roc.pairs,
            roc.concordant_halves
        );
        ensure!(back.auc == 1.0 - roc.auc || (back.auc - (1.0 - roc.auc)).abs() <= f64::EPSILON, "set {set}: {} vs 1 - {}", back.auc, roc.auc);
        if scored.iter().any(|a| scored.iter().filter(|b| b.0 == a.0).count() > 1) {
            tied_sets += 1;
        }
    }
    Ok(format!("1,000 sets ({tied_sets} with ties), max |auc - pairwise| {worst:.1e}, flip exact in integer counts"))
}
