use randskew::datasets::{counterexample_matrix, gaussian, generate, Distribution};
use randskew::hadamard::{fwht_inplace, rotate, rotated_leverage_scores, srht_apply, SrhtDraw};
use randskew::linalg::{gram, DenseMatrix, SymmetricPsd};
use randskew::rng::derive_seed;
use randskew::sampling::{
    approximation_factors, build_plan, draw, embedding_distortion, embedding_sketch_size,
    exact_leverage_scores, sjlt_approx_leverage, sketched_gram, PlanKind, PlanParams,
};

fn mean_and_std(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let t = samples.len() as f64;
    let k = samples[0].len();
    let mut mean = vec![0.0; k];
    for s in samples {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v / t);
    }
    let mut var = vec![0.0; k];
    for s in samples {
        var.iter_mut()
            .zip(s.iter().zip(&mean))
            .for_each(|(acc, (v, m))| *acc += (v - m).powi(2) / (t - 1.0));
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

#[test]
fn sampled_gram_is_unbiased() {
    let a = generate(200, 5, Distribution::Coherent { heavy_rows: 4 }, 1);
    let c = SymmetricPsd::scaled_identity(5, 0.1);
    let target = gram(&a);
    for kind in [
        PlanKind::ExactLeverage,
        PlanKind::Uniform,
        PlanKind::RowNorm,
    ] {
        let plan = build_plan(kind, &a, &c, &PlanParams::default()).unwrap();
        let m = (4.0 * plan.d_eff()).ceil() as usize;
        let trials = 2000;
        let samples: Vec<Vec<f64>> = (0..trials)
            .map(|t| {
                let dr = draw(&plan, m, derive_seed(7, t)).unwrap();
                sketched_gram(&dr, &a).unwrap().data().to_vec()
            })
            .collect();
        let (mean, std) = mean_and_std(&samples);
        for ((m_, s), x) in mean.iter().zip(&std).zip(target.data()) {
            assert!(
                (m_ - x).abs() <= 5.0 * s / (trials as f64).sqrt() + 1e-12,
                "{kind:?}: {m_} vs {x}"
            );
        }
    }
}

fn mean_sjlt_scores(a: &DenseMatrix, c: &SymmetricPsd, m1: usize, reps: u64) -> Vec<f64> {
    let mut mean = vec![0.0; a.rows()];
    for r in 0..reps {
        let s = sjlt_approx_leverage(a, c, m1, None, 4, derive_seed(3, r)).unwrap();
        mean.iter_mut()
            .zip(s)
            .for_each(|(m, v)| *m += v / reps as f64);
    }
    mean
}

// The sketched inverse inflates every score by about m1 / (m1 - d_eff), so
// at m1 = 4d the raw mean sits near 4/3 of the exact score.
#[test]
fn sjlt_scores_are_accurate_on_average() {
    let d = 4;
    let a = counterexample_matrix(d);
    let c = SymmetricPsd::zeros(d);
    let exact = exact_leverage_scores(&a, &c).unwrap();

    let inflation = (4 * d) as f64 / (3 * d) as f64;
    for (m, l) in mean_sjlt_scores(&a, &c, 4 * d, 200).iter().zip(&exact) {
        assert!((m - inflation * l).abs() <= 0.15 * l, "{m} vs {l}");
    }
    for (m, l) in mean_sjlt_scores(&a, &c, 16 * d, 200).iter().zip(&exact) {
        assert!((m - l).abs() <= 0.15 * l, "{m} vs {l}");
    }
}

#[test]
fn double_transform_scales_by_length() {
    let mut n = 1;
    while n <= 1024 {
        let v = gaussian(n, 1, n as u64).into_data();
        let mut w = v.clone();
        fwht_inplace(&mut w).unwrap();
        fwht_inplace(&mut w).unwrap();
        for (x, y) in w.iter().zip(&v) {
            assert!((x - n as f64 * y).abs() < 1e-9 * n as f64);
        }
        n *= 2;
    }
}

#[test]
fn rotation_preserves_gram() {
    let a = gaussian(100, 6, 4);
    let target = gram(&a);
    for s in 0..10 {
        let draw = SrhtDraw::new(100, 8, s).unwrap();
        let g = gram(&rotate(draw.signs(), &a).unwrap());
        let err = g.sub(&target).unwrap().frobenius_norm() / target.frobenius_norm();
        assert!(err < 1e-10, "{err}");
    }
}

#[test]
fn srht_gram_is_unbiased() {
    let n = 4;
    let a = DenseMatrix::identity(n);
    let trials = 2000;
    let samples: Vec<Vec<f64>> = (0..trials)
        .map(|t| {
            let dr = SrhtDraw::new(n, 4, derive_seed(11, t)).unwrap();
            gram(&srht_apply(&dr, &a).unwrap()).data().to_vec()
        })
        .collect();
    let (mean, std) = mean_and_std(&samples);
    let id = SymmetricPsd::identity(n);
    for ((m, s), x) in mean.iter().zip(&std).zip(id.data()) {
        assert!(
            (m - x).abs() <= 3.0 * s / (trials as f64).sqrt() + 1e-12,
            "{m} vs {x}"
        );
    }
}

// Calibrated by brute force over 200 sign draws on each of 4 Gaussian
// matrices: the worst max_i |l_i - d/n| / (sqrt(d log n) / n) was 3.63.
const ROTATION_CONCENTRATION: f64 = 5.0;

#[test]
fn rotated_scores_are_nearly_uniform() {
    let (n, d) = (1024, 16);
    let a = gaussian(n, d, 5);
    let c = SymmetricPsd::zeros(d);
    let bound = ROTATION_CONCENTRATION * ((d as f64) * (n as f64).ln()).sqrt() / n as f64;
    for s in 0..50 {
        let draw = SrhtDraw::new(n, 1, derive_seed(13, s)).unwrap();
        let scores = rotated_leverage_scores(&a, &c, draw.signs()).unwrap();
        let worst = scores
            .iter()
            .map(|l| (l - d as f64 / n as f64).abs())
            .fold(0.0, f64::max);
        assert!(worst < bound, "draw {s}: {worst} vs {bound}");
    }
}

#[test]
fn sampling_sketches_embed_at_the_predicted_size() {
    let cases = [
        (gaussian(256, 6, 1), SymmetricPsd::scaled_identity(6, 0.1)),
        (
            generate(256, 6, Distribution::Coherent { heavy_rows: 3 }, 2),
            SymmetricPsd::scaled_identity(6, 1e-2),
        ),
        (counterexample_matrix(4), SymmetricPsd::zeros(4)),
    ];
    for (a, c) in cases {
        let exact = exact_leverage_scores(&a, &c).unwrap();
        for kind in [PlanKind::ExactLeverage, PlanKind::RowNorm] {
            let plan = build_plan(kind, &a, &c, &PlanParams::default()).unwrap();
            let rho = approximation_factors(&plan, &exact).unwrap().rho_max;
            let m = embedding_sketch_size(rho, plan.d_eff(), 0.5, 0.1);
            let failures = (0..200)
                .filter(|&t| {
                    let dr = draw(&plan, m, derive_seed(17, t)).unwrap();
                    embedding_distortion(&dr, &a).unwrap() > 0.5
                })
                .count();
            assert!(failures <= 20, "{kind:?}: {failures}");
        }
    }
}
