use super::*;
use crate::image::{add_gaussian_noise, add_poisson_noise, generate_phantom, PhantomKind};
use crate::network::{ArchSpec, DenoiserNetwork};
use proptest::prelude::*;
use rand::Rng;

const SIGMA: f64 = 25.0 / 255.0;

fn phantom(side: usize) -> Image {
    generate_phantom(PhantomKind::Disks, side, side, 1, 3).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

/// Dense map with a dominant random diagonal and small random coupling.
fn dense_map(n: usize, seed: u64) -> DenseLinear {
    let mut r = crate::rng::stream(seed, 42);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = if i == j {
                r.gen_range(0.5..1.5)
            } else {
                0.05 * r.sample::<f64, _>(StandardNormal)
            };
        }
    }
    DenseLinear::new(n, m).unwrap()
}

#[test]
fn mse_examples() {
    let zeros = Image::zeros(8, 8, 1).unwrap();
    let ones = Image::filled(8, 8, 1, 1.0).unwrap();
    let tenth = Image::filled(8, 8, 1, 0.1).unwrap();
    assert_eq!(mse(&ones, &ones).unwrap(), 0.0);
    assert_eq!(mse(&zeros, &ones).unwrap(), 1.0);
    assert!((mse(&zeros, &tenth).unwrap() - 0.01).abs() < 1e-15);
    let rgb = Image::zeros(8, 8, 3).unwrap();
    assert!(matches!(mse(&zeros, &rgb), Err(Error::Shape(_))));
}

#[test]
fn mc_divergence_of_identity_and_zero() {
    let y = phantom(16);
    let p = ProbeVector::standard_normal(&y, 1);
    let expected = p.values.dot(&p.values).unwrap() / y.len() as f64;
    assert!((mc_divergence(&Identity, &y, &p).unwrap() - expected).abs() < 1e-14);
    assert_eq!(mc_divergence(&ZeroMap, &y, &p).unwrap(), 0.0);
}

#[test]
fn mc_divergence_matches_exact_trace() {
    let y = phantom(8);
    let a = dense_map(64, 5);
    let trace: f64 = (0..64).map(|i| a.matrix()[i * 64 + i]).sum();
    let est = mean(
        &(0..2000)
            .map(|s| mc_divergence(&a, &y, &ProbeVector::standard_normal(&y, s)).unwrap())
            .collect::<Vec<_>>(),
    );
    let exact = trace / 64.0;
    assert!((est / exact - 1.0).abs() < 0.02, "{est} vs {exact}");
}

#[test]
fn mc_divergence_per_probe_is_quadratic_form() {
    let y = phantom(8);
    let a = dense_map(64, 6);
    let p = ProbeVector::standard_normal(&y, 9);
    let z = p.values.data();
    let mut quad = 0.0;
    for i in 0..64 {
        for j in 0..64 {
            quad += z[i] * a.matrix()[i * 64 + j] * z[j];
        }
    }
    let got = mc_divergence(&a, &y, &p).unwrap();
    assert!((got - quad / 64.0).abs() < 1e-12);
}

#[test]
fn mc_divergence_errors() {
    let y = phantom(8);
    let r = ProbeVector::rademacher(&y, 0);
    assert!(matches!(mc_divergence(&Identity, &y, &r), Err(Error::Argument(_))));
    let g = ProbeVector::standard_normal(&y, 0);
    let opaque = BlackBox(|y: &Image| Ok(y.clone()));
    assert!(matches!(
        mc_divergence(&opaque, &y, &g),
        Err(Error::Capability(_))
    ));
    assert!(matches!(sure_loss(&opaque, &y, 0.1, &g), Err(Error::Capability(_))));
}

#[test]
fn sure_of_identity_and_zero() {
    let x = phantom(32);
    let y = add_gaussian_noise(&x, SIGMA, 1).unwrap();
    let var = SIGMA * SIGMA;
    let p = ProbeVector::standard_normal(&y, 2);
    let zz = p.values.dot(&p.values).unwrap() / y.len() as f64;
    let id = sure_loss(&Identity, &y, SIGMA, &p).unwrap();
    assert!((id.total - (2.0 * var * zz - var)).abs() < 1e-15);
    // averaging over probes approaches the exact-divergence value sigma^2
    let avg = mean(
        &(0..200)
            .map(|s| {
                sure_loss(&Identity, &y, SIGMA, &ProbeVector::standard_normal(&y, s))
                    .unwrap()
                    .total
            })
            .collect::<Vec<_>>(),
    );
    assert!((avg / var - 1.0).abs() < 0.01);

    let zero = sure_loss(&ZeroMap, &y, SIGMA, &p).unwrap();
    let y2 = y.dot(&y).unwrap() / y.len() as f64;
    assert!((zero.total - (y2 - var)).abs() < 1e-15);
    let over_noise = mean(
        &(0..300)
            .map(|s| {
                let y = add_gaussian_noise(&x, SIGMA, s).unwrap();
                sure_loss(&ZeroMap, &y, SIGMA, &p).unwrap().total
            })
            .collect::<Vec<_>>(),
    );
    let x2 = x.dot(&x).unwrap() / x.len() as f64;
    assert!((over_noise / x2 - 1.0).abs() < 0.01);
}

#[test]
fn sure_of_scaling_is_unbiased() {
    let x = phantom(32);
    let h = Scaling(0.5);
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for s in 0..500 {
        let y = add_gaussian_noise(&x, SIGMA, 1000 + s).unwrap();
        let p = ProbeVector::standard_normal(&y, s);
        est.push(sure_loss(&h, &y, SIGMA, &p).unwrap().total);
        truth.push(mse(&h.apply(&y).unwrap(), &x).unwrap());
    }
    assert!((mean(&est) / mean(&truth) - 1.0).abs() < 0.03);
}

#[test]
fn sure_rejects_negative_sigma() {
    let y = phantom(8);
    let p = ProbeVector::standard_normal(&y, 0);
    assert!(matches!(sure_loss(&Identity, &y, -1.0, &p), Err(Error::Domain(_))));
}

#[test]
fn ste_with_zero_bound_equals_sure() {
    let x = phantom(16);
    let y = add_gaussian_noise(&x, SIGMA, 4).unwrap();
    let net = DenoiserNetwork::new(ArchSpec::uniform(2, 4, 2), 1, 0).unwrap();
    let sample = SteSample::draw(&y, 0.0, 77, 0).unwrap();
    assert!(sample.gamma.data().iter().all(|&v| v == 0.0));
    let a = ste_loss(&net, &y, SIGMA, 0.0, 77).unwrap();
    let b = sure_loss(&net, &y, SIGMA, &sample.probe).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ste_of_identity_matches_uniform_sigma_moment() {
    // E[s^2] for s ~ U(0, b) is b^2/3, so E[total] = b^2/3 + sigma^2.
    let y = add_gaussian_noise(&phantom(8), SIGMA, 0).unwrap();
    let b = SIGMA;
    let totals: Vec<f64> = (0..10_000)
        .map(|s| ste_loss(&Identity, &y, SIGMA, b, s).unwrap().total)
        .collect();
    let expected = b * b / 3.0 + SIGMA * SIGMA;
    assert!((mean(&totals) / expected - 1.0).abs() < 0.03);
    // the b^2/6 alternative is far outside the tolerance
    let wrong = b * b / 6.0 + SIGMA * SIGMA;
    assert!((mean(&totals) / wrong - 1.0).abs() > 0.1);
}

#[test]
fn ste_of_zero_map_ignores_perturbation() {
    let y = add_gaussian_noise(&phantom(16), SIGMA, 1).unwrap();
    let want = y.dot(&y).unwrap() / y.len() as f64 - SIGMA * SIGMA;
    for s in 0..5 {
        let got = ste_loss(&ZeroMap, &y, SIGMA, 0.5, s).unwrap().total;
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn ste_rejects_negative_bound() {
    let y = phantom(8);
    assert!(matches!(
        ste_loss(&Identity, &y, SIGMA, -0.1, 0),
        Err(Error::Domain(_))
    ));
}

#[test]
fn pure_of_zero_and_identity() {
    let x = phantom(32);
    let zeta = 0.1;
    let y = add_poisson_noise(&x, zeta, 1).unwrap();
    let p = ProbeVector::rademacher(&y, 3);
    let n = y.len() as f64;
    let zero = pure_loss(&ZeroMap, &y, zeta, DEFAULT_PURE_EPS, &p).unwrap();
    assert!((zero.total - (y.dot(&y).unwrap() / n - zeta * y.mean())).abs() < 1e-12);
    let id = pure_loss(&Identity, &y, zeta, DEFAULT_PURE_EPS, &p).unwrap();
    assert!((id.divergence_term - 2.0 * zeta * y.mean()).abs() < 1e-9);
    assert!((id.total - zeta * y.mean()).abs() < 1e-9);

    // expectations over the Poisson draw
    let (mut z, mut i) = (Vec::new(), Vec::new());
    for s in 0..400 {
        let y = add_poisson_noise(&x, zeta, 100 + s).unwrap();
        z.push(pure_loss(&ZeroMap, &y, zeta, DEFAULT_PURE_EPS, &p).unwrap().total);
        i.push(pure_loss(&Identity, &y, zeta, DEFAULT_PURE_EPS, &p).unwrap().total);
    }
    let x2 = x.dot(&x).unwrap() / n;
    assert!((mean(&z) / x2 - 1.0).abs() < 0.02);
    assert!((mean(&i) / (zeta * x.mean()) - 1.0).abs() < 0.02);
}

#[test]
fn pure_of_scaling_is_unbiased() {
    let x = phantom(16);
    let (zeta, h) = (0.1, Scaling(0.7));
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for s in 0..2000 {
        let y = add_poisson_noise(&x, zeta, 5000 + s).unwrap();
        let p = ProbeVector::rademacher(&y, s);
        est.push(pure_loss(&h, &y, zeta, DEFAULT_PURE_EPS, &p).unwrap().total);
        truth.push(mse(&h.apply(&y).unwrap(), &x).unwrap());
    }
    assert!((mean(&est) / mean(&truth) - 1.0).abs() < 0.05);
}

#[test]
fn pure_argument_checks() {
    let y = phantom(8);
    let r = ProbeVector::rademacher(&y, 0);
    let g = ProbeVector::standard_normal(&y, 0);
    assert!(matches!(pure_loss(&Identity, &y, 0.1, 0.0, &r), Err(Error::Domain(_))));
    assert!(matches!(pure_loss(&Identity, &y, 0.1, -1.0, &r), Err(Error::Domain(_))));
    assert!(matches!(pure_loss(&Identity, &y, 0.1, 1e-3, &g), Err(Error::Argument(_))));
    // no input gradient required
    let opaque = BlackBox(|y: &Image| Ok(y.scale(0.5)));
    assert!(pure_loss(&opaque, &y, 0.1, 1e-3, &r).is_ok());
}

#[test]
fn df_gt_reference_denoisers() {
    let x = phantom(64);
    let n = x.len() as f64;
    let var = SIGMA * SIGMA;
    let y = add_gaussian_noise(&x, SIGMA, 8).unwrap();
    let perfect = df_gt(&x, &x, &y, SIGMA).unwrap();
    let bound = 5.0 * (var * (2.0 / n).sqrt()) / (2.0 * var);
    assert!(perfect.abs() < bound, "{perfect} vs {bound}");

    let (mut ident, mut zero) = (Vec::new(), Vec::new());
    for s in 0..50 {
        let y = add_gaussian_noise(&x, SIGMA, s).unwrap();
        ident.push(df_gt(&y, &x, &y, SIGMA).unwrap());
        zero.push(df_gt(&x.map(|_| 0.0), &x, &y, SIGMA).unwrap());
    }
    assert!((mean(&ident) - 1.0).abs() < 4.0 * std_err(&ident));
    assert!(mean(&zero).abs() < 4.0 * std_err(&zero));
    assert!(matches!(df_gt(&x, &x, &y, 0.0), Err(Error::Domain(_))));
}

#[test]
fn optimism_reference_denoisers() {
    let x = phantom(32);
    let var = SIGMA * SIGMA;
    let (mut ident, mut perfect, mut zero) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..100 {
        let y = add_gaussian_noise(&x, SIGMA, 2 * s).unwrap();
        let yt = add_gaussian_noise(&x, SIGMA, 2 * s + 1).unwrap();
        ident.push(estimate_optimism(&y, &y, &yt).unwrap());
        perfect.push(estimate_optimism(&x, &y, &yt).unwrap());
        zero.push(estimate_optimism(&x.map(|_| 0.0), &y, &yt).unwrap());
    }
    assert!((mean(&ident) - 2.0 * var).abs() < 4.0 * std_err(&ident));
    assert!(mean(&perfect).abs() < 4.0 * std_err(&perfect));
    assert!(mean(&zero).abs() < 4.0 * std_err(&zero));
    let rgb = Image::zeros(32, 32, 3).unwrap();
    assert!(estimate_optimism(&rgb, &x, &x).is_err());
}

#[test]
fn optimism_equals_twice_variance_times_df() {
    let x = phantom(16);
    let var = SIGMA * SIGMA;
    for h in [&Scaling(0.5) as &dyn Denoiser, &BoxBlur3, &Identity] {
        let mut diff = Vec::new();
        for s in 0..1000 {
            let y = add_gaussian_noise(&x, SIGMA, 2 * s).unwrap();
            let yt = add_gaussian_noise(&x, SIGMA, 2 * s + 1).unwrap();
            let out = h.apply(&y).unwrap();
            let rho = estimate_optimism(&out, &y, &yt).unwrap();
            diff.push(rho - 2.0 * var * df_gt(&out, &x, &y, SIGMA).unwrap());
        }
        assert!(mean(&diff).abs() <= 3.0 * std_err(&diff));
    }
}

#[test]
fn perturbation_energy_approaches_jacobian_norm() {
    // E||h(y+g) - h(y)||^2 / (N s^2) -> ||J||_F^2 / N as s -> 0
    let net = DenoiserNetwork::new(ArchSpec::uniform(2, 4, 2), 1, 1).unwrap();
    let y = add_gaussian_noise(&phantom(8), SIGMA, 2).unwrap();
    let n = y.len();
    let mut frob = 0.0;
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let row = net.input_vjp(&y, &y.with_data(e).unwrap()).unwrap();
        frob += row.dot(&row).unwrap();
    }
    let target = frob / n as f64;
    let base = net.forward(&y).unwrap();
    for s in [1e-3, 5e-4] {
        let ratios: Vec<f64> = (0..2000)
            .map(|k| {
                let yp = add_gaussian_noise(&y, s, 10_000 + k).unwrap();
                mse(&net.forward(&yp).unwrap(), &base).unwrap() / (s * s)
            })
            .collect();
        let (m, se) = (mean(&ratios), std_err(&ratios));
        assert!((m - target).abs() <= 3.0 * se + 0.01 * target, "{m} +- {se} vs {target}");
    }
}

proptest! {
    #[test]
    fn estimate_recomposes(df in -1.0f64..1.0, div in -1.0f64..1.0, off in 0.0f64..1.0) {
        let r = RiskEstimate::new(df, div, off, 0.0);
        prop_assert_eq!(r.total, r.recompose());
    }

    #[test]
    fn sure_total_recomposes(seed in 0u64..200, sigma in 0.0f64..0.3) {
        let y = add_gaussian_noise(&phantom(8), 0.1, seed).unwrap();
        let r = sure_loss(&BoxBlur3, &y, sigma, &ProbeVector::standard_normal(&y, seed)).unwrap();
        prop_assert_eq!(r.total, r.recompose());
        if sigma > 0.0 {
            prop_assert!((r.df_mc - r.divergence_term / (2.0 * sigma * sigma)).abs() < 1e-12);
        }
    }
}
