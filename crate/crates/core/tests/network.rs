use dipstop_core::image::{add_gaussian_noise, generate_phantom, PhantomKind};
use dipstop_core::network::{decode_checkpoint, encode_checkpoint, init_network, ArchSpec, Norm, Padding};
use dipstop_core::{DenoiserNetwork, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_like(img: &Image, seed: u64) -> Image {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    img.map(|_| r.gen_range(-1.0..1.0))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn archs() -> Vec<ArchSpec> {
    let mut out = Vec::new();
    for norm in [Norm::Batch, Norm::None] {
        for padding in [Padding::Reflect, Padding::Zero] {
            let mut a = ArchSpec::uniform(2, 5, 2);
            a.norm = norm;
            a.padding = padding;
            out.push(a);
        }
    }
    out
}

/// Smallest relative error over a few central-difference steps (a step may
/// straddle an activation kink).
fn best_fd(f: impl Fn(f64) -> f64, analytic: f64) -> f64 {
    [1e-5, 1e-6, 1e-7]
        .into_iter()
        .map(|h| rel_err((f(h) - f(-h)) / (2.0 * h), analytic))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn input_gradient_matches_finite_differences() {
    let x = generate_phantom(PhantomKind::Disks, 8, 8, 1, 0).unwrap();
    let y = add_gaussian_noise(&x, 0.1, 1).unwrap();
    for (k, arch) in archs().into_iter().enumerate() {
        let net = init_network(arch, 1, k as u64).unwrap();
        let cot = random_like(&y, 10 + k as u64);
        let dir = random_like(&y, 20 + k as u64);
        let grad = net.input_vjp(&y, &cot).unwrap();
        let analytic = grad.dot(&dir).unwrap();
        let f = |s: f64| {
            let moved = y.add(&dir.scale(s)).unwrap();
            net.forward(&moved).unwrap().dot(&cot).unwrap()
        };
        let err = best_fd(f, analytic);
        assert!(err < 1e-3, "arch {k}: relative error {err}");
    }
}

#[test]
fn parameter_gradient_matches_finite_differences() {
    let y = add_gaussian_noise(&generate_phantom(PhantomKind::TextLike, 8, 8, 3, 0).unwrap(), 0.1, 2).unwrap();
    for (k, arch) in archs().into_iter().enumerate() {
        let net = init_network(arch, 3, 40 + k as u64).unwrap();
        let cot = random_like(&y, 30 + k as u64);
        let grads = net.param_vjp(&y, &cot).unwrap();
        let theta = net.theta();
        let flat: Vec<f64> = grads.iter().flat_map(|t| t.data.iter().copied()).collect();
        assert_eq!(flat.len(), theta.len());
        // a random slice of the parameters
        let mut r = ChaCha8Rng::seed_from_u64(k as u64);
        let dir: Vec<f64> = (0..theta.len())
            .map(|_| if r.gen_bool(0.3) { r.gen_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let analytic: f64 = flat.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let f = |s: f64| {
            let mut moved = net.clone();
            let t: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + s * d).collect();
            moved.set_theta(&t).unwrap();
            moved.forward(&y).unwrap().dot(&cot).unwrap()
        };
        let err = best_fd(f, analytic);
        assert!(err < 1e-3, "arch {k}: relative error {err}");
    }
}

#[test]
fn shape_preserving_for_awkward_sizes() {
    let net = init_network(ArchSpec::uniform(3, 4, 1), 3, 0).unwrap();
    for (h, w) in [(8, 8), (9, 31), (17, 23), (40, 12)] {
        let img = generate_phantom(PhantomKind::Gradient, h, w, 3, 0).unwrap();
        let out = net.forward(&img).unwrap();
        assert_eq!(out.shape(), (h, w, 3));
        assert!(out.is_finite());
    }
}

#[test]
fn checkpoint_restores_identical_outputs() {
    let net = DenoiserNetwork::new(ArchSpec::uniform(2, 4, 2), 1, 7).unwrap();
    let restored = decode_checkpoint(&encode_checkpoint(&net).unwrap()).unwrap();
    let img = generate_phantom(PhantomKind::Checkerboard, 16, 16, 1, 0).unwrap();
    assert_eq!(net.forward(&img).unwrap(), restored.forward(&img).unwrap());
    assert_eq!(restored.arch(), net.arch());
}

#[test]
fn seeds_change_parameters() {
    let a = init_network(ArchSpec::default(), 3, 1).unwrap();
    let b = init_network(ArchSpec::default(), 3, 1).unwrap();
    let c = init_network(ArchSpec::default(), 3, 2).unwrap();
    assert_eq!(a.theta(), b.theta());
    assert_ne!(a.theta(), c.theta());
}
