//! Likelihood models, rate estimates, range coder and bitstream.

mod common;

use chromacodec::entropy::*;
use chromacodec::Error;
use chromacodec::model::{
    decode_latents, encode_latents, padded_size, scales_from_hyperlatent, Branch, LatentBundle, LossWeights, Model, ModelConfig,
};
use chromacodec::tensor::{adam_step, ops, AdamState, GradCheck, Tape, Tensor, Var};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn hr<F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> chromacodec::Result<Var<'t>>>(f: F) -> F {
    f
}

fn prior_from(params: &[Tensor]) -> FactorizedPrior {
    FactorizedPrior::new(&params.iter().collect::<Vec<_>>()).unwrap()
}

/// Prior parameters with every stage perturbed away from the initial values.
fn perturbed_prior_params(channels: usize, seed: u64) -> Vec<Tensor> {
    let mut r = rng(seed);
    init_prior_params(channels, &mut r)
        .into_iter()
        .map(|mut t| {
            t.data_mut().iter_mut().for_each(|v| *v += 0.6 * (r.random::<f64>() - 0.5));
            t
        })
        .collect()
}

// ---------------------------------------------------------------- Gaussian

#[test]
fn gaussian_unit_bin_matches_erf_oracle() {
    // erf(0.5 / sqrt 2), from an independent double-precision erf.
    assert!((gaussian_likelihood(0.0, 1.0) - 0.382924922548026).abs() < 1e-12);
}

#[test]
fn gaussian_likelihood_symmetric_and_monotone_in_sigma() {
    for &v in &[0.0, 1.0, 2.0, 7.0] {
        for &s in &[0.2, 1.0, 3.5, 40.0] {
            assert_eq!(gaussian_likelihood(v, s), gaussian_likelihood(-v, s));
        }
    }
    let mut prev = f64::INFINITY;
    for k in 0..200 {
        let s = 0.11 * 1.04f64.powi(k);
        let p = gaussian_likelihood(0.0, s);
        assert!(p < prev);
        prev = p;
    }
    // Wide scale: roughly the density at zero times the bin width.
    let s = 50.0;
    let density = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
    assert!((gaussian_likelihood(0.0, s) - density).abs() < 1e-6);
}

#[test]
fn gaussian_scale_is_clamped_and_tail_floored() {
    assert_eq!(gaussian_likelihood(0.0, 0.01), gaussian_likelihood(0.0, SIGMA_FLOOR));
    assert_eq!(gaussian_likelihood(0.0, -3.0), gaussian_likelihood(0.0, SIGMA_FLOOR));
    assert_eq!(gaussian_likelihood(100.0, 1.0), TAIL_MASS);
}

#[test]
fn gaussian_bits_gradients() {
    let y = uniform(&[1, 2, 4, 4], -3.0, 3.0, 11);
    let s = uniform(&[1, 2, 4, 4], 0.3, 3.0, 12);
    let f = hr(|_, v| ops::sum(gaussian_bits(v[0], v[1])?));
    let err = GradCheck::default().run(f, &[y, s]).unwrap();
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn gaussian_bits_matches_likelihood() {
    let y = uniform(&[1, 1, 3, 5], -4.0, 4.0, 3);
    let s = uniform(&[1, 1, 3, 5], 0.05, 5.0, 4);
    let tape = Tape::new();
    let b = gaussian_bits(tape.constant(y.clone()), tape.constant(s.clone())).unwrap();
    for ((&bits, &v), &sg) in b.value().data().iter().zip(y.data()).zip(s.data()) {
        assert!((bits + gaussian_likelihood(v, sg).log2()).abs() < 1e-12);
    }
}

#[test]
fn scale_table_and_index() {
    let t = default_scale_table();
    assert_eq!(t.len(), SCALE_TABLE_LEN);
    assert!((t[0] - SIGMA_FLOOR).abs() < 1e-12 && (t[63] - SIGMA_CEIL).abs() < 1e-9);
    let ratio = t[1] / t[0];
    assert!(t.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-9));
    assert_eq!(scale_index(&t, 0.0), 0);
    assert_eq!(scale_index(&t, t[5]), 5);
    assert_eq!(scale_index(&t, t[5] * 1.0001), 6);
    assert_eq!(scale_index(&t, 1e6), 63);
    for i in 0..1000 {
        let s = 0.1 + i as f64 * 0.07;
        let k = scale_index(&t, s);
        assert!(t[k] >= s || k == 63);
        assert!(k == 0 || t[k - 1] < s);
    }
}

#[test]
fn gaussian_tables_are_valid() {
    let tables = gaussian_cdf_tables(&default_scale_table()).unwrap();
    for (t, s) in tables.iter().zip(default_scale_table()) {
        t.validate().unwrap();
        assert_eq!(*t.cumulative().last().unwrap(), TOTAL);
        assert!(t.offset() <= -((s * 6.0) as i32));
        assert_eq!(t.offset() + t.alphabet_len() as i32 - 1, -t.offset());
    }
    assert!(matches!(gaussian_cdf_tables(&[1.0, 0.5]), Err(Error::Format(_))));
}

// --------------------------------------------------------- Factorized prior

#[test]
fn factorized_bits_gradients() {
    let params = perturbed_prior_params(2, 5);
    let z = uniform(&[2, 2, 3, 3], -4.0, 4.0, 6);
    let mut inputs = vec![z];
    inputs.extend(params);
    let f = hr(|_, v| {
        let prior = PriorVars { params: v[1..].to_vec() };
        ops::sum(factorized_bits(v[0], &prior)?)
    });
    let err = GradCheck::default().run(f, &inputs).unwrap();
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn factorized_bits_matches_likelihood() {
    let params = perturbed_prior_params(3, 8);
    let prior = prior_from(&params);
    let z = uniform(&[1, 3, 2, 2], -20.0, 20.0, 9);
    let tape = Tape::new();
    let pv = PriorVars { params: params.iter().map(|p| tape.constant(p.clone())).collect() };
    let b = factorized_bits(tape.constant(z.clone()), &pv).unwrap();
    for (k, (&bits, &v)) in b.value().data().iter().zip(z.data()).enumerate() {
        assert!((bits + prior.likelihood(k / 4, v).log2()).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn factorized_cdf_is_monotone(seed in 0u64..1_000_000) {
        let prior = prior_from(&perturbed_prior_params(2, seed));
        for c in 0..2 {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=6000 {
                let u = -30.0 + i as f64 * 0.01;
                let l = prior.cdf_logit(c, u);
                prop_assert!(l >= prev, "channel {c} decreases at {u}");
                prev = l;
            }
        }
    }

    #[test]
    fn factorized_likelihood_positive(seed in 0u64..1_000_000, v in -5000.0f64..5000.0) {
        let prior = prior_from(&perturbed_prior_params(1, seed));
        let p = prior.likelihood(0, v.round());
        prop_assert!((TAIL_MASS..=1.0).contains(&p));
    }
}

#[test]
fn untrained_prior_is_logistic_and_symmetric() {
    let prior = prior_from(&init_prior_params(4, &mut rng(21)));
    for c in 0..4 {
        let median = prior.quantile(c, 0.5);
        let l0 = prior.cdf_logit(c, median);
        assert!(l0.abs() < 1e-9);
        // The logit is affine in the input: a logistic distribution.
        let slope = prior.cdf_logit(c, median + 1.0) - l0;
        assert!(slope > 0.0);
        for i in 1..50 {
            let t = i as f64 * 0.73;
            let up = prior.cdf_logit(c, median + t);
            let down = prior.cdf_logit(c, median - t);
            assert!((up + down).abs() < 1e-9, "asymmetric at {t}");
            assert!((up - slope * t).abs() < 1e-9 * (1.0 + up.abs()));
        }
        // Spread about the initial scale.
        assert!(1.0 / slope > 1.0 && 1.0 / slope < 20.0);
    }
}

#[test]
fn trained_prior_normalizes_over_integer_bins() {
    let mut params = init_prior_params(1, &mut rng(31));
    let mut state = AdamState::new(params.iter(), 0.02);
    let mut r = rng(32);
    for _ in 0..600 {
        let z = Tensor::from_fn(&[1, 1, 1, 512], |_| normal(&mut r) + r.random_range(-0.5..0.5));
        let tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = ops::mean(factorized_bits(tape.constant(z), &PriorVars { params: vars.clone() }).unwrap()).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g: Vec<Option<&Tensor>> = vars.iter().map(|&v| grads.get(v)).collect();
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        adam_step(&mut refs, &g, &mut state).unwrap();
    }
    let prior = prior_from(&params);
    let mass: f64 = (-30..=30).map(|v| prior.likelihood(0, v as f64)).sum();
    assert!(mass >= 1.0 - 1e-6, "mass {mass}");
    // The fit is close to the unit-variance source.
    let (lo, hi) = (prior.quantile(0, 0.1587), prior.quantile(0, 0.8413));
    assert!((hi - lo) > 1.6 && (hi - lo) < 2.6, "spread {}", hi - lo);
}

#[test]
fn prior_tables_are_valid() {
    let prior = prior_from(&perturbed_prior_params(6, 41));
    for (c, t) in prior.cdf_tables().iter().enumerate() {
        t.validate().unwrap();
        let (lo, hi) = prior.alphabet(c);
        assert_eq!(t.offset(), lo);
        assert_eq!(t.alphabet_len() as i32, hi - lo + 1);
        assert!(lo >= -MAX_HALF_ALPHABET && hi <= MAX_HALF_ALPHABET);
    }
    let model = tiny_model(1);
    let tables = EntropyTables::new(&model).unwrap();
    for t in tables.prior_lum.iter().chain(&tables.prior_chroma).chain(&tables.gaussian) {
        t.validate().unwrap();
    }
    assert_eq!(tables.prior_lum.len(), model.config.hyper_channels(Branch::Luma));
}

// ------------------------------------------------------------ Rate estimates

/// Bundle with the given latents and scales predicted by the model.
fn bundle_from(model: &Model, y: [Tensor; 2], z: [Tensor; 2]) -> LatentBundle {
    let (_, _, h, w) = y[0].dims4().unwrap();
    let s_l = scales_from_hyperlatent(model, Branch::Luma, &z[0], (h, w)).unwrap();
    let s_c = scales_from_hyperlatent(model, Branch::Chroma, &z[1], (h, w)).unwrap();
    let [y_lum, y_chroma] = y;
    let [z_lum, z_chroma] = z;
    LatentBundle { y_lum, y_chroma, z_lum, z_chroma, sigma_lum: s_l, sigma_chroma: s_c }
}

/// Random integer latents, with y drawn from `spread` times the predicted scales.
fn random_bundle(model: &Model, lh: usize, lw: usize, spread: f64, seed: u64) -> LatentBundle {
    let cfg = &model.config;
    let (zh, zw) = cfg.hyper_size(lh, lw);
    let mut r = rng(seed);
    let z: [Tensor; 2] = std::array::from_fn(|k| {
        Tensor::from_fn(&[1, cfg.hyper_channels(Branch::ALL[k]), zh, zw], |_| r.random_range(-3i32..=3) as f64)
    });
    let zero = |b: Branch| Tensor::zeros(&[1, cfg.channels(b), lh, lw]);
    let mut bundle = bundle_from(model, [zero(Branch::Luma), zero(Branch::Chroma)], z);
    for (y, s) in [(&mut bundle.y_lum, &bundle.sigma_lum), (&mut bundle.y_chroma, &bundle.sigma_chroma)] {
        for (v, &sg) in y.data_mut().iter_mut().zip(s.data()) {
            *v = (normal(&mut r) * sg * spread).round();
        }
    }
    bundle
}

#[test]
fn per_channel_rates_add_up() {
    let model = tiny_model(2);
    let bundle = random_bundle(&model, 3, 4, 3.0, 5);
    let est = estimate_rate_bits(&bundle, &model).unwrap();
    let sum: f64 = Branch::ALL
        .iter()
        .flat_map(|&b| est.y_channels(b).iter().chain(est.z_channels(b)))
        .sum();
    assert!((sum - est.total_bits).abs() < 1e-6);
    assert_eq!(est.y_lum.len(), 32);
    assert_eq!(est.z_chroma.len(), 16);
}

/// Zeroes the bias of every prior stage so each channel's median is 0.
fn symmetric_prior_model(seed: u64) -> Model {
    let mut model = tiny_model(seed);
    let names: Vec<String> = model.params.names().iter().filter(|n| n.contains(".prior.bias")).cloned().collect();
    for n in names {
        model.params.get_mut(&n).unwrap().data_mut().fill(0.0);
    }
    model
}

#[test]
fn zero_latents_are_a_local_rate_minimum() {
    let model = symmetric_prior_model(3);
    let cfg = model.config.clone();
    let (lh, lw) = (4, 4);
    let (zh, zw) = cfg.hyper_size(lh, lw);
    let y = Branch::ALL.map(|b| Tensor::zeros(&[1, cfg.channels(b), lh, lw]));
    let z = Branch::ALL.map(|b| Tensor::zeros(&[1, cfg.hyper_channels(b), zh, zw]));
    let base = bundle_from(&model, y, z);
    let base_bits = estimate_rate_bits(&base, &model).unwrap().total_bits;
    let mut r = rng(4);
    for trial in 0..40 {
        let mut b = base.clone();
        let delta = if trial % 2 == 0 { 1.0 } else { -1.0 };
        let t = match trial % 4 {
            0 => &mut b.y_lum,
            1 => &mut b.y_chroma,
            2 => &mut b.z_lum,
            _ => &mut b.z_chroma,
        };
        let k = r.random_range(0..t.len());
        t.data_mut()[k] += delta;
        let bits = estimate_rate_bits(&b, &model).unwrap().total_bits;
        assert!(bits > base_bits, "trial {trial}: {bits} <= {base_bits}");
    }
}

/// Repeats every latent tensor twice along the width.
fn tile_wide(t: &Tensor) -> Tensor {
    let (b, c, h, w) = t.dims4().unwrap();
    Tensor::from_fn(&[b, c, h, 2 * w], |i| {
        let x = i % (2 * w);
        let rest = i / (2 * w);
        t.data()[rest * w + x % w]
    })
}

#[test]
fn tiling_latents_doubles_bits() {
    let model = tiny_model(4);
    let b = random_bundle(&model, 4, 4, 3.0, 6);
    let tiled = LatentBundle {
        y_lum: tile_wide(&b.y_lum),
        y_chroma: tile_wide(&b.y_chroma),
        z_lum: tile_wide(&b.z_lum),
        z_chroma: tile_wide(&b.z_chroma),
        sigma_lum: tile_wide(&b.sigma_lum),
        sigma_chroma: tile_wide(&b.sigma_chroma),
    };
    let one = estimate_rate_bits(&b, &model).unwrap().total_bits;
    let two = estimate_rate_bits(&tiled, &model).unwrap().total_bits;
    assert!((two / one - 2.0).abs() < 0.02, "{one} -> {two}");
}

// ------------------------------------------------------------- Range coder

fn shannon_bits(values: &[i32], tables: &[&CdfTable]) -> f64 {
    values
        .iter()
        .zip(tables)
        .map(|(&v, t)| match t.symbol_of(v) {
            Some(s) => -(t.range(s).1 as f64 / TOTAL as f64).log2(),
            None => -(t.range(t.escape_symbol()).1 as f64 / TOTAL as f64).log2() + 22.0,
        })
        .sum()
}

#[test]
fn four_symbol_source_reaches_entropy() {
    let probs = [0.5, 0.25, 0.15, 0.1];
    let table = CdfTable::from_probabilities(0, &probs);
    let mut r = rng(7);
    let values: Vec<i32> = (0..100_000)
        .map(|_| {
            let u: f64 = r.random();
            let mut acc = 0.0;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k as i32;
                }
            }
            3
        })
        .collect();
    let tables = vec![&table; values.len()];
    let bytes = range_encode(&values, &tables).unwrap();
    let entropy: f64 = probs.iter().map(|p| -p * p.log2()).sum();
    let bound = entropy * values.len() as f64;
    let actual = 8.0 * bytes.len() as f64;
    assert!((actual - bound).abs() <= 0.02 * bound, "{actual} bits vs bound {bound}");
    assert_eq!(range_decode(&bytes, &tables).unwrap(), values);
}

#[test]
fn empty_sequence() {
    let bytes = range_encode(&[], &[]).unwrap();
    assert!(bytes.len() <= 4);
    assert!(range_decode(&bytes, &[]).unwrap().is_empty());
}

#[test]
fn single_symbol_alphabet() {
    let table = CdfTable::from_probabilities(5, &[1.0]);
    table.validate().unwrap();
    let values = vec![5; 10_000];
    let tables = vec![&table; values.len()];
    let bytes = range_encode(&values, &tables).unwrap();
    // About 2^-16 bits per symbol plus the flush.
    assert!(bytes.len() <= 8, "{} bytes", bytes.len());
    assert_eq!(range_decode(&bytes, &tables).unwrap(), values);
}

#[test]
fn escapes_round_trip() {
    let table = gaussian_cdf_table(1.0);
    let values = vec![0, 1, -1, 1000, -1000, i32::MAX, i32::MIN, 7, -8, 65_536, 3];
    let tables = vec![&table; values.len()];
    let bytes = range_encode(&values, &tables).unwrap();
    assert_eq!(range_decode(&bytes, &tables).unwrap(), values);
}

#[test]
fn truncated_stream_is_rejected() {
    let table = gaussian_cdf_table(4.0);
    let mut r = rng(8);
    let values: Vec<i32> = (0..2000).map(|_| (normal(&mut r) * 4.0).round() as i32).collect();
    let tables = vec![&table; values.len()];
    let bytes = range_encode(&values, &tables).unwrap();
    for cut in [1, 2, bytes.len() / 2] {
        let err = range_decode(&bytes[..bytes.len() - cut], &tables);
        assert!(err.is_err() || err.unwrap() != values);
    }
    let mut longer = bytes.clone();
    longer.push(0x55);
    assert!(range_decode(&longer, &tables).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_tables_round_trip(seed in 0u64..u64::MAX, n in 0usize..3000, ntables in 1usize..6) {
        let mut r = rng(seed);
        let tables: Vec<CdfTable> = (0..ntables)
            .map(|_| {
                let len = r.random_range(1..300);
                let probs: Vec<f64> = (0..len).map(|_| r.random::<f64>().powi(3)).collect();
                let total: f64 = probs.iter().sum::<f64>() * 1.0001;
                let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
                CdfTable::from_probabilities(r.random_range(-500..500), &probs)
            })
            .collect();
        for t in &tables {
            prop_assert!(t.validate().is_ok());
        }
        let choice: Vec<&CdfTable> = (0..n).map(|_| &tables[r.random_range(0..ntables)]).collect();
        let values: Vec<i32> = choice
            .iter()
            .map(|t| {
                if r.random::<f64>() < 0.01 {
                    r.random_range(-100_000..100_000)
                } else {
                    let (start, _) = t.range(0);
                    let target = r.random_range(start..TOTAL);
                    let s = t.find(target);
                    if s == t.escape_symbol() { t.offset() - 1 } else { t.value_of(s) }
                }
            })
            .collect();
        let bytes = range_encode(&values, &choice).unwrap();
        prop_assert_eq!(range_decode(&bytes, &choice).unwrap(), values.clone());
        let cross_entropy = shannon_bits(&values, &choice);
        prop_assert!(8.0 * bytes.len() as f64 <= 1.02 * cross_entropy + 8.0 * 32.0);
    }
}

// --------------------------------------------------------------- Bitstream

fn header(seed: u64) -> CompressedImage {
    let mut r = rng(seed);
    CompressedImage {
        orig_width: r.random_range(1..5000),
        orig_height: r.random_range(1..5000),
        padded_width: r.random_range(1..5000),
        padded_height: r.random_range(1..5000),
        config_id: r.random(),
        lambda_id: r.random(),
        segments: std::array::from_fn(|_| (0..r.random_range(0..40)).map(|_| r.random()).collect()),
    }
}

proptest! {
    #[test]
    fn header_round_trips(seed in 0u64..u64::MAX) {
        let c = header(seed);
        let bytes = c.to_bytes();
        prop_assert_eq!(bytes.len(), c.len_bytes());
        prop_assert_eq!(&bytes[..6], BITSTREAM_MAGIC);
        prop_assert_eq!(CompressedImage::from_bytes(&bytes).unwrap(), c);
    }
}

#[test]
fn byte_layout_is_fixed() {
    let c = CompressedImage {
        orig_width: 100,
        orig_height: 75,
        padded_width: 112,
        padded_height: 80,
        config_id: 0xBEEF,
        lambda_id: 0x0102,
        segments: [vec![1], vec![], vec![2, 3], vec![4]],
    };
    let expected: Vec<u8> = [
        &b"CLBS01"[..],
        &[1],
        &100u32.to_le_bytes(),
        &75u32.to_le_bytes(),
        &112u32.to_le_bytes(),
        &80u32.to_le_bytes(),
        &[0xEF, 0xBE, 0x02, 0x01],
        &[1, 0, 0, 0, 1],
        &[0, 0, 0, 0],
        &[2, 0, 0, 0, 2, 3],
        &[1, 0, 0, 0, 4],
    ]
    .concat();
    assert_eq!(c.to_bytes(), expected);
}

#[test]
fn malformed_headers_are_rejected() {
    let bytes = header(1).to_bytes();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(CompressedImage::from_bytes(&bad), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[6] = 9;
    assert!(matches!(CompressedImage::from_bytes(&bad), Err(Error::Format(_))));
    for cut in [0, 5, 20, bytes.len() - 1] {
        assert!(CompressedImage::from_bytes(&bytes[..cut]).is_err());
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(CompressedImage::from_bytes(&extra).is_err());
}

#[test]
fn wrong_config_is_rejected() {
    let model = tiny_model(5);
    let c = compress_image(&model, &random_image(64, 64, 1)).unwrap();
    let mut other_cfg = ModelConfig::tiny();
    other_cfg.lum_channels = 24;
    let other = Model::new(other_cfg, LossWeights::preset(2).unwrap(), 5).unwrap();
    assert!(matches!(decompress_image(&other, &c), Err(Error::Format(_))));
    let mut c2 = c.clone();
    c2.padded_width += 16;
    assert!(matches!(decompress_image(&model, &c2), Err(Error::Format(_))));
}

#[test]
fn compress_matches_latent_pipeline_and_crops() {
    let model = tiny_model(6);
    let img = random_image(100, 75, 2);
    let c = compress_image(&model, &img).unwrap();
    assert_eq!((c.orig_width, c.orig_height), (100, 75));
    assert_eq!((c.padded_width, c.padded_height), (112, 80));
    assert_eq!(padded_size(&model.config, 100, 75), (112, 80));
    let parsed = CompressedImage::from_bytes(&c.to_bytes()).unwrap();
    let out = decompress_image(&model, &parsed).unwrap();
    assert_eq!((out.width(), out.height()), (100, 75));
    let bundle = encode_latents(&model, &img).unwrap();
    let direct = decode_latents(&model, &bundle, 100, 75).unwrap();
    assert_eq!(out, direct);
    assert_eq!(decompress_image(&model, &parsed).unwrap(), out);
    assert_eq!(compress_image(&model, &img).unwrap(), c);
}

#[test]
fn nonzero_latents_transport_exactly() {
    let model = tiny_model(7);
    let tables = EntropyTables::new(&model).unwrap();
    for seed in 0..4 {
        let mut bundle = random_bundle(&model, 4, 5, 3.0, 100 + seed);
        // A few outliers force escapes.
        bundle.y_lum.data_mut()[3] = 4000.0;
        bundle.y_chroma.data_mut()[7] = -70_000.0;
        bundle.z_lum.data_mut()[0] = 5000.0;
        bundle = bundle_from(&model, [bundle.y_lum, bundle.y_chroma], [bundle.z_lum, bundle.z_chroma]);
        let c = compress_bundle(&model, &tables, &bundle, 80, 64).unwrap();
        let back = decode_bundle(&model, &tables, &CompressedImage::from_bytes(&c.to_bytes()).unwrap()).unwrap();
        assert_eq!(back, bundle);
    }
}

#[test]
fn actual_bits_track_the_estimate() {
    let model = tiny_model(8);
    let tables = EntropyTables::new(&model).unwrap();
    for seed in 0..4 {
        let bundle = random_bundle(&model, 8, 8, 1.0, 200 + seed);
        let est = estimate_rate_bits(&bundle, &model).unwrap().total_bits;
        let c = compress_bundle(&model, &tables, &bundle, 128, 128).unwrap();
        let actual = c.total_bits() as f64;
        assert!((actual - est).abs() <= 0.02 * est + 512.0, "actual {actual} estimate {est}");
    }
    for seed in 0..3 {
        let img = random_image(64, 64, 300 + seed);
        let est = estimate_rate_bits(&encode_latents(&model, &img).unwrap(), &model).unwrap().total_bits;
        let actual = compress_image(&model, &img).unwrap().total_bits() as f64;
        assert!((actual - est).abs() <= 0.02 * est + 512.0, "actual {actual} estimate {est}");
    }
}

#[test]
fn corrupted_segments_are_detected() {
    let model = tiny_model(9);
    let tables = EntropyTables::new(&model).unwrap();
    let bundle = random_bundle(&model, 4, 4, 3.0, 400);
    let c = compress_bundle(&model, &tables, &bundle, 64, 64).unwrap();
    let mut r = rng(10);
    let (mut detected, mut benign, mut silent) = (0, 0, 0);
    for _ in 0..200 {
        let mut bad = c.clone();
        let seg = r.random_range(0..4);
        let k = r.random_range(0..bad.segments[seg].len());
        bad.segments[seg][k] ^= 1 << r.random_range(0..8);
        match decode_bundle(&model, &tables, &bad) {
            Err(_) => detected += 1,
            // Low bits of the flush byte only pick a point inside the final interval.
            Ok(b) if b == bundle => benign += 1,
            Ok(_) => silent += 1,
        }
    }
    assert_eq!(silent, 0, "{silent} corruptions changed the latents undetected");
    assert!(detected >= 190, "detected {detected}, benign {benign}");
}
