use crossview::patch_match::rank_order;
use crossview::{
    extract_patches, sliding_match, ssim, top_k, BinaryMask, GrayImage, LabeledSample, MatchCandidate, MatchConfig,
    Rect,
};
use crossview_oracles as oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::new(w, h, (0..w * h).map(|_| rng.random_range(0.0..=255.0)).collect()).unwrap()
}

#[test]
fn ssim_matches_scalar_oracle_on_random_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let a = random_image(&mut rng, 8, 8);
        let b = random_image(&mut rng, 8, 8);
        let got = ssim(&a, &b).unwrap();
        let want = oracle::ssim_scalar(a.pixels(), b.pixels());
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
        assert!((-1.0..=1.0).contains(&got));
        let back = ssim(&b, &a).unwrap();
        assert!((got - back).abs() <= 1e-12);
    }
}

#[test]
fn f32_ssim_tracks_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_image(&mut rng, 8, 8);
    let b = random_image(&mut rng, 8, 8);
    let a32 = crossview::GrayImageF32::new(8, 8, a.pixels().iter().map(|v| *v as f32).collect()).unwrap();
    let b32 = crossview::GrayImageF32::new(8, 8, b.pixels().iter().map(|v| *v as f32).collect()).unwrap();
    assert!((ssim(&a32, &b32).unwrap() as f64 - ssim(&a, &b).unwrap()).abs() < 1e-4);
}

fn scene() -> (LabeledSample, crossview::TargetPatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = random_image(&mut rng, 64, 48);
    let mask = BinaryMask::from_fn(64, 48, |x, y| (20..23).contains(&x) && (30..32).contains(&y)).unwrap();
    let bg = LabeledSample::new("bg", img, mask).unwrap();
    let patch = extract_patches(&bg, 2).remove(0);
    (bg, patch)
}

#[test]
fn sliding_match_independent_of_thread_count() {
    let (bg, patch) = scene();
    let cfg = MatchConfig {
        stride: 1,
        ..MatchConfig::default()
    };
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let a = serial.install(|| sliding_match(&bg, &patch, &cfg).unwrap());
    let b = wide.install(|| sliding_match(&bg, &patch, &cfg).unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.x, x.y, x.score.to_bits()), (y.x, y.y, y.score.to_bits()));
    }
    // Sequential grid order and per-window scores equal a crop-based recomputation.
    for w in a.windows(2) {
        assert!((w[0].y, w[0].x) < (w[1].y, w[1].x));
    }
    for c in a.iter().step_by(97) {
        let crop = bg
            .image()
            .crop(Rect::new(c.x, c.y, patch.width(), patch.height()))
            .unwrap();
        assert_eq!(ssim(&crop, &patch.image).unwrap().to_bits(), c.score.to_bits());
    }
}

#[test]
fn sliding_match_exclusion_vs_brute_force() {
    let (bg, patch) = scene();
    let cfg = MatchConfig {
        stride: 3,
        ..MatchConfig::default()
    };
    let got = sliding_match(&bg, &patch, &cfg).unwrap();
    let (pw, ph) = (patch.width(), patch.height());
    let mut expected = Vec::new();
    for y in (0..=bg.height() - ph).step_by(3) {
        for x in (0..=bg.width() - pw).step_by(3) {
            let touches = (y..y + ph).any(|yy| (x..x + pw).any(|xx| bg.mask().get(xx, yy)));
            let own = Rect::new(x, y, pw, ph).intersects(&patch.origin_bbox);
            if !touches && !own {
                expected.push((x, y));
            }
        }
    }
    let got_pos: Vec<_> = got.iter().map(|c| (c.x, c.y)).collect();
    assert_eq!(got_pos, expected);

    let all = sliding_match(
        &bg,
        &patch,
        &MatchConfig {
            exclude_target_overlap: false,
            ..cfg
        },
    )
    .unwrap();
    let per_axis = |n: usize, p: usize| (n - p) / 3 + 1;
    assert_eq!(all.len(), per_axis(64, pw) * per_axis(48, ph));
}

fn arb_candidates() -> impl Strategy<Value = Vec<MatchCandidate>> {
    prop::collection::vec((0usize..40, 0usize..40, 0u8..6), 0..40).prop_map(|v| {
        v.into_iter()
            .map(|(x, y, s)| MatchCandidate {
                x,
                y,
                score: s as f64 / 5.0 - 0.2,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn top_k_matches_exhaustive_oracle(cands in arb_candidates(), k in 1usize..8, sep in 0.5f64..15.0) {
        let cfg = MatchConfig { k, min_separation: Some(sep), ..MatchConfig::default() };
        let got = top_k(&cands, &cfg);
        let raw: Vec<_> = cands.iter().map(|c| (c.x, c.y, c.score)).collect();
        let want = oracle::greedy_top_k(&raw, k, sep);
        let got_raw: Vec<_> = got.iter().map(|c| (c.x, c.y, c.score)).collect();
        prop_assert_eq!(&got_raw, &want);
        prop_assert!(got.len() <= k);
        for w in got.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
            prop_assert!(rank_order(&w[0], &w[1]).is_le());
        }
        for (i, a) in got.iter().enumerate() {
            for b in &got[i + 1..] {
                let d = ((a.x as f64 - b.x as f64).powi(2) + (a.y as f64 - b.y as f64).powi(2)).sqrt();
                prop_assert!(d >= sep);
            }
        }
    }

    #[test]
    fn extracted_patches_match_oracle_components(bits in prop::collection::vec(prop::bool::weighted(0.15), 20 * 14), pad in 0usize..4) {
        let mask = BinaryMask::new(20, 14, bits.clone()).unwrap();
        let img = GrayImage::filled(20, 14, 50.0).unwrap();
        let s = LabeledSample::new("s", img, mask).unwrap();
        let patches = extract_patches(&s, pad);
        let comps = oracle::components(20, 14, &bits);
        prop_assert_eq!(patches.len(), comps.len());
        let total: usize = patches.iter().map(|p| p.mask.count()).sum();
        prop_assert_eq!(total, bits.iter().filter(|b| **b).count());
        for p in &patches {
            prop_assert!(p.mask.count() > 0);
            let t = p.tight_bbox;
            let expect = Rect::new(t.x.saturating_sub(pad), t.y.saturating_sub(pad), 0, 0);
            prop_assert_eq!((p.origin_bbox.x, p.origin_bbox.y), (expect.x, expect.y));
            prop_assert_eq!(p.origin_bbox.right(), (t.right() + pad).min(20));
            prop_assert_eq!(p.origin_bbox.bottom(), (t.bottom() + pad).min(14));
            prop_assert_eq!((p.width(), p.height()), (p.origin_bbox.w, p.origin_bbox.h));
        }
        for w in patches.windows(2) {
            prop_assert!((w[0].tight_bbox.y, w[0].tight_bbox.x) <= (w[1].tight_bbox.y, w[1].tight_bbox.x));
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let (bg, patch) = scene();
    let cfg = MatchConfig::default();
    assert_eq!(
        sliding_match(&bg, &patch, &cfg).unwrap(),
        sliding_match(&bg, &patch, &cfg).unwrap()
    );
}
