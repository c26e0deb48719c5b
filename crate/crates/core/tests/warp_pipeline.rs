mod common;

use common::*;
use densewarp::atlas::scatter_coords;
use densewarp::mask_ops::{refine_mask, RefineParams};
use densewarp::metrics::miou;
use densewarp::pipeline::{transfer, PipelineOptions, DEFAULT_COARSE_RESOLUTION};
use densewarp::raster::Plane;
use densewarp::synth::{generate, SynthPair, SynthSpec, TextureKind};
use densewarp::warp::{build_coord_grid, warp_coarse_mask, warp_garment, WarpInputs, WarpOptions, WarpResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sleeves(degrees: f64, kind: TextureKind, dropout: f64, seed: u64) -> SynthPair {
    generate(&SynthSpec::torso_and_sleeves(degrees, texture(kind), dropout, seed)).unwrap()
}

fn warp_with(pair: &SynthPair, opts: &WarpOptions) -> WarpResult {
    let inputs = WarpInputs {
        garment: &pair.garment,
        garment_dp: &pair.garment_dp,
        garment_mask: &pair.garment_mask,
        person_dp: &pair.person_dp,
        query_mask: &pair.gt_mask,
    };
    warp_garment(&inputs, opts).unwrap().0
}

#[test]
fn sleeve_rotation_color_error_per_texture() {
    // frozen from runs at R = 256 with 20% dropout
    let bounds = [
        (TextureKind::Gradient, 0.02),
        (TextureKind::Noise, 0.02),
        (TextureKind::Stripes, 0.02),
        (TextureKind::Checker, 0.03),
    ];
    for (kind, bound) in bounds {
        for seed in 0..3 {
            let pair = sleeves(30.0, kind, 0.2, seed);
            let out = warp_with(&pair, &WarpOptions::default());
            let err = mean_abs_error(&out.image, &pair.gt_warp, &pair.gt_mask);
            assert!(err <= bound, "{kind:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn coarse_mask_close_to_ground_truth() {
    for (k, degrees) in [0.0, 30.0, 60.0, 90.0, 120.0].into_iter().enumerate() {
        let pair = sleeves(degrees, TextureKind::Noise, 0.2, k as u64);
        let coarse = warp_coarse_mask(&pair.garment_mask, &pair.garment_dp, &pair.person_dp, DEFAULT_COARSE_RESOLUTION).unwrap();
        assert!(coarse.is_subset_of(&pair.gt_mask));
        let iou = miou(&coarse, &pair.gt_mask).unwrap();
        assert!(iou >= 0.9, "{degrees} deg: {iou}");
    }
}

#[test]
fn refinement_repairs_speckled_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for degrees in [20.0, 75.0] {
        let pair = sleeves(degrees, TextureKind::Gradient, 0.0, 1);
        let bits = pair.gt_mask.data().iter().map(|&m| m && !rng.random_bool(0.2)).collect();
        let speckled = Plane::from_vec(pair.gt_mask.width(), pair.gt_mask.height(), bits).unwrap();
        let refined = refine_mask(&speckled, &RefineParams::default());
        let before = miou(&speckled, &pair.gt_mask).unwrap();
        let after = miou(&refined, &pair.gt_mask).unwrap();
        assert!(after > before, "{degrees}: {before} -> {after}");

        let sparse = sleeves(degrees, TextureKind::Gradient, 0.2, 1);
        let coarse = warp_coarse_mask(&sparse.garment_mask, &sparse.garment_dp, &sparse.person_dp, 64).unwrap();
        let refined = refine_mask(&coarse, &RefineParams::default());
        assert!(miou(&refined, &sparse.gt_mask).unwrap() > miou(&coarse, &sparse.gt_mask).unwrap());
    }
}

#[test]
fn grid_and_color_paths_agree_at_fine_resolution() {
    for (k, kind) in TEXTURES.into_iter().enumerate() {
        let pair = sleeves(40.0, kind, 0.2, k as u64);
        let fine = 4 * pair.garment.width().max(pair.garment.height());
        let grid = warp_with(&pair, &WarpOptions { resolution: fine, ..WarpOptions::default() });
        let color = warp_with(
            &pair,
            &WarpOptions {
                resolution: fine,
                use_grid: false,
                ..WarpOptions::default()
            },
        );
        assert_eq!(grid.validity, color.validity);
        let diff = mean_abs_error(&grid.image, &color.image, &grid.validity);
        assert!(diff <= 0.01, "{kind:?}: {diff}");
    }
}

#[test]
fn grid_path_degrades_less_at_coarse_resolution() {
    let mut grid_total = 0.0;
    let mut color_total = 0.0;
    for (k, kind) in TEXTURES.into_iter().enumerate() {
        for degrees in [15.0, 45.0] {
            let pair = sleeves(degrees, kind, 0.2, k as u64);
            let coarse = WarpOptions {
                resolution: 64,
                ..WarpOptions::default()
            };
            let grid = warp_with(&pair, &coarse);
            let color = warp_with(&pair, &WarpOptions { use_grid: false, ..coarse });
            let eg = mean_abs_error(&grid.image, &pair.gt_warp, &grid.validity);
            let ec = mean_abs_error(&color.image, &pair.gt_warp, &color.validity);
            assert!(eg <= ec, "{kind:?} {degrees}: grid {eg} color {ec}");
            grid_total += eg;
            color_total += ec;
        }
    }
    assert!(grid_total < color_total);
}

#[test]
fn fill_only_adds_pixels_inside_query() {
    for seed in 0..4 {
        let pair = sleeves(35.0, TextureKind::Checker, 0.3, seed);
        let filled = warp_with(&pair, &WarpOptions::default());
        let holes = warp_with(
            &pair,
            &WarpOptions {
                use_inpaint: false,
                ..WarpOptions::default()
            },
        );
        assert!(holes.validity.count() < filled.validity.count());
        assert!(holes.validity.is_subset_of(&filled.validity));
        assert!(filled.validity.is_subset_of(&pair.gt_mask));
        for (x, y) in masked_pixels(&filled.validity.complement()) {
            assert_eq!(filled.image.get(x, y), [0.0; 3]);
        }
    }
}

#[test]
fn warped_coordinates_stay_in_their_part() {
    let spec = SynthSpec::torso_and_sleeves(70.0, texture(TextureKind::Noise), 0.25, 5);
    let pair = generate(&spec).unwrap();
    let atlas = scatter_coords(&pair.garment_dp, &pair.garment_mask, 128).unwrap();
    let grid = build_coord_grid(&atlas, &pair.person_dp, &pair.gt_mask).unwrap();
    for (x, y) in masked_pixels(&grid.validity()) {
        let [gx, gy] = grid.coords().get(x, y).unwrap();
        let label = pair.person_dp.label(x, y);
        let rect = spec.parts.iter().find(|p| p.part_id == label).unwrap().rect;
        assert!(gx >= rect.x as f64 && gx <= (rect.x + rect.width - 1) as f64, "x {gx} outside part {label}");
        assert!(gy >= rect.y as f64 && gy <= (rect.y + rect.height - 1) as f64, "y {gy} outside part {label}");
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let pair = sleeves(50.0, TextureKind::Stripes, 0.2, 9);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            transfer(&pair.garment, &pair.garment_dp, &pair.garment_mask, &pair.person_dp, None, &PipelineOptions::default())
                .unwrap()
        })
    };
    let (one, many) = (run(1), run(8));
    assert_eq!(one.query_mask, many.query_mask);
    assert_eq!(one.warp, many.warp);
    let bits = |img: &Plane<[f32; 3]>| img.data().iter().flat_map(|p| p.map(f32::to_bits)).collect::<Vec<_>>();
    assert_eq!(bits(&one.warp.image), bits(&many.warp.image));
}
