#![allow(dead_code)]

use densewarp::atlas::{UvAtlas, UvQueryMask};
use densewarp::iuv::NUM_PARTS;
use densewarp::raster::{BinaryMask, RgbImage};
use densewarp::synth::{Affine2, Rect, SynthPart, SynthSpec, Texture, TextureKind};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WIDTH: usize = 192;
pub const HEIGHT: usize = 256;

pub const TEXTURES: [TextureKind; 4] = [
    TextureKind::Stripes,
    TextureKind::Checker,
    TextureKind::Gradient,
    TextureKind::Noise,
];

pub fn texture(kind: TextureKind) -> Texture {
    let period = match kind {
        TextureKind::Stripes | TextureKind::Checker => 8.0,
        TextureKind::Gradient | TextureKind::Noise => 48.0,
    };
    Texture { kind, period }
}

/// One to four disjoint fitted parts on a 192x256 frame, all at identity placement.
pub fn random_identity_spec(seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(1..=4);
    let mut ids: Vec<u8> = (1..=NUM_PARTS as u8).collect();
    let mut parts: Vec<SynthPart> = Vec::new();
    let mut attempts = 0;
    while parts.len() < count && attempts < 1000 {
        attempts += 1;
        let w = rng.random_range(12..=120);
        let h = rng.random_range(12..=200);
        let rect = Rect::new(rng.random_range(0..=WIDTH - w), rng.random_range(0..=HEIGHT - h), w, h);
        let clear = parts.iter().all(|p| {
            let o = p.rect;
            rect.x >= o.x + o.width || o.x >= rect.x + rect.width || rect.y >= o.y + o.height || o.y >= rect.y + rect.height
        });
        if clear {
            let k = rng.random_range(0..ids.len());
            parts.push(SynthPart::fitted(ids.swap_remove(k), rect, Affine2::IDENTITY));
        }
    }
    SynthSpec {
        width: WIDTH,
        height: HEIGHT,
        parts,
        texture: texture(*TEXTURES.choose(&mut rng).unwrap()),
        speckle_dropout: 0.0,
        seed,
    }
}

pub fn masked_pixels(mask: &BinaryMask) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..mask.height()).flat_map(move |y| (0..mask.width()).map(move |x| (x, y))).filter(|&(x, y)| mask.get(x, y))
}

pub fn mean_abs_error(a: &RgbImage, b: &RgbImage, mask: &BinaryMask) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (x, y) in masked_pixels(mask) {
        let (p, q) = (a.get(x, y), b.get(x, y));
        total += (0..3).map(|c| (p[c] as f64 - q[c] as f64).abs()).sum::<f64>();
        n += 3;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

pub fn max_abs_error(a: &RgbImage, b: &RgbImage, mask: &BinaryMask) -> f64 {
    masked_pixels(mask)
        .flat_map(|(x, y)| {
            let (p, q) = (a.get(x, y), b.get(x, y));
            (0..3).map(move |c| (p[c] as f64 - q[c] as f64).abs())
        })
        .fold(0.0, f64::max)
}

/// Random sparse atlas with integer payloads tagging their source texel, and a
/// random query. Some parts are left without any source.
pub fn random_sparse_atlas(rng: &mut ChaCha8Rng, resolution: usize) -> (UvAtlas<[f64; 2]>, UvQueryMask) {
    let mut atlas = UvAtlas::empty(resolution, (resolution, resolution));
    let mut query = UvQueryMask::empty(resolution);
    let parts: Vec<u8> = (1..=NUM_PARTS as u8).filter(|_| rng.random_bool(0.3)).collect();
    for &part in &parts {
        let density = [0.0, 0.002, 0.02, 0.1, 0.5][rng.random_range(0..5)];
        let query_density = rng.random_range(0.05..1.0);
        for b in 0..resolution {
            for a in 0..resolution {
                if rng.random_bool(density) {
                    atlas.set(part, a, b, Some([a as f64, b as f64]));
                }
                if rng.random_bool(query_density) {
                    query.set(part, a, b, true);
                }
            }
        }
    }
    (atlas, query)
}

/// Exhaustive nearest valid texel of the same part, ties to the smallest row
/// then column of the source.
pub fn brute_force_fill(atlas: &UvAtlas<[f64; 2]>, query: &UvQueryMask) -> UvAtlas<[f64; 2]> {
    let r = atlas.resolution();
    let mut out = atlas.clone();
    for part in 1..=NUM_PARTS as u8 {
        for b in 0..r {
            for a in 0..r {
                if !query.get(part, a, b) || atlas.get(part, a, b).is_some() {
                    continue;
                }
                let mut best: Option<(usize, usize, usize)> = None;
                for sb in 0..r {
                    for sa in 0..r {
                        if atlas.get(part, sa, sb).is_none() {
                            continue;
                        }
                        let d = a.abs_diff(sa).pow(2) + b.abs_diff(sb).pow(2);
                        if best.is_none_or(|(bd, _, _)| d < bd) {
                            best = Some((d, sa, sb));
                        }
                    }
                }
                if let Some((_, sa, sb)) = best {
                    out.set(part, a, b, atlas.get(part, sa, sb));
                }
            }
        }
    }
    out
}
