//! Deterministic synthetic test videos.
//!
//! Generates moving-block sequences for fixtures and integration tests:
//! fully reproducible from a seed (integer arithmetic only), with real
//! frame-to-frame motion so delta frames carry content and concealed
//! (duplicated) frames measurably degrade picture quality.

use crate::rawvideo::{FrameBuffer, RawVideo};

/// Parameters for the synthetic moving-block sequence.
#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frame_count: usize,
    pub seed: u64,
    /// Flat background luma. Dark backgrounds quantize to long zero runs,
    /// which keeps coded fixtures small.
    pub background: u8,
    /// Luma lift of the moving blocks above the background.
    pub amplitude: u8,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 352,
            height: 288,
            fps_num: 25,
            fps_den: 1,
            frame_count: 299,
            seed: 1,
            background: 16,
            amplitude: 96,
        }
    }
}

/// Splitmix-style step: decorrelates consecutive states well enough for
/// fixture purposes while staying platform-independent.
fn next_state(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates the sequence described by `spec`: a flat background with a
/// handful of bright blocks drifting at constant per-block velocities,
/// wrapping at the edges. Chroma planes are flat mid-grey.
pub fn moving_video(spec: &SynthSpec) -> RawVideo {
    assert!(
        spec.width >= 16 && spec.height >= 16,
        "pattern needs at least 16x16 frames"
    );
    let mut video = RawVideo::new(spec.width, spec.height, spec.fps_num, spec.fps_den);
    let w = spec.width as usize;
    let h = spec.height as usize;
    let block_w = (w / 8).max(4);
    let block_h = (h / 8).max(4);

    // Fixed per-block trajectories derived from the seed.
    const BLOCKS: usize = 5;
    let mut state = spec.seed ^ 0x5DEE_CE66_D1CE_5EED;
    let mut blocks = Vec::with_capacity(BLOCKS);
    for _ in 0..BLOCKS {
        let r = next_state(&mut state);
        let x0 = (r as usize) % w;
        let y0 = ((r >> 16) as usize) % h;
        // Velocities in 1..=4 pixels/frame, direction varying per block.
        let vx = 1 + ((r >> 32) as usize) % 4;
        let vy = 1 + ((r >> 40) as usize) % 4;
        let lift = spec.amplitude / 2 + (((r >> 48) as u8) % (spec.amplitude / 2).max(1));
        blocks.push((x0, y0, vx, vy, lift));
    }

    let chroma_len = (w / 2) * (h / 2);
    for n in 0..spec.frame_count {
        let mut luma = vec![spec.background; w * h];
        for &(x0, y0, vx, vy, lift) in &blocks {
            let bx = (x0 + n * vx) % w;
            let by = (y0 + n * vy) % h;
            for dy in 0..block_h {
                let row = (by + dy) % h;
                for dx in 0..block_w {
                    let col = (bx + dx) % w;
                    let pixel = &mut luma[row * w + col];
                    *pixel = pixel.saturating_add(lift);
                }
            }
        }
        video.push_frame(FrameBuffer::new(
            spec.width,
            spec.height,
            luma,
            vec![128; chroma_len],
            vec![128; chroma_len],
        ));
    }
    video
}
