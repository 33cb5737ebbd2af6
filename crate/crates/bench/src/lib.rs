//! Fixtures shared by the benchmarks.

use dynamask::synthgen::{generate, Background, Mover, SceneSpec, Shape, SyntheticClip};

/// A textured scene with one rectangle crossing it horizontally.
pub fn moving_rectangle(width: usize, height: usize, frame_count: usize, seed: u64) -> SyntheticClip {
    let speed = ((width - 24) / frame_count).max(1) as f64;
    let spec = SceneSpec {
        clip_id: format!("bench_{seed}"),
        width,
        height,
        frame_count,
        background: Background::Texture {
            base: 110.0,
            amplitude: 35.0,
            seed,
            cell: 16,
        },
        movers: vec![Mover {
            shape: Shape::Rectangle,
            width: 20,
            height: 20,
            intensity: 230,
            start: [2.0, (height / 2 - 10) as f64],
            velocity: [speed, 0.0],
        }],
        noise_sigma: 4.0,
        seed,
    };
    generate(&spec).expect("valid bench scene")
}
