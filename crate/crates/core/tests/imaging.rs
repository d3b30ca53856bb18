use taurus::mapping::{reconstruct_amplitude_image, GridSpec, ImageGrid};
use taurus::physics::{synthesize, MnpSpecies, Phantom, Source, Window};
use taurus::trajectory::{build_trajectory, ScannerConfig, TrajectoryKind, TrajectoryParams};

const PIXEL: f64 = 5e-4;

fn image_of(points: &[[f64; 3]]) -> ImageGrid {
    let sc = ScannerConfig::default();
    let p = TrajectoryParams {
        fov_x: 0.011,
        fov_z: 0.04,
        points_x: 11,
        slew_z: 20.0,
        ..Default::default()
    };
    let spec = build_trajectory(TrajectoryKind::Llt, &sc, &p).unwrap();
    let species = MnpSpecies::new("m", 25e-9, 0.0);
    let ph = Phantom {
        sources: points
            .iter()
            .map(|&position| Source {
                position,
                extent: [0.0; 2],
                species: species.clone(),
                concentration: 1.0,
            })
            .collect(),
        ..Phantom::point([0.0; 3], species.clone())
    };
    let rx = synthesize(&sc, &spec, &ph, None, &Window::full(&spec))
        .unwrap()
        .received;
    let grid = GridSpec::covering(0.011, 0.04, PIXEL);
    reconstruct_amplitude_image(&rx, &sc, &spec, &grid, 1e-3).unwrap()
}

fn at(img: &ImageGrid, ix: usize, iz: usize) -> f64 {
    img.values[iz * img.grid.shape[0] + ix]
}

fn argmax(img: &ImageGrid) -> (usize, usize) {
    let i = (0..img.values.len())
        .max_by(|a, b| img.values[*a].total_cmp(&img.values[*b]))
        .unwrap();
    (i % img.grid.shape[0], i / img.grid.shape[0])
}

#[test]
fn single_source_peak_is_within_a_pixel() {
    let src = [1e-3, 0.0, 2.3e-3];
    let img = image_of(&[src]);
    let (ix, iz) = argmax(&img);
    let p = img.grid.position(ix, iz);
    assert!((p[0] - src[0]).abs() <= PIXEL + 1e-12, "x {}", p[0]);
    assert!((p[1] - src[2]).abs() <= PIXEL + 1e-12, "z {}", p[1]);
}

#[test]
fn sources_23mm_apart_are_resolved() {
    let img = image_of(&[[0.0, 0.0, -11.5e-3], [0.0, 0.0, 11.5e-3]]);
    let (ix, _) = argmax(&img);
    let nz = img.grid.shape[1];
    let profile: Vec<f64> = (0..nz).map(|iz| at(&img, ix, iz)).collect();
    let peak = profile.iter().cloned().fold(0.0, f64::max);
    let maxima: Vec<usize> = (1..nz - 1)
        .filter(|&i| profile[i] >= profile[i - 1] && profile[i] > profile[i + 1] && profile[i] > 0.5 * peak)
        .collect();
    assert_eq!(maxima.len(), 2, "{maxima:?}");
    let sep = img.grid.position(ix, maxima[1])[1] - img.grid.position(ix, maxima[0])[1];
    assert!((sep - 0.023).abs() <= PIXEL + 1e-12, "separation {sep}");
    let dip = profile[maxima[0]..maxima[1]].iter().cloned().fold(f64::MAX, f64::min);
    assert!(dip < 0.5 * peak);
}
