use bokeh_core::fusion::{focus_from_point, render, RenderMode, RenderRequest};
use bokeh_core::RenderParams;
use bokeh_web::{kernel_rgba, kernel_size, rgba, Demo, FOCUS_WINDOW};

#[test]
fn zero_blur_shows_the_scene() {
    let mut demo = Demo::new(3, 48, 32);
    let out = demo.render_rgba(0.0, 0.5, 2.2, 0, 0.0, "hybrid").unwrap();
    assert_eq!(out.len(), 48 * 32 * 4);
    let diff = out.iter().zip(demo.image_rgba()).map(|(&a, b)| a.abs_diff(b)).max().unwrap();
    assert!(diff <= 1, "{diff}");
}

#[test]
fn render_matches_core() {
    let mut demo = Demo::new(4, 40, 40);
    let params = RenderParams::new(10.0, 0.2, 2.2);
    let req = RenderRequest::new(demo.image().clone(), demo.disparity().clone(), params)
        .with_mode(RenderMode::ClassicalOnly);
    let expected = rgba(&render(&req).unwrap().image);
    assert_eq!(demo.render_rgba(10.0, 0.2, 2.2, 0, 0.0, "classical_only").unwrap(), expected);
}

#[test]
fn error_map_follows_last_render() {
    let mut demo = Demo::new(5, 64, 48);
    assert!(demo.error_rgba().chunks(4).all(|p| p == [0, 0, 0, 255]));
    demo.render_rgba(20.0, 0.05, 2.2, 0, 0.0, "hybrid").unwrap();
    let heat = demo.error_rgba();
    assert_eq!(heat.len(), 64 * 48 * 4);
    assert!(heat.chunks(4).any(|p| p[0] == 255), "no strong weight near the depth edge");
    demo.render_rgba(20.0, 0.05, 2.2, 0, 0.0, "neural_only").unwrap();
    assert!(demo.error_rgba().chunks(4).all(|p| p == [255, 255, 0, 255]));
}

#[test]
fn bad_mode_is_an_error() {
    let mut demo = Demo::new(1, 8, 8);
    assert_eq!((demo.width(), demo.height()), (32, 32));
    assert!(demo.render_rgba(5.0, 0.5, 2.2, 0, 0.0, "sideways").is_err());
    assert!(demo.render_rgba(5.0, 0.5, 9.0, 0, 0.0, "hybrid").is_err());
}

#[test]
fn focus_is_local_median() {
    let demo = Demo::new(6, 50, 36);
    for (x, y) in [(0, 0), (25, 15), (49, 35)] {
        let expected = focus_from_point(demo.disparity(), x, y, FOCUS_WINDOW).unwrap();
        assert_eq!(demo.focus_at(x, y).unwrap(), expected);
    }
}

#[test]
fn kernel_image_is_square_with_bright_centre() {
    for blades in [0, 5, 6] {
        let n = kernel_size(7.0, blades, 20.0);
        let px = kernel_rgba(7.0, blades, 20.0);
        assert_eq!(px.len(), n * n * 4);
        let c = (n / 2 * n + n / 2) * 4;
        assert_eq!(px[c], 255);
        assert_eq!(px[0], 0, "corner of a {blades}-blade kernel is lit");
    }
}
